#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace semdec::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_training = 3;
inline constexpr int exit_data = 4;

/// Parses and runs one subcommand. `args` excludes the program name.
/// Errors are reported on `err` and mapped to the exit codes above.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace semdec::cli
