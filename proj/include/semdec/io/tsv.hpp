#pragma once

#include "semdec/types.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace semdec::io {

/// Shortest form that parses back to the same double.
std::string format_double(double v);
/// Throws DataError mentioning `where` unless all of `s` is a number.
double parse_double(std::string_view s, const std::string& where);
std::vector<std::string_view> split_tabs(std::string_view line);

/// Calls row(fields, where) for every non-empty line; `where` is "path:line".
void for_each_tsv_row(const std::filesystem::path& path,
                      const std::function<void(const std::vector<std::string_view>&, const std::string&)>& row);

} // namespace semdec::io
