#pragma once

// Model container: "CWER" magic, u32 version, 4-byte kind tag, u64 length +
// JSON config, u32 blob count, then per blob u32 name length + name, u8 dtype
// (0 = f32, 1 = f64), u32 rows, u32 cols and column-major data. A SHA-256 of
// all preceding bytes closes the file.

#include "semdec/io/json_util.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace semdec::io {

struct NamedBlob {
    std::string name;
    std::variant<MatrixF, MatrixD> value;
};

struct Checkpoint {
    std::string kind; // exactly 4 characters
    Json config;
    std::vector<NamedBlob> blobs;

    const NamedBlob& blob(const std::string& name) const;
    const MatrixF& f32(const std::string& name) const;
    const MatrixD& f64(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws DataError on a bad magic, truncation, or checksum mismatch.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace semdec::io
