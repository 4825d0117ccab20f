#include "semdec/io/checksum.hpp"

#include "semdec/types.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <vector>

namespace semdec::io {

Sha256Digest sha256(std::span<const std::uint8_t> bytes)
{
    Sha256Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw std::runtime_error("sha256: digest computation failed");
    return out;
}

std::string to_hex(const Sha256Digest& digest)
{
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : digest) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 15]);
    }
    return s;
}

std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return to_hex(sha256(bytes));
}

} // namespace semdec::io
