#include "semdec/io/nts1.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace semdec::io {

static_assert(std::endian::native == std::endian::little, "NTS1 I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ofstream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path)
{
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw DataError(path.string() + ": truncated NTS1 header");
    return v;
}

} // namespace

void write_nts1(const std::filesystem::path& path, const TimeSeries& series)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    out.write("NTS1", 4);
    put<std::uint32_t>(out, nts1_version);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(series.channels()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(series.samples()));
    put<double>(out, series.sample_rate);
    const MatrixF channel_major = series.data.transpose();
    out.write(reinterpret_cast<const char*>(channel_major.data()),
              static_cast<std::streamsize>(sizeof(float) * channel_major.size()));
    if (!out)
        throw DataError("write failed: " + path.string());
}

TimeSeries read_nts1(const std::filesystem::path& path, bool allow_zero_rate)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "NTS1", 4) != 0)
        throw DataError(path.string() + ": not an NTS1 file");
    const auto version = get<std::uint32_t>(in, path);
    if (version != nts1_version)
        throw DataError(path.string() + ": unsupported NTS1 version " + std::to_string(version));
    const auto channels = get<std::uint32_t>(in, path);
    const auto samples = get<std::uint64_t>(in, path);
    const auto rate = get<double>(in, path);
    if (!(rate > 0.0) && !(allow_zero_rate && rate == 0.0))
        throw DataError(path.string() + ": invalid sample rate");
    if (channels == 0 || samples == 0 || samples > (std::uint64_t{1} << 40) / channels)
        throw DataError(path.string() + ": invalid dimensions");

    MatrixF channel_major(static_cast<Index>(samples), static_cast<Index>(channels));
    const auto bytes = static_cast<std::streamsize>(sizeof(float) * channel_major.size());
    if (!in.read(reinterpret_cast<char*>(channel_major.data()), bytes))
        throw DataError(path.string() + ": truncated sample data");
    if (in.peek() != std::ifstream::traits_type::eof())
        throw DataError(path.string() + ": trailing bytes after sample data");
    if (!channel_major.allFinite())
        throw DataError(path.string() + ": non-finite samples");
    return TimeSeries{channel_major.transpose(), rate};
}

} // namespace semdec::io
