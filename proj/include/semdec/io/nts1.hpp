#pragma once

// "NTS1" container: magic, u32 version, u32 channels, u64 samples, f64 rate,
// then channels x samples little-endian f32, channel-major.

#include "semdec/sigproc/timeseries.hpp"

#include <filesystem>

namespace semdec::io {

inline constexpr std::uint32_t nts1_version = 1;

void write_nts1(const std::filesystem::path& path, const TimeSeries& series);

/// Reads a series. A zero sample rate is accepted only when `allow_zero_rate`
/// is set (per-word embedding files use 0 as a sentinel).
TimeSeries read_nts1(const std::filesystem::path& path, bool allow_zero_rate = false);

} // namespace semdec::io
