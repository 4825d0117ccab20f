#pragma once

#include "semdec/sigproc/timeseries.hpp"

#include <optional>
#include <vector>

namespace semdec {

enum class FilterKind { lowpass, bandpass, bandstop };

struct FilterSpec {
    FilterKind kind = FilterKind::lowpass;
    double low_hz = 0.0;        // lowpass cutoff, or lower band edge
    double high_hz = 0.0;       // upper band edge (bandpass / bandstop only)
    double transition_hz = 0.0; // <= 0 selects 25% of the lowest cutoff

    static FilterSpec lowpass(double cutoff_hz, double transition_hz = 0.0)
    {
        return {FilterKind::lowpass, cutoff_hz, 0.0, transition_hz};
    }
    static FilterSpec bandpass(double low, double high, double transition_hz = 0.0)
    {
        return {FilterKind::bandpass, low, high, transition_hz};
    }
    static FilterSpec bandstop(double low, double high, double transition_hz = 0.0)
    {
        return {FilterKind::bandstop, low, high, transition_hz};
    }
};

/// Linear-phase windowed-sinc (Hamming) taps. The tap count is the smallest
/// odd n >= 3.3 * rate / transition. Lowpass taps have unit DC gain.
std::vector<double> design_fir(const FilterSpec& spec, double sample_rate);

/// Zero-phase forward-backward FIR filtering with mirror-reflection padding of
/// len(taps) samples at both ends. Requires T > 3 * len(taps).
TimeSeries filtfilt(const TimeSeries& x, const std::vector<double>& taps);

/// Integer-factor decimation: lowpass at 0.45 * target_rate, then keep every
/// k-th sample (T' = ceil(T / k)). target == source returns the input.
TimeSeries resample(const TimeSeries& x, double target_rate);

struct ZscoreResult {
    TimeSeries series;
    std::vector<Index> constant_channels; // mapped to all-zeros
};

/// Per-channel standardization over time (population variance).
ZscoreResult zscore_channels(const TimeSeries& x);

struct AlignedPair {
    TimeSeries meg;
    EmbeddingSeries embedding;
};

/// Pairs neural sample t + n with stimulus sample t (n = shift_s * rate):
/// drops the first n neural samples and the last n embedding samples after
/// truncating both to their common length.
AlignedPair shift_align(const TimeSeries& meg, const EmbeddingSeries& embedding, double shift_s);

struct SegmentPlan {
    Index window = 0;
    Index hop = 0;
    std::vector<Index> starts; // start_i = i * hop
};

/// Fixed-length windows fully inside a series of `samples` samples; the
/// trailing partial window is discarded.
SegmentPlan plan_segments(Index samples, double sample_rate, double duration_s, double overlap_frac);

std::vector<TimeSeries> segment(const TimeSeries& x, double duration_s, double overlap_frac);

struct PreprocessConfig {
    double broadband_low_hz = 1.0;  // applied only when the source rate exceeds 2 * broadband_high_hz
    double broadband_high_hz = 40.0;
    double lowpass_hz = 4.0;
    double target_rate = 40.0;
};

struct PreprocessResult {
    TimeSeries series;
    std::vector<Index> constant_channels;
};

/// Canonical neural preprocessing: [band-pass] -> low-pass -> resample -> z-score.
PreprocessResult preprocess_meg(const TimeSeries& raw, const PreprocessConfig& cfg);

} // namespace semdec
