#include "semdec/sigproc/dsp.hpp"

#include <cmath>
#include <numbers>

namespace semdec {

namespace {

std::vector<double> windowed_sinc_lowpass(double cutoff_hz, double sample_rate, std::size_t n)
{
    // n is odd; taps are computed for the centre and left half, then mirrored.
    std::vector<double> h(n);
    const double fc = cutoff_hz / sample_rate;
    const std::size_t mid = (n - 1) / 2;
    for (std::size_t i = 0; i <= mid; ++i) {
        const double m = static_cast<double>(mid - i);
        const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
        const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i)
                                                     / static_cast<double>(n - 1));
        h[i] = sinc * window;
        h[n - 1 - i] = h[i];
    }
    double sum = 0.0;
    for (double v : h)
        sum += v;
    for (auto& v : h)
        v /= sum;
    return h;
}

void check_cutoff(double f, double nyquist)
{
    if (!(f > 0.0) || !(f < nyquist))
        throw ConfigError("filter cutoff " + std::to_string(f) + " Hz must lie strictly inside (0, "
                          + std::to_string(nyquist) + ") Hz");
}

} // namespace

std::vector<double> design_fir(const FilterSpec& spec, double sample_rate)
{
    if (!(sample_rate > 0.0))
        throw ConfigError("design_fir: sample rate must be > 0");
    const double nyquist = sample_rate / 2.0;
    check_cutoff(spec.low_hz, nyquist);
    if (spec.kind != FilterKind::lowpass) {
        check_cutoff(spec.high_hz, nyquist);
        if (!(spec.low_hz < spec.high_hz))
            throw ConfigError("design_fir: band edges must satisfy low < high");
    }
    const double transition = spec.transition_hz > 0.0 ? spec.transition_hz : 0.25 * spec.low_hz;
    auto n = static_cast<std::size_t>(std::ceil(3.3 * sample_rate / transition));
    n = std::max<std::size_t>(n, 3);
    if (n % 2 == 0)
        ++n;

    if (spec.kind == FilterKind::lowpass)
        return windowed_sinc_lowpass(spec.low_hz, sample_rate, n);

    auto upper = windowed_sinc_lowpass(spec.high_hz, sample_rate, n);
    const auto lower = windowed_sinc_lowpass(spec.low_hz, sample_rate, n);
    for (std::size_t i = 0; i < n; ++i)
        upper[i] -= lower[i];
    if (spec.kind == FilterKind::bandstop) {
        for (auto& v : upper)
            v = -v;
        upper[(n - 1) / 2] += 1.0;
    }
    return upper;
}

TimeSeries filtfilt(const TimeSeries& x, const std::vector<double>& taps)
{
    validate(x, "filtfilt");
    const auto n = static_cast<Index>(taps.size());
    if (n == 0)
        throw ConfigError("filtfilt: empty tap vector");
    const Index t_len = x.samples();
    if (t_len <= 3 * n)
        throw DataError("filtfilt: series of " + std::to_string(t_len) + " samples is too short for "
                        + std::to_string(n) + " taps (need > " + std::to_string(3 * n) + ")");

    const Index pad = n;
    const Index ext_len = t_len + 2 * pad;
    TimeSeries out{MatrixF(x.channels(), t_len), x.sample_rate};
    std::vector<double> ext(static_cast<std::size_t>(ext_len)), fwd(static_cast<std::size_t>(ext_len));
    for (Index c = 0; c < x.channels(); ++c) {
        for (Index i = 0; i < pad; ++i) {
            ext[static_cast<std::size_t>(i)] = x.data(c, pad - i);
            ext[static_cast<std::size_t>(pad + t_len + i)] = x.data(c, t_len - 2 - i);
        }
        for (Index i = 0; i < t_len; ++i)
            ext[static_cast<std::size_t>(pad + i)] = x.data(c, i);

        for (Index i = 0; i < ext_len; ++i) {
            double acc = 0.0;
            const Index kmax = std::min(n - 1, i);
            for (Index k = 0; k <= kmax; ++k)
                acc += taps[static_cast<std::size_t>(k)] * ext[static_cast<std::size_t>(i - k)];
            fwd[static_cast<std::size_t>(i)] = acc;
        }
        for (Index i = pad; i < pad + t_len; ++i) {
            double acc = 0.0;
            const Index kmax = std::min(n - 1, ext_len - 1 - i);
            for (Index k = 0; k <= kmax; ++k)
                acc += taps[static_cast<std::size_t>(k)] * fwd[static_cast<std::size_t>(i + k)];
            out.data(c, i - pad) = static_cast<float>(acc);
        }
    }
    return out;
}

TimeSeries resample(const TimeSeries& x, double target_rate)
{
    validate(x, "resample");
    if (!(target_rate > 0.0) || target_rate > x.sample_rate)
        throw ConfigError("resample: target rate must be in (0, source rate]");
    const double ratio = x.sample_rate / target_rate;
    const double factor = std::round(ratio);
    if (std::abs(ratio - factor) > 1e-9 * ratio)
        throw ConfigError("resample: " + std::to_string(x.sample_rate) + " Hz -> " + std::to_string(target_rate)
                          + " Hz is not an integer decimation");
    const auto k = static_cast<Index>(factor);
    if (k == 1)
        return x;

    const TimeSeries smooth = filtfilt(x, design_fir(FilterSpec::lowpass(0.45 * target_rate), x.sample_rate));
    const Index t_new = (x.samples() + k - 1) / k;
    TimeSeries out{MatrixF(x.channels(), t_new), x.sample_rate / factor};
    for (Index i = 0; i < t_new; ++i)
        out.data.col(i) = smooth.data.col(i * k);
    return out;
}

ZscoreResult zscore_channels(const TimeSeries& x)
{
    if (x.samples() < 2)
        throw DataError("zscore_channels: need at least 2 samples");
    ZscoreResult r{TimeSeries{MatrixF(x.channels(), x.samples()), x.sample_rate}, {}};
    const auto n = static_cast<double>(x.samples());
    for (Index c = 0; c < x.channels(); ++c) {
        double mean = 0.0;
        for (Index t = 0; t < x.samples(); ++t)
            mean += x.data(c, t);
        mean /= n;
        double ss = 0.0;
        for (Index t = 0; t < x.samples(); ++t) {
            const double d = x.data(c, t) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / n);
        if (sd == 0.0 || sd <= 1e-6 * std::abs(mean)) {
            r.series.data.row(c).setZero();
            r.constant_channels.push_back(c);
            continue;
        }
        for (Index t = 0; t < x.samples(); ++t)
            r.series.data(c, t) = static_cast<float>((x.data(c, t) - mean) / sd);
    }
    return r;
}

AlignedPair shift_align(const TimeSeries& meg, const EmbeddingSeries& embedding, double shift_s)
{
    if (std::abs(meg.sample_rate - embedding.sample_rate) > 1e-9 * meg.sample_rate)
        throw DataError("shift_align: neural and embedding series have different rates");
    if (shift_s < 0.0)
        throw ConfigError("shift_align: shift must be >= 0");
    const double exact = shift_s * meg.sample_rate;
    const double rounded = std::round(exact);
    if (std::abs(exact - rounded) > 1e-6)
        throw ConfigError("shift_align: shift is not a whole number of samples");
    const auto n = static_cast<Index>(rounded);
    const Index common = std::min(meg.samples(), embedding.samples());
    if (n >= common)
        throw DataError("shift_align: shift of " + std::to_string(n) + " samples consumes the whole series ("
                        + std::to_string(common) + " samples)");
    const Index t_out = common - n;
    return AlignedPair{TimeSeries{meg.data.middleCols(n, t_out), meg.sample_rate},
                       EmbeddingSeries{embedding.data.leftCols(t_out), embedding.sample_rate}};
}

SegmentPlan plan_segments(Index samples, double sample_rate, double duration_s, double overlap_frac)
{
    if (!(overlap_frac >= 0.0 && overlap_frac < 1.0))
        throw ConfigError("segment: overlap must lie in [0, 1)");
    const double window_exact = duration_s * sample_rate;
    const double window = std::round(window_exact);
    if (window < 1.0 || std::abs(window_exact - window) > 1e-6)
        throw ConfigError("segment: duration is not a positive whole number of samples");
    const double hop_exact = window * (1.0 - overlap_frac);
    const double hop = std::round(hop_exact);
    if (hop < 1.0 || std::abs(hop_exact - hop) > 1e-6)
        throw ConfigError("segment: hop " + std::to_string(hop_exact) + " is not a whole number of samples");

    SegmentPlan plan{static_cast<Index>(window), static_cast<Index>(hop), {}};
    for (Index s = 0; s + plan.window <= samples; s += plan.hop)
        plan.starts.push_back(s);
    return plan;
}

std::vector<TimeSeries> segment(const TimeSeries& x, double duration_s, double overlap_frac)
{
    const auto plan = plan_segments(x.samples(), x.sample_rate, duration_s, overlap_frac);
    std::vector<TimeSeries> out;
    out.reserve(plan.starts.size());
    for (Index s : plan.starts)
        out.push_back(TimeSeries{x.data.middleCols(s, plan.window), x.sample_rate});
    return out;
}

PreprocessResult preprocess_meg(const TimeSeries& raw, const PreprocessConfig& cfg)
{
    validate(raw, "preprocess");
    TimeSeries x = raw;
    if (raw.sample_rate > 2.0 * cfg.broadband_high_hz)
        x = filtfilt(x, design_fir(FilterSpec::bandpass(cfg.broadband_low_hz, cfg.broadband_high_hz), x.sample_rate));
    x = filtfilt(x, design_fir(FilterSpec::lowpass(cfg.lowpass_hz), x.sample_rate));
    x = resample(x, cfg.target_rate);
    auto z = zscore_channels(x);
    return PreprocessResult{std::move(z.series), std::move(z.constant_channels)};
}

} // namespace semdec
