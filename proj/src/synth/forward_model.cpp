#include "semdec/synth/forward_model.hpp"

#include <cmath>

namespace semdec::synth {

std::string to_string(Nonlinearity n)
{
    return n == Nonlinearity::tanh ? "tanh" : "none";
}

Nonlinearity parse_nonlinearity(const std::string& name)
{
    if (name == "none")
        return Nonlinearity::none;
    if (name == "tanh")
        return Nonlinearity::tanh;
    throw ConfigError("nonlinearity: expected 'none' or 'tanh', got '" + name + "'");
}

void ForwardModelConfig::validate() const
{
    if (subjects < 1)
        throw ConfigError("subjects: must be >= 1");
    if (channels < 1)
        throw ConfigError("channels: must be >= 1");
    if (dim < 2)
        throw ConfigError("dim: must be >= 2");
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
        throw ConfigError("sample_rate: must be positive");
    if (!(kernel_length_s >= 0.0) || !std::isfinite(kernel_length_s))
        throw ConfigError("kernel_length_s: must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw ConfigError("alpha: must lie in [0, 1], got " + std::to_string(alpha));
    if (!(subject_scale >= 0.0) || !std::isfinite(subject_scale))
        throw ConfigError("subject_scale: must be >= 0");
    if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0))
        throw ConfigError("ar_coefficient: must lie in [0, 1)");
    if (std::isnan(snr_db) || snr_db == -INFINITY)
        throw ConfigError("snr_db: must be a finite number or +inf");
    if (!(nonlinearity_gain > 0.0) || !std::isfinite(nonlinearity_gain))
        throw ConfigError("nonlinearity_gain: must be positive");
}

std::vector<double> lag_kernel(double length_s, double sample_rate)
{
    const auto n = static_cast<int>(std::lround(length_s * sample_rate));
    if (n <= 1)
        return {1.0};
    // Gamma density with shape 3 and scale n/8 peaks a quarter of the way in.
    const double scale = n / 8.0;
    std::vector<double> h(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
        const double x = (k + 0.5) / scale;
        h[static_cast<std::size_t>(k)] = x * x * std::exp(-x);
        sum += h[static_cast<std::size_t>(k)];
    }
    for (auto& v : h)
        v /= sum;
    return h;
}

MatrixD mixing_matrix(const ForwardModelConfig& cfg, int subject)
{
    if (subject < 0 || subject >= cfg.subjects)
        throw ConfigError("subject id " + std::to_string(subject) + " outside [0, " + std::to_string(cfg.subjects)
                          + ")");
    std::normal_distribution<double> normal(0.0, 1.0);
    Rng shared_rng = derive_rng(cfg.seed, {1});
    Rng subject_rng = derive_rng(cfg.seed, {2, static_cast<std::uint64_t>(subject)});
    MatrixD a(cfg.channels, cfg.dim);
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            a(i, j) = normal(shared_rng);
    MatrixD b(cfg.channels, cfg.dim);
    for (Index j = 0; j < b.cols(); ++j)
        for (Index i = 0; i < b.rows(); ++i)
            b(i, j) = cfg.subject_scale * normal(subject_rng);
    return cfg.alpha * a + (1.0 - cfg.alpha) * b;
}

TimeSeries simulate_meg(const EmbeddingSeries& z, int subject, const ForwardModelConfig& cfg, std::uint64_t trial)
{
    cfg.validate();
    if (z.channels() != cfg.dim)
        throw ShapeError("simulate_meg: embedding has " + std::to_string(z.channels()) + " dims, model expects "
                         + std::to_string(cfg.dim));
    if (z.sample_rate != cfg.sample_rate)
        throw ShapeError("simulate_meg: embedding rate differs from the forward model rate");
    const Index t_len = z.samples();

    MatrixD phi = z.data.cast<double>();
    if (cfg.nonlinearity == Nonlinearity::tanh)
        phi = (cfg.nonlinearity_gain * phi.array()).tanh().matrix();

    const auto h = lag_kernel(cfg.kernel_length_s, cfg.sample_rate);
    MatrixD lagged = MatrixD::Zero(cfg.dim, t_len);
    for (std::size_t k = 0; k < h.size(); ++k) {
        const auto shift = static_cast<Index>(k);
        if (shift >= t_len)
            break;
        lagged.rightCols(t_len - shift) += h[k] * phi.leftCols(t_len - shift);
    }

    MatrixD signal = mixing_matrix(cfg, subject) * lagged;
    if (std::isinf(cfg.snr_db))
        return TimeSeries{signal.cast<float>(), cfg.sample_rate};

    Rng rng = derive_rng(cfg.seed, {3, static_cast<std::uint64_t>(subject), trial});
    std::normal_distribution<double> normal(0.0, 1.0);
    const double rho = cfg.ar_coefficient;
    MatrixD noise(cfg.channels, t_len);
    const double stationary = 1.0 / std::sqrt(1.0 - rho * rho);
    for (Index c = 0; c < cfg.channels; ++c) {
        double e = stationary * normal(rng);
        for (Index t = 0; t < t_len; ++t) {
            if (t > 0)
                e = rho * e + normal(rng);
            noise(c, t) = e;
        }
    }
    const double ratio = std::pow(10.0, cfg.snr_db / 10.0);
    auto variance = [](const auto& row) {
        const double m = row.mean();
        return (row.array() - m).square().mean();
    };
    for (Index c = 0; c < cfg.channels; ++c) {
        const double vs = variance(signal.row(c));
        const double vn = variance(noise.row(c));
        if (vn <= 0.0)
            continue;
        // A silent channel still receives unit-variance noise.
        const double target = vs > 0.0 ? vs / ratio : 1.0;
        noise.row(c) *= std::sqrt(target / vn);
    }
    return TimeSeries{(signal + noise).cast<float>(), cfg.sample_rate};
}

} // namespace semdec::synth
