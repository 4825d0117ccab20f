#pragma once

#include "semdec/sigproc/timeseries.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace semdec::synth {

enum class Nonlinearity { none, tanh };

std::string to_string(Nonlinearity n);
Nonlinearity parse_nonlinearity(const std::string& name);

struct ForwardModelConfig {
    int subjects = 3;
    int channels = 32;
    int dim = 32;
    double sample_rate = 40.0;
    double kernel_length_s = 0.4; // 0 gives a delta kernel
    double alpha = 1.0;           // weight of the mixing shared by all subjects
    double subject_scale = 1.0;   // std of subject-specific mixing entries
    double ar_coefficient = 0.5;
    double snr_db = 15.0;         // +inf disables noise
    Nonlinearity nonlinearity = Nonlinearity::none;
    double nonlinearity_gain = 1.0; // tanh(gain * z)
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Causal gamma-shaped response kernel (shape 3), unit sum.
std::vector<double> lag_kernel(double length_s, double sample_rate);

/// alpha * A_shared + (1 - alpha) * B_s, C x D.
MatrixD mixing_matrix(const ForwardModelConfig& cfg, int subject);

/// X = A_s (h * phi(z)) + AR(1) noise, with the noise of every channel scaled
/// so that signal variance / noise variance equals the configured SNR.
/// `trial` selects the noise stream.
TimeSeries simulate_meg(const EmbeddingSeries& z, int subject, const ForwardModelConfig& cfg, std::uint64_t trial);

} // namespace semdec::synth
