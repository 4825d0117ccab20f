#pragma once

#include "semdec/numcore/ops.hpp"

#include <limits>
#include <span>
#include <vector>

namespace semdec {

template <typename S>
struct InfoNceResult {
    double loss = 0.0;          // summed over time steps
    Mat<S> grad_pred;           // dL/dpred, D x T
    Index degenerate_steps = 0; // prediction columns with zero variance
};

/// Contrastive loss over N candidate series with Pearson similarity at each
/// time step. `candidates[0]` is the positive; every candidate must already be
/// column-normalized (see normalize_columns). Logits are shifted by their
/// per-step maximum before exponentiation.
template <typename S>
InfoNceResult<S> infonce_normalized(const ConstMatRef<S>& pred, std::span<const ConstMatRef<S>> candidates, double tau,
                                    bool want_grad = true)
{
    if (!(tau > 0.0))
        throw ConfigError("infonce: temperature must be > 0");
    if (candidates.size() < 2)
        throw ConfigError("infonce: need a positive and at least one negative (N >= 2)");
    const Index d = pred.rows();
    const Index t_len = pred.cols();
    for (const auto& c : candidates)
        if (c.rows() != d || c.cols() != t_len)
            throw ShapeError("infonce: candidate shape " + std::to_string(c.rows()) + "x" + std::to_string(c.cols())
                             + " differs from prediction " + std::to_string(d) + "x" + std::to_string(t_len));

    const std::size_t n = candidates.size();
    InfoNceResult<S> result;
    if (want_grad)
        result.grad_pred = Mat<S>::Zero(d, t_len);

    VectorD a(d), g(d);
    std::vector<double> sims(n), weights(n);
    for (Index t = 0; t < t_len; ++t) {
        double mean = 0.0;
        for (Index i = 0; i < d; ++i)
            mean += static_cast<double>(pred(i, t));
        mean /= static_cast<double>(d);
        double ss = 0.0;
        for (Index i = 0; i < d; ++i) {
            a[i] = static_cast<double>(pred(i, t)) - mean;
            ss += a[i] * a[i];
        }
        const double norm = std::sqrt(ss);
        const bool degenerate = !(norm > 0.0);
        if (degenerate) {
            ++result.degenerate_steps;
            a.setZero();
        } else {
            a /= norm;
        }

        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n; ++c) {
            double dot = 0.0;
            for (Index i = 0; i < d; ++i)
                dot += a[i] * static_cast<double>(candidates[c](i, t));
            sims[c] = std::clamp(dot, -1.0, 1.0);
            max_logit = std::max(max_logit, sims[c] / tau);
        }
        double denom = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            weights[c] = std::exp(sims[c] / tau - max_logit);
            denom += weights[c];
        }
        result.loss += max_logit + std::log(denom) - sims[0] / tau;

        if (!want_grad || degenerate)
            continue;
        // dL/dsim_c = (softmax_c - [c == 0]) / tau ; dsim_c/dpred = (b_c - sim_c a) / |pred - mean|
        g.setZero();
        for (std::size_t c = 0; c < n; ++c) {
            const double coef = (weights[c] / denom - (c == 0 ? 1.0 : 0.0)) / tau / norm;
            if (coef == 0.0)
                continue;
            for (Index i = 0; i < d; ++i)
                g[i] += coef * (static_cast<double>(candidates[c](i, t)) - sims[c] * a[i]);
        }
        result.grad_pred.col(t) = g.cast<S>();
    }
    return result;
}

/// Loss for raw (un-normalized) positive and negative series.
template <typename S>
double infonce_loss(const Mat<S>& pred, const Mat<S>& positive, std::span<const Mat<S>> negatives, double tau)
{
    std::vector<Mat<S>> normalized(negatives.size() + 1);
    normalize_columns(positive, normalized[0]);
    for (std::size_t i = 0; i < negatives.size(); ++i)
        normalize_columns(negatives[i], normalized[i + 1]);
    std::vector<ConstMatRef<S>> refs(normalized.begin(), normalized.end());
    return infonce_normalized<S>(pred, refs, tau, false).loss;
}

} // namespace semdec
