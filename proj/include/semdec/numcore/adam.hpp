#pragma once

#include "semdec/types.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace semdec {

struct AdamConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename S>
struct AdamState {
    AdamConfig config;
    std::vector<Mat<S>> first_moment;
    std::vector<Mat<S>> second_moment;
    long step = 0;

    AdamState() = default;

    AdamState(const AdamConfig& cfg, std::span<Mat<S>* const> params) : config(cfg)
    {
        for (const Mat<S>* p : params) {
            first_moment.push_back(Mat<S>::Zero(p->rows(), p->cols()));
            second_moment.push_back(Mat<S>::Zero(p->rows(), p->cols()));
        }
    }
};

enum class AdamStatus { applied, rejected_non_finite };

/// One bias-corrected Adam update. A non-finite gradient leaves parameters and
/// state untouched and reports `rejected_non_finite`.
template <typename S>
AdamStatus adam_step(std::span<Mat<S>* const> params, std::span<const Mat<S>> grads, AdamState<S>& state)
{
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw ShapeError("adam_step: parameter, gradient and state counts differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()
            || state.first_moment[i].rows() != grads[i].rows() || state.first_moment[i].cols() != grads[i].cols())
            throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
        if (!grads[i].allFinite())
            return AdamStatus::rejected_non_finite;
    }

    const auto& c = state.config;
    ++state.step;
    const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat<S>& p = *params[i];
        Mat<S>& m = state.first_moment[i];
        Mat<S>& v = state.second_moment[i];
        const Mat<S>& g = grads[i];
        for (Index k = 0; k < p.size(); ++k) {
            const double gk = static_cast<double>(g.data()[k]);
            const double mk = c.beta1 * static_cast<double>(m.data()[k]) + (1.0 - c.beta1) * gk;
            const double vk = c.beta2 * static_cast<double>(v.data()[k]) + (1.0 - c.beta2) * gk * gk;
            m.data()[k] = static_cast<S>(mk);
            v.data()[k] = static_cast<S>(vk);
            const double update = c.lr * (mk / bias1) / (std::sqrt(vk / bias2) + c.eps);
            p.data()[k] = static_cast<S>(static_cast<double>(p.data()[k]) - update);
        }
    }
    return AdamStatus::applied;
}

} // namespace semdec
