#pragma once

#include "semdec/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace semdec {

/// Objective evaluated in 64-bit. When `grad` is non-null it receives the
/// reverse-mode gradient at `x`.
using DifferentiableFn = std::function<double(const VectorD& x, VectorD* grad)>;

struct GradCheckReport {
    double max_relative_error = 0.0;
    Index worst_index = -1;
    VectorD analytic;
    VectorD numeric;
};

/// Compares the reverse-mode gradient against central finite differences with
/// step h = 1e-4 * max(|x_i|, 1), Richardson-extrapolated over h and h/2. Entry-wise relative error uses
/// max(|analytic_i|, |numeric_i|, 1e-6 * max|analytic|, 1e-12) as denominator.
inline GradCheckReport grad_check(const DifferentiableFn& f, const VectorD& x)
{
    GradCheckReport r;
    r.analytic.resize(x.size());
    f(x, &r.analytic);
    r.numeric.resize(x.size());
    VectorD probe = x;
    for (Index i = 0; i < x.size(); ++i) {
        const double h = 1e-4 * std::max(std::abs(x[i]), 1.0);
        auto central = [&](double step) {
            probe[i] = x[i] + step;
            const double up = f(probe, nullptr);
            probe[i] = x[i] - step;
            const double down = f(probe, nullptr);
            probe[i] = x[i];
            return (up - down) / (2.0 * step);
        };
        r.numeric[i] = (4.0 * central(0.5 * h) - central(h)) / 3.0;
    }
    const double scale = r.analytic.size() ? r.analytic.cwiseAbs().maxCoeff() : 0.0;
    for (Index i = 0; i < x.size(); ++i) {
        const double denom = std::max({std::abs(r.analytic[i]), std::abs(r.numeric[i]), 1e-6 * scale, 1e-12});
        const double err = std::abs(r.analytic[i] - r.numeric[i]) / denom;
        if (err > r.max_relative_error || r.worst_index < 0) {
            r.max_relative_error = std::max(err, r.max_relative_error);
            r.worst_index = i;
        }
    }
    return r;
}

} // namespace semdec
