#pragma once

// Forward kernels shared by the gradient tape and the inference path.
// Every function is a pure function of its arguments.

#include "semdec/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace semdec {

inline Index segment_span(Index total, Index segment)
{
    const Index seg = segment > 0 ? segment : total;
    if (seg == 0 || total % seg != 0)
        throw ShapeError("conv1d: " + std::to_string(total) + " columns do not split into segments of "
                         + std::to_string(seg));
    return seg;
}

/// Stacks time-shifted copies of `input` so that a same-padded temporal
/// convolution becomes one matrix product. Row block k holds
/// input[:, t + (k - (width-1)/2) * dilation], zero where out of range.
/// With `segment` > 0 the columns are independent consecutive segments of that
/// length and padding is applied at every segment boundary.
template <typename S>
Mat<S> unfold_time(const Mat<S>& input, int width, int dilation, Index segment = 0)
{
    const Index cin = input.rows();
    const Index total = input.cols();
    const Index seg = segment_span(total, segment);
    const Index half = (width - 1) / 2;
    Mat<S> cols = Mat<S>::Zero(cin * width, total);
    for (Index s0 = 0; s0 < total; s0 += seg)
        for (int k = 0; k < width; ++k) {
            const Index offset = (k - half) * dilation;
            const Index lo = std::max<Index>(0, -offset);
            const Index hi = std::min<Index>(seg, seg - offset);
            if (hi > lo)
                cols.block(k * cin, s0 + lo, cin, hi - lo) = input.middleCols(s0 + lo + offset, hi - lo);
        }
    return cols;
}

/// Adjoint of unfold_time: scatters column-block gradients back onto the input.
template <typename S>
Mat<S> fold_time(const Mat<S>& cols, Index cin, int width, int dilation, Index segment = 0)
{
    const Index total = cols.cols();
    const Index seg = segment_span(total, segment);
    const Index half = (width - 1) / 2;
    Mat<S> out = Mat<S>::Zero(cin, total);
    for (Index s0 = 0; s0 < total; s0 += seg)
        for (int k = 0; k < width; ++k) {
            const Index offset = (k - half) * dilation;
            const Index lo = std::max<Index>(0, -offset);
            const Index hi = std::min<Index>(seg, seg - offset);
            if (hi > lo)
                out.middleCols(s0 + lo + offset, hi - lo) += cols.block(k * cin, s0 + lo, cin, hi - lo);
        }
    return out;
}

inline void check_conv_shapes(Index cin, Index weight_rows, Index weight_cols, int width, int dilation)
{
    if (width < 1 || width % 2 == 0)
        throw ShapeError("conv1d: kernel width must be odd, got " + std::to_string(width));
    if (dilation < 1)
        throw ShapeError("conv1d: dilation must be >= 1");
    if (weight_cols != cin * width)
        throw ShapeError("conv1d: weight has " + std::to_string(weight_cols) + " columns, expected "
                         + std::to_string(cin * width) + " (Cin x width)");
    (void)weight_rows;
}

/// Same-padded temporal convolution.
/// `weight` is Cout x (width * Cin); column block k multiplies the input
/// shifted by (k - (width-1)/2) * dilation samples.
template <typename S>
Mat<S> conv1d(const Mat<S>& input, const Mat<S>& weight, int width, int dilation = 1, Index segment = 0)
{
    check_conv_shapes(input.rows(), weight.rows(), weight.cols(), width, dilation);
    if (width == 1)
        return weight * input;
    return weight * unfold_time(input, width, dilation, segment);
}

/// Element (o, c, k) of a Cout x Cin x K kernel stored in the unfolded layout.
template <typename S>
S& kernel_tap(Mat<S>& weight, Index in_channels, Index o, Index c, Index k)
{
    return weight(o, k * in_channels + c);
}

template <typename S>
Mat<S> linear(const Mat<S>& input, const Mat<S>& weight, const Vec<S>& bias)
{
    if (weight.cols() != input.rows() || bias.size() != weight.rows())
        throw ShapeError("linear: weight " + std::to_string(weight.rows()) + "x" + std::to_string(weight.cols())
                         + " does not conform with input rows " + std::to_string(input.rows()) + " and bias "
                         + std::to_string(bias.size()));
    Mat<S> out = weight * input;
    out.colwise() += bias;
    return out;
}

template <typename S>
S gelu_scalar(S x)
{
    return S(0.5) * x * (S(1) + std::erf(x * S(1.0 / std::numbers::sqrt2)));
}

/// d/dx [x * Phi(x)] = Phi(x) + x * phi(x)
template <typename S>
S gelu_derivative(S x)
{
    const S cdf = S(0.5) * (S(1) + std::erf(x * S(1.0 / std::numbers::sqrt2)));
    const S pdf = std::exp(S(-0.5) * x * x) * S(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

template <typename S>
Mat<S> gelu(const Mat<S>& x)
{
    return x.unaryExpr([](S v) { return gelu_scalar(v); });
}

template <typename S>
S sigmoid_scalar(S x)
{
    if (x >= 0) {
        const S e = std::exp(-x);
        return S(1) / (S(1) + e);
    }
    const S e = std::exp(x);
    return e / (S(1) + e);
}

/// Gated linear unit over rows: the first half is gated by sigmoid of the second half.
template <typename S>
Mat<S> glu(const Mat<S>& x)
{
    if (x.rows() % 2 != 0)
        throw ShapeError("glu: row count must be even");
    const Index h = x.rows() / 2;
    return x.topRows(h).cwiseProduct(x.bottomRows(h).unaryExpr([](S v) { return sigmoid_scalar(v); }));
}

inline void check_dropout_rate(double rate)
{
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, else 1 / (1 - rate).
template <typename S>
Mat<S> dropout_mask(Index rows, Index cols, double rate, Rng& rng)
{
    check_dropout_rate(rate);
    if (rate == 0.0)
        return Mat<S>::Ones(rows, cols);
    std::bernoulli_distribution keep(1.0 - rate);
    const S scale = S(1.0 / (1.0 - rate));
    Mat<S> mask(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            mask(i, j) = keep(rng) ? scale : S(0);
    return mask;
}

template <typename S>
Mat<S> dropout(const Mat<S>& x, double rate, bool training, Rng& rng)
{
    check_dropout_rate(rate);
    if (!training || rate == 0.0)
        return x;
    return x.cwiseProduct(dropout_mask<S>(x.rows(), x.cols(), rate, rng));
}

struct PearsonResult {
    double r = 0.0;
    bool degenerate = false; // one of the inputs had zero variance
};

/// Pearson correlation with 64-bit accumulation. Zero-variance input yields
/// r = 0 and sets `degenerate`.
template <typename DerivedA, typename DerivedB>
PearsonResult pearson_checked(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b)
{
    const Index n = a.size();
    if (n != b.size())
        throw ShapeError("pearson: length mismatch " + std::to_string(n) + " vs " + std::to_string(b.size()));
    if (n < 2)
        throw ShapeError("pearson: need at least 2 elements");
    double mean_a = 0.0, mean_b = 0.0;
    for (Index i = 0; i < n; ++i) {
        mean_a += static_cast<double>(a.derived().coeff(i));
        mean_b += static_cast<double>(b.derived().coeff(i));
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double da = static_cast<double>(a.derived().coeff(i)) - mean_a;
        const double db = static_cast<double>(b.derived().coeff(i)) - mean_b;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa <= 0.0 || sbb <= 0.0)
        return {0.0, true};
    return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), false};
}

template <typename DerivedA, typename DerivedB>
double pearson(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b)
{
    return pearson_checked(a, b).r;
}

/// Centers every column and scales it to unit norm (64-bit accumulation).
/// Constant columns become zero. Returns the number of such columns.
template <typename S>
Index normalize_columns(const Mat<S>& z, Mat<S>& out)
{
    out.resize(z.rows(), z.cols());
    Index degenerate = 0;
    for (Index t = 0; t < z.cols(); ++t) {
        double mean = 0.0;
        for (Index d = 0; d < z.rows(); ++d)
            mean += static_cast<double>(z(d, t));
        mean /= static_cast<double>(z.rows());
        double ss = 0.0;
        for (Index d = 0; d < z.rows(); ++d) {
            const double c = static_cast<double>(z(d, t)) - mean;
            ss += c * c;
        }
        if (ss <= 0.0) {
            out.col(t).setZero();
            ++degenerate;
            continue;
        }
        const double inv = 1.0 / std::sqrt(ss);
        for (Index d = 0; d < z.rows(); ++d)
            out(d, t) = static_cast<S>((static_cast<double>(z(d, t)) - mean) * inv);
    }
    return degenerate;
}

template <typename S>
bool all_finite(const Mat<S>& m)
{
    return m.allFinite();
}

} // namespace semdec
