#pragma once

// Reverse-mode gradient tape for the small op set the reconstruction model uses.
// Nodes are appended in evaluation order, so reverse insertion order is a valid
// reverse topological order; backward() visits each node once.

#include "semdec/numcore/infonce.hpp"
#include "semdec/numcore/ops.hpp"

#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace semdec {

template <typename S>
class GradTape {
public:
    struct Var {
        std::size_t id;
    };

    Var leaf(Mat<S> value, bool requires_grad = true)
    {
        return push(std::move(value), requires_grad, {}, nullptr);
    }

    Var leaf(const Vec<S>& value, bool requires_grad = true)
    {
        return leaf(Mat<S>(value), requires_grad);
    }

    const Mat<S>& value(Var v) const { return nodes_[v.id].value; }

    /// Gradient of the last backward() root with respect to `v`; zeros if unreached.
    Mat<S> grad(Var v) const
    {
        const auto& n = nodes_[v.id];
        if (n.grad.size() == 0)
            return Mat<S>::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

    Var linear(Var x, Var w, Var b)
    {
        const Mat<S>& xv = value(x);
        const Mat<S>& wv = value(w);
        Vec<S> bias = value(b).col(0);
        Mat<S> out = semdec::linear<S>(xv, wv, bias);
        return push(std::move(out), any_grad({x, w, b}), {x, w, b}, [x, w, b](GradTape& tp, const Mat<S>& g) {
            if (tp.needs(w))
                tp.accumulate(w, g * tp.value(x).transpose());
            if (tp.needs(b))
                tp.accumulate(b, Mat<S>(g.rowwise().sum()));
            if (tp.needs(x))
                tp.accumulate(x, tp.value(w).transpose() * g);
        });
    }

    /// y = a * b (plain matrix product, used for per-subject mixing).
    Var matmul(Var a, Var b)
    {
        Mat<S> out = value(a) * value(b);
        return push(std::move(out), any_grad({a, b}), {a, b}, [a, b](GradTape& tp, const Mat<S>& g) {
            if (tp.needs(a))
                tp.accumulate(a, g * tp.value(b).transpose());
            if (tp.needs(b))
                tp.accumulate(b, tp.value(a).transpose() * g);
        });
    }

    /// Same-padded temporal convolution with bias; weight is Cout x (width * Cin).
    /// `segment` > 0 treats the columns as independent segments of that length.
    Var conv1d(Var x, Var w, Var b, int width, int dilation = 1, Index segment = 0)
    {
        const Mat<S>& xv = value(x);
        const Mat<S>& wv = value(w);
        check_conv_shapes(xv.rows(), wv.rows(), wv.cols(), width, dilation);
        if (value(b).rows() != wv.rows())
            throw ShapeError("conv1d: bias length does not match output channels");
        const Index cin = xv.rows();
        Mat<S> out = semdec::conv1d<S>(xv, wv, width, dilation, segment);
        out.colwise() += value(b).col(0);
        // The unfolded input is rebuilt during backward instead of being kept alive.
        return push(std::move(out), any_grad({x, w, b}), {x, w, b},
                    [x, w, b, cin, width, dilation, segment](GradTape& tp, const Mat<S>& g) {
                        if (tp.needs(w)) {
                            if (width == 1)
                                tp.accumulate(w, g * tp.value(x).transpose());
                            else
                                tp.accumulate(w, g * unfold_time(tp.value(x), width, dilation, segment).transpose());
                        }
                        if (tp.needs(b))
                            tp.accumulate(b, Mat<S>(g.rowwise().sum()));
                        if (tp.needs(x)) {
                            if (width == 1)
                                tp.accumulate(x, tp.value(w).transpose() * g);
                            else
                                tp.accumulate(x, fold_time<S>(tp.value(w).transpose() * g, cin, width, dilation,
                                                              segment));
                        }
                    });
    }

    Var add(Var a, Var b)
    {
        if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
            throw ShapeError("add: shape mismatch");
        Mat<S> out = value(a) + value(b);
        return push(std::move(out), any_grad({a, b}), {a, b}, [a, b](GradTape& tp, const Mat<S>& g) {
            if (tp.needs(a))
                tp.accumulate(a, g);
            if (tp.needs(b))
                tp.accumulate(b, g);
        });
    }

    Var gelu(Var x)
    {
        Mat<S> out = semdec::gelu<S>(value(x));
        return push(std::move(out), any_grad({x}), {x}, [x](GradTape& tp, const Mat<S>& g) {
            tp.accumulate(x, g.cwiseProduct(tp.value(x).unaryExpr([](S v) { return gelu_derivative(v); })));
        });
    }

    Var glu(Var x)
    {
        Mat<S> out = semdec::glu<S>(value(x));
        return push(std::move(out), any_grad({x}), {x}, [x](GradTape& tp, const Mat<S>& g) {
            const Mat<S>& in = tp.value(x);
            const Index h = in.rows() / 2;
            Mat<S> gate = in.bottomRows(h).unaryExpr([](S v) { return sigmoid_scalar(v); });
            Mat<S> dx(in.rows(), in.cols());
            dx.topRows(h) = g.cwiseProduct(gate);
            dx.bottomRows(h) = g.cwiseProduct(in.topRows(h))
                                   .cwiseProduct(gate)
                                   .cwiseProduct((Mat<S>::Ones(h, in.cols()) - gate));
            tp.accumulate(x, dx);
        });
    }

    Var dropout(Var x, double rate, bool training, Rng& rng)
    {
        check_dropout_rate(rate);
        if (!training || rate == 0.0)
            return x;
        auto mask = std::make_shared<Mat<S>>(dropout_mask<S>(value(x).rows(), value(x).cols(), rate, rng));
        Mat<S> out = value(x).cwiseProduct(*mask);
        return push(std::move(out), any_grad({x}), {x},
                    [x, mask](GradTape& tp, const Mat<S>& g) { tp.accumulate(x, g.cwiseProduct(*mask)); });
    }

    /// Scalar (1x1) contrastive loss; candidates are column-normalized, index 0 positive.
    Var infonce(Var pred, std::span<const ConstMatRef<S>> candidates, double tau, Index* degenerate_steps = nullptr)
    {
        auto res = infonce_normalized<S>(value(pred), candidates, tau, needs_grad(pred));
        if (degenerate_steps)
            *degenerate_steps = res.degenerate_steps;
        Mat<S> out(1, 1);
        out(0, 0) = static_cast<S>(res.loss);
        auto grad = std::make_shared<Mat<S>>(std::move(res.grad_pred));
        return push(std::move(out), any_grad({pred}), {pred}, [pred, grad](GradTape& tp, const Mat<S>& g) {
            tp.accumulate(pred, (*grad) * g(0, 0));
        });
    }

    /// Column segment b of `x` (length `segment`) is multiplied by mats[which[b]].
    Var segment_matmul(Var x, std::vector<Var> mats, std::vector<int> which, Index segment)
    {
        const Mat<S>& xv = value(x);
        const Index seg = segment_span(xv.cols(), segment);
        if (static_cast<Index>(which.size()) * seg != xv.cols())
            throw ShapeError("segment_matmul: one matrix index per segment required");
        for (int m : which)
            if (m < 0 || static_cast<std::size_t>(m) >= mats.size())
                throw ShapeError("segment_matmul: matrix index out of range");
        for (auto m : mats)
            if (value(m).cols() != xv.rows() || value(m).rows() != xv.rows())
                throw ShapeError("segment_matmul: matrices must be square and match the input rows");
        Mat<S> out(xv.rows(), xv.cols());
        for (std::size_t b = 0; b < which.size(); ++b) {
            const Index c0 = static_cast<Index>(b) * seg;
            out.middleCols(c0, seg).noalias() = value(mats[static_cast<std::size_t>(which[b])]) * xv.middleCols(c0, seg);
        }
        std::vector<Var> inputs = mats;
        inputs.push_back(x);
        bool grad_needed = false;
        for (auto v : inputs)
            grad_needed = grad_needed || needs(v);
        return push(std::move(out), grad_needed, {}, [x, mats, which, seg](GradTape& tp, const Mat<S>& g) {
            for (std::size_t b = 0; b < which.size(); ++b) {
                const Index c0 = static_cast<Index>(b) * seg;
                const Var m = mats[static_cast<std::size_t>(which[b])];
                if (tp.needs(m))
                    tp.accumulate(m, g.middleCols(c0, seg) * tp.value(x).middleCols(c0, seg).transpose());
            }
            if (tp.needs(x)) {
                Mat<S> dx(g.rows(), g.cols());
                for (std::size_t b = 0; b < which.size(); ++b) {
                    const Index c0 = static_cast<Index>(b) * seg;
                    dx.middleCols(c0, seg).noalias() =
                        tp.value(mats[static_cast<std::size_t>(which[b])]).transpose() * g.middleCols(c0, seg);
                }
                tp.accumulate(x, dx);
            }
        });
    }

    /// Mean contrastive loss over column segments; candidates[b] belongs to
    /// segment b (normalized, positive first).
    Var infonce_batch(Var pred, const std::vector<std::vector<ConstMatRef<S>>>& candidates, double tau, Index segment,
                      Index* degenerate_steps = nullptr)
    {
        const Mat<S>& pv = value(pred);
        const Index seg = segment_span(pv.cols(), segment);
        if (static_cast<Index>(candidates.size()) * seg != pv.cols())
            throw ShapeError("infonce_batch: one candidate set per segment required");
        const bool want = needs(pred);
        auto grad = std::make_shared<Mat<S>>(want ? Mat<S>(pv.rows(), pv.cols()) : Mat<S>());
        double total = 0.0;
        Index degenerate = 0;
        const double scale = 1.0 / static_cast<double>(candidates.size());
        for (std::size_t b = 0; b < candidates.size(); ++b) {
            const Index c0 = static_cast<Index>(b) * seg;
            auto res = infonce_normalized<S>(pv.middleCols(c0, seg), candidates[b], tau, want);
            total += res.loss;
            degenerate += res.degenerate_steps;
            if (want)
                grad->middleCols(c0, seg) = res.grad_pred * static_cast<S>(scale);
        }
        if (degenerate_steps)
            *degenerate_steps = degenerate;
        Mat<S> out(1, 1);
        out(0, 0) = static_cast<S>(total * scale);
        return push(std::move(out), want, {pred}, [pred, grad](GradTape& tp, const Mat<S>& g) {
            tp.accumulate(pred, (*grad) * g(0, 0));
        });
    }

    /// Scalar sum of w .* x, handy for turning a tensor output into a test objective.
    Var weighted_sum(Var x, const Mat<S>& weights)
    {
        if (weights.rows() != value(x).rows() || weights.cols() != value(x).cols())
            throw ShapeError("weighted_sum: shape mismatch");
        Mat<S> out(1, 1);
        out(0, 0) = value(x).cwiseProduct(weights).sum();
        auto w = std::make_shared<Mat<S>>(weights);
        return push(std::move(out), any_grad({x}), {x},
                    [x, w](GradTape& tp, const Mat<S>& g) { tp.accumulate(x, (*w) * g(0, 0)); });
    }

    /// Propagates d(root)/d(node) for every node reachable from `root` (a 1x1 node).
    void backward(Var root)
    {
        if (value(root).size() != 1)
            throw ShapeError("backward: root must be a scalar");
        for (auto& n : nodes_)
            n.grad.resize(0, 0);
        nodes_[root.id].grad = Mat<S>::Ones(1, 1);
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.grad.size() == 0 || !n.backward)
                continue;
            n.backward(*this, n.grad);
        }
    }

private:
    using Backward = std::function<void(GradTape&, const Mat<S>&)>;

    struct Node {
        Mat<S> value;
        Mat<S> grad;
        bool requires_grad = false;
        Backward backward;
    };

    Var push(Mat<S> value, bool requires_grad, std::initializer_list<Var>, Backward fn)
    {
        nodes_.push_back(Node{std::move(value), Mat<S>(), requires_grad, requires_grad ? std::move(fn) : Backward{}});
        return Var{nodes_.size() - 1};
    }

    bool any_grad(std::initializer_list<Var> vars) const
    {
        for (auto v : vars)
            if (nodes_[v.id].requires_grad)
                return true;
        return false;
    }

    bool needs_grad(Var v) const { return nodes_[v.id].requires_grad; }
    bool needs(Var v) const { return nodes_[v.id].requires_grad; }

    void accumulate(Var v, const Mat<S>& g)
    {
        Node& n = nodes_[v.id];
        if (!n.requires_grad)
            return;
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

    std::vector<Node> nodes_;
};

} // namespace semdec
