#pragma once

#include "semdec/io/checkpoint.hpp"
#include "semdec/numcore/tape.hpp"
#include "semdec/sigproc/timeseries.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace semdec::cwer {

enum class SubjectMode {
    subject_layer,    // shared network with a per-subject D1 x D1 transform
    no_subject_layer, // shared network, no subject-dependent part
    per_subject,      // an independent network per subject
};

std::string to_string(SubjectMode m);
SubjectMode parse_subject_mode(const std::string& name);

struct CwerConfig {
    int channels = 0;
    int dim = 0;
    int hidden = 256;      // D1
    int head_hidden = 256; // D2; the head expands to 2 * D2
    int blocks = 5;
    int kernel = 9;
    int subjects = 1;
    double dropout = 0.5;
    SubjectMode mode = SubjectMode::subject_layer;

    void validate() const;
    bool operator==(const CwerConfig&) const = default;
};

io::Json to_json(const CwerConfig& c);
CwerConfig cwer_config_from_json(const io::Json& j);

template <typename T>
struct BlockT {
    T conv1_w, conv1_b, conv2_w, conv2_b, gate_w, gate_b;
};

/// One network. Biases are stored as single-column matrices.
template <typename T>
struct NetT {
    T in_w, in_b;   // linear C -> D1
    T mix_w, mix_b; // 1x1 conv D1 -> D1
    std::vector<T> subject;
    std::vector<BlockT<T>> blocks;
    T head1_w, head1_b, head2_w, head2_b;
};

/// Calls f(name, member) for every parameter in a fixed order.
template <typename T, typename F>
void for_each_param(NetT<T>& n, F&& f)
{
    f("in.w", n.in_w);
    f("in.b", n.in_b);
    f("mix.w", n.mix_w);
    f("mix.b", n.mix_b);
    for (std::size_t s = 0; s < n.subject.size(); ++s)
        f("subject." + std::to_string(s), n.subject[s]);
    for (std::size_t b = 0; b < n.blocks.size(); ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        auto& blk = n.blocks[b];
        f(p + "conv1.w", blk.conv1_w);
        f(p + "conv1.b", blk.conv1_b);
        f(p + "conv2.w", blk.conv2_w);
        f(p + "conv2.b", blk.conv2_b);
        f(p + "gate.w", blk.gate_w);
        f(p + "gate.b", blk.gate_b);
    }
    f("head1.w", n.head1_w);
    f("head1.b", n.head1_b);
    f("head2.w", n.head2_w);
    f("head2.b", n.head2_b);
}

using CwerNet = NetT<MatrixF>;
using Tape = GradTape<float>;
using NetVars = NetT<Tape::Var>;

struct CwerModel {
    CwerConfig config;
    std::vector<CwerNet> nets; // one, or one per subject in per_subject mode

    const CwerNet& net_for(int subject) const;
    bool uses_subject_layer() const { return config.mode == SubjectMode::subject_layer; }
};

/// He-uniform convolution and linear weights, zero biases, and subject
/// transforms drawn as identity + N(0, 0.01^2).
CwerModel init_model(const CwerConfig& cfg, std::uint64_t seed);

std::vector<MatrixF*> parameters(CwerNet& net);

/// Registers every parameter of `net` as a tape leaf.
template <typename S>
NetT<typename GradTape<S>::Var> register_net(GradTape<S>& tape, const NetT<Mat<S>>& net, bool requires_grad)
{
    using Var = typename GradTape<S>::Var;
    NetT<Var> v;
    v.subject.resize(net.subject.size());
    v.blocks.resize(net.blocks.size());
    std::vector<Var*> slots;
    for_each_param(v, [&](const std::string&, Var& var) { slots.push_back(&var); });
    std::size_t i = 0;
    for_each_param(const_cast<NetT<Mat<S>>&>(net),
                   [&](const std::string&, Mat<S>& m) { *slots[i++] = tape.leaf(m, requires_grad); });
    return v;
}

/// Forward pass over `x` (C x (segments * segment)); segment b belongs to
/// subjects[b]. With `segment` = 0 the whole input is one segment.
template <typename S>
typename GradTape<S>::Var forward_tape(GradTape<S>& tape, const CwerConfig& cfg,
                                       const NetT<typename GradTape<S>::Var>& net, typename GradTape<S>::Var x,
                                       const std::vector<int>& subjects, Index segment, bool training, Rng& rng)
{
    if (tape.value(x).rows() != cfg.channels)
        throw ShapeError("cwer: input has " + std::to_string(tape.value(x).rows()) + " channels, model expects "
                         + std::to_string(cfg.channels));
    const Index seg = segment > 0 ? segment : tape.value(x).cols();
    const int k = cfg.kernel;
    auto h = tape.linear(x, net.in_w, net.in_b);
    h = tape.conv1d(h, net.mix_w, net.mix_b, 1);
    if (!net.subject.empty()) {
        for (int s : subjects)
            if (s < 0 || s >= static_cast<int>(net.subject.size()))
                throw ShapeError("cwer: subject id " + std::to_string(s) + " has no subject layer");
        h = tape.segment_matmul(h, net.subject, subjects, seg);
    }
    for (const auto& blk : net.blocks) {
        auto y = tape.gelu(tape.conv1d(h, blk.conv1_w, blk.conv1_b, k, 1, seg));
        y = tape.gelu(tape.conv1d(y, blk.conv2_w, blk.conv2_b, k, 1, seg));
        y = tape.glu(tape.conv1d(y, blk.gate_w, blk.gate_b, 1));
        y = tape.dropout(y, cfg.dropout, training, rng);
        h = tape.add(h, y);
    }
    auto o = tape.gelu(tape.conv1d(h, net.head1_w, net.head1_b, 1));
    return tape.conv1d(o, net.head2_w, net.head2_b, 1);
}

/// Single-segment forward; returns D x T at the input rate.
EmbeddingSeries forward(const CwerModel& model, const TimeSeries& x, int subject, bool training, Rng& rng);

/// Eval-mode forward over a whole trial, without a tape.
EmbeddingSeries reconstruct(const CwerModel& model, const TimeSeries& x, int subject);

io::Checkpoint to_checkpoint(const CwerModel& model);
CwerModel from_checkpoint(const io::Checkpoint& ckpt);
void save_model(const std::filesystem::path& path, const CwerModel& model);
/// When `expected` is given, a checkpoint with a different configuration is
/// rejected with ConfigError.
CwerModel load_model(const std::filesystem::path& path, const CwerConfig* expected = nullptr);

} // namespace semdec::cwer
