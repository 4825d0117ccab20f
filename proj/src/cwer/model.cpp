#include "semdec/cwer/model.hpp"

#include "semdec/numcore/ops.hpp"

#include <cmath>

namespace semdec::cwer {

std::string to_string(SubjectMode m)
{
    switch (m) {
    case SubjectMode::subject_layer:
        return "subject_layer";
    case SubjectMode::no_subject_layer:
        return "no_subject_layer";
    case SubjectMode::per_subject:
        return "per_subject";
    }
    return "?";
}

SubjectMode parse_subject_mode(const std::string& name)
{
    if (name == "subject_layer")
        return SubjectMode::subject_layer;
    if (name == "no_subject_layer")
        return SubjectMode::no_subject_layer;
    if (name == "per_subject")
        return SubjectMode::per_subject;
    throw ConfigError("cwer.mode: expected subject_layer, no_subject_layer or per_subject, got '" + name + "'");
}

void CwerConfig::validate() const
{
    if (channels < 1)
        throw ConfigError("cwer.channels: must be >= 1");
    if (dim < 2)
        throw ConfigError("cwer.dim: must be >= 2");
    if (hidden < 1 || head_hidden < 1)
        throw ConfigError("cwer.hidden: hidden sizes must be >= 1");
    if (blocks < 1)
        throw ConfigError("cwer.blocks: must be >= 1");
    if (kernel < 1 || kernel % 2 == 0)
        throw ConfigError("cwer.kernel: must be odd");
    if (subjects < 1)
        throw ConfigError("cwer.subjects: must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw ConfigError("cwer.dropout: must lie in [0, 1)");
}

io::Json to_json(const CwerConfig& c)
{
    return io::Json{{"channels", c.channels},       {"dim", c.dim},           {"hidden", c.hidden},
                    {"head_hidden", c.head_hidden}, {"blocks", c.blocks},     {"kernel", c.kernel},
                    {"subjects", c.subjects},       {"dropout", c.dropout},   {"mode", to_string(c.mode)}};
}

CwerConfig cwer_config_from_json(const io::Json& j)
{
    const std::string sec = "cwer";
    io::reject_unknown_keys(j, {"channels", "dim", "hidden", "head_hidden", "blocks", "kernel", "subjects", "dropout",
                                "mode"},
                            sec);
    CwerConfig c;
    io::read_field(j, "channels", c.channels, sec);
    io::read_field(j, "dim", c.dim, sec);
    io::read_field(j, "hidden", c.hidden, sec);
    io::read_field(j, "head_hidden", c.head_hidden, sec);
    io::read_field(j, "blocks", c.blocks, sec);
    io::read_field(j, "kernel", c.kernel, sec);
    io::read_field(j, "subjects", c.subjects, sec);
    io::read_field(j, "dropout", c.dropout, sec);
    std::string mode = to_string(c.mode);
    io::read_field(j, "mode", mode, sec);
    c.mode = parse_subject_mode(mode);
    return c;
}

const CwerNet& CwerModel::net_for(int subject) const
{
    if (subject < 0 || subject >= config.subjects)
        throw ShapeError("cwer: subject id " + std::to_string(subject) + " outside [0, "
                         + std::to_string(config.subjects) + ")");
    return config.mode == SubjectMode::per_subject ? nets.at(static_cast<std::size_t>(subject)) : nets.at(0);
}

namespace {

MatrixF he_uniform(Index rows, Index fan_in, Rng& rng)
{
    const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    std::uniform_real_distribution<float> u(-bound, bound);
    MatrixF m(rows, fan_in);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = u(rng);
    return m;
}

CwerNet init_net(const CwerConfig& c, int subject_matrices, Rng& rng)
{
    const Index d1 = c.hidden;
    const Index d2 = c.head_hidden;
    CwerNet n;
    n.in_w = he_uniform(d1, c.channels, rng);
    n.in_b = MatrixF::Zero(d1, 1);
    n.mix_w = he_uniform(d1, d1, rng);
    n.mix_b = MatrixF::Zero(d1, 1);
    std::normal_distribution<float> jitter(0.0f, 0.01f);
    for (int s = 0; s < subject_matrices; ++s) {
        MatrixF m = MatrixF::Identity(d1, d1);
        for (Index i = 0; i < m.size(); ++i)
            m.data()[i] += jitter(rng);
        n.subject.push_back(std::move(m));
    }
    for (int b = 0; b < c.blocks; ++b) {
        BlockT<MatrixF> blk;
        blk.conv1_w = he_uniform(d1, d1 * c.kernel, rng);
        blk.conv1_b = MatrixF::Zero(d1, 1);
        blk.conv2_w = he_uniform(d1, d1 * c.kernel, rng);
        blk.conv2_b = MatrixF::Zero(d1, 1);
        blk.gate_w = he_uniform(2 * d1, d1, rng);
        blk.gate_b = MatrixF::Zero(2 * d1, 1);
        n.blocks.push_back(std::move(blk));
    }
    n.head1_w = he_uniform(2 * d2, d1, rng);
    n.head1_b = MatrixF::Zero(2 * d2, 1);
    n.head2_w = he_uniform(c.dim, 2 * d2, rng);
    n.head2_b = MatrixF::Zero(c.dim, 1);
    return n;
}

void check_input(const CwerConfig& c, const MatrixF& x)
{
    if (x.rows() != c.channels)
        throw ShapeError("cwer: input has " + std::to_string(x.rows()) + " channels, model expects "
                         + std::to_string(c.channels));
    if (x.cols() < 1)
        throw ShapeError("cwer: empty input");
}

} // namespace

CwerModel init_model(const CwerConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    CwerModel m;
    m.config = cfg;
    const int nets = cfg.mode == SubjectMode::per_subject ? cfg.subjects : 1;
    const int subject_matrices = cfg.mode == SubjectMode::subject_layer ? cfg.subjects : 0;
    for (int i = 0; i < nets; ++i) {
        Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(i)});
        m.nets.push_back(init_net(cfg, subject_matrices, rng));
    }
    return m;
}

std::vector<MatrixF*> parameters(CwerNet& net)
{
    std::vector<MatrixF*> out;
    for_each_param(net, [&](const std::string&, MatrixF& m) { out.push_back(&m); });
    return out;
}

EmbeddingSeries forward(const CwerModel& model, const TimeSeries& x, int subject, bool training, Rng& rng)
{
    const CwerNet& net = model.net_for(subject);
    Tape tape;
    auto vars = register_net(tape, net, false);
    auto in = tape.leaf(x.data, false);
    const int local = model.uses_subject_layer() ? subject : 0;
    auto out = forward_tape(tape, model.config, vars, in, {local}, 0, training, rng);
    return {tape.value(out), x.sample_rate};
}

namespace {

MatrixF conv_bias(const MatrixF& x, const MatrixF& w, const MatrixF& b, int width)
{
    MatrixF out = conv1d<float>(x, w, width);
    out.colwise() += b.col(0);
    return out;
}

} // namespace

EmbeddingSeries reconstruct(const CwerModel& model, const TimeSeries& x, int subject)
{
    const auto& cfg = model.config;
    check_input(cfg, x.data);
    const CwerNet& net = model.net_for(subject);
    MatrixF h = linear<float>(x.data, net.in_w, net.in_b.col(0));
    h = conv_bias(h, net.mix_w, net.mix_b, 1);
    if (model.uses_subject_layer()) {
        MatrixF mixed(h.rows(), h.cols());
        mixed.noalias() = net.subject.at(static_cast<std::size_t>(subject)) * h;
        h = std::move(mixed);
    }
    for (const auto& blk : net.blocks) {
        MatrixF y = gelu<float>(conv_bias(h, blk.conv1_w, blk.conv1_b, cfg.kernel));
        y = gelu<float>(conv_bias(y, blk.conv2_w, blk.conv2_b, cfg.kernel));
        y = glu<float>(conv_bias(y, blk.gate_w, blk.gate_b, 1));
        h = h + y;
    }
    MatrixF o = gelu<float>(conv_bias(h, net.head1_w, net.head1_b, 1));
    return {conv_bias(o, net.head2_w, net.head2_b, 1), x.sample_rate};
}

io::Checkpoint to_checkpoint(const CwerModel& model)
{
    io::Checkpoint ck;
    ck.kind = "CWER";
    ck.config = to_json(model.config);
    for (std::size_t i = 0; i < model.nets.size(); ++i) {
        const std::string prefix = "net" + std::to_string(i) + ".";
        for_each_param(const_cast<CwerNet&>(model.nets[i]),
                       [&](const std::string& name, MatrixF& m) { ck.blobs.push_back({prefix + name, m}); });
    }
    return ck;
}

CwerModel from_checkpoint(const io::Checkpoint& ckpt)
{
    if (ckpt.kind != "CWER")
        throw DataError("checkpoint holds a '" + ckpt.kind + "' model, expected a CWER model");
    const auto cfg = cwer_config_from_json(ckpt.config);
    CwerModel model = init_model(cfg, 0);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < model.nets.size(); ++i) {
        const std::string prefix = "net" + std::to_string(i) + ".";
        for_each_param(model.nets[i], [&](const std::string& name, MatrixF& m) {
            const MatrixF& stored = ckpt.f32(prefix + name);
            if (stored.rows() != m.rows() || stored.cols() != m.cols())
                throw ShapeError("checkpoint: parameter '" + prefix + name + "' has the wrong shape");
            m = stored;
            ++expected;
        });
    }
    if (expected != ckpt.blobs.size())
        throw DataError("checkpoint: unexpected extra parameters for this configuration");
    return model;
}

void save_model(const std::filesystem::path& path, const CwerModel& model)
{
    io::save_checkpoint(path, to_checkpoint(model));
}

CwerModel load_model(const std::filesystem::path& path, const CwerConfig* expected)
{
    auto model = from_checkpoint(io::load_checkpoint(path));
    if (expected && !(model.config == *expected))
        throw ConfigError(path.string() + ": checkpoint was trained with mode '" + to_string(model.config.mode)
                          + "' and a different configuration than requested ('" + to_string(expected->mode) + "')");
    return model;
}

} // namespace semdec::cwer
