#include "semdec/cwer/train.hpp"

#include "semdec/numcore/ops.hpp"
#include "semdec/sigproc/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

namespace semdec::cwer {

void TrainConfig::validate() const
{
    if (!(lr > 0.0))
        throw ConfigError("train.lr: must be > 0");
    if (batch < 1)
        throw ConfigError("train.batch: must be >= 1");
    if (negatives < 2)
        throw ConfigError("train.negatives: contrastive set size must be >= 2");
    if (!(tau > 0.0))
        throw ConfigError("train.tau: must be > 0");
    if (patience < 1)
        throw ConfigError("train.patience: must be >= 1");
    if (max_epochs < 1)
        throw ConfigError("train.max_epochs: must be >= 1");
    if (!(window_s > 0.0))
        throw ConfigError("train.window_s: must be > 0");
    if (!(train_overlap >= 0.0 && train_overlap < 1.0) || !(heldout_overlap >= 0.0 && heldout_overlap < 1.0))
        throw ConfigError("train.overlap: must lie in [0, 1)");
}

io::Json to_json(const TrainConfig& c)
{
    return io::Json{{"lr", c.lr},
                    {"batch", c.batch},
                    {"negatives", c.negatives},
                    {"tau", c.tau},
                    {"patience", c.patience},
                    {"max_epochs", c.max_epochs},
                    {"window_s", c.window_s},
                    {"train_overlap", c.train_overlap},
                    {"heldout_overlap", c.heldout_overlap},
                    {"seed", c.seed}};
}

TrainConfig train_config_from_json(const io::Json& j)
{
    const std::string sec = "train";
    io::reject_unknown_keys(j,
                            {"lr", "batch", "negatives", "tau", "patience", "max_epochs", "window_s", "train_overlap",
                             "heldout_overlap", "seed"},
                            sec);
    TrainConfig c;
    io::read_field(j, "lr", c.lr, sec);
    io::read_field(j, "batch", c.batch, sec);
    io::read_field(j, "negatives", c.negatives, sec);
    io::read_field(j, "tau", c.tau, sec);
    io::read_field(j, "patience", c.patience, sec);
    io::read_field(j, "max_epochs", c.max_epochs, sec);
    io::read_field(j, "window_s", c.window_s, sec);
    io::read_field(j, "train_overlap", c.train_overlap, sec);
    io::read_field(j, "heldout_overlap", c.heldout_overlap, sec);
    io::read_field(j, "seed", c.seed, sec);
    return c;
}

void PairedData::validate() const
{
    if (meg.size() != subject.size() || meg.size() != stimulus.size())
        throw ShapeError("paired data: recording, subject and stimulus lists differ in length");
    for (std::size_t r = 0; r < meg.size(); ++r) {
        const int s = stimulus[r];
        if (s < 0 || static_cast<std::size_t>(s) >= targets.size())
            throw ShapeError("paired data: recording " + std::to_string(r) + " refers to a missing stimulus");
        if (meg[r].sample_rate != targets[static_cast<std::size_t>(s)].sample_rate)
            throw ShapeError("paired data: recording " + std::to_string(r) + " and its target differ in rate");
    }
}

TargetPool::TargetPool(const PairedData& data, double window_s, double overlap)
{
    data.validate();
    std::vector<Index> usable(data.targets.size(), -1);
    for (std::size_t r = 0; r < data.meg.size(); ++r) {
        const auto s = static_cast<std::size_t>(data.stimulus[r]);
        const Index len = std::min(data.meg[r].samples(), data.targets[s].samples());
        usable[s] = usable[s] < 0 ? len : std::min(usable[s], len);
    }
    normalized_.resize(data.targets.size());
    for (std::size_t s = 0; s < data.targets.size(); ++s) {
        if (usable[s] < 0)
            continue;
        const auto& z = data.targets[s];
        const auto plan = plan_segments(usable[s], z.sample_rate, window_s, overlap);
        window_ = plan.window;
        if (plan.starts.empty())
            continue;
        normalize_columns<float>(z.data, normalized_[s]);
        for (Index start : plan.starts)
            entries_.emplace_back(static_cast<int>(s), start);
    }
}

long TargetPool::find(int stimulus, Index start) const
{
    auto it = std::lower_bound(entries_.begin(), entries_.end(), std::make_pair(stimulus, start));
    if (it == entries_.end() || it->first != stimulus || it->second != start)
        return -1;
    return static_cast<long>(it - entries_.begin());
}

ConstMatRef<float> TargetPool::segment(std::size_t i) const
{
    const auto& [s, start] = entries_.at(i);
    return normalized_[static_cast<std::size_t>(s)].middleCols(start, window_);
}

std::vector<std::size_t> sample_negatives(std::size_t pool_size, std::size_t positive, std::size_t count, Rng& rng)
{
    const std::size_t available = positive < pool_size ? pool_size - 1 : pool_size;
    if (count > available)
        throw DataError("sample_negatives: need " + std::to_string(count) + " negatives but the training set has only "
                        + std::to_string(available) + " other segments");
    // Floyd's algorithm over the pool with the positive removed.
    std::vector<std::size_t> picked;
    picked.reserve(count);
    std::unordered_set<std::size_t> seen;
    for (std::size_t j = available - count; j < available; ++j) {
        std::uniform_int_distribution<std::size_t> u(0, j);
        std::size_t v = u(rng);
        if (!seen.insert(v).second) {
            v = j;
            seen.insert(v);
        }
        picked.push_back(v);
    }
    if (positive < pool_size)
        for (auto& v : picked)
            if (v >= positive)
                ++v;
    return picked;
}

std::vector<SegmentPair> segment_pairs(const PairedData& data, const TargetPool& pool)
{
    std::vector<SegmentPair> out;
    for (std::size_t r = 0; r < data.meg.size(); ++r) {
        const int s = data.stimulus[r];
        const Index len = std::min(data.meg[r].samples(), data.targets[static_cast<std::size_t>(s)].samples());
        for (Index start = 0; start + pool.window() <= len; ++start) {
            const long idx = pool.find(s, start);
            if (idx >= 0)
                out.push_back({static_cast<int>(r), start, static_cast<std::size_t>(idx)});
        }
    }
    return out;
}

namespace {

struct BatchLoss {
    double loss = 0.0; // mean over segments (sum over time steps)
};

MatrixF gather_inputs(const PairedData& data, const std::vector<SegmentPair>& pairs,
                      std::span<const std::size_t> which, Index window, std::vector<int>& subjects, bool subject_layer)
{
    const Index c = data.meg.front().channels();
    MatrixF x(c, window * static_cast<Index>(which.size()));
    subjects.clear();
    for (std::size_t b = 0; b < which.size(); ++b) {
        const auto& p = pairs[which[b]];
        x.middleCols(static_cast<Index>(b) * window, window) =
            data.meg[static_cast<std::size_t>(p.recording)].data.middleCols(p.start, window);
        subjects.push_back(subject_layer ? data.subject[static_cast<std::size_t>(p.recording)] : 0);
    }
    return x;
}

double evaluate(const CwerModel& model, const PairedData& data, const TargetPool& own_pool,
                const std::vector<SegmentPair>& pairs, const TargetPool& negative_pool, const TrainConfig& cfg,
                std::uint64_t negative_seed)
{
    if (pairs.empty())
        throw DataError("heldout loss: no complete segments in the heldout data");
    Rng neg_rng = derive_rng(negative_seed, {11});
    Rng unused(0);
    const Index w = own_pool.window();
    double total = 0.0;
    // Per-subject networks see one subject per batch.
    std::vector<std::vector<std::size_t>> groups;
    if (model.config.mode == SubjectMode::per_subject) {
        groups.resize(static_cast<std::size_t>(model.config.subjects));
        for (std::size_t i = 0; i < pairs.size(); ++i)
            groups[static_cast<std::size_t>(data.subject[static_cast<std::size_t>(pairs[i].recording)])].push_back(i);
    } else {
        groups.emplace_back(pairs.size());
        std::iota(groups[0].begin(), groups[0].end(), 0);
    }
    std::vector<int> subjects;
    for (const auto& group : groups)
        for (std::size_t b0 = 0; b0 < group.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), group.size() - b0);
            std::span<const std::size_t> which(group.data() + b0, n);
            const int subject0 = data.subject[static_cast<std::size_t>(pairs[which[0]].recording)];
            const CwerNet& net = model.net_for(model.config.mode == SubjectMode::per_subject ? subject0 : 0);
            Tape tape;
            auto vars = register_net(tape, net, false);
            auto x = tape.leaf(gather_inputs(data, pairs, which, w, subjects, model.uses_subject_layer()), false);
            auto out = forward_tape(tape, model.config, vars, x, subjects, w, false, unused);
            std::vector<std::vector<ConstMatRef<float>>> cands(n);
            for (std::size_t b = 0; b < n; ++b) {
                cands[b].push_back(own_pool.segment(pairs[which[b]].target));
                for (auto j : sample_negatives(negative_pool.size(), negative_pool.size(),
                                               static_cast<std::size_t>(cfg.negatives - 1), neg_rng))
                    cands[b].push_back(negative_pool.segment(j));
            }
            total += static_cast<double>(tape.value(tape.infonce_batch(out, cands, cfg.tau, w))(0, 0))
                     * static_cast<double>(n);
        }
    return total / static_cast<double>(pairs.size()) / static_cast<double>(w);
}

PairedData subject_subset(const PairedData& d, int subject)
{
    PairedData out;
    out.targets = d.targets;
    for (std::size_t r = 0; r < d.meg.size(); ++r)
        if (d.subject[r] == subject) {
            out.meg.push_back(d.meg[r]);
            out.subject.push_back(0);
            out.stimulus.push_back(d.stimulus[r]);
        }
    return out;
}

/// Trains the single network of `model` in place and returns the best copy.
CwerModel train_network(CwerModel model, const PairedData& train_data, const PairedData& heldout_data,
                        const TrainConfig& cfg, int net_index, std::vector<EpochRecord>& history, int& best_epoch,
                        const EpochCallback& on_epoch)
{
    const TargetPool pool(train_data, cfg.window_s, cfg.train_overlap);
    const auto pairs = segment_pairs(train_data, pool);
    const TargetPool heldout_pool(heldout_data, cfg.window_s, cfg.heldout_overlap);
    const auto heldout_pairs = segment_pairs(heldout_data, heldout_pool);
    if (pairs.empty())
        throw DataError("train: no complete training segments");
    if (pool.size() < static_cast<std::size_t>(cfg.negatives))
        throw DataError("train: contrastive set size " + std::to_string(cfg.negatives) + " exceeds the "
                        + std::to_string(pool.size()) + " distinct training segments");
    if (heldout_pairs.empty())
        throw DataError("train: no complete heldout segments");

    CwerNet& net = model.nets.at(0);
    auto params = parameters(net);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    AdamState<float> adam(adam_cfg, params);
    const std::uint64_t net_seed = derive_rng(cfg.seed, {20, static_cast<std::uint64_t>(net_index)})();
    const Index w = pool.window();

    CwerModel best = model;
    double best_loss = std::numeric_limits<double>::infinity();
    int stale = 0;
    best_epoch = 0;
    std::vector<int> subjects;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng rng = derive_rng(net_seed, {static_cast<std::uint64_t>(epoch)});
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), order.size() - b0);
            std::span<const std::size_t> which(order.data() + b0, n);
            Tape tape;
            auto vars = register_net(tape, net, true);
            auto x = tape.leaf(gather_inputs(train_data, pairs, which, w, subjects, model.uses_subject_layer()),
                               false);
            auto out = forward_tape(tape, model.config, vars, x, subjects, w, true, rng);
            std::vector<std::vector<ConstMatRef<float>>> cands(n);
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t pos = pairs[which[b]].target;
                cands[b].push_back(pool.segment(pos));
                for (auto j : sample_negatives(pool.size(), pos, static_cast<std::size_t>(cfg.negatives - 1), rng))
                    cands[b].push_back(pool.segment(j));
            }
            auto loss = tape.infonce_batch(out, cands, cfg.tau, w);
            const double value = tape.value(loss)(0, 0);
            if (!std::isfinite(value))
                throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch)
                                    + " (network " + std::to_string(net_index) + "); try a smaller learning rate");
            tape.backward(loss);
            std::vector<MatrixF> grads;
            std::vector<Tape::Var*> leaves;
            for_each_param(vars, [&](const std::string&, Tape::Var& v) { leaves.push_back(&v); });
            grads.reserve(leaves.size());
            for (auto* v : leaves)
                grads.push_back(tape.grad(*v));
            if (adam_step<float>(params, grads, adam) != AdamStatus::applied)
                throw TrainingError("training diverged: non-finite gradient at epoch " + std::to_string(epoch)
                                    + " (network " + std::to_string(net_index) + ")");
            epoch_loss += value * static_cast<double>(n);
        }
        EpochRecord rec;
        rec.net = net_index;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(pairs.size()) / static_cast<double>(w);
        rec.heldout_loss = evaluate(model, heldout_data, heldout_pool, heldout_pairs, pool, cfg, cfg.seed);
        if (!std::isfinite(rec.heldout_loss))
            throw TrainingError("training diverged: non-finite heldout loss at epoch " + std::to_string(epoch));
        history.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
        if (rec.heldout_loss < best_loss) {
            best_loss = rec.heldout_loss;
            best = model;
            best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    return best;
}

} // namespace

TrainResult train(const CwerConfig& model_cfg, const PairedData& train_data, const PairedData& heldout_data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch)
{
    model_cfg.validate();
    cfg.validate();
    train_data.validate();
    heldout_data.validate();
    for (const auto* d : {&train_data, &heldout_data})
        for (std::size_t r = 0; r < d->meg.size(); ++r) {
            if (d->meg[r].channels() != model_cfg.channels)
                throw ShapeError("train: recording has " + std::to_string(d->meg[r].channels())
                                 + " channels, model expects " + std::to_string(model_cfg.channels));
            if (d->subject[r] < 0 || d->subject[r] >= model_cfg.subjects)
                throw ShapeError("train: subject id outside the configured range");
            if (d->targets[static_cast<std::size_t>(d->stimulus[r])].channels() != model_cfg.dim)
                throw ShapeError("train: target dimension differs from the model");
        }

    TrainResult result;
    if (model_cfg.mode != SubjectMode::per_subject) {
        int best_epoch = 0;
        result.model = train_network(init_model(model_cfg, cfg.seed), train_data, heldout_data, cfg, 0,
                                     result.history, best_epoch, on_epoch);
        result.best_epoch.push_back(best_epoch);
        return result;
    }

    CwerConfig single = model_cfg;
    single.mode = SubjectMode::no_subject_layer;
    single.subjects = 1;
    result.model.config = model_cfg;
    for (int s = 0; s < model_cfg.subjects; ++s) {
        int best_epoch = 0;
        auto init = init_model(single, derive_rng(cfg.seed, {30, static_cast<std::uint64_t>(s)})());
        auto trained = train_network(std::move(init), subject_subset(train_data, s), subject_subset(heldout_data, s),
                                     cfg, s, result.history, best_epoch, on_epoch);
        result.model.nets.push_back(std::move(trained.nets.at(0)));
        result.best_epoch.push_back(best_epoch);
    }
    return result;
}

double heldout_loss(const CwerModel& model, const PairedData& data, const TargetPool& negative_pool,
                    const TrainConfig& cfg, std::uint64_t negative_seed)
{
    const TargetPool own(data, cfg.window_s, cfg.heldout_overlap);
    const auto pairs = segment_pairs(data, own);
    return evaluate(model, data, own, pairs, negative_pool, cfg, negative_seed);
}

} // namespace semdec::cwer
