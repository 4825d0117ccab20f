#include "semdec/cwer/train.hpp"
#include "semdec/numcore/gradcheck.hpp"
#include "semdec/sigproc/dsp.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace semdec;
using namespace semdec::cwer;
namespace fs = std::filesystem;

namespace {

CwerConfig tiny_config(int channels = 6, int dim = 4, int subjects = 2, SubjectMode mode = SubjectMode::subject_layer)
{
    CwerConfig c;
    c.channels = channels;
    c.dim = dim;
    c.hidden = 8;
    c.head_hidden = 4;
    c.blocks = 2;
    c.kernel = 3;
    c.subjects = subjects;
    c.dropout = 0.0;
    c.mode = mode;
    return c;
}

TimeSeries random_series(Index c, Index t, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    MatrixF x(c, t);
    for (Index i = 0; i < x.size(); ++i)
        x.data()[i] = n(rng);
    return {x, 40.0};
}

// Piecewise-constant "word" series, low-passed and standardized like real targets.
EmbeddingSeries word_like_series(Index dim, double seconds, Rng& rng)
{
    const auto samples = static_cast<Index>(seconds * 40.0);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::uniform_int_distribution<Index> len(8, 24);
    MatrixF z(dim, samples);
    Index t = 0;
    while (t < samples) {
        VectorF v(dim);
        for (Index d = 0; d < dim; ++d)
            v[d] = n(rng);
        const Index l = std::min(len(rng), samples - t);
        z.middleCols(t, l) = v.replicate(1, l);
        t += l;
    }
    auto taps = design_fir(FilterSpec::lowpass(4.0), 40.0);
    return zscore_channels(filtfilt({z, 40.0}, taps)).series;
}

struct Planted {
    PairedData train, heldout;
};

// Noise-free linear forward model x = A z shared by all subjects.
Planted planted_problem(int subjects, int train_stimuli, int heldout_stimuli, std::uint64_t seed)
{
    Rng rng(seed);
    const Index c = 4, d = 4;
    MatrixF a = random_series(c, d, seed + 1).data;
    Planted p;
    for (int s = 0; s < train_stimuli + heldout_stimuli; ++s) {
        auto z = word_like_series(d, 30.0, rng);
        PairedData& dst = s < train_stimuli ? p.train : p.heldout;
        dst.targets.push_back(z);
        for (int subj = 0; subj < subjects; ++subj) {
            dst.meg.push_back({a * z.data, 40.0});
            dst.subject.push_back(subj);
            dst.stimulus.push_back(static_cast<int>(dst.targets.size()) - 1);
        }
    }
    return p;
}

} // namespace

TEST_CASE("forward shape contract and subject invariance with identity transforms")
{
    auto cfg = tiny_config(32, 5, 3);
    auto model = init_model(cfg, 1);
    auto x = random_series(32, 400, 2);
    Rng rng(0);
    auto out = forward(model, x, 1, false, rng);
    CHECK(out.channels() == 5);
    CHECK(out.samples() == 400);

    for (auto& m : model.nets[0].subject)
        m = MatrixF::Identity(8, 8);
    auto a = forward(model, x, 0, false, rng);
    auto b = forward(model, x, 2, false, rng);
    CHECK((a.data - b.data).cwiseAbs().maxCoeff() == 0.0f);

    CHECK_THROWS_AS(forward(model, random_series(31, 50, 1), 0, false, rng), ShapeError);
    CHECK_THROWS_AS(forward(model, x, 3, false, rng), ShapeError);
}

TEST_CASE("zero input with zero biases gives zero output")
{
    auto model = init_model(tiny_config(), 3);
    TimeSeries x{MatrixF::Zero(6, 50), 40.0};
    Rng rng(0);
    CHECK(forward(model, x, 0, false, rng).data.cwiseAbs().maxCoeff() == 0.0f);
    CHECK(reconstruct(model, x, 1).data.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("reconstruct equals the eval-mode tape forward and is deterministic")
{
    auto cfg = tiny_config();
    cfg.dropout = 0.5;
    auto model = init_model(cfg, 4);
    auto x = random_series(6, 120, 5);
    Rng rng(1);
    auto tape_out = forward(model, x, 1, false, rng);
    auto direct = reconstruct(model, x, 1);
    CHECK((tape_out.data - direct.data).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((reconstruct(model, x, 1).data - direct.data).cwiseAbs().maxCoeff() == 0.0f);

    Rng r1(9), r2(9);
    CHECK((forward(model, x, 0, true, r1).data - forward(model, x, 0, true, r2).data).cwiseAbs().maxCoeff() == 0.0f);
    Rng r3(10);
    CHECK((forward(model, x, 0, true, r3).data - direct.data).cwiseAbs().maxCoeff() > 0.0f);

    // Ten minutes at 40 Hz.
    auto long_out = reconstruct(model, random_series(6, 24000, 6), 0);
    CHECK(long_out.channels() == 4);
    CHECK(long_out.samples() == 24000);
}

TEST_CASE("no-subject-layer mode equals subject mode with identity transforms")
{
    auto with = init_model(tiny_config(), 7);
    for (auto& m : with.nets[0].subject)
        m = MatrixF::Identity(8, 8);
    auto without_cfg = tiny_config(6, 4, 2, SubjectMode::no_subject_layer);
    auto without = init_model(without_cfg, 7);
    auto src = with.nets[0];
    src.subject.clear();
    without.nets[0] = src;
    auto x = random_series(6, 80, 8);
    for (int s = 0; s < 2; ++s)
        CHECK((reconstruct(with, x, s).data - reconstruct(without, x, s).data).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("per-subject mode holds one network per subject")
{
    auto model = init_model(tiny_config(6, 4, 3, SubjectMode::per_subject), 2);
    REQUIRE(model.nets.size() == 3);
    CHECK(model.nets[0].subject.empty());
    auto x = random_series(6, 60, 1);
    CHECK((reconstruct(model, x, 0).data - reconstruct(model, x, 2).data).cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("full forward + contrastive loss passes grad_check in double precision")
{
    for (int seed = 0; seed < 20; ++seed) {
        auto cfg = tiny_config(3, 3, 2);
        cfg.hidden = 4;
        cfg.head_hidden = 2;
        cfg.dropout = seed % 2 ? 0.3 : 0.0;
        auto model = init_model(cfg, static_cast<std::uint64_t>(seed));
        NetT<MatrixD> net;
        {
            auto& src = model.nets[0];
            net.subject.resize(src.subject.size());
            net.blocks.resize(src.blocks.size());
            std::vector<MatrixD*> dst;
            for_each_param(net, [&](const std::string&, MatrixD& m) { dst.push_back(&m); });
            std::size_t i = 0;
            for_each_param(src, [&](const std::string&, MatrixF& m) { *dst[i++] = m.cast<double>(); });
        }
        // Non-zero biases exercise every path.
        Rng brng(static_cast<std::uint64_t>(seed) + 100);
        std::normal_distribution<double> nb(0.0, 0.1);
        for_each_param(net, [&](const std::string& name, MatrixD& m) {
            if (name.ends_with(".b"))
                for (Index i = 0; i < m.size(); ++i)
                    m.data()[i] = nb(brng);
        });
        MatrixD x = random_series(3, 2 * 7, static_cast<std::uint64_t>(seed)).data.cast<double>();
        std::vector<MatrixD> cands;
        for (int i = 0; i < 2 * 4; ++i) {
            MatrixD n;
            normalize_columns<double>(random_series(3, 7, 1000 + static_cast<std::uint64_t>(seed) * 10 + i).data.cast<double>(), n);
            cands.push_back(n);
        }

        std::vector<MatrixD*> slots;
        for_each_param(net, [&](const std::string&, MatrixD& m) { slots.push_back(&m); });
        Index total = 0;
        for (auto* m : slots)
            total += m->size();
        VectorD theta(total);
        Index off = 0;
        for (auto* m : slots) {
            theta.segment(off, m->size()) = Eigen::Map<VectorD>(m->data(), m->size());
            off += m->size();
        }

        auto objective = [&](const VectorD& v, VectorD* grad) {
            NetT<MatrixD> local = net;
            std::vector<MatrixD*> ls;
            for_each_param(local, [&](const std::string&, MatrixD& m) { ls.push_back(&m); });
            Index o = 0;
            for (auto* m : ls) {
                *m = Eigen::Map<const MatrixD>(v.data() + o, m->rows(), m->cols());
                o += m->size();
            }
            GradTape<double> tape;
            auto vars = register_net(tape, local, true);
            auto xin = tape.leaf(x, false);
            Rng mask_rng(77); // identical dropout mask on every evaluation
            auto out = forward_tape(tape, cfg, vars, xin, {0, 1}, 7, true, mask_rng);
            std::vector<std::vector<ConstMatRef<double>>> sets(2);
            for (int i = 0; i < 4; ++i) {
                sets[0].emplace_back(cands[static_cast<std::size_t>(i)]);
                sets[1].emplace_back(cands[static_cast<std::size_t>(4 + i)]);
            }
            auto loss = tape.infonce_batch(out, sets, 0.5, 7);
            if (grad) {
                tape.backward(loss);
                grad->resize(v.size());
                std::vector<GradTape<double>::Var*> lv;
                for_each_param(vars, [&](const std::string&, GradTape<double>::Var& var) { lv.push_back(&var); });
                Index g0 = 0;
                for (auto* var : lv) {
                    MatrixD g = tape.grad(*var);
                    grad->segment(g0, g.size()) = Eigen::Map<VectorD>(g.data(), g.size());
                    g0 += g.size();
                }
            }
            return tape.value(loss)(0, 0);
        };
        auto report = grad_check(objective, theta);
        CHECK(report.max_relative_error < 1e-4);
    }
}

TEST_CASE("sample_negatives contract and uniformity")
{
    Rng rng(1);
    for (int i = 0; i < 20; ++i)
        CHECK(sample_negatives(2, 0, 1, rng) == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(sample_negatives(5, 0, 5, rng), DataError);

    std::vector<int> hits(100, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        auto picked = sample_negatives(100, 42, 1, rng);
        REQUIRE(picked.size() == 1);
        CHECK(picked[0] != 42);
        ++hits[picked[0]];
    }
    // Chi-square goodness of fit against uniform over the 99 allowed indices.
    const double expected = draws / 99.0;
    double chi2 = 0.0;
    for (int j = 0; j < 100; ++j) {
        if (j == 42) {
            CHECK(hits[static_cast<std::size_t>(j)] == 0);
            continue;
        }
        const double d = hits[static_cast<std::size_t>(j)] - expected;
        chi2 += d * d / expected;
    }
    CHECK(chi2 < 147.0); // 99.9% quantile, 98 degrees of freedom

    for (int i = 0; i < 200; ++i) {
        auto picked = sample_negatives(30, static_cast<std::size_t>(i % 30), 20, rng);
        std::sort(picked.begin(), picked.end());
        CHECK(std::adjacent_find(picked.begin(), picked.end()) == picked.end());
        CHECK(std::find(picked.begin(), picked.end(), static_cast<std::size_t>(i % 30)) == picked.end());
        CHECK(picked.back() < 30);
    }
}

TEST_CASE("target pool deduplicates stimuli shared across subjects")
{
    auto p = planted_problem(3, 2, 1, 5);
    TargetPool pool(p.train, 10.0, 0.8);
    CHECK(pool.size() == 2 * 11);
    auto pairs = segment_pairs(p.train, pool);
    CHECK(pairs.size() == 3 * 2 * 11);
    for (const auto& pr : pairs)
        CHECK(pool.stimulus_of(pr.target) == p.train.stimulus[static_cast<std::size_t>(pr.recording)]);
}

TEST_CASE("single small step decreases the batch loss")
{
    auto p = planted_problem(2, 3, 1, 11);
    auto cfg = tiny_config(4, 4, 2);
    auto model = init_model(cfg, 5);
    TargetPool pool(p.train, 10.0, 0.8);
    auto pairs = segment_pairs(p.train, pool);
    const Index w = pool.window();

    std::vector<std::vector<ConstMatRef<float>>> cands(4);
    Rng rng(3);
    MatrixF x(4, 4 * w);
    std::vector<int> subjects;
    for (int b = 0; b < 4; ++b) {
        const auto& pr = pairs[static_cast<std::size_t>(b * 7)];
        x.middleCols(b * w, w) = p.train.meg[static_cast<std::size_t>(pr.recording)].data.middleCols(pr.start, w);
        subjects.push_back(p.train.subject[static_cast<std::size_t>(pr.recording)]);
        cands[static_cast<std::size_t>(b)].push_back(pool.segment(pr.target));
        for (auto j : sample_negatives(pool.size(), pr.target, 7, rng))
            cands[static_cast<std::size_t>(b)].push_back(pool.segment(j));
    }
    auto batch_loss = [&](CwerNet& net, std::vector<MatrixF>* grads) {
        Tape tape;
        auto vars = register_net(tape, net, true);
        Rng unused(0);
        auto out = forward_tape(tape, cfg, vars, tape.leaf(x, false), subjects, w, false, unused);
        auto loss = tape.infonce_batch(out, cands, 0.025, w);
        if (grads) {
            tape.backward(loss);
            for_each_param(vars, [&](const std::string&, Tape::Var& v) { grads->push_back(tape.grad(v)); });
        }
        return static_cast<double>(tape.value(loss)(0, 0));
    };
    CwerNet& net = model.nets[0];
    std::vector<MatrixF> grads;
    const double before = batch_loss(net, &grads);
    auto params = parameters(net);
    AdamState<float> adam(AdamConfig{1e-6}, params);
    auto subject_before = net.subject;
    REQUIRE(adam_step<float>(params, grads, adam) == AdamStatus::applied);
    const double after = batch_loss(net, nullptr);
    CHECK(after < before);
    CHECK((net.subject[0] - subject_before[0]).cwiseAbs().maxCoeff() > 0.0f);
    CHECK((net.subject[1] - subject_before[1]).cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("a step on one subject's data only moves that subject's transform")
{
    auto p = planted_problem(2, 3, 1, 12);
    PairedData only0;
    only0.targets = p.train.targets;
    for (std::size_t r = 0; r < p.train.meg.size(); ++r)
        if (p.train.subject[r] == 0) {
            only0.meg.push_back(p.train.meg[r]);
            only0.subject.push_back(0);
            only0.stimulus.push_back(p.train.stimulus[r]);
        }
    auto cfg = tiny_config(4, 4, 2);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.negatives = 8;
    tc.max_epochs = 1;
    tc.batch = 1000; // a single step
    tc.seed = 4;
    auto init = init_model(cfg, tc.seed);
    auto res = train(cfg, only0, p.heldout, tc);
    CHECK((res.model.nets[0].subject[0] - init.nets[0].subject[0]).cwiseAbs().maxCoeff() > 0.0f);
    CHECK((res.model.nets[0].subject[1] - init.nets[0].subject[1]).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("planted linear problem is learned; training is deterministic")
{
    auto p = planted_problem(1, 6, 2, 21);
    auto cfg = tiny_config(4, 4, 1);
    cfg.hidden = 16;
    cfg.head_hidden = 8;
    TrainConfig tc;
    tc.lr = 3e-3;
    tc.batch = 8;
    tc.negatives = 16;
    tc.max_epochs = 50;
    tc.patience = 50;
    tc.seed = 2;
    auto res = train(cfg, p.train, p.heldout, tc);
    REQUIRE(!res.history.empty());
    const double best = std::min_element(res.history.begin(), res.history.end(), [](auto& a, auto& b) {
                            return a.heldout_loss < b.heldout_loss;
                        })->heldout_loss;
    MESSAGE("first heldout loss per step " << res.history.front().heldout_loss << ", best " << best);
    CHECK(best < std::log(16.0) / 2.0);

    TrainConfig quick = tc;
    quick.max_epochs = 3;
    auto r1 = train(cfg, p.train, p.heldout, quick);
    auto r2 = train(cfg, p.train, p.heldout, quick);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
        CHECK(r1.history[i].heldout_loss == r2.history[i].heldout_loss);
    }
}

TEST_CASE("early stopping keeps the best heldout checkpoint")
{
    auto p = planted_problem(1, 4, 1, 31);
    auto cfg = tiny_config(4, 4, 1);
    TrainConfig tc;
    tc.lr = 0.05; // noisy enough that the heldout loss stalls
    tc.batch = 4;
    tc.negatives = 8;
    tc.max_epochs = 40;
    tc.patience = 2;
    auto res = train(cfg, p.train, p.heldout, tc);
    const auto& h = res.history;
    const auto best = std::min_element(h.begin(), h.end(), [](auto& a, auto& b) { return a.heldout_loss < b.heldout_loss; });
    CHECK(res.best_epoch[0] == best->epoch);
    if (static_cast<int>(h.size()) < tc.max_epochs)
        CHECK(static_cast<int>(h.size()) - res.best_epoch[0] == tc.patience);
    TargetPool pool(p.train, 10.0, 0.8);
    CHECK(heldout_loss(res.model, p.heldout, pool, tc, tc.seed) == doctest::Approx(best->heldout_loss).epsilon(1e-6));
}

TEST_CASE("per-subject training and divergence diagnostics")
{
    auto p = planted_problem(2, 3, 1, 41);
    auto cfg = tiny_config(4, 4, 2, SubjectMode::per_subject);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.negatives = 8;
    tc.max_epochs = 2;
    auto res = train(cfg, p.train, p.heldout, tc);
    CHECK(res.model.nets.size() == 2);
    CHECK(res.best_epoch.size() == 2);
    CHECK(res.history.front().net == 0);
    CHECK(res.history.back().net == 1);

    auto bad = p.train;
    bad.meg[0].data(0, 5) = NAN;
    CHECK_THROWS_AS(train(tiny_config(4, 4, 2), bad, p.heldout, tc), TrainingError);
    tc.negatives = 1000;
    CHECK_THROWS_AS(train(tiny_config(4, 4, 2), p.train, p.heldout, tc), DataError);
}

TEST_CASE("checkpoint round trip, corruption and mode mismatch")
{
    auto model = init_model(tiny_config(), 8);
    auto dir = fs::temp_directory_path();
    auto a = dir / "semdec_cwer_a.ckpt";
    auto b = dir / "semdec_cwer_b.ckpt";
    save_model(a, model);
    auto loaded = load_model(a);
    save_model(b, loaded);
    auto read = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    CHECK(read(a) == read(b));
    auto x = random_series(6, 40, 3);
    CHECK((reconstruct(model, x, 1).data - reconstruct(loaded, x, 1).data).cwiseAbs().maxCoeff() == 0.0f);

    {
        std::fstream f(b, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(200);
        f.put('\x55');
    }
    CHECK_THROWS_AS(load_model(b), DataError);

    auto plain = init_model(tiny_config(6, 4, 2, SubjectMode::no_subject_layer), 1);
    save_model(b, plain);
    auto want = tiny_config();
    CHECK_THROWS_AS(load_model(b, &want), ConfigError);
    fs::remove(a);
    fs::remove(b);
}
