#include "semdec/decoder/beam.hpp"
#include "semdec/numcore/ops.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

using namespace semdec;
using namespace semdec::decoder;

namespace {

// Independent oracle: sort (prob desc, id asc), find the shortest prefix
// reaching p by trying every prefix length, then drop words below r * max.
std::vector<int> nucleus_oracle(const VectorD& dist, double p, double r)
{
    std::vector<std::pair<double, int>> items;
    for (Index i = 0; i < dist.size(); ++i)
        items.emplace_back(-dist[i], static_cast<int>(i));
    std::sort(items.begin(), items.end());
    std::size_t len = items.size();
    for (std::size_t m = 1; m <= items.size(); ++m) {
        double mass = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            mass -= items[i].first;
        if (mass >= p) {
            len = m;
            break;
        }
    }
    const double top = -items.front().first;
    std::vector<int> out;
    for (std::size_t i = 0; i < len; ++i)
        if (-items[i].first >= r * top)
            out.push_back(items[i].second);
    return out;
}

EmbeddingTable random_table(Index dim, int vocab, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    EmbeddingTable t{MatrixF(dim, vocab)};
    for (Index i = 0; i < t.vectors.size(); ++i)
        t.vectors.data()[i] = n(rng);
    t.vectors.colwise().normalize();
    return t;
}

NgramLm random_lm(int vocab, int order, std::uint64_t seed, int length = 400)
{
    Rng rng(seed);
    std::uniform_int_distribution<int> w(0, vocab - 1);
    std::vector<std::vector<int>> trials(4);
    for (auto& t : trials)
        for (int i = 0; i < length; ++i)
            t.push_back(w(rng));
    return NgramLm::train(trials, order, vocab);
}

std::vector<WordTiming> regular_timings(int n, double len = 0.5, double gap = 0.1)
{
    std::vector<WordTiming> t;
    double now = 0.0;
    for (int i = 0; i < n; ++i) {
        t.push_back({now, now + len});
        now += len + gap;
    }
    return t;
}

EmbeddingSeries random_series(Index dim, Index samples, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    MatrixF z(dim, samples);
    for (Index i = 0; i < z.size(); ++i)
        z.data()[i] = n(rng);
    return {z, 40.0};
}

double sequence_score(const std::vector<int>& seq, const EmbeddingSeries& zhat, std::span<const WordTiming> timings,
                      const EmbeddingTable& table, const DecoderConfig& cfg)
{
    double total = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const auto lo = static_cast<Index>(std::floor(timings[i].t_on * zhat.sample_rate + 1e-9));
        const auto hi = static_cast<Index>(std::floor(timings[i].t_off * zhat.sample_rate + 1e-9));
        VectorD avg = VectorD::Zero(zhat.channels());
        for (Index t = lo; t < hi; ++t)
            avg += zhat.data.col(t).cast<double>();
        avg /= static_cast<double>(hi - lo);
        auto e = contextual_embed(table, std::span<const int>(seq.data(), i + 1), cfg.context_length,
                                  cfg.context_decay);
        total += pearson(avg, e.vector.cast<double>());
    }
    return total;
}

DecoderConfig open_config(int beam)
{
    DecoderConfig c;
    c.beam = beam;
    c.top_p = 1.0;
    c.top_r = 1e-12;
    c.exclude_unk = false;
    return c;
}

} // namespace

TEST_CASE("nucleus filter examples")
{
    VectorD d(4);
    d << 0.5, 0.3, 0.15, 0.05;
    CHECK(nucleus_filter(d, 0.9, 0.1) == std::vector<int>{0, 1, 2});
    CHECK(nucleus_filter(d, 1.0, 1e-9) == std::vector<int>{0, 1, 2, 3});
    CHECK(nucleus_filter(d, 0.5, 0.1) == std::vector<int>{0});
    CHECK(nucleus_filter(d, 0.9, 0.5) == std::vector<int>{0, 1});
    VectorD point = VectorD::Zero(5);
    point[3] = 1.0;
    for (double p : {0.1, 0.5, 1.0})
        for (double r : {1e-6, 0.5, 1.0})
            CHECK(nucleus_filter(point, p, r) == std::vector<int>{3});
    VectorD tie(3);
    tie << 0.25, 0.5, 0.25;
    CHECK(nucleus_filter(tie, 0.7, 0.1) == std::vector<int>{1, 0});
    VectorD bad = d * 1.1;
    CHECK_THROWS_AS(nucleus_filter(bad, 0.9, 0.1), DataError);
    CHECK_THROWS_AS(nucleus_filter(d, 0.0, 0.1), ConfigError);
}

TEST_CASE("nucleus filter agrees with a brute-force oracle on random distributions")
{
    Rng rng(5);
    std::uniform_int_distribution<int> size(1, 40);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> quant(0, 4);
    for (int trial = 0; trial < 1000; ++trial) {
        VectorD d(size(rng));
        const bool coarse = trial % 2 == 0; // quantized weights produce ties
        for (Index i = 0; i < d.size(); ++i)
            d[i] = coarse ? quant(rng) : std::pow(u(rng), 3.0);
        if (d.sum() == 0.0)
            d[0] = 1.0;
        d /= d.sum();
        const double p = std::max(u(rng), 1e-3);
        const double r = std::max(u(rng), 1e-3);
        auto got = nucleus_filter(d, p, r);
        CHECK(!got.empty());
        CHECK(got == nucleus_oracle(d, p, r));
    }
}

TEST_CASE("window average")
{
    EmbeddingSeries c{MatrixF::Constant(3, 100, 2.5f), 40.0};
    CHECK((window_average(c, 0.3, 0.9).array() == 2.5).all());

    EmbeddingSeries ramp{MatrixF(1, 100), 40.0};
    for (Index t = 0; t < 100; ++t)
        ramp.data(0, t) = static_cast<float>(t) / 99.0f;
    // Samples 20..39: mean is the midpoint of the sampled ramp.
    const double expected = (20.0 + 39.0) / 2.0 / 99.0;
    CHECK(std::abs(window_average(ramp, 0.5, 1.0)[0] - expected) <= 1.0 / (2.0 * 20));

    CHECK_THROWS_AS(window_average(c, 0.51, 0.52), DataError);
    CHECK_THROWS_AS(window_average(c, 3.0, 3.5), DataError);

    auto z = random_series(4, 80, 3);
    MatrixF m = random_series(6, 4, 4).data;
    EmbeddingSeries mz{m * z.data, 40.0};
    VectorD lhs = window_average(mz, 0.2, 1.4);
    VectorD rhs = m.cast<double>() * window_average(z, 0.2, 1.4);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("continuation scores")
{
    auto table = random_table(8, 6, 1);
    DecoderConfig cfg;
    VectorD target = table.vectors.col(2).cast<double>();
    std::vector<int> cands{0, 1, 2, 3};
    auto s = score_continuations(target, cands, {}, table, cfg);
    CHECK(s[2] == doctest::Approx(1.0).epsilon(1e-9));
    auto neg = score_continuations(-target, cands, {}, table, cfg);
    CHECK(neg[2] == doctest::Approx(-1.0).epsilon(1e-9));

    std::vector<int> ctx{5, 4, 1, 0, 3, 2, 5, 4, 1, 0};
    auto a = score_continuations(target, cands, ctx, table, cfg);
    std::vector<int> rev{3, 2, 1, 0};
    auto b = score_continuations(target, rev, ctx, table, cfg);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(a[i] == b[3 - i]);
    for (std::size_t i = 0; i < 4; ++i) {
        auto seq = ctx;
        seq.push_back(cands[i]);
        auto e = contextual_embed(table, seq, cfg.context_length, cfg.context_decay);
        CHECK(a[i] == doctest::Approx(pearson(target, e.vector.cast<double>())).epsilon(1e-6));
    }
}

TEST_CASE("beam step: greedy at k=1, bounded width, heap order")
{
    auto table = random_table(6, 12, 2);
    auto lm = random_lm(12, 3, 3);
    auto timings = regular_timings(6);
    auto zhat = random_series(6, 200, 4);

    DecoderConfig greedy = open_config(1);
    greedy.max_continuations = 12;
    auto res = decode_trial(zhat, timings, lm, table, greedy);
    std::vector<int> manual;
    for (std::size_t i = 0; i < timings.size(); ++i) {
        std::vector<int> all(12);
        std::iota(all.begin(), all.end(), 0);
        auto s = score_continuations(window_average(zhat, timings[i].t_on, timings[i].t_off), all, manual, table,
                                     greedy);
        manual.push_back(static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()));
    }
    CHECK(res.words == manual);

    DecoderConfig cfg = open_config(7);
    BeamSearch search(lm, cfg);
    auto scorer = correlation_scorer(zhat, timings, table, cfg);
    std::vector<Hypothesis> beam(1);
    for (std::size_t slot = 0; slot < timings.size(); ++slot) {
        // Every child the step could create, scored independently.
        std::vector<double> all_children;
        for (const auto& h : beam) {
            const auto& prop = search.propose(h.words, timings);
            auto s = score_continuations(window_average(zhat, timings[slot].t_on, timings[slot].t_off), prop.words,
                                         h.words, table, cfg);
            for (double v : s)
                all_children.push_back(h.cumulative + v);
        }
        auto next = search.step(beam, timings, scorer);
        CHECK(next.size() <= 7);
        std::sort(all_children.begin(), all_children.end(), std::greater<>());
        for (std::size_t i = 0; i < next.size(); ++i) {
            CHECK(next[i].cumulative == doctest::Approx(all_children[i]).epsilon(1e-12));
            CHECK(next[i].words.size() == slot + 1);
            CHECK(next[i].scores.size() == slot + 1);
            CHECK(std::accumulate(next[i].scores.begin(), next[i].scores.end(), 0.0)
                  == doctest::Approx(next[i].cumulative).epsilon(1e-6));
        }
        beam = next;
    }
}

TEST_CASE("beam ties break by LM probability, then word ids")
{
    auto lm = random_lm(5, 2, 9);
    DecoderConfig cfg = open_config(3);
    BeamSearch search(lm, cfg);
    auto timings = regular_timings(1);
    auto constant = [](const Hypothesis&, std::span<const int> c, std::vector<double>& out) {
        out.assign(c.size(), 0.25);
    };
    auto next = search.step({Hypothesis{}}, timings, constant);
    const auto& prop = search.propose({}, timings);
    REQUIRE(next.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(next[i].words[0] == prop.words[i]);

    DecoderConfig flat = open_config(2);
    NgramLm uniform = NgramLm::train({{0, 1, 2, 3}}, 2, 4);
    BeamSearch s2(uniform, flat);
    auto n2 = s2.step({Hypothesis{}}, timings, constant);
    // Unigram probabilities of a single-trial corpus may tie; ids then decide.
    const auto& p2 = s2.propose({}, timings);
    for (std::size_t i = 0; i + 1 < p2.words.size(); ++i)
        if (p2.probabilities[i] == p2.probabilities[i + 1])
            CHECK(p2.words[i] < p2.words[i + 1]);
    CHECK(n2[0].words[0] == p2.words[0]);
}

TEST_CASE("decode equals exhaustive search on a 3-word vocabulary")
{
    for (int instance = 0; instance < 100; ++instance) {
        const auto seed = static_cast<std::uint64_t>(instance);
        auto table = random_table(4, 3, seed);
        auto lm = random_lm(3, 2, seed + 1000, 50);
        auto timings = regular_timings(5, 0.3, 0.05);
        auto zhat = random_series(4, 80, seed + 2000);
        DecoderConfig cfg = open_config(243);
        auto res = decode_trial(zhat, timings, lm, table, cfg);

        std::vector<int> best;
        double best_score = -1e300;
        std::vector<int> seq(5);
        for (int code = 0; code < 243; ++code) {
            int c = code;
            for (int i = 4; i >= 0; --i) {
                seq[static_cast<std::size_t>(i)] = c % 3;
                c /= 3;
            }
            const double s = sequence_score(seq, zhat, timings, table, cfg);
            if (s > best_score) {
                best_score = s;
                best = seq;
            }
        }
        CHECK(res.words == best);
        CHECK(res.cumulative == doctest::Approx(best_score).epsilon(1e-6));
    }
}

TEST_CASE("decoding the true raw rasterization recovers the sequence")
{
    const int vocab = 30;
    auto table = random_table(16, vocab, 11);
    Rng rng(12);
    std::uniform_int_distribution<int> w(1, vocab - 1);
    std::vector<int> truth;
    for (int i = 0; i < 20; ++i)
        truth.push_back(w(rng));
    auto lm = random_lm(vocab, 3, 13);
    auto timings = regular_timings(20, 0.4, 0.1);
    std::vector<WordAnnotation> ann;
    for (const auto& t : timings)
        ann.push_back({"w", t.t_on, t.t_off});
    DecoderConfig cfg = open_config(vocab);
    cfg.max_continuations = vocab;
    auto vectors = contextual_embed_sequence(table, truth, cfg.context_length, cfg.context_decay);
    auto zhat = rasterize_raw(ann, vectors, 40.0, timings.back().t_off + 0.5);
    auto res = decode_trial(zhat, timings, lm, table, cfg);
    CHECK(res.words == truth);
    CHECK(res.fallback_steps == 0);
    auto again = decode_trial(zhat, timings, lm, table, cfg);
    CHECK(again.words == res.words);
    CHECK(again.scores == res.scores);
}

TEST_CASE("null sequences")
{
    auto lm = random_lm(20, 3, 21);
    auto timings = regular_timings(8);
    DecoderConfig cfg;
    cfg.beam = 20;
    auto a = generate_null_sequences(timings, lm, cfg, 30, 5);
    auto b = generate_null_sequences(timings, lm, cfg, 30, 5);
    auto c = generate_null_sequences(timings, lm, cfg, 30, 6);
    CHECK(a.size() == 30);
    CHECK(a == b);
    CHECK(a != c);
    for (const auto& s : a) {
        CHECK(s.size() == 8);
        CHECK(std::find(s.begin(), s.end(), Vocabulary::unk_id) == s.end());
    }
    std::sort(a.begin(), a.end());
    CHECK(std::unique(a.begin(), a.end()) - a.begin() > 20);
}

TEST_CASE("fallback, input errors and config")
{
    NgramLm only_unk = NgramLm::train({{0, 0, 0}}, 2, 1);
    auto table = random_table(3, 1, 1);
    auto timings = regular_timings(3);
    auto res = decode_trial(random_series(3, 100, 1), timings, only_unk, table, DecoderConfig{});
    CHECK(res.fallback_steps == 3);
    CHECK(res.words == std::vector<int>{0, 0, 0});

    auto lm = random_lm(5, 2, 1);
    auto t5 = random_table(3, 5, 2);
    CHECK_THROWS_AS(decode_trial(random_series(3, 100, 1), {}, lm, t5, DecoderConfig{}), DataError);
    std::vector<WordTiming> overlapping{{0.0, 0.5}, {0.4, 0.8}};
    CHECK_THROWS_AS(decode_trial(random_series(3, 100, 1), overlapping, lm, t5, DecoderConfig{}), DataError);
    CHECK_THROWS_AS(decode_trial(random_series(4, 100, 1), timings, lm, t5, DecoderConfig{}), ShapeError);

    DecoderConfig bad;
    bad.top_p = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(decoder_config_from_json({{"beam_width", 3}}), ConfigError);
    auto back = decoder_config_from_json(to_json(DecoderConfig{}));
    CHECK(back.beam == 200);
    CHECK(back.top_p == 0.9);
    CHECK(back.top_r == 0.1);
}

TEST_CASE("decoded TSV round trip")
{
    std::vector<DecodedWord> words{{"alpha", 0.0, 0.25, 0.5}, {"beta", 0.3, 0.7, -0.125}};
    auto path = std::filesystem::temp_directory_path() / "semdec_decoded.tsv";
    write_decoded(path, words);
    auto back = read_decoded(path);
    REQUIRE(back.size() == 2);
    CHECK(back[1].token == "beta");
    CHECK(back[1].score == -0.125);
    std::filesystem::remove(path);
}
