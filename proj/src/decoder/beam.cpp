#include "semdec/decoder/beam.hpp"

#include "semdec/corpus/text.hpp"
#include "semdec/io/tsv.hpp"
#include "semdec/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace semdec::decoder {

namespace {

void check_timings(std::span<const WordTiming> timings)
{
    if (timings.empty())
        throw DataError("decode: empty word timing list");
    for (std::size_t i = 0; i < timings.size(); ++i) {
        if (!(timings[i].t_off > timings[i].t_on))
            throw DataError("decode: word " + std::to_string(i) + " has offset <= onset");
        if (i > 0 && timings[i].t_on < timings[i - 1].t_off)
            throw DataError("decode: word timings must be sorted and non-overlapping (word " + std::to_string(i)
                            + ")");
    }
}

} // namespace

void DecoderConfig::validate() const
{
    if (beam < 1)
        throw ConfigError("decoder.beam: must be >= 1");
    if (!(top_p > 0.0 && top_p <= 1.0))
        throw ConfigError("decoder.top_p: must lie in (0, 1]");
    if (!(top_r > 0.0 && top_r <= 1.0))
        throw ConfigError("decoder.top_r: must lie in (0, 1]");
    if (max_continuations < 1)
        throw ConfigError("decoder.max_continuations: must be >= 1");
    if (!(lm_horizon_s > 0.0))
        throw ConfigError("decoder.lm_horizon_s: must be > 0");
    if (context_length < 1)
        throw ConfigError("decoder.context_length: must be >= 1");
    if (!(context_decay >= 0.0 && context_decay <= 1.0))
        throw ConfigError("decoder.context_decay: must lie in [0, 1]");
}

io::Json to_json(const DecoderConfig& c)
{
    return {{"beam", c.beam},
            {"top_p", c.top_p},
            {"top_r", c.top_r},
            {"max_continuations", c.max_continuations},
            {"lm_horizon_s", c.lm_horizon_s},
            {"context_length", c.context_length},
            {"context_decay", c.context_decay},
            {"exclude_unk", c.exclude_unk}};
}

DecoderConfig decoder_config_from_json(const io::Json& j)
{
    const std::string sec = "decoder";
    io::reject_unknown_keys(j, {"beam", "top_p", "top_r", "max_continuations", "lm_horizon_s", "context_length",
                                "context_decay", "exclude_unk"},
                            sec);
    DecoderConfig c;
    io::read_field(j, "beam", c.beam, sec);
    io::read_field(j, "top_p", c.top_p, sec);
    io::read_field(j, "top_r", c.top_r, sec);
    io::read_field(j, "max_continuations", c.max_continuations, sec);
    io::read_field(j, "lm_horizon_s", c.lm_horizon_s, sec);
    io::read_field(j, "context_length", c.context_length, sec);
    io::read_field(j, "context_decay", c.context_decay, sec);
    io::read_field(j, "exclude_unk", c.exclude_unk, sec);
    c.validate();
    return c;
}

std::vector<WordTiming> timings_of(const std::vector<WordAnnotation>& words)
{
    std::vector<WordTiming> t;
    t.reserve(words.size());
    for (const auto& w : words)
        t.push_back({w.t_on, w.t_off});
    return t;
}

std::vector<int> nucleus_filter(const VectorD& dist, double p, double r)
{
    if (!(p > 0.0 && p <= 1.0) || !(r > 0.0 && r <= 1.0))
        throw ConfigError("nucleus_filter: p and r must lie in (0, 1]");
    if (dist.size() == 0 || !dist.allFinite() || (dist.array() < 0.0).any() || std::abs(dist.sum() - 1.0) > 1e-4)
        throw DataError("nucleus_filter: distribution is not normalized (sum " + std::to_string(dist.sum()) + ")");
    std::vector<int> order(static_cast<std::size_t>(dist.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] > dist[b]; });
    const double floor = r * dist[order.front()];
    std::vector<int> out;
    double mass = 0.0;
    for (int w : order) {
        if (mass >= p)
            break;
        mass += dist[w];
        if (dist[w] >= floor)
            out.push_back(w);
    }
    return out;
}

VectorD window_average(const EmbeddingSeries& zhat, double t_on, double t_off)
{
    const double rate = zhat.sample_rate;
    const auto lo = static_cast<Index>(std::floor(t_on * rate + 1e-9));
    const auto hi = std::min(zhat.samples(), static_cast<Index>(std::floor(t_off * rate + 1e-9)));
    if (lo < 0 || hi <= lo)
        throw DataError("window_average: window [" + std::to_string(t_on) + ", " + std::to_string(t_off)
                        + ") covers no sample of the reconstruction");
    return zhat.data.middleCols(lo, hi - lo).cast<double>().rowwise().mean();
}

std::vector<double> score_continuations(const VectorD& target, std::span<const int> candidates,
                                        std::span<const int> context, const EmbeddingTable& table,
                                        const DecoderConfig& cfg)
{
    if (target.size() != table.dim())
        throw ShapeError("score_continuations: reconstruction has " + std::to_string(target.size())
                         + " dimensions, embeddings have " + std::to_string(table.dim()));
    // The candidate gets weight 1, earlier words gamma, gamma^2, ...; the
    // shared context part is summed once. Normalization does not change Pearson.
    VectorD shared = VectorD::Zero(table.dim());
    double w = cfg.context_decay;
    const auto n = std::min<std::size_t>(context.size(), static_cast<std::size_t>(cfg.context_length - 1));
    for (std::size_t j = 0; j < n; ++j) {
        shared += w * table.vectors.col(context[context.size() - 1 - j]).cast<double>();
        w *= cfg.context_decay;
    }
    std::vector<double> out;
    out.reserve(candidates.size());
    VectorD e(table.dim());
    for (int c : candidates) {
        if (c < 0 || c >= table.vocab_size())
            throw DataError("score_continuations: word id outside the embedding table");
        e = shared + table.vectors.col(c).cast<double>();
        out.push_back(pearson(target, e));
    }
    return out;
}

BeamSearch::BeamSearch(const NgramLm& lm, DecoderConfig cfg) : lm_(lm), cfg_(cfg)
{
    cfg_.validate();
}

const Proposal& BeamSearch::propose(std::span<const int> words, std::span<const WordTiming> timings)
{
    const std::size_t slot = words.size();
    if (slot >= timings.size())
        throw DataError("decode: hypothesis is longer than the timing list");
    const double now = timings[slot].t_on;
    std::size_t first = slot;
    while (first > 0 && timings[first - 1].t_on >= now - cfg_.lm_horizon_s)
        --first;
    first = std::max(first, slot - std::min<std::size_t>(slot, static_cast<std::size_t>(lm_.order() - 1)));
    std::vector<int> key(words.begin() + static_cast<std::ptrdiff_t>(first), words.end());
    auto it = cache_.find(key);
    if (it != cache_.end())
        return it->second;

    VectorD dist = lm_.next_distribution(key);
    Proposal prop;
    Index top = 0;
    for (Index i = 1; i < dist.size(); ++i)
        if (dist[i] > dist[top])
            top = i;
    prop.top_word = static_cast<int>(top);
    prop.top_probability = dist[top];
    if (cfg_.exclude_unk)
        dist[Vocabulary::unk_id] = 0.0;
    const double mass = dist.sum();
    if (mass > 0.0) {
        dist /= mass;
        auto kept = nucleus_filter(dist, cfg_.top_p, cfg_.top_r);
        if (static_cast<int>(kept.size()) > cfg_.max_continuations)
            kept.resize(static_cast<std::size_t>(cfg_.max_continuations));
        for (int w : kept) {
            prop.words.push_back(w);
            prop.probabilities.push_back(dist[w]);
        }
    }
    return cache_.emplace(std::move(key), std::move(prop)).first->second;
}

std::vector<Hypothesis> BeamSearch::step(const std::vector<Hypothesis>& beam, std::span<const WordTiming> timings,
                                         const StepScorer& scorer, bool* fallback)
{
    if (beam.empty())
        throw DataError("beam_step: empty beam");
    struct Child {
        std::size_t parent;
        int word;
        double step;
        double cumulative;
        double lm;
    };
    std::vector<Child> children;
    std::vector<double> scores;
    auto expand = [&](std::size_t i, std::span<const int> words, std::span<const double> probs) {
        scores.clear();
        scorer(beam[i], words, scores);
        if (scores.size() != words.size())
            throw DataError("beam_step: scorer returned " + std::to_string(scores.size()) + " scores for "
                            + std::to_string(words.size()) + " candidates");
        for (std::size_t j = 0; j < words.size(); ++j)
            children.push_back({i, words[j], scores[j], beam[i].cumulative + scores[j], probs[j]});
    };
    for (std::size_t i = 0; i < beam.size(); ++i) {
        const Proposal& prop = propose(beam[i].words, timings);
        expand(i, prop.words, prop.probabilities);
    }
    const bool fell_back = children.empty();
    if (fell_back)
        for (std::size_t i = 0; i < beam.size(); ++i) {
            const Proposal& prop = propose(beam[i].words, timings);
            const int w = prop.top_word;
            const double p = prop.top_probability;
            expand(i, std::span<const int>(&w, 1), std::span<const double>(&p, 1));
        }
    if (fallback)
        *fallback = fell_back;

    auto better = [&](const Child& a, const Child& b) {
        if (a.cumulative != b.cumulative)
            return a.cumulative > b.cumulative;
        if (a.lm != b.lm)
            return a.lm > b.lm;
        const auto& wa = beam[a.parent].words;
        const auto& wb = beam[b.parent].words;
        if (wa != wb)
            return std::lexicographical_compare(wa.begin(), wa.end(), wb.begin(), wb.end());
        return a.word < b.word;
    };
    const auto k = std::min(children.size(), static_cast<std::size_t>(cfg_.beam));
    if (children.size() > k)
        std::nth_element(children.begin(), children.begin() + static_cast<std::ptrdiff_t>(k), children.end(), better);
    std::sort(children.begin(), children.begin() + static_cast<std::ptrdiff_t>(k), better);

    std::vector<Hypothesis> next;
    next.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const Child& c = children[i];
        Hypothesis h;
        h.words.reserve(beam[c.parent].words.size() + 1);
        h.words = beam[c.parent].words;
        h.words.push_back(c.word);
        h.scores = beam[c.parent].scores;
        h.scores.push_back(c.step);
        h.cumulative = c.cumulative;
        h.last_lm_probability = c.lm;
        next.push_back(std::move(h));
    }
    return next;
}

std::vector<Hypothesis> BeamSearch::search(std::span<const WordTiming> timings, const StepScorer& scorer,
                                           int* fallback_steps)
{
    check_timings(timings);
    std::vector<Hypothesis> beam(1);
    int fallbacks = 0;
    for (std::size_t slot = 0; slot < timings.size(); ++slot) {
        bool fell_back = false;
        beam = step(beam, timings, scorer, &fell_back);
        fallbacks += fell_back ? 1 : 0;
    }
    if (fallback_steps)
        *fallback_steps = fallbacks;
    return beam;
}

StepScorer correlation_scorer(const EmbeddingSeries& zhat, std::span<const WordTiming> timings,
                              const EmbeddingTable& table, const DecoderConfig& cfg)
{
    if (zhat.channels() != table.dim())
        throw ShapeError("decode: reconstruction has " + std::to_string(zhat.channels())
                         + " dimensions, embeddings have " + std::to_string(table.dim()));
    auto targets = std::make_shared<std::vector<VectorD>>();
    targets->reserve(timings.size());
    for (const auto& t : timings)
        targets->push_back(window_average(zhat, t.t_on, t.t_off));
    return [targets, &table, cfg](const Hypothesis& parent, std::span<const int> cands, std::vector<double>& out) {
        out = score_continuations((*targets)[parent.words.size()], cands, parent.words, table, cfg);
    };
}

std::vector<Hypothesis> beam_step(const std::vector<Hypothesis>& beam, std::span<const WordTiming> timings,
                                  const EmbeddingSeries& zhat, const NgramLm& lm, const EmbeddingTable& table,
                                  const DecoderConfig& cfg)
{
    BeamSearch search(lm, cfg);
    return search.step(beam, timings, correlation_scorer(zhat, timings, table, cfg));
}

DecodeResult decode_trial(BeamSearch& search, const EmbeddingSeries& zhat, std::span<const WordTiming> timings,
                          const EmbeddingTable& table)
{
    check_timings(timings);
    DecodeResult res;
    auto beam = search.search(timings, correlation_scorer(zhat, timings, table, search.config()), &res.fallback_steps);
    res.words = beam.front().words;
    res.scores = beam.front().scores;
    res.cumulative = beam.front().cumulative;
    return res;
}

DecodeResult decode_trial(const EmbeddingSeries& zhat, std::span<const WordTiming> timings, const NgramLm& lm,
                          const EmbeddingTable& table, const DecoderConfig& cfg)
{
    BeamSearch search(lm, cfg);
    return decode_trial(search, zhat, timings, table);
}

std::vector<std::vector<int>> generate_null_sequences(BeamSearch& search, std::span<const WordTiming> timings,
                                                      int count, std::uint64_t seed)
{
    if (count < 1)
        throw ConfigError("null sequences: count must be >= 1");
    std::vector<std::vector<int>> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(i)});
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        auto scorer = [&](const Hypothesis&, std::span<const int> cands, std::vector<double>& s) {
            s.resize(cands.size());
            for (auto& v : s)
                v = u(rng);
        };
        out.push_back(search.search(timings, scorer).front().words);
    }
    return out;
}

std::vector<std::vector<int>> generate_null_sequences(std::span<const WordTiming> timings, const NgramLm& lm,
                                                      const DecoderConfig& cfg, int count, std::uint64_t seed)
{
    BeamSearch search(lm, cfg);
    return generate_null_sequences(search, timings, count, seed);
}

void write_decoded(const std::filesystem::path& path, const std::vector<DecodedWord>& words)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    for (const auto& w : words)
        out << w.token << '\t' << io::format_double(w.t_on) << '\t' << io::format_double(w.t_off) << '\t'
            << io::format_double(w.score) << '\n';
}

std::vector<DecodedWord> read_decoded(const std::filesystem::path& path)
{
    std::vector<DecodedWord> words;
    io::for_each_tsv_row(path, [&](const std::vector<std::string_view>& f, const std::string& where) {
        if (f.size() != 4)
            throw DataError(where + ": expected token<TAB>t_on<TAB>t_off<TAB>score");
        words.push_back({std::string(f[0]), io::parse_double(f[1], where), io::parse_double(f[2], where),
                         io::parse_double(f[3], where)});
    });
    return words;
}

} // namespace semdec::decoder
