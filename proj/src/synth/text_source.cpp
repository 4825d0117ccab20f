#include "semdec/synth/text_source.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace semdec::synth {

namespace {

std::string pseudo_word(Rng& rng)
{
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    std::uniform_int_distribution<int> syllables(2, 3);
    std::uniform_int_distribution<std::size_t> c(0, consonants.size() - 1);
    std::uniform_int_distribution<std::size_t> v(0, vowels.size() - 1);
    std::string w;
    const int n = syllables(rng);
    for (int i = 0; i < n; ++i) {
        w += consonants[c(rng)];
        w += vowels[v(rng)];
    }
    return w;
}

GeneratedText assign_timings(const std::vector<std::string>& tokens, Rng& rng)
{
    std::uniform_real_distribution<double> duration(0.2, 0.6);
    std::uniform_real_distribution<double> gap(0.0, 0.2);
    GeneratedText out;
    double t = 0.0;
    for (const auto& tok : tokens) {
        const double d = duration(rng);
        out.words.push_back({tok, t, t + d});
        t += d + gap(rng);
    }
    out.duration = t;
    return out;
}

int sample_index(const std::vector<double>& weights, Rng& rng)
{
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    return pick(rng);
}

} // namespace

SourceLanguage make_source_language(int vocab_size, int successors, std::uint64_t seed)
{
    if (vocab_size < 2)
        throw ConfigError("source_vocab: must be >= 2");
    if (successors < 1 || successors >= vocab_size)
        throw ConfigError("successors: must lie in [1, source_vocab)");
    Rng rng = derive_rng(seed, {0});
    SourceLanguage lang;
    std::set<std::string> seen;
    while (static_cast<int>(lang.words.size()) < vocab_size) {
        auto w = pseudo_word(rng);
        if (seen.insert(w).second)
            lang.words.push_back(std::move(w));
    }
    lang.popularity.resize(static_cast<std::size_t>(vocab_size));
    for (int i = 0; i < vocab_size; ++i)
        lang.popularity[static_cast<std::size_t>(i)] = 1.0 / (i + 1);
    std::uniform_real_distribution<double> weight(1.0, 3.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    lang.successors.resize(static_cast<std::size_t>(vocab_size));
    std::vector<std::pair<double, int>> keys(static_cast<std::size_t>(vocab_size));
    for (int w = 0; w < vocab_size; ++w) {
        // Weighted sampling without replacement (Efraimidis-Spirakis keys).
        for (int i = 0; i < vocab_size; ++i) {
            const double u = std::max(unit(rng), 1e-300);
            keys[static_cast<std::size_t>(i)] = {std::log(u) / lang.popularity[static_cast<std::size_t>(i)], i};
        }
        std::partial_sort(keys.begin(), keys.begin() + successors, keys.end(), std::greater<>());
        double total = 0.0;
        auto& next = lang.successors[static_cast<std::size_t>(w)];
        for (int k = 0; k < successors; ++k) {
            next.emplace_back(keys[static_cast<std::size_t>(k)].second, weight(rng));
            total += next.back().second;
        }
        for (auto& [id, p] : next)
            p /= total;
    }
    return lang;
}

GeneratedText gen_text(const SourceLanguage& source, int n_words, std::uint64_t seed)
{
    if (n_words < 1)
        throw ConfigError("words_per_trial: must be >= 1");
    Rng rng = derive_rng(seed, {0});
    std::vector<std::string> tokens;
    int w = sample_index(source.popularity, rng);
    tokens.push_back(source.words[static_cast<std::size_t>(w)]);
    for (int i = 1; i < n_words; ++i) {
        const auto& next = source.successors[static_cast<std::size_t>(w)];
        std::vector<double> weights;
        for (const auto& [id, p] : next)
            weights.push_back(p);
        w = next[static_cast<std::size_t>(sample_index(weights, rng))].first;
        tokens.push_back(source.words[static_cast<std::size_t>(w)]);
    }
    return assign_timings(tokens, rng);
}

GeneratedText gen_text(const NgramLm& lm, const Vocabulary& vocab, int n_words, std::uint64_t seed)
{
    if (n_words < 1)
        throw ConfigError("words_per_trial: must be >= 1");
    if (vocab.size() < 2)
        throw ConfigError("gen_text: vocabulary has no known words");
    Rng rng = derive_rng(seed, {0});
    std::vector<int> ids;
    std::vector<std::string> tokens;
    for (int i = 0; i < n_words; ++i) {
        VectorD p = lm.next_distribution(ids);
        p[Vocabulary::unk_id] = 0.0;
        std::vector<double> weights(p.data(), p.data() + p.size());
        const int w = sample_index(weights, rng);
        ids.push_back(w);
        tokens.push_back(vocab.token(w));
    }
    return assign_timings(tokens, rng);
}

} // namespace semdec::synth
