#pragma once

// Beam search over word identities with known word timing. The language
// model proposes continuations through a nucleus filter; continuations are
// ranked by the correlation between their contextual embedding and the
// reconstruction averaged over the word's window.

#include "semdec/corpus/embeddings.hpp"
#include "semdec/corpus/ngram.hpp"
#include "semdec/io/json_util.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <vector>

namespace semdec::decoder {

struct DecoderConfig {
    int beam = 200;
    double top_p = 0.9;
    double top_r = 0.1;
    int max_continuations = 10;
    double lm_horizon_s = 8.0;
    int context_length = 8;
    double context_decay = 0.5;
    bool exclude_unk = true; // never propose the unknown-word id

    void validate() const;
};

io::Json to_json(const DecoderConfig& c);
DecoderConfig decoder_config_from_json(const io::Json& j);

struct WordTiming {
    double t_on = 0.0;
    double t_off = 0.0;
};

std::vector<WordTiming> timings_of(const std::vector<WordAnnotation>& words);

/// Smallest probability-sorted prefix (ties by id) holding mass >= p, restricted
/// to words with probability >= r * max. Returned in that order.
std::vector<int> nucleus_filter(const VectorD& dist, double p, double r);

/// Mean of zhat over samples [floor(t_on * rate), floor(t_off * rate)).
VectorD window_average(const EmbeddingSeries& zhat, double t_on, double t_off);

/// Pearson correlation between `target` and the contextual embedding of
/// context + w for each candidate w.
std::vector<double> score_continuations(const VectorD& target, std::span<const int> candidates,
                                        std::span<const int> context, const EmbeddingTable& table,
                                        const DecoderConfig& cfg);

struct Hypothesis {
    std::vector<int> words;
    std::vector<double> scores; // per-step correlation
    double cumulative = 0.0;
    double last_lm_probability = 0.0;
};

/// Fills `out` with one score per candidate for `parent`.
using StepScorer =
    std::function<void(const Hypothesis& parent, std::span<const int> candidates, std::vector<double>& out)>;

struct Proposal {
    std::vector<int> words;            // descending LM probability
    std::vector<double> probabilities; // matching LM probabilities
    int top_word = 0;                  // unfiltered LM mode, the fallback proposal
    double top_probability = 0.0;
};

/// Beam machinery bound to one language model. Proposals are cached per
/// effective LM context, so repeated searches (null runs) stay cheap.
class BeamSearch {
public:
    BeamSearch(const NgramLm& lm, DecoderConfig cfg);

    const DecoderConfig& config() const { return cfg_; }

    /// Nucleus-filtered continuations for the next slot after `words`.
    const Proposal& propose(std::span<const int> words, std::span<const WordTiming> timings);

    /// Expands every hypothesis for slot words.size() and keeps the top k.
    /// Sets `fallback` when no hypothesis had a continuation and the top-1
    /// LM word was used instead.
    std::vector<Hypothesis> step(const std::vector<Hypothesis>& beam, std::span<const WordTiming> timings,
                                 const StepScorer& scorer, bool* fallback = nullptr);

    /// Runs step() for every slot from the empty hypothesis; returns the final beam.
    std::vector<Hypothesis> search(std::span<const WordTiming> timings, const StepScorer& scorer,
                                   int* fallback_steps = nullptr);

private:
    const NgramLm& lm_;
    DecoderConfig cfg_;
    std::map<std::vector<int>, Proposal> cache_;
};

/// Correlation scorer against a reconstruction.
StepScorer correlation_scorer(const EmbeddingSeries& zhat, std::span<const WordTiming> timings,
                              const EmbeddingTable& table, const DecoderConfig& cfg);

/// One beam step with correlation scores (convenience over BeamSearch).
std::vector<Hypothesis> beam_step(const std::vector<Hypothesis>& beam, std::span<const WordTiming> timings,
                                  const EmbeddingSeries& zhat, const NgramLm& lm, const EmbeddingTable& table,
                                  const DecoderConfig& cfg);

struct DecodeResult {
    std::vector<int> words;
    std::vector<double> scores;
    double cumulative = 0.0;
    int fallback_steps = 0;
};

DecodeResult decode_trial(const EmbeddingSeries& zhat, std::span<const WordTiming> timings, const NgramLm& lm,
                          const EmbeddingTable& table, const DecoderConfig& cfg);
DecodeResult decode_trial(BeamSearch& search, const EmbeddingSeries& zhat, std::span<const WordTiming> timings,
                          const EmbeddingTable& table);

/// Sequences from the same beam machinery with i.i.d. Uniform(-1, 1) step
/// scores; sequence i draws from stream (seed, i).
std::vector<std::vector<int>> generate_null_sequences(BeamSearch& search, std::span<const WordTiming> timings,
                                                      int count, std::uint64_t seed);
std::vector<std::vector<int>> generate_null_sequences(std::span<const WordTiming> timings, const NgramLm& lm,
                                                      const DecoderConfig& cfg, int count, std::uint64_t seed);

/// Rows: token \t t_on \t t_off \t step_correlation.
struct DecodedWord {
    std::string token;
    double t_on = 0.0;
    double t_off = 0.0;
    double score = 0.0;
};

void write_decoded(const std::filesystem::path& path, const std::vector<DecodedWord>& words);
std::vector<DecodedWord> read_decoded(const std::filesystem::path& path);

} // namespace semdec::decoder
