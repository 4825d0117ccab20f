#pragma once

#include "semdec/corpus/ngram.hpp"
#include "semdec/corpus/text.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace semdec::synth {

/// First-order Markov language over pseudo-words. Word i has Zipfian
/// popularity 1/(i+1); each word's fixed successor set is drawn without
/// replacement in proportion to popularity, with transition weights drawn
/// uniformly from [1, 3]. Texts start from a popularity-weighted word.
struct SourceLanguage {
    std::vector<std::string> words;
    std::vector<double> popularity;
    std::vector<std::vector<std::pair<int, double>>> successors; // normalized weights
};

SourceLanguage make_source_language(int vocab_size, int successors, std::uint64_t seed);

struct GeneratedText {
    std::vector<WordAnnotation> words;
    double duration = 0.0; // last offset plus a trailing gap
};

/// Word durations ~ U[0.2, 0.6] s, gaps ~ U[0, 0.2] s; the first word starts at 0.
GeneratedText gen_text(const SourceLanguage& source, int n_words, std::uint64_t seed);

/// Samples from a trained n-gram model instead (UNK is never emitted).
GeneratedText gen_text(const NgramLm& lm, const Vocabulary& vocab, int n_words, std::uint64_t seed);

} // namespace semdec::synth
