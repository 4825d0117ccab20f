#pragma once

#include "semdec/corpus/embeddings.hpp"
#include "semdec/io/json_util.hpp"
#include "semdec/synth/forward_model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace semdec::synth {

struct DatasetConfig {
    ForwardModelConfig model;
    int trials = 20; // stimuli; every subject hears every stimulus
    int words_per_trial = 100;
    double test_fraction = 0.2;
    int source_vocab = 300;
    int successors = 5;
    int min_count = 2;
    int context_length = 8;
    double context_decay = 0.5;

    void validate() const;
};

io::Json to_json(const DatasetConfig& cfg);
/// Starts from defaults; unknown keys are rejected.
DatasetConfig dataset_config_from_json(const io::Json& j);

struct Stimulus {
    int id = 0;
    bool test = false;
    std::vector<WordAnnotation> words;
    double duration = 0.0;
    MatrixF word_vectors; // D x words, contextual embedding per word
};

struct Recording {
    int subject = 0;
    int stimulus = 0;
    TimeSeries meg; // unprocessed sensor signal
};

struct Dataset {
    DatasetConfig config;
    Vocabulary vocab;
    EmbeddingTable table;
    std::vector<Stimulus> stimuli;
    std::vector<Recording> recordings; // ordered by (stimulus, subject)
    std::vector<std::string> warnings;

    const Stimulus& stimulus(int id) const { return stimuli.at(static_cast<std::size_t>(id)); }
};

/// Generates text, embeddings and signals. The train/test split is over
/// stimuli, and vocabulary, static vectors and LM inputs use training text only.
Dataset make_dataset(const DatasetConfig& cfg);

/// Filtered, standardized embedding series of a stimulus at `rate`.
EmbeddingSeries stimulus_target(const Stimulus& s, double rate);

/// Training-split word ids per stimulus, in stimulus order.
std::vector<std::vector<int>> training_ids(const Dataset& d);

/// Writes signals (NTS1), annotations (TSV), word vectors, vocabulary and a
/// manifest with SHA-256 checksums. Returns the manifest path.
std::filesystem::path write_dataset(const Dataset& d, const std::filesystem::path& dir);

/// Loads a dataset and verifies every checksum in its manifest.
Dataset load_dataset(const std::filesystem::path& dir);

inline constexpr const char* dataset_manifest_name = "dataset.json";

} // namespace semdec::synth
