#pragma once

// End-to-end glue shared by the command line tool and the acceptance runs:
// configuration, data preparation, model dispatch and the evaluations.

#include "semdec/cwer/train.hpp"
#include "semdec/decoder/beam.hpp"
#include "semdec/eval/retrieval.hpp"
#include "semdec/eval/sequence.hpp"
#include "semdec/ridge/ridge.hpp"
#include "semdec/sigproc/dsp.hpp"
#include "semdec/synth/dataset.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace semdec::pipeline {

enum class ModelKind { cwer, cwer_nosubject, cwer_persubject, ridge };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& name);

struct RunConfig {
    synth::DatasetConfig synth;
    PreprocessConfig preprocess;
    cwer::CwerConfig cwer; // channels, dim, subjects and mode are filled from the dataset and model kind
    cwer::TrainConfig train;
    ridge::RidgeConfig ridge;
    decoder::DecoderConfig decoder;
    eval::WindowConfig eval;
    int lm_order = 3;
    double shift_s = 0.25;         // neural lag compensation before pairing with the stimulus
    double heldout_fraction = 0.2; // share of training stimuli used for early stopping
    std::vector<double> durations{3.0, 5.0, 10.0};
    int nulls = 500;
    std::uint64_t seed = 0;

    void validate() const;
};

io::Json to_json(const RunConfig& c);
/// Sections: synth, preprocess, cwer, train, ridge, decoder, eval, pipeline, seed.
RunConfig run_config_from_json(const io::Json& j);

/// The dataset with preprocessed signals and filtered embedding targets. Each
/// signal is advanced by shift_s, so sample t pairs with target sample t and
/// word timings keep their meaning for reconstructions.
struct Prepared {
    cwer::PairedData all;                  // every recording; targets indexed by stimulus id
    std::vector<int> train, heldout, test; // recording indices

    cwer::PairedData subset(const std::vector<int>& recordings) const;
};

Prepared prepare(const synth::Dataset& d, const RunConfig& cfg);

/// Training stimuli held out for early stopping: the last
/// round(heldout_fraction * n) training stimuli (at least one), by id.
std::vector<int> heldout_stimuli(const synth::Dataset& d, double fraction);

using Model = std::variant<cwer::CwerModel, ridge::RidgeModel>;

struct TrainOutcome {
    Model model;
    io::Json report; // history or cross-validation scores
};

TrainOutcome train_model(ModelKind kind, const Prepared& data, const RunConfig& cfg,
                         const cwer::EpochCallback& on_epoch = {});

EmbeddingSeries reconstruct(const Model& m, const TimeSeries& meg, int subject);

void save_model(const std::filesystem::path& path, const Model& m);
Model load_model(const std::filesystem::path& path);

struct DurationResult {
    double duration_s = 0.0;
    std::size_t segments = 0;
    std::size_t candidates = 0;
    double top10 = 0.0;        // percent
    double rank_accuracy = 0.0; // percent
    double chance_top10 = 0.0; // percent, 10 / M
};

/// Non-overlapping segments of every test recording, ranked against the
/// distinct true segments of the same duration.
std::vector<DurationResult> evaluate_segments(const Model& m, const Prepared& data,
                                              const std::vector<double>& durations);
/// Same with reconstructions supplied per test recording (index into data.test).
std::vector<DurationResult> evaluate_segments(const std::vector<EmbeddingSeries>& reconstructions,
                                              const Prepared& data, const std::vector<double>& durations);

io::Json to_json(const std::vector<DurationResult>& r);
std::string to_text(const std::vector<DurationResult>& r);

NgramLm train_lm(const synth::Dataset& d, int order);

std::string recording_name(int subject, int stimulus);
std::string stimulus_name(int stimulus);

struct DecodedTrial {
    std::string name;
    int subject = 0;
    int stimulus = 0;
    std::vector<decoder::DecodedWord> words;
    int fallback_steps = 0;
};

/// Decodes every test recording from its reconstruction.
std::vector<DecodedTrial> decode_recordings(const std::vector<EmbeddingSeries>& reconstructions,
                                            const synth::Dataset& d, const Prepared& data, const NgramLm& lm,
                                            const decoder::DecoderConfig& cfg);

/// Null sequences per test stimulus; stimulus s draws from stream (seed, s).
std::map<int, std::vector<std::vector<std::string>>> null_sequences(const synth::Dataset& d, const NgramLm& lm,
                                                                    const decoder::DecoderConfig& cfg, int count,
                                                                    std::uint64_t seed);

/// Writes decoded/<recording>.tsv, nulls/<stimulus>.tsv and a manifest.
void write_decoded_dir(const std::filesystem::path& dir, const std::vector<DecodedTrial>& trials,
                       const std::map<int, std::vector<std::vector<std::string>>>& nulls, const synth::Dataset& d,
                       const io::Json& manifest_extra);

struct DecodedDir {
    std::vector<DecodedTrial> trials;
    std::map<int, std::vector<std::vector<std::string>>> nulls;
};

DecodedDir read_decoded_dir(const std::filesystem::path& dir, const synth::Dataset& d);

/// Window scores of decoded trials and their nulls with the built-in scorer,
/// or taken from `imported` (trial ids and "<trial>#null<k>").
std::vector<eval::TrialSimilarity> score_sequences(const DecodedDir& decoded, const synth::Dataset& d,
                                                   const eval::WindowConfig& cfg,
                                                   const std::map<std::string, std::vector<double>>* imported = nullptr);

/// Window count per trial id, nulls included, for importing external scores.
std::map<std::string, Index> expected_windows(const DecodedDir& decoded, const synth::Dataset& d,
                                              const eval::WindowConfig& cfg);

/// Trial and null window scores keyed as score_sequences() reads them back.
std::map<std::string, std::vector<double>> score_map(const std::vector<eval::TrialSimilarity>& trials);

/// Checksums of every regular file under `dir`, keyed by relative path.
io::Json checksum_tree(const std::filesystem::path& dir);

} // namespace semdec::pipeline
