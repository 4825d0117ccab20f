#pragma once

#include "semdec/cwer/model.hpp"
#include "semdec/numcore/adam.hpp"

#include <functional>
#include <stdexcept>
#include <vector>

namespace semdec::cwer {

/// Raised when training produces non-finite values.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    double lr = 5e-5;
    int batch = 32;
    int negatives = 128; // contrastive set size N, positive included
    double tau = 0.025;
    int patience = 2;
    int max_epochs = 100;
    double window_s = 10.0;
    double train_overlap = 0.8;
    double heldout_overlap = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

io::Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const io::Json& j);

/// Preprocessed recordings paired with the embedding series of their stimuli.
struct PairedData {
    std::vector<TimeSeries> meg; // per recording, C x T
    std::vector<int> subject;    // per recording
    std::vector<int> stimulus;   // per recording, index into targets
    std::vector<EmbeddingSeries> targets;

    void validate() const;
};

/// Distinct (stimulus, start) target segments with column-normalized storage,
/// so that negatives are views and never copies.
class TargetPool {
public:
    TargetPool(const PairedData& data, double window_s, double overlap);

    Index window() const { return window_; }
    std::size_t size() const { return entries_.size(); }
    /// Pool index of the segment starting at `start` in `stimulus`, or -1.
    long find(int stimulus, Index start) const;
    ConstMatRef<float> segment(std::size_t i) const;
    int stimulus_of(std::size_t i) const { return entries_[i].first; }
    Index start_of(std::size_t i) const { return entries_[i].second; }

private:
    Index window_ = 0;
    std::vector<MatrixF> normalized_; // per stimulus (empty if unused)
    std::vector<std::pair<int, Index>> entries_;
};

/// Uniform draw of `count` distinct pool indices, never `positive`.
std::vector<std::size_t> sample_negatives(std::size_t pool_size, std::size_t positive, std::size_t count, Rng& rng);

struct SegmentPair {
    int recording = 0;
    Index start = 0;
    std::size_t target = 0; // index into the pool built from the same data
};

std::vector<SegmentPair> segment_pairs(const PairedData& data, const TargetPool& pool);

struct EpochRecord {
    int net = 0; // network index (per-subject mode trains one per subject)
    int epoch = 0;
    double train_loss = 0.0;   // mean per time step
    double heldout_loss = 0.0; // mean per time step
};

struct TrainResult {
    CwerModel model; // best heldout checkpoint
    std::vector<EpochRecord> history;
    std::vector<int> best_epoch; // per network
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam on the contrastive loss with early stopping on the heldout
/// loss. Negatives come from the training pool for both splits; heldout
/// negatives use a fixed stream so epochs are comparable.
TrainResult train(const CwerConfig& model_cfg, const PairedData& train_data, const PairedData& heldout_data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Mean contrastive loss per time step of `model` on `data` in eval mode.
double heldout_loss(const CwerModel& model, const PairedData& data, const TargetPool& negative_pool,
                    const TrainConfig& cfg, std::uint64_t negative_seed);

} // namespace semdec::cwer
