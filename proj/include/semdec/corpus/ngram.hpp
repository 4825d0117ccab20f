#pragma once

#include "semdec/types.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace semdec {

/// Interpolated Kneser-Ney n-gram model over vocabulary ids.
/// The highest order uses raw counts; lower orders use continuation counts.
class NgramLm {
public:
    static constexpr double default_discount = 0.75;

    /// `trials` are id sequences; n-grams never cross trial boundaries.
    static NgramLm train(const std::vector<std::vector<int>>& trials, int order, int vocab_size,
                         double discount = default_discount);

    int order() const { return order_; }
    int vocab_size() const { return vocab_size_; }
    double discount() const { return discount_; }

    /// P(. | history), using at most the last order-1 ids of `history`.
    VectorD next_distribution(std::span<const int> history) const;
    double probability(std::span<const int> history, int word) const;

    std::string serialize() const;

private:
    struct Context {
        double total = 0.0;
        double types = 0.0;
        std::vector<std::pair<int, double>> counts; // sorted by word id
    };
    // levels_[m-1] maps a context of length m-1 to the counts of following words.
    std::vector<std::map<std::vector<int>, Context>> levels_;
    VectorD unigram_;
    int order_ = 2;
    int vocab_size_ = 0;
    double discount_ = default_discount;
};

/// Keeps the history words with onset inside [now - horizon_s, now) and
/// queries the model with them.
VectorD lm_next_dist(const NgramLm& lm, std::span<const int> history, std::span<const double> onsets, double now,
                     double horizon_s = 8.0);

} // namespace semdec
