#pragma once

#include "semdec/types.hpp"

#include <vector>

namespace semdec::eval {

struct RetrievalResult {
    Index rank = 0;       // 1 = target is the most similar candidate
    Index candidates = 0; // M
    bool top10 = false;
};

struct RetrievalSummary {
    std::vector<RetrievalResult> results;
    double top10_accuracy = 0.0; // fraction in [0, 1]
    double rank_accuracy = 0.0;  // mean of 1 - (rank - 1) / (M - 1)
};

/// 1 - (rank - 1) / (M - 1).
double rank_accuracy(Index rank, Index candidates);

/// Ranks candidates[target[i]] among all candidates by Pearson correlation
/// with reconstruction i over the flattened segment. Candidates as similar as
/// the target count against it.
RetrievalSummary segment_retrieval(const std::vector<MatrixF>& reconstructions, const std::vector<int>& target,
                                   const std::vector<MatrixF>& candidates);

/// Reconstruction i is paired with candidate i.
RetrievalSummary segment_retrieval(const std::vector<MatrixF>& reconstructions, const std::vector<MatrixF>& truth);

} // namespace semdec::eval
