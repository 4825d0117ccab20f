#include "semdec/eval/retrieval.hpp"

#include <numeric>
#include <string>

namespace semdec::eval {

namespace {

// Flattened, centered, unit-norm columns; constant segments become zero.
MatrixD standardized(const std::vector<MatrixF>& segs, Index rows, Index cols)
{
    MatrixD out(rows * cols, static_cast<Index>(segs.size()));
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const auto& s = segs[i];
        if (s.rows() != rows || s.cols() != cols)
            throw ShapeError("segment_retrieval: segment " + std::to_string(i) + " is " + std::to_string(s.rows())
                             + "x" + std::to_string(s.cols()) + ", expected " + std::to_string(rows) + "x"
                             + std::to_string(cols));
        auto col = out.col(static_cast<Index>(i));
        col = Eigen::Map<const VectorF>(s.data(), s.size()).cast<double>();
        col.array() -= col.mean();
        const double norm = col.norm();
        if (norm > 0.0)
            col /= norm;
        else
            col.setZero();
    }
    return out;
}

} // namespace

double rank_accuracy(Index rank, Index candidates)
{
    if (candidates < 2)
        throw DataError("rank accuracy: need at least 2 candidates");
    if (rank < 1 || rank > candidates)
        throw DataError("rank accuracy: rank outside [1, M]");
    return 1.0 - static_cast<double>(rank - 1) / static_cast<double>(candidates - 1);
}

RetrievalSummary segment_retrieval(const std::vector<MatrixF>& reconstructions, const std::vector<int>& target,
                                   const std::vector<MatrixF>& candidates)
{
    const auto m = static_cast<Index>(candidates.size());
    if (m < 2)
        throw DataError("segment_retrieval: need at least 2 candidate segments, got " + std::to_string(m));
    if (reconstructions.size() != target.size())
        throw ShapeError("segment_retrieval: one target index per reconstruction required");
    const Index rows = candidates.front().rows();
    const Index cols = candidates.front().cols();
    const MatrixD cand = standardized(candidates, rows, cols);
    const MatrixD rec = standardized(reconstructions, rows, cols);
    const MatrixD sim = cand.transpose() * rec; // M x R

    RetrievalSummary out;
    out.results.reserve(reconstructions.size());
    for (Index i = 0; i < rec.cols(); ++i) {
        const int t = target[static_cast<std::size_t>(i)];
        if (t < 0 || t >= m)
            throw ShapeError("segment_retrieval: target index outside the candidate set");
        const double own = sim(t, i);
        Index rank = 1;
        for (Index j = 0; j < m; ++j)
            if (j != t && sim(j, i) >= own)
                ++rank;
        out.results.push_back({rank, m, rank <= 10});
        out.top10_accuracy += rank <= 10 ? 1.0 : 0.0;
        out.rank_accuracy += rank_accuracy(rank, m);
    }
    if (!out.results.empty()) {
        out.top10_accuracy /= static_cast<double>(out.results.size());
        out.rank_accuracy /= static_cast<double>(out.results.size());
    }
    return out;
}

RetrievalSummary segment_retrieval(const std::vector<MatrixF>& reconstructions, const std::vector<MatrixF>& truth)
{
    std::vector<int> target(reconstructions.size());
    std::iota(target.begin(), target.end(), 0);
    return segment_retrieval(reconstructions, target, truth);
}

} // namespace semdec::eval
