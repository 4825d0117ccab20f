#include "semdec/corpus/ngram.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace semdec {

NgramLm NgramLm::train(const std::vector<std::vector<int>>& trials, int order, int vocab_size, double discount)
{
    if (order < 2 || order > 5)
        throw ConfigError("train_ngram: order must lie in [2, 5], got " + std::to_string(order));
    if (vocab_size < 1)
        throw ConfigError("train_ngram: empty vocabulary");
    if (!(discount > 0.0 && discount < 1.0))
        throw ConfigError("train_ngram: discount must lie in (0, 1)");
    std::size_t longest = 0;
    for (const auto& t : trials) {
        longest = std::max(longest, t.size());
        for (int id : t)
            if (id < 0 || id >= vocab_size)
                throw DataError("train_ngram: token id " + std::to_string(id) + " outside vocabulary");
    }
    if (longest < static_cast<std::size_t>(order))
        throw DataError("train_ngram: corpus shorter than order " + std::to_string(order));

    NgramLm lm;
    lm.order_ = order;
    lm.vocab_size_ = vocab_size;
    lm.discount_ = discount;

    // Highest order: raw counts. Lower orders: number of distinct left
    // extensions, where a trial start counts as one extra extension type.
    const int start_marker = -1;
    std::vector<std::map<std::vector<int>, double>> raw(static_cast<std::size_t>(order));
    std::vector<std::set<std::vector<int>>> extended(static_cast<std::size_t>(order));
    for (const auto& t : trials) {
        const auto n = static_cast<int>(t.size());
        for (int m = 1; m <= order; ++m) {
            for (int i = 0; i + m <= n; ++i) {
                std::vector<int> gram(t.begin() + i, t.begin() + i + m);
                if (m == order) {
                    raw[static_cast<std::size_t>(m - 1)][gram] += 1.0;
                } else {
                    std::vector<int> ext;
                    ext.reserve(static_cast<std::size_t>(m + 1));
                    ext.push_back(i > 0 ? t[static_cast<std::size_t>(i - 1)] : start_marker);
                    ext.insert(ext.end(), gram.begin(), gram.end());
                    if (extended[static_cast<std::size_t>(m - 1)].insert(ext).second)
                        raw[static_cast<std::size_t>(m - 1)][gram] += 1.0;
                }
            }
        }
    }

    lm.levels_.resize(static_cast<std::size_t>(order));
    for (int m = 1; m <= order; ++m) {
        auto& level = lm.levels_[static_cast<std::size_t>(m - 1)];
        for (const auto& [gram, c] : raw[static_cast<std::size_t>(m - 1)]) {
            std::vector<int> ctx(gram.begin(), gram.end() - 1);
            auto& entry = level[ctx];
            entry.counts.emplace_back(gram.back(), c);
            entry.total += c;
            entry.types += 1.0;
        }
    }

    // Unigram level interpolated with the uniform distribution.
    lm.unigram_ = VectorD::Constant(vocab_size, 1.0 / vocab_size);
    const auto it = lm.levels_[0].find({});
    if (it != lm.levels_[0].end()) {
        const Context& c = it->second;
        lm.unigram_ *= discount * c.types / c.total;
        for (const auto& [w, cnt] : c.counts)
            lm.unigram_[w] += std::max(cnt - discount, 0.0) / c.total;
    }
    return lm;
}

VectorD NgramLm::next_distribution(std::span<const int> history) const
{
    VectorD dist = unigram_;
    const auto avail = static_cast<int>(history.size());
    for (int m = 2; m <= order_; ++m) {
        if (avail < m - 1)
            break;
        std::vector<int> ctx(history.end() - (m - 1), history.end());
        const auto& level = levels_[static_cast<std::size_t>(m - 1)];
        auto it = level.find(ctx);
        if (it == level.end())
            continue;
        const Context& c = it->second;
        dist *= discount_ * c.types / c.total;
        for (const auto& [w, cnt] : c.counts)
            dist[w] += std::max(cnt - discount_, 0.0) / c.total;
    }
    return dist;
}

double NgramLm::probability(std::span<const int> history, int word) const
{
    if (word < 0 || word >= vocab_size_)
        throw DataError("NgramLm::probability: word id outside vocabulary");
    return next_distribution(history)[word];
}

std::string NgramLm::serialize() const
{
    std::ostringstream out;
    out.precision(17);
    out << "ngram\t" << order_ << '\t' << vocab_size_ << '\t' << discount_ << '\n';
    for (std::size_t m = 0; m < levels_.size(); ++m)
        for (const auto& [ctx, c] : levels_[m]) {
            out << m + 1 << '\t';
            for (int id : ctx)
                out << id << ' ';
            out << '\t' << c.total << '\t' << c.types;
            for (const auto& [w, cnt] : c.counts)
                out << '\t' << w << ':' << cnt;
            out << '\n';
        }
    return out.str();
}

VectorD lm_next_dist(const NgramLm& lm, std::span<const int> history, std::span<const double> onsets, double now,
                     double horizon_s)
{
    if (onsets.size() != history.size())
        throw ShapeError("lm_next_dist: history and onsets differ in length");
    std::size_t first = history.size();
    while (first > 0 && onsets[first - 1] >= now - horizon_s)
        --first;
    return lm.next_distribution(history.subspan(first));
}

} // namespace semdec
