#pragma once

// Windowed similarity between decoded and true word sequences, with
// permutation significance against null sequences.

#include "semdec/corpus/embeddings.hpp"
#include "semdec/corpus/text.hpp"
#include "semdec/io/json_util.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace semdec::eval {

struct WindowConfig {
    double window_s = 20.0;
    double stride_s = 1.0;
    double alpha = 0.05;       // significance threshold
    bool raw_pvalues = false; // #{null >= real} / n instead of the add-one form

    void validate() const;
};

io::Json to_json(const WindowConfig& c);
WindowConfig window_config_from_json(const io::Json& j);

/// Greedy-matching F1 over a predicted x reference similarity matrix with
/// entries clamped to [0, 1]. Empty sides give 0.
double greedy_f1(const MatrixD& similarity);

/// Static-embedding token similarity. Identical tokens score 1; otherwise the
/// cosine of their vectors, with out-of-vocabulary tokens as zero vectors.
class TokenSimilarity {
public:
    TokenSimilarity(const Vocabulary& vocab, const EmbeddingTable& table);
    MatrixD matrix(const std::vector<std::string>& predicted, const std::vector<std::string>& reference) const;

private:
    const Vocabulary& vocab_;
    const EmbeddingTable& table_;
};

double builtin_scorer(const std::vector<std::string>& predicted, const std::vector<std::string>& reference,
                      const TokenSimilarity& sim);

/// Number of windows for a trial: one per stride step starting at 0 s, with
/// the last window centre below the trial length.
Index window_count(double trial_len_s, const WindowConfig& cfg);

using WindowScorer =
    std::function<double(const std::vector<std::string>& predicted, const std::vector<std::string>& reference)>;

/// Window i is centred at i * stride and holds the words with onset in
/// [centre - window/2, centre + window/2); windows at the edges are truncated.
std::vector<double> window_similarity(const std::vector<WordAnnotation>& decoded,
                                      const std::vector<WordAnnotation>& truth, double trial_len_s,
                                      const WindowConfig& cfg, const WindowScorer& scorer);

/// Same result as the generic form with builtin_scorer, computing the token
/// similarity matrix once per sequence.
std::vector<double> window_similarity(const std::vector<WordAnnotation>& decoded,
                                      const std::vector<WordAnnotation>& truth, double trial_len_s,
                                      const WindowConfig& cfg, const TokenSimilarity& sim);

double mean(const std::vector<double>& v);

struct PermutationResult {
    double p = 1.0;
    bool significant = false;
};

/// One-sided: p = (1 + #{null >= real}) / (1 + n), or the raw proportion.
PermutationResult permutation_pvalue(double real, const std::vector<double>& nulls, const WindowConfig& cfg,
                                     std::size_t min_nulls = 100);
std::vector<PermutationResult> permutation_pvalues(const std::vector<double>& real,
                                                   const std::vector<std::vector<double>>& nulls,
                                                   const WindowConfig& cfg, std::size_t min_nulls = 100);

struct TrialSimilarity {
    std::string trial;
    double trial_len_s = 0.0;
    std::vector<double> window_scores;
    std::vector<std::vector<double>> null_window_scores; // [null][window]
};

struct TrialReport {
    std::string trial;
    double score = 0.0;      // mean window score
    double null_score = 0.0; // mean over nulls of their trial score
    double p = 1.0;
    bool significant = false;
    std::vector<double> window_scores;
    std::vector<double> window_null_mean;
    std::vector<double> window_null_p95;
    std::vector<double> window_p;
    std::vector<bool> window_significant;
};

struct SequenceReport {
    WindowConfig config;
    std::string scorer;
    std::vector<TrialReport> trials;
    double mean_score = 0.0;
    double mean_null_score = 0.0;
    double window_accuracy = 0.0; // percent of significant windows
    double trial_accuracy = 0.0;  // percent of significant trials
};

SequenceReport summarize(const std::vector<TrialSimilarity>& trials, const WindowConfig& cfg,
                         const std::string& scorer_name, std::size_t min_nulls = 100);

io::Json to_json(const SequenceReport& r);
SequenceReport sequence_report_from_json(const io::Json& j);
std::string to_text(const SequenceReport& r);

/// TSV rows: trial_id \t window_second \t score. Nulls use trial ids
/// "<trial>#null<k>".
void export_scores(const std::filesystem::path& path, const std::map<std::string, std::vector<double>>& scores,
                   const WindowConfig& cfg);
/// `expected` gives the window count per trial id; every window must appear
/// exactly once. Missing windows are listed in the error.
std::map<std::string, std::vector<double>> import_external_scores(const std::filesystem::path& path,
                                                                  const std::map<std::string, Index>& expected,
                                                                  const WindowConfig& cfg);

/// Window score curve of one trial against the null mean and 95th percentile.
std::string score_curve_svg(const TrialReport& trial, const WindowConfig& cfg);

} // namespace semdec::eval
