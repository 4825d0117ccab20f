#include "semdec/eval/sequence.hpp"

#include "semdec/io/tsv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace semdec::eval {

void WindowConfig::validate() const
{
    if (!(window_s > 0.0))
        throw ConfigError("eval.window_s: must be > 0");
    if (!(stride_s > 0.0))
        throw ConfigError("eval.stride_s: must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("eval.alpha: must lie in (0, 1)");
}

io::Json to_json(const WindowConfig& c)
{
    return {{"window_s", c.window_s}, {"stride_s", c.stride_s}, {"alpha", c.alpha}, {"raw_pvalues", c.raw_pvalues}};
}

WindowConfig window_config_from_json(const io::Json& j)
{
    const std::string sec = "eval";
    io::reject_unknown_keys(j, {"window_s", "stride_s", "alpha", "raw_pvalues"}, sec);
    WindowConfig c;
    io::read_field(j, "window_s", c.window_s, sec);
    io::read_field(j, "stride_s", c.stride_s, sec);
    io::read_field(j, "alpha", c.alpha, sec);
    io::read_field(j, "raw_pvalues", c.raw_pvalues, sec);
    c.validate();
    return c;
}

double greedy_f1(const MatrixD& similarity)
{
    if (similarity.rows() == 0 || similarity.cols() == 0)
        return 0.0;
    const MatrixD s = similarity.cwiseMax(0.0).cwiseMin(1.0);
    const double precision = s.rowwise().maxCoeff().mean();
    const double recall = s.colwise().maxCoeff().mean();
    if (precision + recall <= 0.0)
        return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

TokenSimilarity::TokenSimilarity(const Vocabulary& vocab, const EmbeddingTable& table) : vocab_(vocab), table_(table)
{
    if (table.vocab_size() != vocab.size())
        throw ShapeError("token similarity: embedding table and vocabulary sizes differ");
}

MatrixD TokenSimilarity::matrix(const std::vector<std::string>& predicted,
                                const std::vector<std::string>& reference) const
{
    auto embed = [&](const std::vector<std::string>& tokens) {
        MatrixD m = MatrixD::Zero(table_.dim(), static_cast<Index>(tokens.size()));
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const int id = vocab_.id(tokens[i]);
            if (id == Vocabulary::unk_id)
                continue;
            VectorD v = table_.vectors.col(id).cast<double>();
            const double n = v.norm();
            if (n > 0.0)
                m.col(static_cast<Index>(i)) = v / n;
        }
        return m;
    };
    MatrixD sim = embed(predicted).transpose() * embed(reference);
    for (std::size_t i = 0; i < predicted.size(); ++i)
        for (std::size_t j = 0; j < reference.size(); ++j)
            if (predicted[i] == reference[j])
                sim(static_cast<Index>(i), static_cast<Index>(j)) = 1.0;
    return sim;
}

double builtin_scorer(const std::vector<std::string>& predicted, const std::vector<std::string>& reference,
                      const TokenSimilarity& sim)
{
    return greedy_f1(sim.matrix(predicted, reference));
}

Index window_count(double trial_len_s, const WindowConfig& cfg)
{
    if (!(trial_len_s > 0.0))
        throw DataError("window similarity: empty trial");
    return std::max<Index>(1, static_cast<Index>(std::ceil(trial_len_s / cfg.stride_s - 1e-9)));
}

namespace {

// [first, last) of the words whose onset lies in [lo, hi).
std::pair<Index, Index> onset_range(const std::vector<WordAnnotation>& words, double lo, double hi)
{
    auto cmp = [](const WordAnnotation& w, double t) { return w.t_on < t; };
    auto a = std::lower_bound(words.begin(), words.end(), lo, cmp);
    auto b = std::lower_bound(words.begin(), words.end(), hi, cmp);
    return {a - words.begin(), b - words.begin()};
}

template <typename F>
std::vector<double> for_each_window(const std::vector<WordAnnotation>& decoded,
                                    const std::vector<WordAnnotation>& truth, double trial_len_s,
                                    const WindowConfig& cfg, F&& score)
{
    cfg.validate();
    if (truth.empty())
        throw DataError("window similarity: empty trial");
    const Index n = window_count(trial_len_s, cfg);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const double centre = static_cast<double>(i) * cfg.stride_s;
        const double lo = centre - cfg.window_s / 2.0;
        const double hi = centre + cfg.window_s / 2.0;
        out[static_cast<std::size_t>(i)] = score(onset_range(decoded, lo, hi), onset_range(truth, lo, hi));
    }
    return out;
}

std::vector<std::string> tokens(const std::vector<WordAnnotation>& words, std::pair<Index, Index> r)
{
    std::vector<std::string> out;
    for (Index i = r.first; i < r.second; ++i)
        out.push_back(words[static_cast<std::size_t>(i)].token);
    return out;
}

} // namespace

std::vector<double> window_similarity(const std::vector<WordAnnotation>& decoded,
                                      const std::vector<WordAnnotation>& truth, double trial_len_s,
                                      const WindowConfig& cfg, const WindowScorer& scorer)
{
    return for_each_window(decoded, truth, trial_len_s, cfg, [&](auto p, auto r) {
        return scorer(tokens(decoded, p), tokens(truth, r));
    });
}

std::vector<double> window_similarity(const std::vector<WordAnnotation>& decoded,
                                      const std::vector<WordAnnotation>& truth, double trial_len_s,
                                      const WindowConfig& cfg, const TokenSimilarity& sim)
{
    const MatrixD full = sim.matrix(tokens(decoded, {0, static_cast<Index>(decoded.size())}),
                                    tokens(truth, {0, static_cast<Index>(truth.size())}));
    return for_each_window(decoded, truth, trial_len_s, cfg, [&](auto p, auto r) {
        return greedy_f1(full.block(p.first, r.first, p.second - p.first, r.second - r.first));
    });
}

double mean(const std::vector<double>& v)
{
    if (v.empty())
        return 0.0;
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

PermutationResult permutation_pvalue(double real, const std::vector<double>& nulls, const WindowConfig& cfg,
                                     std::size_t min_nulls)
{
    if (nulls.empty())
        throw DataError("permutation test: empty null set");
    if (nulls.size() < min_nulls)
        throw ConfigError("permutation test: " + std::to_string(nulls.size()) + " null sequences, at least "
                          + std::to_string(min_nulls) + " required");
    const auto n = static_cast<double>(nulls.size());
    const auto above = static_cast<double>(std::count_if(nulls.begin(), nulls.end(), [&](double v) { return v >= real; }));
    PermutationResult r;
    r.p = cfg.raw_pvalues ? above / n : (1.0 + above) / (1.0 + n);
    r.significant = r.p < cfg.alpha;
    return r;
}

std::vector<PermutationResult> permutation_pvalues(const std::vector<double>& real,
                                                   const std::vector<std::vector<double>>& nulls,
                                                   const WindowConfig& cfg, std::size_t min_nulls)
{
    if (real.size() != nulls.size())
        throw ShapeError("permutation test: one null set per score required");
    std::vector<PermutationResult> out;
    out.reserve(real.size());
    for (std::size_t i = 0; i < real.size(); ++i)
        out.push_back(permutation_pvalue(real[i], nulls[i], cfg, min_nulls));
    return out;
}

SequenceReport summarize(const std::vector<TrialSimilarity>& trials, const WindowConfig& cfg,
                         const std::string& scorer_name, std::size_t min_nulls)
{
    cfg.validate();
    SequenceReport rep;
    rep.config = cfg;
    rep.scorer = scorer_name;
    std::size_t windows = 0, significant_windows = 0, significant_trials = 0;
    for (const auto& t : trials) {
        TrialReport tr;
        tr.trial = t.trial;
        tr.window_scores = t.window_scores;
        tr.score = mean(t.window_scores);
        const std::size_t n_win = t.window_scores.size();
        std::vector<double> null_trial;
        null_trial.reserve(t.null_window_scores.size());
        for (const auto& nw : t.null_window_scores) {
            if (nw.size() != n_win)
                throw ShapeError("trial " + t.trial + ": null sequence has " + std::to_string(nw.size())
                                 + " windows, expected " + std::to_string(n_win));
            null_trial.push_back(mean(nw));
        }
        tr.null_score = mean(null_trial);
        const auto trial_p = permutation_pvalue(tr.score, null_trial, cfg, min_nulls);
        tr.p = trial_p.p;
        tr.significant = trial_p.significant;
        for (std::size_t w = 0; w < n_win; ++w) {
            std::vector<double> column;
            column.reserve(t.null_window_scores.size());
            for (const auto& nw : t.null_window_scores)
                column.push_back(nw[w]);
            const auto wp = permutation_pvalue(t.window_scores[w], column, cfg, min_nulls);
            tr.window_null_mean.push_back(mean(column));
            std::sort(column.begin(), column.end());
            tr.window_null_p95.push_back(
                column[std::min(column.size() - 1, static_cast<std::size_t>(0.95 * static_cast<double>(column.size())))]);
            tr.window_p.push_back(wp.p);
            tr.window_significant.push_back(wp.significant);
            significant_windows += wp.significant ? 1 : 0;
        }
        windows += n_win;
        significant_trials += tr.significant ? 1 : 0;
        rep.mean_score += tr.score;
        rep.mean_null_score += tr.null_score;
        rep.trials.push_back(std::move(tr));
    }
    if (!trials.empty()) {
        rep.mean_score /= static_cast<double>(trials.size());
        rep.mean_null_score /= static_cast<double>(trials.size());
        rep.trial_accuracy = 100.0 * static_cast<double>(significant_trials) / static_cast<double>(trials.size());
    }
    if (windows > 0)
        rep.window_accuracy = 100.0 * static_cast<double>(significant_windows) / static_cast<double>(windows);
    return rep;
}

io::Json to_json(const SequenceReport& r)
{
    io::Json trials = io::Json::array();
    for (const auto& t : r.trials) {
        io::Json w = io::Json::array();
        for (std::size_t i = 0; i < t.window_scores.size(); ++i)
            w.push_back({{"second", static_cast<double>(i) * r.config.stride_s},
                         {"score", t.window_scores[i]},
                         {"null_mean", t.window_null_mean[i]},
                         {"null_p95", t.window_null_p95[i]},
                         {"p", t.window_p[i]},
                         {"significant", static_cast<bool>(t.window_significant[i])}});
        trials.push_back({{"trial", t.trial},
                          {"score", t.score},
                          {"null_score", t.null_score},
                          {"p", t.p},
                          {"significant", t.significant},
                          {"windows", w}});
    }
    return {{"config", to_json(r.config)},
            {"scorer", r.scorer},
            {"score", r.mean_score},
            {"null_score", r.mean_null_score},
            {"window_accuracy", r.window_accuracy},
            {"trial_accuracy", r.trial_accuracy},
            {"trials", trials}};
}

SequenceReport sequence_report_from_json(const io::Json& j)
{
    try {
        SequenceReport r;
        r.config = window_config_from_json(j.at("config"));
        r.scorer = j.at("scorer").get<std::string>();
        r.mean_score = j.at("score").get<double>();
        r.mean_null_score = j.at("null_score").get<double>();
        r.window_accuracy = j.at("window_accuracy").get<double>();
        r.trial_accuracy = j.at("trial_accuracy").get<double>();
        for (const auto& t : j.at("trials")) {
            TrialReport tr;
            tr.trial = t.at("trial").get<std::string>();
            tr.score = t.at("score").get<double>();
            tr.null_score = t.at("null_score").get<double>();
            tr.p = t.at("p").get<double>();
            tr.significant = t.at("significant").get<bool>();
            for (const auto& w : t.at("windows")) {
                tr.window_scores.push_back(w.at("score").get<double>());
                tr.window_null_mean.push_back(w.at("null_mean").get<double>());
                tr.window_null_p95.push_back(w.at("null_p95").get<double>());
                tr.window_p.push_back(w.at("p").get<double>());
                tr.window_significant.push_back(w.at("significant").get<bool>());
            }
            r.trials.push_back(std::move(tr));
        }
        return r;
    } catch (const io::Json::exception& e) {
        throw DataError(std::string("sequence report: ") + e.what());
    }
}

std::string to_text(const SequenceReport& r)
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(3);
    out << "scorer: " << r.scorer << "\n\n";
    out << std::left << std::setw(16) << "trial" << std::right << std::setw(9) << "score" << std::setw(9) << "null"
        << std::setw(9) << "p" << std::setw(6) << "sig" << '\n';
    for (const auto& t : r.trials)
        out << std::left << std::setw(16) << t.trial << std::right << std::setw(9) << t.score << std::setw(9)
            << t.null_score << std::setw(9) << t.p << std::setw(6) << (t.significant ? "yes" : "no") << '\n';
    out << '\n'
        << std::setprecision(1) << "Score " << std::setprecision(3) << r.mean_score << "  Null " << r.mean_null_score
        << std::setprecision(1) << "  Window " << r.window_accuracy << "%  Trial " << r.trial_accuracy << "%\n";
    return out.str();
}

void export_scores(const std::filesystem::path& path, const std::map<std::string, std::vector<double>>& scores,
                   const WindowConfig& cfg)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw DataError("cannot write " + path.string());
    for (const auto& [trial, s] : scores)
        for (std::size_t i = 0; i < s.size(); ++i)
            out << trial << '\t' << io::format_double(static_cast<double>(i) * cfg.stride_s) << '\t'
                << io::format_double(s[i]) << '\n';
}

std::map<std::string, std::vector<double>> import_external_scores(const std::filesystem::path& path,
                                                                  const std::map<std::string, Index>& expected,
                                                                  const WindowConfig& cfg)
{
    std::map<std::string, std::vector<double>> scores;
    std::map<std::string, std::vector<bool>> seen;
    for (const auto& [trial, n] : expected) {
        scores[trial].assign(static_cast<std::size_t>(n), 0.0);
        seen[trial].assign(static_cast<std::size_t>(n), false);
    }
    io::for_each_tsv_row(path, [&](const std::vector<std::string_view>& f, const std::string& where) {
        if (f.size() != 3)
            throw DataError(where + ": expected trial_id<TAB>window_second<TAB>score");
        const std::string trial(f[0]);
        auto it = seen.find(trial);
        if (it == seen.end())
            throw DataError(where + ": unknown trial id '" + trial + "'");
        const double second = io::parse_double(f[1], where);
        const double idx = std::round(second / cfg.stride_s);
        if (std::abs(idx * cfg.stride_s - second) > 1e-6 || idx < 0 || idx >= static_cast<double>(it->second.size()))
            throw DataError(where + ": window second " + std::string(f[1]) + " is not a window of trial '" + trial
                            + "'");
        const auto w = static_cast<std::size_t>(idx);
        if (it->second[w])
            throw DataError(where + ": duplicate score for trial '" + trial + "' window " + std::string(f[1]));
        it->second[w] = true;
        scores[trial][w] = io::parse_double(f[2], where);
    });
    std::vector<std::string> gaps;
    for (const auto& [trial, flags] : seen)
        for (std::size_t w = 0; w < flags.size(); ++w)
            if (!flags[w])
                gaps.push_back(trial + "@" + io::format_double(static_cast<double>(w) * cfg.stride_s));
    if (!gaps.empty()) {
        std::string msg = path.string() + ": missing " + std::to_string(gaps.size()) + " window score(s):";
        for (std::size_t i = 0; i < std::min<std::size_t>(gaps.size(), 20); ++i)
            msg += " " + gaps[i];
        if (gaps.size() > 20)
            msg += " ...";
        throw DataError(msg);
    }
    return scores;
}

std::string score_curve_svg(const TrialReport& trial, const WindowConfig& cfg)
{
    const std::size_t n = trial.window_scores.size();
    const std::vector<double>& upper = trial.window_null_p95;
    const double width = 640, height = 240, left = 50, right = 10, top = 20, bottom = 35;
    const double span = std::max<double>(1.0, static_cast<double>(n - 1) * cfg.stride_s);
    auto x = [&](std::size_t w) { return left + (width - left - right) * (static_cast<double>(w) * cfg.stride_s) / span; };
    auto y = [&](double v) { return top + (height - top - bottom) * (1.0 - std::clamp(v, 0.0, 1.0)); };
    auto polyline = [&](const std::vector<double>& v, const char* colour, const char* dash) {
        std::ostringstream s;
        s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\"" << dash << " points=\"";
        for (std::size_t w = 0; w < v.size(); ++w)
            s << std::fixed << std::setprecision(1) << x(w) << ',' << y(v[w]) << (w + 1 < v.size() ? " " : "");
        s << "\"/>\n";
        return s.str();
    };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << left << "\" y=\"14\" font-size=\"12\" font-family=\"sans-serif\">" << trial.trial
        << " (p = " << io::format_double(trial.p) << ")</text>\n"
        << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << width - right << "\" y2=\"" << y(0)
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << left << "\" y2=\"" << y(1)
        << "\" stroke=\"black\"/>\n";
    for (double v : {0.0, 0.5, 1.0})
        svg << "<text x=\"" << left - 6 << "\" y=\"" << y(v) + 4 << "\" font-size=\"10\" text-anchor=\"end\""
            << " font-family=\"sans-serif\">" << v << "</text>\n";
    svg << "<text x=\"" << (width + left) / 2 << "\" y=\"" << height - 8 << "\" font-size=\"10\" text-anchor=\"middle\""
        << " font-family=\"sans-serif\">time (s)</text>\n";
    svg << polyline(upper, "#bbbbbb", " stroke-dasharray=\"4 3\"");
    svg << polyline(trial.window_null_mean, "#888888", "");
    svg << polyline(trial.window_scores, "#1f5fbf", "");
    svg << "</svg>\n";
    return svg.str();
}

} // namespace semdec::eval
