#include "semdec/ridge/ridge.hpp"

#include "semdec/numcore/ops.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <map>

namespace semdec::ridge {

namespace {

constexpr Index chunk_samples = 1024;

void check_lag_span(const TimeSeries& x, const RidgeConfig& cfg)
{
    if (x.samples() <= cfg.tau2 - cfg.tau1)
        throw ShapeError("ridge: series of " + std::to_string(x.samples()) + " samples is shorter than the lag span "
                         + std::to_string(cfg.tau1) + ".." + std::to_string(cfg.tau2));
}

// Transposed design rows t0..t0+n-1: P x n, one lagged row per column.
MatrixD lagged_columns(const TimeSeries& x, const RidgeConfig& cfg, Index t0, Index n)
{
    const Index c = x.channels();
    const Index total = x.samples();
    MatrixD cols = MatrixD::Zero(cfg.design_columns(c), n);
    for (int j = 0; j < cfg.lag_count(); ++j) {
        const Index tau = cfg.tau1 + j;
        const Index lo = std::max<Index>(0, -tau - t0);
        const Index hi = std::min<Index>(n, total - tau - t0);
        if (hi > lo)
            cols.block(j * c, lo, c, hi - lo) = x.data.middleCols(t0 + lo + tau, hi - lo).cast<double>();
    }
    cols.row(cols.rows() - 1).setOnes();
    return cols;
}

void check_pairs(const std::vector<TimeSeries>& x, const std::vector<EmbeddingSeries>& z, const std::vector<int>& groups)
{
    if (x.empty())
        throw DataError("ridge: no training trials");
    if (x.size() != z.size() || x.size() != groups.size())
        throw ShapeError("ridge: signal, target and group lists differ in length");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].samples() != z[i].samples())
            throw ShapeError("ridge: trial " + std::to_string(i) + " has " + std::to_string(x[i].samples())
                             + " signal samples but " + std::to_string(z[i].samples()) + " target samples");
        if (x[i].channels() != x[0].channels() || z[i].channels() != z[0].channels())
            throw ShapeError("ridge: trial " + std::to_string(i) + " has inconsistent channel counts");
    }
}

} // namespace

std::vector<double> default_lambda_grid(int count)
{
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        grid[static_cast<std::size_t>(i)] = std::pow(10.0, -3.0 + 8.0 * i / std::max(count - 1, 1));
    return grid;
}

void RidgeConfig::validate() const
{
    if (tau1 >= tau2)
        throw ConfigError("ridge.tau1: must be smaller than tau2");
    if (lambdas.empty())
        throw ConfigError("ridge.lambdas: grid is empty");
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (!(lambdas[i] >= 0.0) || !std::isfinite(lambdas[i]))
            throw ConfigError("ridge.lambdas: values must be finite and >= 0");
        if (i > 0 && !(lambdas[i] > lambdas[i - 1]))
            throw ConfigError("ridge.lambdas: grid must be sorted ascending");
    }
    if (folds < 2)
        throw ConfigError("ridge.folds: must be >= 2");
}

io::Json to_json(const RidgeConfig& c)
{
    return {{"tau1", c.tau1}, {"tau2", c.tau2}, {"lambdas", c.lambdas}, {"folds", c.folds}};
}

RidgeConfig ridge_config_from_json(const io::Json& j)
{
    const std::string sec = "ridge";
    io::reject_unknown_keys(j, {"tau1", "tau2", "lambdas", "folds"}, sec);
    RidgeConfig c;
    io::read_field(j, "tau1", c.tau1, sec);
    io::read_field(j, "tau2", c.tau2, sec);
    io::read_field(j, "lambdas", c.lambdas, sec);
    io::read_field(j, "folds", c.folds, sec);
    c.validate();
    return c;
}

MatrixD build_lagged_design(const TimeSeries& x, const RidgeConfig& cfg)
{
    check_lag_span(x, cfg);
    return lagged_columns(x, cfg, 0, x.samples()).transpose();
}

GramStats::GramStats(Index p, Index d) : gram(MatrixD::Zero(p, p)), cross(MatrixD::Zero(p, d)) {}

void GramStats::add(const TimeSeries& x, const EmbeddingSeries& z, const RidgeConfig& cfg)
{
    check_lag_span(x, cfg);
    if (z.samples() != x.samples())
        throw ShapeError("ridge: signal and target lengths differ");
    if (gram.size() == 0)
        *this = GramStats(cfg.design_columns(x.channels()), z.channels());
    if (gram.rows() != cfg.design_columns(x.channels()) || cross.cols() != z.channels())
        throw ShapeError("ridge: trial shape does not match the accumulated statistics");
    for (Index t0 = 0; t0 < x.samples(); t0 += chunk_samples) {
        const Index n = std::min(chunk_samples, x.samples() - t0);
        const MatrixD cols = lagged_columns(x, cfg, t0, n);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(cols);
        cross.noalias() += cols * z.data.middleCols(t0, n).transpose().cast<double>();
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    rows += x.samples();
}

GramStats& GramStats::operator+=(const GramStats& o)
{
    if (gram.size() == 0)
        return *this = o;
    gram += o.gram;
    cross += o.cross;
    rows += o.rows;
    return *this;
}

GramStats& GramStats::operator-=(const GramStats& o)
{
    gram -= o.gram;
    cross -= o.cross;
    rows -= o.rows;
    return *this;
}

MatrixD solve_ridge(const MatrixD& gram, const MatrixD& cross, double lambda, bool intercept_last)
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ConfigError("ridge: lambda must be finite and >= 0");
    if (gram.rows() != gram.cols() || cross.rows() != gram.rows())
        throw ShapeError("ridge: Gram and cross-product shapes do not conform");
    MatrixD reg = gram;
    const Index penalized = intercept_last ? reg.rows() - 1 : reg.rows();
    reg.diagonal().head(penalized).array() += lambda;
    Eigen::LLT<MatrixD> llt(reg);
    bool singular = llt.info() != Eigen::Success;
    if (!singular) {
        const VectorD d = llt.matrixLLT().diagonal().cwiseAbs2();
        singular = d.minCoeff() <= 1e-13 * std::max(d.maxCoeff(), 1e-300);
    }
    if (singular) {
        if (lambda == 0.0)
            throw SingularSystemError("ridge: the design is rank deficient at lambda = 0; use lambda > 0");
        throw SingularSystemError("ridge: regularized Gram matrix is not positive definite (lambda = "
                                  + std::to_string(lambda) + ")");
    }
    return llt.solve(cross);
}

MatrixD ridge_fit(const MatrixD& design, const MatrixD& targets, double lambda, bool intercept_last)
{
    if (design.rows() != targets.rows())
        throw ShapeError("ridge_fit: design has " + std::to_string(design.rows()) + " rows but targets have "
                         + std::to_string(targets.rows()));
    MatrixD gram = MatrixD::Zero(design.cols(), design.cols());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose());
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    return solve_ridge(gram, design.transpose() * targets, lambda, intercept_last);
}

EmbeddingSeries ridge_predict(const RidgeModel& model, const TimeSeries& x)
{
    if (x.channels() != model.channels)
        throw ShapeError("ridge_predict: model expects " + std::to_string(model.channels) + " channels, got "
                         + std::to_string(x.channels()));
    if (model.weights.rows() != model.config.design_columns(model.channels) || model.weights.cols() != model.dim)
        throw ShapeError("ridge_predict: weights do not match the lag configuration");
    check_lag_span(x, model.config);
    EmbeddingSeries out{MatrixF(model.dim, x.samples()), x.sample_rate};
    for (Index t0 = 0; t0 < x.samples(); t0 += chunk_samples) {
        const Index n = std::min(chunk_samples, x.samples() - t0);
        out.data.middleCols(t0, n) = (model.weights.transpose() * lagged_columns(x, model.config, t0, n)).cast<float>();
    }
    return out;
}

CvResult cross_validate(const std::vector<TimeSeries>& x, const std::vector<EmbeddingSeries>& z,
                        const std::vector<int>& groups, const RidgeConfig& cfg)
{
    cfg.validate();
    check_pairs(x, z, groups);
    std::map<int, int> group_rank;
    for (int g : groups)
        group_rank.emplace(g, 0);
    if (static_cast<int>(group_rank.size()) < cfg.folds)
        throw DataError("ridge: cross-validation needs at least " + std::to_string(cfg.folds)
                        + " independent trials, got " + std::to_string(group_rank.size()));
    int rank = 0;
    for (auto& [g, r] : group_rank)
        r = rank++;

    CvResult res;
    res.fold_trials.resize(static_cast<std::size_t>(cfg.folds));
    for (std::size_t i = 0; i < x.size(); ++i)
        res.fold_trials[static_cast<std::size_t>(group_rank[groups[i]] % cfg.folds)].push_back(static_cast<int>(i));

    std::vector<GramStats> fold_stats(static_cast<std::size_t>(cfg.folds));
    GramStats total;
    for (std::size_t f = 0; f < fold_stats.size(); ++f) {
        for (int i : res.fold_trials[f])
            fold_stats[f].add(x[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(i)], cfg);
        total += fold_stats[f];
    }

    const Index d = z[0].channels();
    const auto n_lambda = static_cast<Index>(cfg.lambdas.size());
    std::vector<double> sums(cfg.lambdas.size(), 0.0);
    for (std::size_t f = 0; f < fold_stats.size(); ++f) {
        GramStats train = total;
        train -= fold_stats[f];
        // All lambdas side by side: P x (n_lambda * D).
        MatrixD stacked(train.gram.rows(), n_lambda * d);
        for (Index l = 0; l < n_lambda; ++l)
            stacked.middleCols(l * d, d) = solve_ridge(train.gram, train.cross, cfg.lambdas[static_cast<std::size_t>(l)]);

        Index held = 0;
        for (int i : res.fold_trials[f])
            held += x[static_cast<std::size_t>(i)].samples();
        MatrixD pred(n_lambda * d, held);
        MatrixD truth(d, held);
        Index off = 0;
        for (int i : res.fold_trials[f]) {
            const auto& xi = x[static_cast<std::size_t>(i)];
            for (Index t0 = 0; t0 < xi.samples(); t0 += chunk_samples) {
                const Index n = std::min(chunk_samples, xi.samples() - t0);
                pred.middleCols(off + t0, n) = stacked.transpose() * lagged_columns(xi, cfg, t0, n);
            }
            truth.middleCols(off, xi.samples()) = z[static_cast<std::size_t>(i)].data.cast<double>();
            off += xi.samples();
        }
        for (Index l = 0; l < n_lambda; ++l) {
            double score = 0.0;
            for (Index k = 0; k < d; ++k)
                score += pearson(pred.row(l * d + k), truth.row(k));
            sums[static_cast<std::size_t>(l)] += score / static_cast<double>(d);
        }
    }

    res.scores.resize(sums.size());
    std::size_t best = 0;
    for (std::size_t l = 0; l < sums.size(); ++l) {
        res.scores[l] = sums[l] / cfg.folds;
        if (res.scores[l] >= res.scores[best])
            best = l;
    }
    res.best_lambda = cfg.lambdas[best];
    return res;
}

RidgeFit train_ridge(const std::vector<TimeSeries>& x, const std::vector<EmbeddingSeries>& z,
                     const std::vector<int>& groups, const RidgeConfig& cfg)
{
    RidgeFit fit;
    fit.cv = cross_validate(x, z, groups, cfg);
    GramStats all;
    for (std::size_t i = 0; i < x.size(); ++i)
        all.add(x[i], z[i], cfg);
    fit.model.config = cfg;
    fit.model.channels = x[0].channels();
    fit.model.dim = z[0].channels();
    fit.model.lambda = fit.cv.best_lambda;
    fit.model.weights = solve_ridge(all.gram, all.cross, fit.cv.best_lambda);
    return fit;
}

io::Checkpoint to_checkpoint(const RidgeModel& model)
{
    io::Checkpoint ck;
    ck.kind = "RIDG";
    ck.config = {{"ridge", to_json(model.config)},
                 {"channels", model.channels},
                 {"dim", model.dim},
                 {"lambda", model.lambda}};
    ck.blobs.push_back({"weights", model.weights});
    return ck;
}

RidgeModel from_checkpoint(const io::Checkpoint& ckpt)
{
    if (ckpt.kind != "RIDG")
        throw DataError("checkpoint holds a '" + ckpt.kind + "' model, expected a ridge model");
    const std::string sec = "ridge checkpoint";
    io::reject_unknown_keys(ckpt.config, {"ridge", "channels", "dim", "lambda"}, sec);
    RidgeModel m;
    m.config = ridge_config_from_json(ckpt.config.value("ridge", io::Json::object()));
    io::read_field(ckpt.config, "channels", m.channels, sec);
    io::read_field(ckpt.config, "dim", m.dim, sec);
    io::read_field(ckpt.config, "lambda", m.lambda, sec);
    m.weights = ckpt.f64("weights");
    if (ckpt.blobs.size() != 1 || m.weights.rows() != m.config.design_columns(m.channels) || m.weights.cols() != m.dim)
        throw ShapeError("ridge checkpoint: weights do not match the stored configuration");
    return m;
}

void save_ridge(const std::filesystem::path& path, const RidgeModel& model)
{
    io::save_checkpoint(path, to_checkpoint(model));
}

RidgeModel load_ridge(const std::filesystem::path& path)
{
    return from_checkpoint(io::load_checkpoint(path));
}

} // namespace semdec::ridge
