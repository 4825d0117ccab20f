#pragma once

// Lagged ridge regression (temporal response function) reconstructing the
// embedding series from a window of sensor lags.

#include "semdec/io/checkpoint.hpp"
#include "semdec/sigproc/timeseries.hpp"

#include <filesystem>
#include <vector>

namespace semdec::ridge {

/// Log-spaced values from 1e-3 to 1e5.
std::vector<double> default_lambda_grid(int count = 20);

struct RidgeConfig {
    int tau1 = -40; // lags in samples, relative to the predicted sample
    int tau2 = 60;
    std::vector<double> lambdas = default_lambda_grid();
    int folds = 5;

    int lag_count() const { return tau2 - tau1 + 1; }
    Index design_columns(Index channels) const { return channels * lag_count() + 1; }
    void validate() const;
};

io::Json to_json(const RidgeConfig& c);
RidgeConfig ridge_config_from_json(const io::Json& j);

/// Raised when lambda = 0 meets a rank-deficient design.
class SingularSystemError : public DataError {
public:
    using DataError::DataError;
};

/// T x (C * lags + 1). Row t holds x[:, t + tau] for tau = tau1..tau2 (channel
/// fastest), zero where out of range, followed by a constant 1.
MatrixD build_lagged_design(const TimeSeries& x, const RidgeConfig& cfg);

/// Running sufficient statistics A'A and A'Z of the lagged design.
struct GramStats {
    MatrixD gram; // P x P
    MatrixD cross; // P x D
    Index rows = 0;

    GramStats() = default;
    GramStats(Index p, Index d);
    void add(const TimeSeries& x, const EmbeddingSeries& z, const RidgeConfig& cfg);
    GramStats& operator+=(const GramStats& o);
    GramStats& operator-=(const GramStats& o);
};

/// Solves (G + lambda * I') W = R by Cholesky, where I' leaves the last
/// (intercept) coordinate unpenalized when `intercept_last` is set.
MatrixD solve_ridge(const MatrixD& gram, const MatrixD& cross, double lambda, bool intercept_last = true);

/// W = (A'A + lambda I')^-1 A'Z with A rows = samples and Z rows = samples.
MatrixD ridge_fit(const MatrixD& design, const MatrixD& targets, double lambda, bool intercept_last = true);

struct RidgeModel {
    RidgeConfig config;
    Index channels = 0;
    Index dim = 0;
    double lambda = 0.0;
    MatrixD weights; // P x D
};

/// Zhat[:, t] = W' * lagged_row(t); same length and rate as `x`.
EmbeddingSeries ridge_predict(const RidgeModel& model, const TimeSeries& x);

struct CvResult {
    double best_lambda = 0.0;
    std::vector<double> scores;             // per lambda, mean over folds
    std::vector<std::vector<int>> fold_trials; // held-out trial indices per fold
};

/// Trial-level k-fold search over cfg.lambdas. Trials sharing a group id (for
/// example the same stimulus heard by several subjects) always share a fold.
/// Score is the mean per-dimension Pearson on the held fold.
CvResult cross_validate(const std::vector<TimeSeries>& x, const std::vector<EmbeddingSeries>& z,
                        const std::vector<int>& groups, const RidgeConfig& cfg);

struct RidgeFit {
    RidgeModel model;
    CvResult cv;
};

/// Cross-validates lambda, then refits on every trial.
RidgeFit train_ridge(const std::vector<TimeSeries>& x, const std::vector<EmbeddingSeries>& z,
                     const std::vector<int>& groups, const RidgeConfig& cfg);

io::Checkpoint to_checkpoint(const RidgeModel& model);
RidgeModel from_checkpoint(const io::Checkpoint& ckpt);
void save_ridge(const std::filesystem::path& path, const RidgeModel& model);
RidgeModel load_ridge(const std::filesystem::path& path);

} // namespace semdec::ridge
