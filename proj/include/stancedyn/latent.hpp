#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stancedyn/timebase.hpp"

namespace stancedyn {

/// Sparse wide matrix: (person, bin) rows x target columns with an explicit
/// missing mask (true = missing).
struct StanceMatrix {
    std::vector<std::pair<std::string, std::int64_t>> row_keys;
    std::vector<std::string> col_keys;
    Eigen::MatrixXd values;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> missing;

    double missing_fraction() const;
};

/// One regressed (person, target) series on consecutive bins starting at
/// `first_bin`.
struct RegressedSeries {
    std::string person_id;
    std::string target_id;
    std::int64_t first_bin = 0;
    std::vector<double> means;
    std::vector<double> variances;
};

/// Pivot regressed series into the wide matrix. Rows cover each person's
/// full bin range (min..max over their series); columns are the targets in
/// first-seen order. Duplicate (person, bin, target) values abort.
StanceMatrix pivot(const std::vector<RegressedSeries>& series, const TimeBinning& binning);

/// Extend each (person, target) series to the person's full row range by
/// repeating the first value backwards and the last value forwards.
/// Interior gaps stay missing; observed cells are never modified.
StanceMatrix edge_fill(StanceMatrix m);

struct PpcaPriors {
    bool enabled = true;
    double mean_prior_variance = 3.0; // Gaussian prior on column means
    double transform_precision = 500.0; // Gaussian precision on each loading entry
    double noise_prior_alpha = 4.0; // inverse-gamma on noise variance
    double noise_prior_beta = 0.1;
};

struct PpcaConfig {
    int n_components = 3;
    PpcaPriors priors;
    double tolerance = 1e-5; // relative change of penalized log-likelihood
    int max_iters = 500;
};

struct PpcaModel {
    int n_components = 0;
    Eigen::MatrixXd loadings; // targets x components
    Eigen::VectorXd column_means;
    double noise_variance = 1.0;
    PpcaPriors priors;
    std::vector<std::string> col_keys;
    bool converged = false;
    int iterations = 0;
    std::vector<double> loglik_history; // penalized observed-data log-likelihood
};

/// MAP EM for PPCA with missing values. Deterministic given the seed.
/// Throws NumericError if the noise variance collapses below 1e-10.
PpcaModel ppca_fit(const StanceMatrix& m, const PpcaConfig& config, std::uint64_t seed);

struct PpcaTransformResult {
    Eigen::MatrixXd latents; // rows x components (posterior means)
    StanceMatrix imputed; // observed cells passed through untouched
    std::size_t empty_rows = 0; // rows with no observed entry (latent = 0)
};

PpcaTransformResult ppca_transform(const PpcaModel& model, const StanceMatrix& m);

enum class ImputeMethod { Ppca, SvdImpute, ColumnMean, Zero };

std::string impute_method_name(ImputeMethod m);

struct HoldoutResult {
    ImputeMethod method;
    double mae = 0.0;
    double stddev = 0.0; // of per-cell absolute errors, averaged over splits
};

/// Mask `fraction` of the observed cells, impute with each method, report
/// MAE +/- per-cell stddev averaged over `n_splits` independent splits.
std::vector<HoldoutResult> holdout_mae(const StanceMatrix& m, double fraction,
                                       const std::vector<ImputeMethod>& methods, int n_splits,
                                       std::uint64_t seed, const PpcaConfig& config);

/// Iterative soft-thresholded rank-k SVD completion (the imputation
/// baseline). Exposed for tests.
Eigen::MatrixXd svd_impute(const StanceMatrix& m, int rank, int iterations);

/// Per-person sequence of latent coordinates at increasing normalized times.
struct LatentTrajectory {
    std::string person_id;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> coords;
};

std::vector<LatentTrajectory> trajectories_from_latents(const StanceMatrix& m,
                                                        const Eigen::MatrixXd& latents,
                                                        const TimeBinning& binning);

/// Trailing moving average over min(window, points so far) samples.
LatentTrajectory moving_average(const LatentTrajectory& traj, int window);

void save_ppca_model(const std::string& path, const PpcaModel& model);
PpcaModel load_ppca_model(const std::string& path);

void write_trajectories_csv(const std::string& path, const std::vector<LatentTrajectory>& trajs);
std::vector<LatentTrajectory> read_trajectories_csv(const std::string& path);

} // namespace stancedyn
