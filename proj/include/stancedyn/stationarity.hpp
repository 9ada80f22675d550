#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stancedyn/latent.hpp"

namespace stancedyn {

struct DriftReport {
    int n_windows = 0;
    std::vector<double> mean_drift_d; // Cohen's d, last window vs first, per dimension
    std::vector<double> variance_drift; // (var_last - var_first) / var_first
};

/// Pool trajectory points into equal time windows and compare the first
/// and last window per dimension.
DriftReport rolling_drift(const std::vector<LatentTrajectory>& trajs, int n_windows);

enum class AdfRegression { Constant, ConstantTrend };

struct AdfResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int lag_used = 0;
};

/// Augmented Dickey-Fuller unit-root test. Lag order is chosen by AIC up
/// to max_lag (default floor(12 (n/100)^(1/4))); the p-value comes from
/// MacKinnon's 1994 response-surface polynomials embedded as constants.
AdfResult adf_test(std::span<const double> series, AdfRegression regression,
                   std::optional<int> max_lag = std::nullopt);

enum class KpssRegression { Level, Trend };

struct KpssResult {
    double statistic = 0.0;
    double p_value = 0.10; // interpolated in the published table, clamped to [0.01, 0.10]
};

/// KPSS stationarity test with Newey-West long-run variance (Bartlett
/// kernel, lag floor(4 (n/100)^(1/4))).
KpssResult kpss_test(std::span<const double> series, KpssRegression regression);

struct FisherCombined {
    double statistic = 0.0; // -2 sum(log p), chi-square with 2k dof
    double p_value = 1.0;
};

FisherCombined fisher_combine(std::span<const double> p_values);

/// Fisher's statistic for p-values censored to [floor, ceiling] (the KPSS
/// band), referred to its null distribution by seeded Monte Carlo. Plain
/// Fisher is misleading here: with every series at the 0.10 ceiling the
/// chi-square tail already reads significant, while the data carry no
/// evidence at all.
double censored_fisher_p(std::span<const double> p_values, double floor_p, double ceiling_p,
                         std::uint64_t seed = 0x5eeded, int n_draws = 20000);

struct DimensionStationarity {
    double adf_combined_p = 1.0;
    double kpss_combined_p = 1.0; // censored-null Fisher combination
    std::size_t n_series = 0;
    std::string verdict;
};

struct StationarityReport {
    DriftReport drift;
    std::vector<DimensionStationarity> dimensions;
    std::string verdict; // stationary | trend-stationary | unit-root | inconclusive
};

struct StationarityConfig {
    int n_windows = 6;
    AdfRegression adf_regression = AdfRegression::ConstantTrend;
    KpssRegression kpss_regression = KpssRegression::Trend;
    std::size_t min_series_length = 30;
    double alpha = 0.05;
};

/// Per-trajectory ADF/KPSS on each latent dimension, Fisher-combined
/// across people, plus the rolling-window drift diagnostics. Runs on the
/// trajectories as given (i.e. before moving-average smoothing).
StationarityReport stationarity_report(const std::vector<LatentTrajectory>& trajs,
                                       const StationarityConfig& config);

std::string stationarity_report_json(const StationarityReport& report);

} // namespace stancedyn
