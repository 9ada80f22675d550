#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stancedyn/ingest.hpp"
#include "stancedyn/latent.hpp"

namespace stancedyn {

/// Non-negative count table, rows = periods, cols = labels.
struct ContingencyTable {
    Eigen::MatrixXi counts;
};

struct ChiSquareResult {
    double statistic = 0.0;
    int dof = 0;
    double p = 1.0;
};

/// Pearson chi-square test of independence. Every expected cell must be
/// positive; callers fall back to fisher_exact otherwise.
ChiSquareResult chi_square_test(const ContingencyTable& table);

/// Exact two-sided Fisher test on a 2x2 table: sum of hypergeometric
/// probabilities no larger than the observed table's.
double fisher_exact(const std::array<std::array<std::int64_t, 2>, 2>& table);

struct MannWhitneyResult {
    double u = 0.0;
    double p = 1.0;
    bool exact = false;
};

/// Exact permutation distribution when n_a + n_b <= 12, otherwise normal
/// approximation with tie correction and continuity correction.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

struct BhEntry {
    double p_adjusted = 1.0;
    bool reject = false;
};

/// Benjamini-Hochberg step-up with monotonicity enforcement.
std::vector<BhEntry> bh_correct(std::span<const double> p_values, double alpha = 0.05);

/// (mean_a - mean_b) / pooled sd, (n-1) pooling.
double cohens_d(std::span<const double> a, std::span<const double> b);

/// SS_between / SS_total for a one-way layout.
double eta_squared(std::span<const double> values, std::span<const int> groups);

/// Mean position per person, then per party; absolute distance between
/// party centroids for each latent dimension.
struct CentroidDistances {
    std::vector<std::string> parties;
    std::vector<Eigen::MatrixXd> per_dimension; // one symmetric matrix per dim
};
CentroidDistances centroid_distances(const std::vector<LatentTrajectory>& trajs,
                                     const std::vector<PersonMeta>& meta);

/// Shannon entropy (nats) of the normalized per-dimension variance of
/// person mean positions. `figure_filter` restricts the cohort.
double variance_entropy(const std::vector<LatentTrajectory>& trajs,
                        const std::vector<PersonMeta>& meta,
                        std::optional<FigureType> figure_filter = std::nullopt);

struct MoverRow {
    std::string target;
    std::array<double, 3> before_pct{}; // favor, neutral, against
    std::array<double, 3> after_pct{};
    std::size_t n_before = 0;
    std::size_t n_after = 0;
    double p = 1.0;
    double p_adjusted = 1.0;
    bool used_fisher = false;
};

struct MoversConfig {
    int dim = 0;
    double percentile = 0.10; // fraction of movers to keep
    bool positive = true; // top movers (true) or bottom movers (false)
    UtcInstant window_begin;
    UtcInstant window_end;
    TimeBinning binning = TimeBinning::defaults(); // maps the window onto trajectory time
    int top_loadings = 30;
    double alpha = 0.05;
};

/// Rank people by displacement along one latent dimension, take the
/// top/bottom percentile, and test label-share shifts on the dimension's
/// most-loaded targets between the two halves of the window.
std::vector<MoverRow> significant_movers(const std::vector<LatentTrajectory>& trajs,
                                         const Eigen::MatrixXd& loadings,
                                         const std::vector<std::string>& col_keys,
                                         const std::vector<StanceObservation>& obs,
                                         const MoversConfig& config);

/// Percentage triple "favor/neutral/against" formatted like "20.0→91.7".
std::string format_shift(double before, double after);

} // namespace stancedyn
