#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stancedyn/ingest.hpp"
#include "stancedyn/landscape.hpp"
#include "stancedyn/latent.hpp"

namespace stancedyn {

/// The no-movement reference: h copies of x0.
std::vector<Eigen::VectorXd> baseline_stationary(const Eigen::VectorXd& x0, int horizon_bins);

struct HoltParams {
    double alpha = 0.5;
    double beta = 0.1;
    double phi = 0.98; // damping
};

/// Damped-trend Holt exponential smoothing. Auto mode (no params) grid
/// searches alpha, beta in {0.05..0.95 step 0.1} and phi in
/// {0.80..0.99 step 0.01} on in-sample one-step SSE.
std::vector<double> holt_damped(std::span<const double> series,
                                const std::optional<HoltParams>& params, int horizon);

/// Classical Theta (theta = 2): the forecast averages the SES forecast of
/// the theta line with the linear-trend extrapolation, the trend part
/// damped by the cumulative phi factor.
std::vector<double> theta_damped(std::span<const double> series, int horizon);

enum class ForecastModel { Stationary, Landscape, HoltDamped, ThetaDamped };

std::string forecast_model_name(ForecastModel m);

struct HorizonConfig {
    std::vector<int> horizons_days = {7, 30, 60, 120, 360, 720};
    int anchor_stride = 5; // bins between anchor points
    int min_history = 3; // points the forecasters need
    TimeBinning binning = TimeBinning::defaults();
};

struct AnchorError {
    std::string person_id;
    int horizon_days = 0;
    ForecastModel model = ForecastModel::Stationary;
    double squared_error = 0.0;
};

struct HorizonReport {
    std::vector<int> horizons_days;
    // model -> per-horizon median squared error, normalized by the
    // stationary baseline's median at the same horizon
    std::map<std::string, std::vector<double>> normalized_ratio;
    std::map<std::string, std::vector<double>> median_mse;
    std::vector<std::size_t> n_anchors; // per horizon
    std::vector<AnchorError> errors; // flat, for group breakdowns
};

/// Evaluate every requested model at every horizon over anchor points
/// drawn with `anchor_stride` from the held-out trajectories.
HorizonReport horizon_eval(const std::vector<LatentTrajectory>& heldout,
                           const std::set<ForecastModel>& models, const PotentialNet* net,
                           const HorizonConfig& config);

enum class Grouping { FigureType, Party, Province };

struct GroupRow {
    std::string group;
    std::size_t n_people = 0;
    std::size_t n_anchors = 0;
    double ratio = 1.0; // median model error / median baseline error
    double p = 1.0; // Mann-Whitney U, model vs baseline errors
    double p_adjusted = 1.0;
    bool skipped = false; // fewer than 2 members
};

/// Per-group predictive comparison of one model against the stationary
/// baseline at one horizon. BH adjustment across groups.
std::vector<GroupRow> group_breakdown(const HorizonReport& report, ForecastModel model,
                                      int horizon_days, const std::vector<PersonMeta>& meta,
                                      Grouping grouping);

std::string horizon_report_json(const HorizonReport& report);
void write_horizon_report_csv(const std::string& path, const HorizonReport& report);

} // namespace stancedyn
