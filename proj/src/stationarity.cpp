#include "stancedyn/stationarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <json.hpp>

#include "stancedyn/analytics.hpp"
#include "stancedyn/common.hpp"
#include "stancedyn/exec.hpp"
#include "stancedyn/special.hpp"

namespace stancedyn {

DriftReport rolling_drift(const std::vector<LatentTrajectory>& trajs, int n_windows) {
    if (n_windows < 2) throw ConfigError("rolling_drift: need at least 2 windows");
    double t_min = std::numeric_limits<double>::infinity();
    double t_max = -std::numeric_limits<double>::infinity();
    Eigen::Index d = 0;
    for (const auto& t : trajs) {
        for (double tv : t.times) {
            t_min = std::min(t_min, tv);
            t_max = std::max(t_max, tv);
        }
        if (!t.coords.empty()) d = t.coords.front().size();
    }
    if (!(t_max > t_min)) throw DataError("rolling_drift: degenerate time range");

    // pool points of the first and last window
    std::vector<std::vector<double>> first(static_cast<std::size_t>(d)), last(static_cast<std::size_t>(d));
    const double width = (t_max - t_min) / n_windows;
    for (const auto& t : trajs) {
        for (std::size_t i = 0; i < t.times.size(); ++i) {
            int w = static_cast<int>((t.times[i] - t_min) / width);
            w = std::clamp(w, 0, n_windows - 1);
            if (w == 0) {
                for (Eigen::Index k = 0; k < d; ++k) {
                    first[static_cast<std::size_t>(k)].push_back(t.coords[i](k));
                }
            } else if (w == n_windows - 1) {
                for (Eigen::Index k = 0; k < d; ++k) {
                    last[static_cast<std::size_t>(k)].push_back(t.coords[i](k));
                }
            }
        }
    }
    if (first.empty() || first.front().size() < 2 || last.front().size() < 2) {
        throw DataError("rolling_drift: a window has fewer than 2 pooled samples");
    }

    DriftReport rep;
    rep.n_windows = n_windows;
    for (Eigen::Index k = 0; k < d; ++k) {
        const auto& a = last[static_cast<std::size_t>(k)];
        const auto& b = first[static_cast<std::size_t>(k)];
        double dval = 0.0;
        try {
            dval = cohens_d(a, b);
        } catch (const NumericError&) {
            dval = 0.0; // identical constant windows
        }
        rep.mean_drift_d.push_back(dval);

        auto var = [](const std::vector<double>& v) {
            const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            return s / static_cast<double>(v.size() - 1);
        };
        const double v0 = var(b), v1 = var(a);
        rep.variance_drift.push_back(v0 > 0.0 ? (v1 - v0) / v0 : 0.0);
    }
    return rep;
}

namespace {

// MacKinnon (1994) response-surface coefficients for the tau distribution,
// N = 1, as tabulated in standard econometrics references / statsmodels.
struct MacKinnonTable {
    double tau_star, tau_min, tau_max;
    double small[3]; // p = Phi(c0 + c1 t + c2 t^2) for t <= tau_star
    double large[4]; // p = Phi(c0 + c1 t + c2 t^2 + c3 t^3) otherwise
};
constexpr MacKinnonTable kMacKinnonConstant = {
    -1.61, -18.83, 2.74, {2.1659, 1.4412, 0.038269}, {1.7339, 0.93202, -0.12745, -0.010368}};
constexpr MacKinnonTable kMacKinnonConstantTrend = {
    -2.89, -16.18, 0.70, {3.2512, 1.6047, 0.049588}, {2.5261, 0.61654, -0.37956, -0.060285}};

double mackinnon_p(double stat, AdfRegression regression) {
    const MacKinnonTable& tb =
        regression == AdfRegression::Constant ? kMacKinnonConstant : kMacKinnonConstantTrend;
    if (stat > tb.tau_max) return 1.0;
    if (stat < tb.tau_min) return 0.0;
    double poly;
    if (stat <= tb.tau_star) {
        poly = tb.small[0] + stat * (tb.small[1] + stat * tb.small[2]);
    } else {
        poly = tb.large[0] + stat * (tb.large[1] + stat * (tb.large[2] + stat * tb.large[3]));
    }
    return normal_cdf(poly);
}

struct Ols {
    Eigen::VectorXd coef;
    double rss = 0.0;
    Eigen::MatrixXd xtx_inv;
    Eigen::Index n = 0, k = 0;
};

Ols ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Ols r;
    r.n = X.rows();
    r.k = X.cols();
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) throw NumericError("ols: rank-deficient design matrix");
    r.coef = qr.solve(y);
    const Eigen::VectorXd resid = y - X * r.coef;
    r.rss = resid.squaredNorm();
    r.xtx_inv = (X.transpose() * X).llt().solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
    return r;
}

} // namespace

AdfResult adf_test(std::span<const double> series, AdfRegression regression,
                   std::optional<int> max_lag) {
    const int n = static_cast<int>(series.size());
    const int ntrend = regression == AdfRegression::Constant ? 1 : 2;

    int maxlag;
    if (max_lag) {
        maxlag = *max_lag;
        if (maxlag < 0) throw ConfigError("adf_test: negative max_lag");
    } else {
        maxlag = static_cast<int>(std::floor(12.0 * std::pow(n / 100.0, 0.25)));
    }
    maxlag = std::min(maxlag, n / 2 - ntrend - 1);
    if (maxlag < 0) throw DataError("adf_test: series too short");
    if (n < 10 + maxlag) throw DataError("adf_test: series too short for requested lags");
    {
        const double first = series[0];
        bool constant = true;
        for (double v : series) {
            if (v != first) {
                constant = false;
                break;
            }
        }
        if (constant) throw DataError("adf_test: constant series, regression is degenerate");
    }

    std::vector<double> diff(static_cast<std::size_t>(n - 1));
    for (int i = 0; i < n - 1; ++i) diff[static_cast<std::size_t>(i)] = series[static_cast<std::size_t>(i + 1)] - series[static_cast<std::size_t>(i)];

    // Design shared by every candidate lag (rows trimmed for maxlag so the
    // information criteria are comparable):
    //   dy_t ~ const [+ trend] + y_{t-1} + dy_{t-1} ... dy_{t-lag}
    auto build = [&](int trim_lag, int use_lag, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
        const int rows = n - 1 - trim_lag;
        const int cols = ntrend + 1 + use_lag;
        X.resize(rows, cols);
        y.resize(rows);
        for (int r = 0; r < rows; ++r) {
            const int t = trim_lag + r; // index into diff
            y(r) = diff[static_cast<std::size_t>(t)];
            int c = 0;
            X(r, c++) = 1.0;
            if (ntrend == 2) X(r, c++) = static_cast<double>(r + 1);
            X(r, c++) = series[static_cast<std::size_t>(t)]; // y_{t-1} level
            for (int l = 1; l <= use_lag; ++l) X(r, c++) = diff[static_cast<std::size_t>(t - l)];
        }
    };

    int best_lag = 0;
    {
        double best_aic = std::numeric_limits<double>::infinity();
        Eigen::MatrixXd X;
        Eigen::VectorXd y;
        for (int lag = 0; lag <= maxlag; ++lag) {
            build(maxlag, lag, X, y);
            const Ols fit = ols(X, y);
            const double nobs = static_cast<double>(fit.n);
            const double aic = nobs * std::log(fit.rss / nobs) + 2.0 * static_cast<double>(fit.k);
            if (aic < best_aic) {
                best_aic = aic;
                best_lag = lag;
            }
        }
    }

    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    build(best_lag, best_lag, X, y);
    const Ols fit = ols(X, y);
    const Eigen::Index level_col = ntrend; // after const (+ trend)
    const double sigma2 = fit.rss / static_cast<double>(fit.n - fit.k);
    const double se = std::sqrt(sigma2 * fit.xtx_inv(level_col, level_col));
    if (!(se > 0.0)) throw NumericError("adf_test: zero standard error");

    AdfResult res;
    res.statistic = fit.coef(level_col) / se;
    res.lag_used = best_lag;
    res.p_value = mackinnon_p(res.statistic, regression);
    return res;
}

namespace {

// Published KPSS critical values: rows are the 10% / 5% / 2.5% / 1% levels.
constexpr double kKpssLevelCrit[4] = {0.347, 0.463, 0.574, 0.739};
constexpr double kKpssTrendCrit[4] = {0.119, 0.146, 0.176, 0.216};
constexpr double kKpssPvals[4] = {0.10, 0.05, 0.025, 0.01};

double kpss_p_from_stat(double stat, const double crit[4]) {
    if (stat <= crit[0]) return kKpssPvals[0];
    if (stat >= crit[3]) return kKpssPvals[3];
    for (int i = 0; i < 3; ++i) {
        if (stat <= crit[i + 1]) {
            const double w = (stat - crit[i]) / (crit[i + 1] - crit[i]);
            return kKpssPvals[i] + w * (kKpssPvals[i + 1] - kKpssPvals[i]);
        }
    }
    return kKpssPvals[3];
}

} // namespace

KpssResult kpss_test(std::span<const double> series, KpssRegression regression) {
    const int n = static_cast<int>(series.size());
    if (n < 10) throw DataError("kpss_test: series too short");

    Eigen::VectorXd resid(n);
    if (regression == KpssRegression::Level) {
        double mean = 0.0;
        for (double v : series) mean += v;
        mean /= n;
        for (int i = 0; i < n; ++i) resid(i) = series[static_cast<std::size_t>(i)] - mean;
    } else {
        Eigen::MatrixXd X(n, 2);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            X(i, 0) = 1.0;
            X(i, 1) = static_cast<double>(i + 1);
            y(i) = series[static_cast<std::size_t>(i)];
        }
        const Ols fit = ols(X, y);
        resid = y - X * fit.coef;
    }

    const int lags = static_cast<int>(std::floor(4.0 * std::pow(n / 100.0, 0.25)));

    // Newey-West long-run variance with Bartlett weights
    double s_hat = resid.squaredNorm();
    for (int l = 1; l <= lags; ++l) {
        double gamma = 0.0;
        for (int t = l; t < n; ++t) gamma += resid(t) * resid(t - l);
        s_hat += 2.0 * (1.0 - static_cast<double>(l) / (lags + 1.0)) * gamma;
    }
    s_hat /= n;
    if (!(s_hat > 0.0)) throw NumericError("kpss_test: zero long-run variance");

    double eta = 0.0, cum = 0.0;
    for (int t = 0; t < n; ++t) {
        cum += resid(t);
        eta += cum * cum;
    }
    eta /= static_cast<double>(n) * n;

    KpssResult res;
    res.statistic = eta / s_hat;
    res.p_value = kpss_p_from_stat(
        res.statistic, regression == KpssRegression::Level ? kKpssLevelCrit : kKpssTrendCrit);
    return res;
}

double censored_fisher_p(std::span<const double> p_values, double floor_p, double ceiling_p,
                         std::uint64_t seed, int n_draws) {
    if (p_values.empty()) throw DataError("censored_fisher_p: no p-values");
    double stat = 0.0;
    for (double p : p_values) {
        if (!(p > 0.0 && p <= 1.0)) throw DataError("censored_fisher_p: p outside (0, 1]");
        stat += -2.0 * std::log(std::clamp(p, floor_p, ceiling_p));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int at_least = 0;
    for (int d = 0; d < n_draws; ++d) {
        double s = 0.0;
        for (std::size_t i = 0; i < p_values.size(); ++i) {
            s += -2.0 * std::log(std::clamp(u(rng), floor_p, ceiling_p));
        }
        if (s >= stat - 1e-12) ++at_least;
    }
    return (static_cast<double>(at_least) + 1.0) / (static_cast<double>(n_draws) + 1.0);
}

FisherCombined fisher_combine(std::span<const double> p_values) {
    if (p_values.empty()) throw DataError("fisher_combine: no p-values");
    double stat = 0.0;
    for (double p : p_values) {
        if (!(p > 0.0 && p <= 1.0)) throw DataError("fisher_combine: p-values must lie in (0, 1]");
        stat += -2.0 * std::log(p);
    }
    FisherCombined res;
    res.statistic = stat;
    res.p_value = chi2_sf(stat, 2.0 * static_cast<double>(p_values.size()));
    return res;
}

namespace {

std::string verdict_of(double adf_p, double kpss_p, double alpha) {
    const bool adf_reject = adf_p < alpha; // no unit root
    const bool kpss_reject = kpss_p < alpha; // not (trend-)stationary around the deterministic part
    if (adf_reject && kpss_reject) return "trend-stationary";
    if (adf_reject && !kpss_reject) return "stationary";
    if (!adf_reject && kpss_reject) return "unit-root";
    return "inconclusive";
}

} // namespace

StationarityReport stationarity_report(const std::vector<LatentTrajectory>& trajs,
                                       const StationarityConfig& config) {
    StationarityReport rep;
    rep.drift = rolling_drift(trajs, config.n_windows);

    Eigen::Index d = 0;
    for (const auto& t : trajs) {
        if (!t.coords.empty()) {
            d = t.coords.front().size();
            break;
        }
    }

    for (Eigen::Index dim = 0; dim < d; ++dim) {
        std::vector<std::vector<double>> suitable;
        for (const auto& t : trajs) {
            if (t.coords.size() < config.min_series_length) continue;
            std::vector<double> series;
            series.reserve(t.coords.size());
            for (const auto& x : t.coords) series.push_back(x(dim));
            const double first = series.front();
            if (std::all_of(series.begin(), series.end(), [&](double v) { return v == first; })) {
                continue; // constant series, tests degenerate
            }
            suitable.push_back(std::move(series));
        }

        DimensionStationarity ds;
        ds.n_series = suitable.size();
        if (!suitable.empty()) {
            std::vector<double> adf_ps(suitable.size(), -1.0), kpss_ps(suitable.size(), -1.0);
            exec::parallel_for(static_cast<std::ptrdiff_t>(suitable.size()), [&](std::ptrdiff_t i) {
                const auto& s = suitable[static_cast<std::size_t>(i)];
                try {
                    adf_ps[static_cast<std::size_t>(i)] =
                        std::max(1e-12, adf_test(s, config.adf_regression).p_value);
                    kpss_ps[static_cast<std::size_t>(i)] = kpss_test(s, config.kpss_regression).p_value;
                } catch (const std::exception&) {
                    // near-degenerate series, drop it from the combination
                }
            });
            std::vector<double> adf_ok, kpss_ok;
            for (std::size_t i = 0; i < suitable.size(); ++i) {
                if (adf_ps[i] >= 0.0 && kpss_ps[i] >= 0.0) {
                    adf_ok.push_back(adf_ps[i]);
                    kpss_ok.push_back(kpss_ps[i]);
                }
            }
            ds.n_series = adf_ok.size();
            if (adf_ok.empty()) {
                ds.verdict = "inconclusive";
                rep.dimensions.push_back(std::move(ds));
                continue;
            }
            ds.adf_combined_p = fisher_combine(adf_ok).p_value;
            ds.kpss_combined_p = censored_fisher_p(kpss_ok, 0.01, 0.10);
            ds.verdict = verdict_of(ds.adf_combined_p, ds.kpss_combined_p, config.alpha);
        } else {
            ds.verdict = "inconclusive";
        }
        rep.dimensions.push_back(std::move(ds));
    }

    // overall verdict: modal per-dimension verdict, ties are inconclusive
    std::map<std::string, int> votes;
    for (const auto& ds : rep.dimensions) ++votes[ds.verdict];
    std::string best = "inconclusive";
    int best_count = 0;
    bool tie = false;
    for (const auto& [v, c] : votes) {
        if (c > best_count) {
            best = v;
            best_count = c;
            tie = false;
        } else if (c == best_count) {
            tie = true;
        }
    }
    rep.verdict = tie ? "inconclusive" : best;
    return rep;
}

std::string stationarity_report_json(const StationarityReport& report) {
    nlohmann::json j;
    j["verdict"] = report.verdict;
    j["drift"] = {{"n_windows", report.drift.n_windows},
                  {"mean_drift_cohens_d", report.drift.mean_drift_d},
                  {"relative_variance_drift", report.drift.variance_drift}};
    j["dimensions"] = nlohmann::json::array();
    for (std::size_t i = 0; i < report.dimensions.size(); ++i) {
        const auto& ds = report.dimensions[i];
        j["dimensions"].push_back({{"dimension", i + 1},
                                   {"adf_combined_p", ds.adf_combined_p},
                                   {"kpss_combined_p", ds.kpss_combined_p},
                                   {"n_series", ds.n_series},
                                   {"verdict", ds.verdict}});
    }
    return j.dump(2);
}

} // namespace stancedyn
