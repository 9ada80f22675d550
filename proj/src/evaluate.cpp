#include "stancedyn/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "stancedyn/analytics.hpp"
#include "stancedyn/common.hpp"
#include "stancedyn/exec.hpp"

namespace stancedyn {

std::vector<Eigen::VectorXd> baseline_stationary(const Eigen::VectorXd& x0, int horizon_bins) {
    if (horizon_bins < 1) throw ConfigError("baseline_stationary: horizon must be >= 1");
    return std::vector<Eigen::VectorXd>(static_cast<std::size_t>(horizon_bins), x0);
}

namespace {

struct HoltState {
    double level = 0.0;
    double trend = 0.0;
};

/// Run the damped Holt recursion over the series, returning the final
/// state and the one-step in-sample SSE.
HoltState holt_run(std::span<const double> y, const HoltParams& p, double* sse_out) {
    HoltState st;
    st.level = y[0];
    st.trend = y[1] - y[0];
    double sse = 0.0;
    for (std::size_t t = 1; t < y.size(); ++t) {
        const double forecast = st.level + p.phi * st.trend;
        const double err = y[t] - forecast;
        sse += err * err;
        const double prev_level = st.level;
        st.level = p.alpha * y[t] + (1.0 - p.alpha) * (prev_level + p.phi * st.trend);
        st.trend = p.beta * (st.level - prev_level) + (1.0 - p.beta) * p.phi * st.trend;
    }
    if (sse_out) *sse_out = sse;
    return st;
}

double damped_cumulative(double phi, int h) {
    // phi + phi^2 + ... + phi^h
    double sum = 0.0, pow = 1.0;
    for (int i = 1; i <= h; ++i) {
        pow *= phi;
        sum += pow;
    }
    return sum;
}

} // namespace

std::vector<double> holt_damped(std::span<const double> series,
                                const std::optional<HoltParams>& params, int horizon) {
    if (series.size() < 3) throw DataError("holt_damped: need at least 3 points");
    if (horizon < 1) throw ConfigError("holt_damped: horizon must be >= 1");

    HoltParams best = params.value_or(HoltParams{});
    if (!params) {
        double best_sse = std::numeric_limits<double>::infinity();
        for (int ai = 0; ai < 10; ++ai) {
            for (int bi = 0; bi < 10; ++bi) {
                for (int pi = 0; pi <= 19; ++pi) {
                    HoltParams cand;
                    cand.alpha = 0.05 + 0.1 * ai;
                    cand.beta = 0.05 + 0.1 * bi;
                    cand.phi = 0.80 + 0.01 * pi;
                    double sse;
                    holt_run(series, cand, &sse);
                    if (sse < best_sse) {
                        best_sse = sse;
                        best = cand;
                    }
                }
            }
        }
    }

    const HoltState st = holt_run(series, best, nullptr);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int h = 1; h <= horizon; ++h) {
        out.push_back(st.level + damped_cumulative(best.phi, h) * st.trend);
    }
    return out;
}

std::vector<double> theta_damped(std::span<const double> series, int horizon) {
    if (series.size() < 3) throw DataError("theta_damped: need at least 3 points");
    if (horizon < 1) throw ConfigError("theta_damped: horizon must be >= 1");
    const std::size_t n = series.size();

    // OLS linear trend y = a + b t, t = 0..n-1
    double sum_t = 0.0, sum_y = 0.0, sum_tt = 0.0, sum_ty = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        sum_t += static_cast<double>(t);
        sum_y += series[t];
        sum_tt += static_cast<double>(t) * static_cast<double>(t);
        sum_ty += static_cast<double>(t) * series[t];
    }
    const double denom = static_cast<double>(n) * sum_tt - sum_t * sum_t;
    const double b = denom != 0.0 ? (static_cast<double>(n) * sum_ty - sum_t * sum_y) / denom : 0.0;
    const double a = (sum_y - b * sum_t) / static_cast<double>(n);

    // theta line (theta = 2): doubles the detrended fluctuations
    std::vector<double> q(n);
    for (std::size_t t = 0; t < n; ++t) {
        q[t] = 2.0 * series[t] - (a + b * static_cast<double>(t));
    }

    auto ses_run = [&](double alpha, double* sse_out) {
        double level = q[0];
        double sse = 0.0;
        for (std::size_t t = 1; t < n; ++t) {
            const double err = q[t] - level;
            sse += err * err;
            level += alpha * err;
        }
        if (sse_out) *sse_out = sse;
        return level;
    };

    // alpha and phi by one-step SSE of the composite forecast:
    //   yhat_t(1) = (level_t + trend(t+1) + b*phi) / 2
    double best_alpha = 0.5, best_phi = 0.98;
    double best_sse = std::numeric_limits<double>::infinity();
    for (int ai = 0; ai < 10; ++ai) {
        const double alpha = 0.05 + 0.1 * ai;
        for (int pi = 0; pi <= 19; ++pi) {
            const double phi = 0.80 + 0.01 * pi;
            double level = q[0];
            double sse = 0.0;
            for (std::size_t t = 1; t < n; ++t) {
                const double trend_t = a + b * static_cast<double>(t - 1);
                const double pred = 0.5 * (level + trend_t + b * phi);
                const double err = series[t] - pred;
                sse += err * err;
                level += alpha * (q[t] - level);
            }
            if (sse < best_sse) {
                best_sse = sse;
                best_alpha = alpha;
                best_phi = phi;
            }
        }
    }

    const double level = ses_run(best_alpha, nullptr);
    const double trend_end = a + b * static_cast<double>(n - 1);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int h = 1; h <= horizon; ++h) {
        out.push_back(0.5 * (level + trend_end + b * damped_cumulative(best_phi, h)));
    }
    return out;
}

std::string forecast_model_name(ForecastModel m) {
    switch (m) {
        case ForecastModel::Stationary: return "stationary";
        case ForecastModel::Landscape: return "landscape";
        case ForecastModel::HoltDamped: return "holt_damped";
        case ForecastModel::ThetaDamped: return "theta_damped";
    }
    return "?";
}

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lower);
    }
    return m;
}

} // namespace

HorizonReport horizon_eval(const std::vector<LatentTrajectory>& heldout,
                           const std::set<ForecastModel>& models, const PotentialNet* net,
                           const HorizonConfig& config) {
    if (models.count(ForecastModel::Landscape) && net == nullptr) {
        throw ConfigError("horizon_eval: landscape model requested without a net");
    }
    HorizonReport report;
    report.horizons_days = config.horizons_days;

    std::vector<int> horizon_bins;
    for (int days : config.horizons_days) {
        const int bins = std::max(1, static_cast<int>(std::llround(
                                         static_cast<double>(days) / config.binning.bin_width_days)));
        horizon_bins.push_back(bins);
    }
    const int max_bins = *std::max_element(horizon_bins.begin(), horizon_bins.end());

    // anchor list: (trajectory, index)
    struct Anchor {
        std::size_t traj;
        std::size_t idx;
    };
    std::vector<Anchor> anchors;
    for (std::size_t ti = 0; ti < heldout.size(); ++ti) {
        const auto& t = heldout[ti];
        if (static_cast<int>(t.coords.size()) < max_bins + config.min_history) continue;
        for (std::size_t i = static_cast<std::size_t>(config.min_history) - 1;
             i + static_cast<std::size_t>(max_bins) < t.coords.size();
             i += static_cast<std::size_t>(config.anchor_stride)) {
            anchors.push_back({ti, i});
        }
    }
    if (anchors.empty()) throw DataError("horizon_eval: no anchor admits the largest horizon");

    struct AnchorOut {
        std::vector<double> err; // model x horizon, flattened
    };
    std::vector<ForecastModel> model_list(models.begin(), models.end());
    const std::size_t n_models = model_list.size();
    const std::size_t n_horizons = horizon_bins.size();
    std::vector<AnchorOut> outs(anchors.size());

    exec::parallel_for(static_cast<std::ptrdiff_t>(anchors.size()), [&](std::ptrdiff_t ai) {
        const Anchor& anchor = anchors[static_cast<std::size_t>(ai)];
        const LatentTrajectory& traj = heldout[anchor.traj];
        const Eigen::VectorXd& x0 = traj.coords[anchor.idx];
        const double t0 = traj.times[anchor.idx];
        const Eigen::Index d = x0.size();
        auto& out = outs[static_cast<std::size_t>(ai)];
        out.err.assign(n_models * n_horizons, 0.0);

        // landscape path once, reused for every horizon
        std::vector<Eigen::VectorXd> landscape_path;
        if (net != nullptr && models.count(ForecastModel::Landscape)) {
            landscape_path = predict(*net, x0, t0, max_bins).path;
        }
        // per-dimension forecaster histories
        std::vector<std::vector<double>> history(static_cast<std::size_t>(d));
        for (Eigen::Index dim = 0; dim < d; ++dim) {
            for (std::size_t i = 0; i <= anchor.idx; ++i) {
                history[static_cast<std::size_t>(dim)].push_back(traj.coords[i](dim));
            }
        }
        std::vector<std::vector<double>> holt_fc(static_cast<std::size_t>(d));
        std::vector<std::vector<double>> theta_fc(static_cast<std::size_t>(d));
        for (Eigen::Index dim = 0; dim < d; ++dim) {
            if (models.count(ForecastModel::HoltDamped)) {
                holt_fc[static_cast<std::size_t>(dim)] =
                    holt_damped(history[static_cast<std::size_t>(dim)], std::nullopt, max_bins);
            }
            if (models.count(ForecastModel::ThetaDamped)) {
                theta_fc[static_cast<std::size_t>(dim)] =
                    theta_damped(history[static_cast<std::size_t>(dim)], max_bins);
            }
        }

        for (std::size_t hi = 0; hi < n_horizons; ++hi) {
            const int bins = horizon_bins[hi];
            const Eigen::VectorXd& truth = traj.coords[anchor.idx + static_cast<std::size_t>(bins)];
            for (std::size_t mi = 0; mi < n_models; ++mi) {
                Eigen::VectorXd pred(d);
                switch (model_list[mi]) {
                    case ForecastModel::Stationary:
                        pred = x0;
                        break;
                    case ForecastModel::Landscape: {
                        const std::size_t k = std::min<std::size_t>(
                            static_cast<std::size_t>(bins) - 1, landscape_path.size() - 1);
                        pred = landscape_path[k];
                        break;
                    }
                    case ForecastModel::HoltDamped:
                        for (Eigen::Index dim = 0; dim < d; ++dim) {
                            pred(dim) = holt_fc[static_cast<std::size_t>(dim)]
                                               [static_cast<std::size_t>(bins) - 1];
                        }
                        break;
                    case ForecastModel::ThetaDamped:
                        for (Eigen::Index dim = 0; dim < d; ++dim) {
                            pred(dim) = theta_fc[static_cast<std::size_t>(dim)]
                                               [static_cast<std::size_t>(bins) - 1];
                        }
                        break;
                }
                out.err[mi * n_horizons + hi] = (pred - truth).squaredNorm();
            }
        }
    });

    // reduce to medians and the flat error table (sorted anchor order keeps
    // the output deterministic)
    report.n_anchors.assign(n_horizons, anchors.size());
    for (std::size_t mi = 0; mi < n_models; ++mi) {
        const std::string name = forecast_model_name(model_list[mi]);
        std::vector<double> med(n_horizons, 0.0);
        for (std::size_t hi = 0; hi < n_horizons; ++hi) {
            std::vector<double> errs;
            errs.reserve(anchors.size());
            for (const auto& out : outs) errs.push_back(out.err[mi * n_horizons + hi]);
            med[hi] = median(std::move(errs));
        }
        report.median_mse[name] = med;
    }
    const auto& base = report.median_mse.at(forecast_model_name(ForecastModel::Stationary));
    for (const auto& [name, med] : report.median_mse) {
        std::vector<double> ratio(n_horizons, 1.0);
        for (std::size_t hi = 0; hi < n_horizons; ++hi) {
            if (name == forecast_model_name(ForecastModel::Stationary)) {
                ratio[hi] = 1.0; // the baseline against itself, exactly
            } else {
                ratio[hi] = base[hi] > 0.0 ? med[hi] / base[hi]
                                           : std::numeric_limits<double>::infinity();
            }
        }
        report.normalized_ratio[name] = ratio;
    }

    for (std::size_t ai = 0; ai < anchors.size(); ++ai) {
        for (std::size_t mi = 0; mi < n_models; ++mi) {
            for (std::size_t hi = 0; hi < n_horizons; ++hi) {
                AnchorError e;
                e.person_id = heldout[anchors[ai].traj].person_id;
                e.horizon_days = config.horizons_days[hi];
                e.model = model_list[mi];
                e.squared_error = outs[ai].err[mi * n_horizons + hi];
                report.errors.push_back(std::move(e));
            }
        }
    }
    return report;
}

std::vector<GroupRow> group_breakdown(const HorizonReport& report, ForecastModel model,
                                      int horizon_days, const std::vector<PersonMeta>& meta,
                                      Grouping grouping) {
    std::map<std::string, std::string> group_of;
    for (const auto& m : meta) {
        switch (grouping) {
            case Grouping::FigureType:
                group_of[m.person_id] = figure_type_name(m.figure_type);
                break;
            case Grouping::Party:
                if (m.party) group_of[m.person_id] = *m.party;
                break;
            case Grouping::Province:
                if (m.province) group_of[m.person_id] = *m.province;
                break;
        }
    }

    struct GroupData {
        std::vector<double> model_err;
        std::vector<double> base_err;
        std::set<std::string> people;
    };
    std::map<std::string, GroupData> groups;
    for (const auto& e : report.errors) {
        if (e.horizon_days != horizon_days) continue;
        auto it = group_of.find(e.person_id);
        if (it == group_of.end()) continue;
        auto& g = groups[it->second];
        if (e.model == model) {
            g.model_err.push_back(e.squared_error);
            g.people.insert(e.person_id);
        } else if (e.model == ForecastModel::Stationary) {
            g.base_err.push_back(e.squared_error);
        }
    }

    std::vector<GroupRow> rows;
    std::vector<double> ps;
    for (const auto& [name, g] : groups) {
        GroupRow row;
        row.group = name;
        row.n_people = g.people.size();
        row.n_anchors = g.model_err.size();
        if (g.people.size() < 2 || g.model_err.empty() || g.base_err.empty()) {
            row.skipped = true;
            rows.push_back(std::move(row));
            continue;
        }
        const double base_med = median(g.base_err);
        row.ratio = base_med > 0.0 ? median(g.model_err) / base_med
                                   : std::numeric_limits<double>::infinity();
        row.p = mann_whitney_u(g.model_err, g.base_err).p;
        ps.push_back(row.p);
        rows.push_back(std::move(row));
    }
    const auto adj = bh_correct(ps);
    std::size_t pi = 0;
    for (auto& row : rows) {
        if (!row.skipped) row.p_adjusted = adj[pi++].p_adjusted;
    }
    return rows;
}

std::string horizon_report_json(const HorizonReport& report) {
    nlohmann::json j;
    j["horizons_days"] = report.horizons_days;
    j["n_anchors"] = report.n_anchors;
    for (const auto& [name, ratio] : report.normalized_ratio) {
        j["normalized_ratio"][name] = ratio;
    }
    for (const auto& [name, med] : report.median_mse) {
        j["median_mse"][name] = med;
    }
    return j.dump(2);
}

void write_horizon_report_csv(const std::string& path, const HorizonReport& report) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "model,horizon_days,median_mse,normalized_ratio\n";
    char buf[96];
    for (const auto& [name, med] : report.median_mse) {
        const auto& ratio = report.normalized_ratio.at(name);
        for (std::size_t hi = 0; hi < report.horizons_days.size(); ++hi) {
            std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g\n", name.c_str(),
                          report.horizons_days[hi], med[hi], ratio[hi]);
            out << buf;
        }
    }
}

} // namespace stancedyn
