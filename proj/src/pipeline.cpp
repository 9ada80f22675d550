#include "stancedyn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "stancedyn/analytics.hpp"
#include "stancedyn/common.hpp"
#include "stancedyn/evaluate.hpp"
#include "stancedyn/exec.hpp"
#include "stancedyn/ingest.hpp"
#include "stancedyn/regression.hpp"
#include "stancedyn/rng.hpp"
#include "stancedyn/sha256.hpp"
#include "stancedyn/stationarity.hpp"

namespace fs = std::filesystem;

namespace stancedyn {

const StageRecord* Manifest::find(const std::string& name) const {
    for (const auto& s : stages) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

Manifest Manifest::load(const std::string& path) {
    Manifest m;
    std::ifstream in(path);
    if (!in) return m;
    nlohmann::json j;
    in >> j;
    for (const auto& sj : j.at("stages")) {
        StageRecord s;
        s.name = sj.at("name").get<std::string>();
        s.config_hash = sj.at("config_hash").get<std::string>();
        for (auto it = sj.at("inputs").begin(); it != sj.at("inputs").end(); ++it) {
            s.inputs[it.key()] = it.value().get<std::string>();
        }
        for (auto it = sj.at("outputs").begin(); it != sj.at("outputs").end(); ++it) {
            s.outputs[it.key()] = it.value().get<std::string>();
        }
        m.stages.push_back(std::move(s));
    }
    return m;
}

void Manifest::save(const std::string& path) const {
    nlohmann::json j;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : stages) {
        nlohmann::json sj;
        sj["name"] = s.name;
        sj["config_hash"] = s.config_hash;
        sj["inputs"] = nlohmann::json::object();
        for (const auto& [k, v] : s.inputs) sj["inputs"][k] = v;
        sj["outputs"] = nlohmann::json::object();
        for (const auto& [k, v] : s.outputs) sj["outputs"][k] = v;
        j["stages"].push_back(std::move(sj));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

OutputLock::OutputLock(const std::string& dir) : path_(dir + "/.lock") {
    fs::create_directories(dir);
    if (fs::exists(path_)) {
        throw DataError("output directory is locked by another run: " + path_);
    }
    std::ofstream lock(path_);
    lock << "pid " << ::getpid() << '\n';
}

OutputLock::~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

namespace {

struct StageRunner {
    const std::string out_dir;
    Manifest previous;
    Manifest current;
    nlohmann::json timings = nlohmann::json::object();

    /// Run one stage unless the previous manifest already covers it.
    void stage(const std::string& name, const std::vector<std::string>& inputs,
               const std::string& config_str, const std::vector<std::string>& outputs,
               const std::function<void()>& body) {
        StageRecord rec;
        rec.name = name;
        rec.config_hash = sha256_hex(config_str);
        for (const auto& path : inputs) rec.inputs[path] = sha256_file(path);

        if (const StageRecord* prev = previous.find(name)) {
            if (prev->config_hash == rec.config_hash && prev->inputs == rec.inputs) {
                bool outputs_ok = prev->outputs.size() == outputs.size();
                for (const auto& path : outputs) {
                    auto it = prev->outputs.find(path);
                    if (it == prev->outputs.end() || !fs::exists(path) ||
                        sha256_file(path) != it->second) {
                        outputs_ok = false;
                        break;
                    }
                }
                if (outputs_ok) {
                    rec.outputs = prev->outputs;
                    rec.skipped = true;
                    current.stages.push_back(std::move(rec));
                    timings[name] = "skipped";
                    return;
                }
            }
        }

        const auto start = std::chrono::steady_clock::now();
        body();
        const auto end = std::chrono::steady_clock::now();
        timings[name] =
            std::chrono::duration_cast<std::chrono::milliseconds>(end - start).count();

        for (const auto& path : outputs) rec.outputs[path] = sha256_file(path);
        current.stages.push_back(std::move(rec));
        // persist progress so a failed later stage keeps completed work
        current.save(out_dir + "/manifest.json");
    }
};

std::string year_mid_instant(int year) {
    return std::to_string(year) + "-07-02";
}

} // namespace

Manifest run_pipeline(const PipelineConfig& config) {
    if (config.observations.empty()) throw ConfigError("pipeline: paths.observations is required");
    const std::string out = config.output_dir;
    OutputLock lock(out);

    StageRunner runner{out, Manifest::load(out + "/manifest.json"), {}, {}};

    const std::string obs_path = out + "/observations.jsonl";
    const std::string report_path = out + "/ingest_report.json";
    const std::string series_path = out + "/series.csv";
    const std::string ppca_path = out + "/ppca_model.json";
    const std::string traj_raw_path = out + "/trajectories_raw.csv";
    const std::string traj_smooth_path = out + "/trajectories_smoothed.csv";
    const std::string imputation_path = out + "/imputation.csv";
    const std::string stationarity_path = out + "/stationarity.json";
    const std::string model_path = out + "/model.json";
    const std::string history_path = out + "/training_history.csv";
    const std::string horizon_json_path = out + "/horizon.json";
    const std::string horizon_csv_path = out + "/horizon.csv";
    const std::string groups_path = out + "/groups.csv";
    const std::string movers_path = out + "/movers.csv";

    const bool have_meta = !config.metadata.empty();

    // --- ingest ---------------------------------------------------------
    {
        std::ostringstream cfg;
        cfg << "min_posts=" << config.min_posts << ";by_account=" << config.by_account
            << ";strict=" << config.strict << ";window=" << config.window_begin << ".."
            << config.window_end << ";format="
            << (config.observations_format == ObservationFormat::Jsonl ? "jsonl" : "csv");
        std::vector<std::string> inputs = {config.observations};
        if (have_meta) inputs.push_back(config.metadata);
        runner.stage("ingest", inputs, cfg.str(), {obs_path, report_path}, [&] {
            ParseOptions opts;
            opts.format = config.observations_format;
            opts.strict = config.strict;
            opts.by_account = config.by_account;
            opts.window_begin = parse_iso8601(config.window_begin);
            opts.window_end = parse_iso8601(config.window_end);
            ParseReport report;
            auto obs = parse_observations(config.observations, opts, &report);
            obs = filter_targets(obs, config.min_posts);
            if (have_meta) parse_person_meta(config.metadata, config.strict); // validate early
            write_observations_jsonl(obs_path, obs);
            nlohmann::json rj;
            rj["total_rows"] = report.total_rows;
            rj["parsed"] = report.parsed;
            rj["malformed"] = report.malformed;
            rj["out_of_window"] = report.out_of_window;
            rj["duplicates"] = report.duplicates;
            rj["after_target_filter"] = obs.size();
            std::ofstream rf(report_path, std::ios::binary);
            rf << rj.dump(2) << '\n';
        });
    }

    // --- regress ----------------------------------------------------------
    {
        std::ostringstream cfg;
        cfg << "lengthscale=" << config.kernel.lengthscale_days
            << ";signal=" << config.kernel.signal_scale << ";grid=" << config.alpha_grid_size << ","
            << config.alpha_grid_min << "," << config.alpha_grid_max
            << ";bin_width=" << config.binning.bin_width_days
            << ";epoch=" << format_iso8601(config.binning.epoch);
        runner.stage("regress", {obs_path}, cfg.str(), {series_path}, [&] {
            ParseOptions opts; // canonical jsonl, window already applied
            opts.format = ObservationFormat::Jsonl;
            const auto obs = parse_observations(obs_path, opts);

            // group observations by (person, target)
            std::map<std::pair<std::string, std::string>, std::vector<const StanceObservation*>> groups;
            for (const auto& o : obs) groups[{o.person_id, o.target_id}].push_back(&o);
            std::vector<const std::vector<const StanceObservation*>*> group_list;
            std::vector<std::pair<std::string, std::string>> group_keys;
            for (const auto& [key, g] : groups) {
                group_keys.push_back(key);
                group_list.push_back(&g);
            }

            const auto grid = config.alpha_grid();
            std::vector<RegressedSeries> series(group_list.size());
            exec::parallel_for(static_cast<std::ptrdiff_t>(group_list.size()), [&](std::ptrdiff_t gi) {
                const auto& g = *group_list[static_cast<std::size_t>(gi)];
                std::vector<double> times, labels;
                times.reserve(g.size());
                for (const auto* o : g) {
                    times.push_back(days_between(config.binning.epoch, o->timestamp));
                    labels.push_back(static_cast<double>(static_cast<int>(o->label)));
                }
                const RegressionFit fit = bkrr_fit(times, labels, config.kernel, grid);

                std::int64_t bin_lo = std::numeric_limits<std::int64_t>::max();
                std::int64_t bin_hi = std::numeric_limits<std::int64_t>::min();
                for (const auto* o : g) {
                    const std::int64_t b = bin_index(o->timestamp, config.binning);
                    bin_lo = std::min(bin_lo, b);
                    bin_hi = std::max(bin_hi, b);
                }
                std::vector<double> query;
                for (std::int64_t b = bin_lo; b <= bin_hi; ++b) {
                    query.push_back((static_cast<double>(b) + 0.5) * config.binning.bin_width_days);
                }
                const auto preds = bkrr_predict(fit, query);
                RegressedSeries& s = series[static_cast<std::size_t>(gi)];
                s.person_id = group_keys[static_cast<std::size_t>(gi)].first;
                s.target_id = group_keys[static_cast<std::size_t>(gi)].second;
                s.first_bin = bin_lo;
                for (const auto& p : preds) {
                    s.means.push_back(p.mean);
                    s.variances.push_back(p.variance);
                }
            });

            std::ofstream sf(series_path, std::ios::binary);
            if (!sf) throw DataError("cannot write " + series_path);
            sf << "person_id,target_id,bin,mean,variance\n";
            char buf[96];
            for (const auto& s : series) {
                for (std::size_t k = 0; k < s.means.size(); ++k) {
                    sf << s.person_id << ',' << s.target_id << ',';
                    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g\n",
                                  static_cast<long long>(s.first_bin + static_cast<std::int64_t>(k)),
                                  s.means[k], s.variances[k]);
                    sf << buf;
                }
            }
        });
    }

    // --- latent -----------------------------------------------------------
    {
        std::ostringstream cfg;
        cfg << "k=" << config.ppca.n_components << ";priors=" << config.ppca.priors.enabled << ","
            << config.ppca.priors.mean_prior_variance << "," << config.ppca.priors.transform_precision
            << "," << config.ppca.priors.noise_prior_alpha << "," << config.ppca.priors.noise_prior_beta
            << ";tol=" << config.ppca.tolerance << ";iters=" << config.ppca.max_iters
            << ";window=" << config.smoothing_window << ";seed=" << config.seed
            << ";reuse=" << config.ppca_model;
        runner.stage("latent", {series_path}, cfg.str(),
                     {ppca_path, traj_raw_path, traj_smooth_path, imputation_path}, [&] {
                         // read the series dump back
                         std::ifstream sf(series_path);
                         std::string line;
                         std::getline(sf, line);
                         std::map<std::pair<std::string, std::string>, RegressedSeries> series_map;
                         while (std::getline(sf, line)) {
                             if (line.empty()) continue;
                             std::stringstream ss(line);
                             std::string person, target, bin_s, mean_s, var_s;
                             std::getline(ss, person, ',');
                             std::getline(ss, target, ',');
                             std::getline(ss, bin_s, ',');
                             std::getline(ss, mean_s, ',');
                             std::getline(ss, var_s, ',');
                             auto& s = series_map[{person, target}];
                             if (s.means.empty()) {
                                 s.person_id = person;
                                 s.target_id = target;
                                 s.first_bin = std::stoll(bin_s);
                             }
                             s.means.push_back(std::stod(mean_s));
                             s.variances.push_back(std::stod(var_s));
                         }
                         std::vector<RegressedSeries> series;
                         series.reserve(series_map.size());
                         for (auto& [key, s] : series_map) series.push_back(std::move(s));

                         StanceMatrix matrix = edge_fill(pivot(series, config.binning));

                         PpcaModel model;
                         if (!config.ppca_model.empty()) {
                             model = load_ppca_model(config.ppca_model);
                         } else {
                             model = ppca_fit(matrix, config.ppca, derive_seed(config.seed, 1));
                         }
                         save_ppca_model(ppca_path, model);

                         const auto transformed = ppca_transform(model, matrix);
                         const auto raw =
                             trajectories_from_latents(matrix, transformed.latents, config.binning);
                         write_trajectories_csv(traj_raw_path, raw);
                         std::vector<LatentTrajectory> smooth;
                         smooth.reserve(raw.size());
                         for (const auto& t : raw) {
                             smooth.push_back(moving_average(t, config.smoothing_window));
                         }
                         write_trajectories_csv(traj_smooth_path, smooth);

                         const auto table = holdout_mae(
                             matrix, 0.01,
                             {ImputeMethod::Ppca, ImputeMethod::SvdImpute, ImputeMethod::ColumnMean,
                              ImputeMethod::Zero},
                             2, derive_seed(config.seed, 2), config.ppca);
                         std::ofstream imf(imputation_path, std::ios::binary);
                         imf << "method,mae,stddev\n";
                         char buf[96];
                         for (const auto& row : table) {
                             std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g\n",
                                           impute_method_name(row.method).c_str(), row.mae, row.stddev);
                             imf << buf;
                         }
                     });
    }

    // --- stationarity ------------------------------------------------------
    {
        std::ostringstream cfg;
        cfg << "windows=" << config.stationarity.n_windows << ";adf="
            << (config.stationarity.adf_regression == AdfRegression::Constant ? "c" : "ct")
            << ";kpss=" << (config.stationarity.kpss_regression == KpssRegression::Level ? "l" : "t")
            << ";minlen=" << config.stationarity.min_series_length
            << ";alpha=" << config.stationarity.alpha;
        runner.stage("stationarity", {traj_raw_path}, cfg.str(), {stationarity_path}, [&] {
            const auto trajs = read_trajectories_csv(traj_raw_path);
            const auto report = stationarity_report(trajs, config.stationarity);
            std::ofstream out_f(stationarity_path, std::ios::binary);
            out_f << stationarity_report_json(report) << '\n';
        });
    }

    // --- train -------------------------------------------------------------
    {
        std::ostringstream cfg;
        const auto& l = config.landscape;
        cfg << "batch=" << l.batch_size << ";epochs=" << l.num_epochs << ";patience=" << l.patience
            << ";frac=" << l.train_fraction << ";lr=" << l.learning_rate << ";wd=" << l.weight_decay
            << ";dropout=" << l.dropout << ";c0=" << l.confinement_factor << ";sigma=" << l.sigma_initial
            << ";hidden=";
        for (int h : l.hidden_dims) cfg << h << ",";
        cfg << ";seed=" << config.seed;
        runner.stage("train", {traj_smooth_path}, cfg.str(), {model_path, history_path}, [&] {
            const auto trajs = read_trajectories_csv(traj_smooth_path);
            TrainConfig tc = config.landscape;
            tc.seed = derive_seed(config.seed, 3);
            const TrainResult result = train(trajs, tc, config.binning);
            save_potential_net(model_path, result.net);
            std::ofstream hf(history_path, std::ios::binary);
            hf << "epoch,train_loss,val_loss\n";
            char buf[96];
            for (std::size_t e = 0; e < result.history.train_loss.size(); ++e) {
                std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e, result.history.train_loss[e],
                              result.history.val_loss[e]);
                hf << buf;
            }
        });
    }

    // --- evaluate ------------------------------------------------------------
    {
        std::ostringstream cfg;
        cfg << "horizons=";
        for (int h : config.horizons_days) cfg << h << ",";
        cfg << ";stride=" << config.anchor_stride << ";breakdown=" << config.breakdown_horizon_days;
        std::vector<std::string> inputs = {model_path, traj_smooth_path};
        if (have_meta) inputs.push_back(config.metadata);
        runner.stage("evaluate", inputs, cfg.str(), {horizon_json_path, horizon_csv_path, groups_path},
                     [&] {
                         const auto trajs = read_trajectories_csv(traj_smooth_path);
                         const PotentialNet net = load_potential_net(model_path);
                         HorizonConfig hc;
                         hc.horizons_days = config.horizons_days;
                         hc.anchor_stride = config.anchor_stride;
                         hc.binning = config.binning;
                         const auto report =
                             horizon_eval(trajs,
                                          {ForecastModel::Stationary, ForecastModel::Landscape,
                                           ForecastModel::HoltDamped, ForecastModel::ThetaDamped},
                                          &net, hc);
                         std::ofstream jf(horizon_json_path, std::ios::binary);
                         jf << horizon_report_json(report) << '\n';
                         write_horizon_report_csv(horizon_csv_path, report);

                         std::ofstream gf(groups_path, std::ios::binary);
                         gf << "grouping,group,n_people,n_anchors,ratio,p,p_adjusted,skipped\n";
                         if (have_meta) {
                             const auto meta = parse_person_meta(config.metadata, config.strict);
                             char buf[160];
                             for (const Grouping grouping :
                                  {Grouping::FigureType, Grouping::Party, Grouping::Province}) {
                                 const char* gname = grouping == Grouping::FigureType ? "figure_type"
                                                     : grouping == Grouping::Party    ? "party"
                                                                                      : "province";
                                 for (const auto& row :
                                      group_breakdown(report, ForecastModel::Landscape,
                                                      config.breakdown_horizon_days, meta, grouping)) {
                                     std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%zu,%.17g,%.17g,%.17g,%d\n",
                                                   gname, row.group.c_str(), row.n_people, row.n_anchors,
                                                   row.ratio, row.p, row.p_adjusted,
                                                   static_cast<int>(row.skipped));
                                     gf << buf;
                                 }
                             }
                         }
                     });
    }

    // --- analytics -------------------------------------------------------------
    {
        std::ostringstream cfg;
        cfg << "percentile=" << config.movers_percentile
            << ";top_loadings=" << config.movers_top_loadings << ";window=" << config.window_begin
            << ".." << config.window_end;
        std::vector<std::string> inputs = {traj_raw_path, ppca_path, obs_path};
        if (have_meta) inputs.push_back(config.metadata);
        runner.stage("analytics", inputs, cfg.str(), {movers_path}, [&] {
            const auto trajs = read_trajectories_csv(traj_raw_path);
            const auto model = load_ppca_model(ppca_path);
            ParseOptions opts;
            opts.format = ObservationFormat::Jsonl;
            const auto obs = parse_observations(obs_path, opts);

            std::ofstream mf(movers_path, std::ios::binary);
            mf << "dimension,direction,target,favor,neutral,against,n_before,n_after,p,p_adjusted\n";
            for (int dim = 0; dim < model.n_components; ++dim) {
                for (const bool positive : {true, false}) {
                    MoversConfig mc;
                    mc.dim = dim;
                    mc.percentile = config.movers_percentile;
                    mc.positive = positive;
                    mc.window_begin = parse_iso8601(config.window_begin);
                    mc.window_end = parse_iso8601(config.window_end);
                    mc.binning = config.binning;
                    mc.top_loadings = config.movers_top_loadings;
                    const auto rows =
                        significant_movers(trajs, model.loadings, model.col_keys, obs, mc);
                    char buf[96];
                    for (const auto& row : rows) {
                        mf << "pc" << (dim + 1) << ',' << (positive ? ">90%" : "<10%") << ','
                           << row.target << ',' << format_shift(row.before_pct[0], row.after_pct[0])
                           << ',' << format_shift(row.before_pct[1], row.after_pct[1]) << ','
                           << format_shift(row.before_pct[2], row.after_pct[2]);
                        std::snprintf(buf, sizeof(buf), ",%zu,%zu,%.17g,%.17g\n", row.n_before,
                                      row.n_after, row.p, row.p_adjusted);
                        mf << buf;
                    }
                }
            }
        });
    }

    runner.current.save(out + "/manifest.json");
    {
        std::ofstream tf(out + "/timings.json", std::ios::binary);
        tf << runner.timings.dump(2) << '\n';
    }
    return runner.current;
}

std::vector<Snapshot> snapshot_series(const PotentialNet& net, const std::vector<int>& years,
                                      const LatticeSpec& grid2d,
                                      const std::vector<LatentTrajectory>& trajs, double kt,
                                      int marg_nodes) {
    if (grid2d.dims() != 2) throw ConfigError("snapshot_series: grid must be 2-D");
    const double span_lo = normalize_time(net.binning.anchor0_at, net.binning);
    const double span_hi = normalize_time(net.binning.anchor1_at, net.binning);

    // projected training points for the support mask / density
    std::vector<Snapshot> snaps;
    for (const int year : years) {
        const double t_norm =
            normalize_time(parse_iso8601(year_mid_instant(year)), net.binning);
        const double year_lo =
            normalize_time(parse_iso8601(std::to_string(year) + "-01-01"), net.binning);
        const double year_hi =
            normalize_time(parse_iso8601(std::to_string(year + 1) + "-01-01"), net.binning);
        if (t_norm < std::min(span_lo, span_hi) - 1.0 || t_norm > std::max(span_lo, span_hi) + 1.0) {
            throw ConfigError("snapshot_series: year " + std::to_string(year) +
                              " lies outside the anchor span");
        }

        std::vector<Eigen::Vector2d> year_points;
        std::vector<Eigen::VectorXd> support_points;
        for (const auto& traj : trajs) {
            for (std::size_t i = 0; i < traj.times.size(); ++i) {
                if (traj.times[i] >= year_lo && traj.times[i] < year_hi) {
                    year_points.emplace_back(traj.coords[i](0), traj.coords[i](1));
                    Eigen::VectorXd p(2);
                    p << traj.coords[i](0), traj.coords[i](1);
                    support_points.push_back(std::move(p));
                }
            }
        }
        if (year_points.size() < 2) {
            throw DataError("snapshot_series: fewer than 2 trajectory points in year " +
                            std::to_string(year));
        }

        Snapshot snap;
        snap.year = year;
        snap.t_norm = t_norm;
        snap.density = kde_density(year_points, grid2d);

        if (net.spatial_dim == 2) {
            DriftFieldOptions opts;
            opts.n_mc = 10;
            opts.seed = derive_seed(0x5A9, static_cast<std::uint64_t>(year));
            snap.field = drift_field(net, grid2d, t_norm, support_points, opts);
        } else {
            // Boltzmann marginal over the remaining axes: the potential is
            // -kT log Z and its exact gradient is the Boltzmann-weighted
            // average of the full gradient's kept components.
            snap.field.grid = grid2d;
            snap.field.t_norm = t_norm;
            const int na = grid2d.nodes[0];
            const int nb = grid2d.nodes[1];
            const std::size_t n_cells = static_cast<std::size_t>(na) * static_cast<std::size_t>(nb);
            snap.field.positions.resize(n_cells);
            snap.field.drift.resize(n_cells);
            snap.field.potential.resize(n_cells);
            snap.field.mc_variance.assign(n_cells, 0.0);
            snap.field.low_support.assign(n_cells, 0);

            // data range of the marginalized axes
            std::vector<std::pair<double, double>> ranges;
            for (int ax = 2; ax < net.spatial_dim; ++ax) {
                double lo = std::numeric_limits<double>::infinity();
                double hi = -std::numeric_limits<double>::infinity();
                for (const auto& traj : trajs) {
                    for (const auto& x : traj.coords) {
                        lo = std::min(lo, x(ax));
                        hi = std::max(hi, x(ax));
                    }
                }
                if (!(hi > lo)) {
                    lo -= 0.5;
                    hi += 0.5;
                }
                ranges.emplace_back(lo, hi);
            }
            const std::size_t m = ranges.size();
            std::size_t lattice = 1;
            for (std::size_t i = 0; i < m; ++i) lattice *= static_cast<std::size_t>(marg_nodes);

            exec::parallel_for(static_cast<std::ptrdiff_t>(n_cells), [&](std::ptrdiff_t idx) {
                const int ia = static_cast<int>(idx / nb);
                const int ib = static_cast<int>(idx % nb);
                Eigen::VectorXd x(net.spatial_dim);
                x(0) = grid2d.coord(0, ia);
                x(1) = grid2d.coord(1, ib);
                Eigen::VectorXd pos2(2);
                pos2 << x(0), x(1);
                snap.field.positions[static_cast<std::size_t>(idx)] = pos2;

                std::vector<double> logw(lattice);
                std::vector<Eigen::Vector2d> grads(lattice);
                double max_logw = -std::numeric_limits<double>::infinity();
                for (std::size_t node = 0; node < lattice; ++node) {
                    std::size_t rest = node;
                    for (std::size_t i = 0; i < m; ++i) {
                        const int ni = static_cast<int>(rest % static_cast<std::size_t>(marg_nodes));
                        rest /= static_cast<std::size_t>(marg_nodes);
                        x(2 + static_cast<Eigen::Index>(i)) =
                            ranges[i].first + (ranges[i].second - ranges[i].first) * ni /
                                                  static_cast<double>(marg_nodes - 1);
                    }
                    logw[node] = -potential_eval(net, x, t_norm) / kt;
                    max_logw = std::max(max_logw, logw[node]);
                    const Eigen::VectorXd g = drift_eval(net, x, t_norm);
                    grads[node] = Eigen::Vector2d(g(0), g(1));
                }
                double z = 0.0;
                Eigen::Vector2d g_avg = Eigen::Vector2d::Zero();
                for (std::size_t node = 0; node < lattice; ++node) {
                    const double w = std::exp(logw[node] - max_logw);
                    z += w;
                    g_avg += w * grads[node];
                }
                snap.field.potential[static_cast<std::size_t>(idx)] = -kt * (max_logw + std::log(z));
                snap.field.drift[static_cast<std::size_t>(idx)] = g_avg / z;

                // centre slice of the marginalized axes for the MC hatching
                Eigen::VectorXd x_mid = x;
                for (std::size_t i = 0; i < m; ++i) {
                    x_mid(2 + static_cast<Eigen::Index>(i)) =
                        0.5 * (ranges[i].first + ranges[i].second);
                }
                snap.field.mc_variance[static_cast<std::size_t>(idx)] =
                    net.dropout_rate > 0.0
                        ? mc_uncertainty(net, x_mid, t_norm, 10,
                                         derive_seed(0x5A9, static_cast<std::uint64_t>(idx)))
                              .variance
                        : 0.0;
            });

            // support from the projected points
            if (support_points.size() >= 2) {
                std::vector<double> nn;
                const std::size_t cap = std::min<std::size_t>(support_points.size(), 2000);
                const std::size_t stride = std::max<std::size_t>(1, support_points.size() / cap);
                for (std::size_t i = 0; i < support_points.size(); i += stride) {
                    double best = std::numeric_limits<double>::infinity();
                    for (std::size_t j = 0; j < support_points.size(); ++j) {
                        if (i == j) continue;
                        best = std::min(best, (support_points[i] - support_points[j]).norm());
                    }
                    nn.push_back(best);
                }
                std::nth_element(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2),
                                 nn.end());
                const double radius = 2.0 * nn[nn.size() / 2];
                exec::parallel_for(static_cast<std::ptrdiff_t>(n_cells), [&](std::ptrdiff_t idx) {
                    double best = std::numeric_limits<double>::infinity();
                    for (const auto& p : support_points) {
                        best = std::min(best,
                                        (snap.field.positions[static_cast<std::size_t>(idx)] - p).norm());
                        if (best <= radius) break;
                    }
                    snap.field.low_support[static_cast<std::size_t>(idx)] = best > radius ? 1 : 0;
                });
            }
        }
        snaps.push_back(std::move(snap));
    }
    return snaps;
}

std::vector<std::string> export_snapshots(const std::string& out_dir,
                                          const std::vector<Snapshot>& snapshots,
                                          const SvgStyle& style) {
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    for (const auto& snap : snapshots) {
        const std::string base = out_dir + "/snapshot_" + std::to_string(snap.year);
        write_svg(base + ".svg", export_svg(snap.field, snap.density, style));
        write_drift_field_csv(base + ".csv", snap.field);
        written.push_back(base + ".svg");
        written.push_back(base + ".csv");
    }
    return written;
}

} // namespace stancedyn
