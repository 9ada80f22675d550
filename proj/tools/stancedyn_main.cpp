// stancedyn: stance-dynamics inference pipeline.
//
// Subcommands cover the pipeline stages (ingest, regress, latent,
// stationarity, train, evaluate, analytics), the synthetic oracle (synth),
// figure export (export), and full orchestration (pipeline).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "stancedyn/analytics.hpp"
#include "stancedyn/common.hpp"
#include "stancedyn/config.hpp"
#include "stancedyn/evaluate.hpp"
#include "stancedyn/exec.hpp"
#include "stancedyn/ingest.hpp"
#include "stancedyn/landscape.hpp"
#include "stancedyn/latent.hpp"
#include "stancedyn/pipeline.hpp"
#include "stancedyn/regression.hpp"
#include "stancedyn/rng.hpp"
#include "stancedyn/stationarity.hpp"
#include "stancedyn/synthetic.hpp"

namespace fs = std::filesystem;
using namespace stancedyn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

PipelineConfig load_config(const std::string& path, bool strict) {
    PipelineConfig cfg;
    if (!path.empty()) cfg = parse_config(path, strict);
    // env var overrides, paths only
    if (const char* v = std::getenv("STANCEDYN_OBSERVATIONS")) cfg.observations = v;
    if (const char* v = std::getenv("STANCEDYN_METADATA")) cfg.metadata = v;
    if (const char* v = std::getenv("STANCEDYN_OUTPUT")) cfg.output_dir = v;
    return cfg;
}

void print_ratio_table(const HorizonReport& report) {
    std::printf("%-14s", "model");
    for (int h : report.horizons_days) std::printf("  %8dd", h);
    std::printf("\n");
    for (const auto& [name, ratio] : report.normalized_ratio) {
        std::printf("%-14s", name.c_str());
        for (double r : ratio) std::printf("  %9.4f", r);
        std::printf("\n");
    }
}

AnalyticPotential parse_potential(const std::string& kind, int dim, double stiffness,
                                  double barrier, double spacing, double tilt) {
    if (kind == "quadratic_bowl") {
        return AnalyticPotential::quadratic_bowl(dim, stiffness);
    }
    if (kind == "double_well") {
        return AnalyticPotential::double_well(dim, barrier, spacing);
    }
    if (kind == "tilted") {
        Eigen::VectorXd rate = Eigen::VectorXd::Zero(dim);
        rate(0) = tilt;
        return AnalyticPotential::tilted(dim, stiffness, rate);
    }
    throw ConfigError("unknown potential kind: " + kind);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"stance-dynamics landscape inference"};
    app.require_subcommand(1);

    std::string config_path;
    bool strict = false;
    bool serial = false;
    app.add_option("--config", config_path, "pipeline config file");
    app.add_flag("--strict", strict, "reject unknown config keys and file columns");
    app.add_flag("--serial", serial, "run single-threaded (reference kernels)");

    // ingest
    auto* cmd_ingest = app.add_subcommand("ingest", "parse, filter and normalize observations");
    std::string in_obs, in_meta, out_path = "observations.jsonl";
    std::string format = "jsonl";
    std::size_t min_posts = 400;
    bool by_account = false;
    cmd_ingest->add_option("--obs", in_obs, "observation file")->required();
    cmd_ingest->add_option("--format", format, "jsonl|csv");
    cmd_ingest->add_option("--meta", in_meta, "person metadata CSV");
    cmd_ingest->add_option("--min-posts", min_posts, "keep targets with more posts than this");
    cmd_ingest->add_flag("--by-account", by_account, "keep accounts separate");
    cmd_ingest->add_option("--out", out_path, "normalized JSONL output");

    // regress / latent / stationarity / train / evaluate / analytics run the
    // corresponding pipeline stage via the config file
    for (const char* name : {"regress", "latent", "stationarity", "train", "evaluate", "analytics"}) {
        app.add_subcommand(name, std::string("run the ") + name + " stage (needs --config)");
    }

    // synth
    auto* cmd_synth = app.add_subcommand("synth", "generate Langevin trajectories from a known potential");
    std::string synth_kind = "quadratic_bowl";
    int synth_dim = 2, synth_traj = 200, synth_steps = 100;
    double synth_sigma = 0.05, synth_stiffness = 0.2, synth_barrier = 0.1, synth_spacing = 1.0,
           synth_tilt = 0.0;
    std::uint64_t synth_seed = 42;
    std::string synth_out = "synthetic.csv";
    cmd_synth->add_option("--kind", synth_kind, "quadratic_bowl|double_well|tilted");
    cmd_synth->add_option("--dim", synth_dim, "spatial dimensions");
    cmd_synth->add_option("--trajectories", synth_traj, "number of trajectories");
    cmd_synth->add_option("--steps", synth_steps, "steps per trajectory");
    cmd_synth->add_option("--sigma", synth_sigma, "noise scale");
    cmd_synth->add_option("--stiffness", synth_stiffness, "bowl stiffness");
    cmd_synth->add_option("--barrier", synth_barrier, "double-well barrier height");
    cmd_synth->add_option("--spacing", synth_spacing, "double-well minima at +-spacing");
    cmd_synth->add_option("--tilt", synth_tilt, "tilt rate per unit time along axis 1");
    cmd_synth->add_option("--seed", synth_seed, "RNG seed");
    cmd_synth->add_option("--out", synth_out, "trajectory CSV output");

    // export
    auto* cmd_export = app.add_subcommand("export", "render yearly density + streamline SVGs");
    std::string export_model, export_traj, export_dir = "figures";
    std::vector<int> export_years = {2022, 2023, 2024, 2025};
    int export_nodes = 41;
    double export_kt = 1.0;
    double export_extent = 0.0;
    cmd_export->add_option("--model", export_model, "trained potential net JSON")->required();
    cmd_export->add_option("--trajectories", export_traj, "trajectory CSV")->required();
    cmd_export->add_option("--out", export_dir, "output directory");
    cmd_export->add_option("--years", export_years, "years to render");
    cmd_export->add_option("--grid-nodes", export_nodes, "grid nodes per axis");
    cmd_export->add_option("--kt", export_kt, "Boltzmann temperature for marginalization");
    cmd_export->add_option("--extent", export_extent, "grid half-width (default 1.2x data extent)");

    auto* cmd_pipeline = app.add_subcommand("pipeline", "run every stage with resume support");
    std::string pl_obs, pl_meta, pl_out;
    bool pl_by_account = false;
    std::string pl_ppca_model;
    cmd_pipeline->add_option("--obs", pl_obs, "override paths.observations");
    cmd_pipeline->add_option("--meta", pl_meta, "override paths.metadata");
    cmd_pipeline->add_option("--out", pl_out, "override paths.output");
    cmd_pipeline->add_flag("--by-account", pl_by_account, "keep accounts separate");
    cmd_pipeline->add_option("--ppca-model", pl_ppca_model, "reuse a saved PPCA model");

    CLI11_PARSE(app, argc, argv);

    if (serial) exec::mode() = exec::Mode::Serial;

    try {
        if (cmd_ingest->parsed()) {
            ParseOptions opts;
            if (format == "jsonl") opts.format = ObservationFormat::Jsonl;
            else if (format == "csv") opts.format = ObservationFormat::Csv;
            else throw ConfigError("--format must be jsonl or csv");
            opts.strict = strict;
            opts.by_account = by_account;
            ParseReport report;
            auto obs = parse_observations(in_obs, opts, &report);
            obs = filter_targets(obs, min_posts);
            if (!in_meta.empty()) parse_person_meta(in_meta, strict);
            write_observations_jsonl(out_path, obs);
            std::printf("rows %zu, parsed %zu, malformed %zu, out-of-window %zu, duplicates %zu\n",
                        report.total_rows, report.parsed, report.malformed, report.out_of_window,
                        report.duplicates);
            std::printf("after target filter: %zu observations -> %s\n", obs.size(), out_path.c_str());
            return 0;
        }

        if (cmd_synth->parsed()) {
            const AnalyticPotential pot = parse_potential(synth_kind, synth_dim, synth_stiffness,
                                                          synth_barrier, synth_spacing, synth_tilt);
            SimulateOptions opts;
            opts.n_traj = synth_traj;
            opts.n_steps = synth_steps;
            opts.sigma = synth_sigma;
            opts.seed = synth_seed;
            const auto sim = simulate(pot, opts);
            write_trajectories_csv(synth_out, sim.trajectories);
            std::size_t diverged = 0;
            for (auto d : sim.diverged) diverged += d;
            std::printf("wrote %d trajectories (%zu diverged) -> %s\n", synth_traj, diverged,
                        synth_out.c_str());
            return 0;
        }

        if (cmd_export->parsed()) {
            const PotentialNet net = load_potential_net(export_model);
            const auto trajs = read_trajectories_csv(export_traj);
            double extent = export_extent;
            if (extent <= 0.0) {
                double m = 0.0;
                for (const auto& t : trajs) {
                    for (const auto& x : t.coords) {
                        m = std::max({m, std::abs(x(0)), std::abs(x(1))});
                    }
                }
                extent = 1.2 * std::max(m, 1e-3);
                extent = std::min(extent, 1.5 * net.radius_r);
            }
            LatticeSpec grid;
            grid.mins = {-extent, -extent};
            grid.maxs = {extent, extent};
            grid.nodes = {export_nodes, export_nodes};
            const auto snaps = snapshot_series(net, export_years, grid, trajs, export_kt);
            for (const auto& f : export_snapshots(export_dir, snaps)) {
                std::printf("wrote %s\n", f.c_str());
            }
            return 0;
        }

        if (cmd_pipeline->parsed() || app.get_subcommand_ptr("regress")->parsed() ||
            app.get_subcommand_ptr("latent")->parsed() ||
            app.get_subcommand_ptr("stationarity")->parsed() ||
            app.get_subcommand_ptr("train")->parsed() ||
            app.get_subcommand_ptr("evaluate")->parsed() ||
            app.get_subcommand_ptr("analytics")->parsed()) {
            PipelineConfig cfg = load_config(config_path, strict);
            if (cmd_pipeline->parsed()) {
                if (!pl_obs.empty()) cfg.observations = pl_obs;
                if (!pl_meta.empty()) cfg.metadata = pl_meta;
                if (!pl_out.empty()) cfg.output_dir = pl_out;
                if (pl_by_account) cfg.by_account = true;
                if (!pl_ppca_model.empty()) cfg.ppca_model = pl_ppca_model;
            }
            if (cfg.observations.empty()) {
                throw ConfigError("paths.observations must be set (config file or --obs)");
            }
            const Manifest manifest = run_pipeline(cfg);
            for (const auto& stage : manifest.stages) {
                std::printf("stage %-14s %s\n", stage.name.c_str(),
                            stage.skipped ? "skipped (up to date)" : "complete");
            }
            // stage subcommands reuse the resumable pipeline: completed
            // stages are skipped via the manifest, so running a single
            // stage after its predecessors is cheap
            const std::string horizon_json = cfg.output_dir + "/horizon.json";
            if (app.get_subcommand_ptr("evaluate")->parsed() && fs::exists(horizon_json)) {
                const auto trajs = read_trajectories_csv(cfg.output_dir + "/trajectories_smoothed.csv");
                const PotentialNet net = load_potential_net(cfg.output_dir + "/model.json");
                HorizonConfig hc;
                hc.horizons_days = cfg.horizons_days;
                hc.anchor_stride = cfg.anchor_stride;
                hc.binning = cfg.binning;
                const auto report = horizon_eval(trajs,
                                                 {ForecastModel::Stationary, ForecastModel::Landscape,
                                                  ForecastModel::HoltDamped, ForecastModel::ThetaDamped},
                                                 &net, hc);
                print_ratio_table(report);
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
