#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stancedyn/evaluate.hpp"
#include "stancedyn/ingest.hpp"
#include "stancedyn/landscape.hpp"
#include "stancedyn/latent.hpp"
#include "stancedyn/regression.hpp"
#include "stancedyn/stationarity.hpp"
#include "stancedyn/timebase.hpp"

namespace stancedyn {

/// Everything one pipeline run needs. Defaults follow the documented
/// hyperparameter tables; the config round-trips losslessly through
/// serialize/parse.
struct PipelineConfig {
    // [paths]
    std::string observations;
    std::string metadata;
    std::string output_dir = "out";
    ObservationFormat observations_format = ObservationFormat::Jsonl;

    // [ingest]
    std::size_t min_posts = 400;
    bool by_account = false;
    bool strict = false;
    std::string window_begin = "2022-01-01";
    std::string window_end = "2026-01-01";

    // [binning]
    TimeBinning binning = TimeBinning::defaults();

    // [regression]
    RbfKernelParams kernel;
    int alpha_grid_size = 13;
    double alpha_grid_min = 1e-3;
    double alpha_grid_max = 1e3;

    // [ppca]
    PpcaConfig ppca;
    int smoothing_window = 292;
    std::string ppca_model; // reuse a saved model instead of fitting

    // [stationarity]
    StationarityConfig stationarity;

    // [landscape]
    TrainConfig landscape;

    // [evaluate]
    std::vector<int> horizons_days = {7, 30, 60, 120, 360, 720};
    int anchor_stride = 5;
    int breakdown_horizon_days = 30;

    // [analytics]
    double movers_percentile = 0.10;
    int movers_top_loadings = 30;

    // [export]
    std::vector<int> snapshot_years = {2022, 2023, 2024, 2025};
    int grid_nodes = 41;
    double kt = 1.0;

    std::uint64_t seed = 42;

    std::vector<double> alpha_grid() const;
};

/// Parse the declarative key-value config ("[section]" headers,
/// "key = value" lines, '#' comments). Unknown keys are rejected under
/// strict mode. Throws ConfigError.
PipelineConfig parse_config(const std::string& path, bool strict = false);
PipelineConfig parse_config_text(const std::string& text, bool strict = false);

/// Serialize every field; parse(serialize(c)) == c.
std::string serialize_config(const PipelineConfig& config);

} // namespace stancedyn
