#include "stancedyn/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stancedyn/common.hpp"

namespace stancedyn {

std::vector<double> PipelineConfig::alpha_grid() const {
    std::vector<double> grid;
    const int n = alpha_grid_size;
    if (n <= 1) {
        grid.push_back(alpha_grid_min);
        return grid;
    }
    const double lo = std::log10(alpha_grid_min);
    const double hi = std::log10(alpha_grid_max);
    for (int i = 0; i < n; ++i) {
        grid.push_back(std::pow(10.0, lo + (hi - lo) * i / (n - 1)));
    }
    return grid;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KeyValueFile {
    std::map<std::string, std::string> entries; // "section.key" -> value

    static KeyValueFile parse(const std::string& text) {
        KeyValueFile kv;
        std::istringstream in(text);
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
                }
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
            }
            kv.entries[section.empty() ? key : section + "." + key] = value;
        }
        return kv;
    }
};

class Binder {
public:
    explicit Binder(const KeyValueFile& kv) : kv_(kv) {}

    void bind(const std::string& key, std::string& field) {
        known_.insert(key);
        if (auto it = kv_.entries.find(key); it != kv_.entries.end()) field = it->second;
    }
    void bind(const std::string& key, bool& field) {
        known_.insert(key);
        if (auto it = kv_.entries.find(key); it != kv_.entries.end()) {
            if (it->second == "true" || it->second == "1") field = true;
            else if (it->second == "false" || it->second == "0") field = false;
            else throw ConfigError(key + ": expected true/false, got '" + it->second + "'");
        }
    }
    template <typename Int>
    void bind_int(const std::string& key, Int& field) {
        known_.insert(key);
        if (auto it = kv_.entries.find(key); it != kv_.entries.end()) {
            try {
                field = static_cast<Int>(std::stoll(it->second));
            } catch (const std::exception&) {
                throw ConfigError(key + ": expected an integer, got '" + it->second + "'");
            }
        }
    }
    void bind(const std::string& key, double& field) {
        known_.insert(key);
        if (auto it = kv_.entries.find(key); it != kv_.entries.end()) {
            try {
                field = std::stod(it->second);
            } catch (const std::exception&) {
                throw ConfigError(key + ": expected a number, got '" + it->second + "'");
            }
        }
    }
    void bind(const std::string& key, std::vector<int>& field) {
        known_.insert(key);
        if (auto it = kv_.entries.find(key); it != kv_.entries.end()) {
            field.clear();
            std::istringstream ss(it->second);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                cell = trim(cell);
                if (cell.empty()) continue;
                try {
                    field.push_back(std::stoi(cell));
                } catch (const std::exception&) {
                    throw ConfigError(key + ": expected comma-separated integers");
                }
            }
        }
    }
    void bind_instant(const std::string& key, UtcInstant& field) {
        known_.insert(key);
        if (auto it = kv_.entries.find(key); it != kv_.entries.end()) {
            try {
                field = parse_iso8601(it->second);
            } catch (const DataError& e) {
                throw ConfigError(key + ": " + e.what());
            }
        }
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv_.entries) {
            if (known_.count(key) == 0) throw ConfigError("unknown config key '" + key + "'");
        }
    }

private:
    const KeyValueFile& kv_;
    std::set<std::string> known_;
};

void bind_all(Binder& b, PipelineConfig& c) {
    b.bind("paths.observations", c.observations);
    b.bind("paths.metadata", c.metadata);
    b.bind("paths.output", c.output_dir);
    std::string fmt = c.observations_format == ObservationFormat::Jsonl ? "jsonl" : "csv";
    b.bind("paths.observations_format", fmt);
    if (fmt == "jsonl") c.observations_format = ObservationFormat::Jsonl;
    else if (fmt == "csv") c.observations_format = ObservationFormat::Csv;
    else throw ConfigError("paths.observations_format: expected jsonl or csv");

    b.bind_int("ingest.min_posts", c.min_posts);
    b.bind("ingest.by_account", c.by_account);
    b.bind("ingest.strict", c.strict);
    b.bind("ingest.window_begin", c.window_begin);
    b.bind("ingest.window_end", c.window_end);

    b.bind_instant("binning.epoch", c.binning.epoch);
    b.bind("binning.bin_width_days", c.binning.bin_width_days);
    b.bind_instant("binning.anchor0_at", c.binning.anchor0_at);
    b.bind("binning.anchor0_value", c.binning.anchor0_value);
    b.bind_instant("binning.anchor1_at", c.binning.anchor1_at);
    b.bind("binning.anchor1_value", c.binning.anchor1_value);

    b.bind("regression.lengthscale_days", c.kernel.lengthscale_days);
    b.bind("regression.signal_scale", c.kernel.signal_scale);
    b.bind_int("regression.alpha_grid_size", c.alpha_grid_size);
    b.bind("regression.alpha_grid_min", c.alpha_grid_min);
    b.bind("regression.alpha_grid_max", c.alpha_grid_max);

    b.bind_int("ppca.n_components", c.ppca.n_components);
    b.bind("ppca.priors_enabled", c.ppca.priors.enabled);
    b.bind("ppca.mean_prior_variance", c.ppca.priors.mean_prior_variance);
    b.bind("ppca.transform_precision", c.ppca.priors.transform_precision);
    b.bind("ppca.noise_prior_alpha", c.ppca.priors.noise_prior_alpha);
    b.bind("ppca.noise_prior_beta", c.ppca.priors.noise_prior_beta);
    b.bind("ppca.tolerance", c.ppca.tolerance);
    b.bind_int("ppca.max_iters", c.ppca.max_iters);
    b.bind_int("ppca.smoothing_window", c.smoothing_window);
    b.bind("ppca.model", c.ppca_model);

    b.bind_int("stationarity.n_windows", c.stationarity.n_windows);
    std::string adf = c.stationarity.adf_regression == AdfRegression::Constant ? "constant"
                                                                               : "constant+trend";
    b.bind("stationarity.adf_regression", adf);
    if (adf == "constant") c.stationarity.adf_regression = AdfRegression::Constant;
    else if (adf == "constant+trend") c.stationarity.adf_regression = AdfRegression::ConstantTrend;
    else throw ConfigError("stationarity.adf_regression: expected constant or constant+trend");
    std::string kpss = c.stationarity.kpss_regression == KpssRegression::Level ? "level" : "trend";
    b.bind("stationarity.kpss_regression", kpss);
    if (kpss == "level") c.stationarity.kpss_regression = KpssRegression::Level;
    else if (kpss == "trend") c.stationarity.kpss_regression = KpssRegression::Trend;
    else throw ConfigError("stationarity.kpss_regression: expected level or trend");
    b.bind_int("stationarity.min_series_length", c.stationarity.min_series_length);
    b.bind("stationarity.alpha", c.stationarity.alpha);

    b.bind_int("landscape.batch_size", c.landscape.batch_size);
    b.bind_int("landscape.num_epochs", c.landscape.num_epochs);
    b.bind_int("landscape.patience", c.landscape.patience);
    b.bind("landscape.train_fraction", c.landscape.train_fraction);
    b.bind("landscape.learning_rate", c.landscape.learning_rate);
    b.bind("landscape.weight_decay", c.landscape.weight_decay);
    b.bind("landscape.dropout", c.landscape.dropout);
    b.bind("landscape.confinement_factor", c.landscape.confinement_factor);
    b.bind("landscape.sigma_initial", c.landscape.sigma_initial);
    b.bind("landscape.hidden_dims", c.landscape.hidden_dims);

    b.bind("evaluate.horizons_days", c.horizons_days);
    b.bind_int("evaluate.anchor_stride", c.anchor_stride);
    b.bind_int("evaluate.breakdown_horizon_days", c.breakdown_horizon_days);

    b.bind("analytics.movers_percentile", c.movers_percentile);
    b.bind_int("analytics.movers_top_loadings", c.movers_top_loadings);

    b.bind("export.snapshot_years", c.snapshot_years);
    b.bind_int("export.grid_nodes", c.grid_nodes);
    b.bind("export.kt", c.kt);

    b.bind_int("seed", c.seed);
}

} // namespace

PipelineConfig parse_config_text(const std::string& text, bool strict) {
    const KeyValueFile kv = KeyValueFile::parse(text);
    PipelineConfig c;
    Binder b(kv);
    bind_all(b, c);
    if (strict || c.strict) b.reject_unknown();
    return c;
}

PipelineConfig parse_config(const std::string& path, bool strict) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), strict);
}

std::string serialize_config(const PipelineConfig& c) {
    std::ostringstream out;
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    auto ints = [&](const std::vector<int>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(v[i]);
        }
        return s;
    };
    out << "[paths]\n";
    out << "observations = " << c.observations << "\n";
    out << "metadata = " << c.metadata << "\n";
    out << "output = " << c.output_dir << "\n";
    out << "observations_format = "
        << (c.observations_format == ObservationFormat::Jsonl ? "jsonl" : "csv") << "\n";
    out << "\n[ingest]\n";
    out << "min_posts = " << c.min_posts << "\n";
    out << "by_account = " << (c.by_account ? "true" : "false") << "\n";
    out << "strict = " << (c.strict ? "true" : "false") << "\n";
    out << "window_begin = " << c.window_begin << "\n";
    out << "window_end = " << c.window_end << "\n";
    out << "\n[binning]\n";
    out << "epoch = " << format_iso8601(c.binning.epoch) << "\n";
    out << "bin_width_days = " << num(c.binning.bin_width_days) << "\n";
    out << "anchor0_at = " << format_iso8601(c.binning.anchor0_at) << "\n";
    out << "anchor0_value = " << num(c.binning.anchor0_value) << "\n";
    out << "anchor1_at = " << format_iso8601(c.binning.anchor1_at) << "\n";
    out << "anchor1_value = " << num(c.binning.anchor1_value) << "\n";
    out << "\n[regression]\n";
    out << "lengthscale_days = " << num(c.kernel.lengthscale_days) << "\n";
    out << "signal_scale = " << num(c.kernel.signal_scale) << "\n";
    out << "alpha_grid_size = " << c.alpha_grid_size << "\n";
    out << "alpha_grid_min = " << num(c.alpha_grid_min) << "\n";
    out << "alpha_grid_max = " << num(c.alpha_grid_max) << "\n";
    out << "\n[ppca]\n";
    out << "n_components = " << c.ppca.n_components << "\n";
    out << "priors_enabled = " << (c.ppca.priors.enabled ? "true" : "false") << "\n";
    out << "mean_prior_variance = " << num(c.ppca.priors.mean_prior_variance) << "\n";
    out << "transform_precision = " << num(c.ppca.priors.transform_precision) << "\n";
    out << "noise_prior_alpha = " << num(c.ppca.priors.noise_prior_alpha) << "\n";
    out << "noise_prior_beta = " << num(c.ppca.priors.noise_prior_beta) << "\n";
    out << "tolerance = " << num(c.ppca.tolerance) << "\n";
    out << "max_iters = " << c.ppca.max_iters << "\n";
    out << "smoothing_window = " << c.smoothing_window << "\n";
    out << "model = " << c.ppca_model << "\n";
    out << "\n[stationarity]\n";
    out << "n_windows = " << c.stationarity.n_windows << "\n";
    out << "adf_regression = "
        << (c.stationarity.adf_regression == AdfRegression::Constant ? "constant" : "constant+trend")
        << "\n";
    out << "kpss_regression = "
        << (c.stationarity.kpss_regression == KpssRegression::Level ? "level" : "trend") << "\n";
    out << "min_series_length = " << c.stationarity.min_series_length << "\n";
    out << "alpha = " << num(c.stationarity.alpha) << "\n";
    out << "\n[landscape]\n";
    out << "batch_size = " << c.landscape.batch_size << "\n";
    out << "num_epochs = " << c.landscape.num_epochs << "\n";
    out << "patience = " << c.landscape.patience << "\n";
    out << "train_fraction = " << num(c.landscape.train_fraction) << "\n";
    out << "learning_rate = " << num(c.landscape.learning_rate) << "\n";
    out << "weight_decay = " << num(c.landscape.weight_decay) << "\n";
    out << "dropout = " << num(c.landscape.dropout) << "\n";
    out << "confinement_factor = " << num(c.landscape.confinement_factor) << "\n";
    out << "sigma_initial = " << num(c.landscape.sigma_initial) << "\n";
    out << "hidden_dims = " << ints(c.landscape.hidden_dims) << "\n";
    out << "\n[evaluate]\n";
    out << "horizons_days = " << ints(c.horizons_days) << "\n";
    out << "anchor_stride = " << c.anchor_stride << "\n";
    out << "breakdown_horizon_days = " << c.breakdown_horizon_days << "\n";
    out << "\n[analytics]\n";
    out << "movers_percentile = " << num(c.movers_percentile) << "\n";
    out << "movers_top_loadings = " << c.movers_top_loadings << "\n";
    out << "\n[export]\n";
    out << "snapshot_years = " << ints(c.snapshot_years) << "\n";
    out << "grid_nodes = " << c.grid_nodes << "\n";
    out << "kt = " << num(c.kt) << "\n";
    out << "\nseed = " << c.seed << "\n";
    return out.str();
}

} // namespace stancedyn
