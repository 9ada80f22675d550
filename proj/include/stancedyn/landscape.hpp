#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stancedyn/common.hpp"
#include "stancedyn/exec.hpp"
#include "stancedyn/latent.hpp"
#include "stancedyn/timebase.hpp"

namespace stancedyn {

/// Time-dependent scalar potential phi(x, t): a softplus MLP over the
/// input [t_norm, x_1..x_d]. The drift of the dynamics is the spatial
/// gradient of phi, with the plus sign: x' = x + grad_x phi(x, t) + eta.
/// Under that convention attractors sit at local maxima of phi.
struct PotentialNet {
    int spatial_dim = 0;
    std::vector<Eigen::MatrixXd> weights; // layer l: (out x in); last layer out == 1
    std::vector<Eigen::VectorXd> biases;
    double dropout_rate = 0.0;
    double sigma = 0.0; // diffusion scale, fixed (never trained)
    double confinement_c0 = 0.0;
    double radius_r = 1.0;
    TimeBinning binning = TimeBinning::defaults();

    int input_dim() const { return spatial_dim + 1; }
    std::size_t n_layers() const { return weights.size(); }
    std::int64_t param_count() const;
};

PotentialNet make_potential_net(int spatial_dim, const std::vector<int>& hidden_dims,
                                std::uint64_t seed);

/// Deterministic forward pass (dropout off).
double potential_eval(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm);

/// Forward pass with a dropout realization drawn from `dropout_seed`.
/// Bit-identical for equal seeds.
double potential_eval_dropout(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm,
                              std::uint64_t dropout_seed);

/// Analytic gradient of phi with respect to x only (exact reverse pass,
/// not finite differences).
Eigen::VectorXd drift_eval(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm);

/// One update: x + drift(x, t) + noise. Advances one time bin.
Eigen::VectorXd step(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm,
                     const Eigen::VectorXd* noise = nullptr);

struct TrainPair {
    Eigen::VectorXd x;
    double t_norm = 0.0;
    Eigen::VectorXd x_next;
};

/// Mean over the batch of |x' - x_next|^2 + C0 * max(0, |x'| - r)^4 with
/// x' = x + grad phi. Deterministic (dropout off).
double loss(const PotentialNet& net, std::span<const TrainPair> batch);

/// Gradients of the network parameters, same shapes as the layers.
struct NetGrads {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static NetGrads zeros_like(const PotentialNet& net);
    void add(const NetGrads& other);
    void scale(double s);
};

/// Dropout realization for a batch: per sample, the mask is derived from
/// (master_seed, epoch, pair id), so training is reproducible under any
/// thread count.  rate == 0 disables masking.
struct DropoutPlan {
    double rate = 0.0;
    std::uint64_t master_seed = 0;
    std::uint64_t epoch = 0;
    std::span<const std::size_t> pair_ids; // parallel to the batch
};

/// Loss and its exact parameter gradient. The gradient flows through the
/// spatial gradient of phi (forward-over-reverse), so this computes the
/// mixed second derivatives of the network. Returns the batch loss.
double loss_gradient(const PotentialNet& net, std::span<const TrainPair> batch,
                     const DropoutPlan* dropout, NetGrads& grads, exec::Mode mode);

/// Plain serial reference of loss_gradient (one sample at a time, no
/// blocking). Kept for the kernel-equivalence tests and the benchmark.
double loss_gradient_serial(const PotentialNet& net, std::span<const TrainPair> batch,
                            const DropoutPlan* dropout, NetGrads& grads);

struct TrainConfig {
    int batch_size = 512;
    int num_epochs = 400;
    int patience = 20;
    double train_fraction = 0.8;
    double learning_rate = 0.009;
    double weight_decay = 0.026;
    double dropout = 0.035;
    double confinement_factor = 0.004;
    double sigma_initial = 0.34;
    std::vector<int> hidden_dims = {128, 128, 128, 128};
    std::uint64_t seed = 0;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
    bool diverged = false;
};

struct TrainResult {
    PotentialNet net;
    TrainHistory history;
};

/// Train on consecutive-bin pairs built from the trajectories. Splits by
/// trajectory (not point), minimizes the confinement-augmented loss with
/// AdamW, early-stops on validation loss, and returns the best-validation
/// weights. r is frozen at 1.1x the largest training-point radius; sigma
/// stays at sigma_initial.
TrainResult train(const std::vector<LatentTrajectory>& trajs, const TrainConfig& config,
                  const TimeBinning& binning);

struct PredictResult {
    std::vector<Eigen::VectorXd> path; // positions after steps 1..h
    bool escaped = false; // |x| exceeded 10 r, path truncated
};

/// Iterate noise-free steps from (x0, t0), advancing one bin per step.
PredictResult predict(const PotentialNet& net, const Eigen::VectorXd& x0, double t0_norm,
                      int horizon_bins);

struct McStats {
    double mean = 0.0;
    double variance = 0.0;
};

/// Monte-Carlo dropout uncertainty: n dropout-active passes with sub-seeds
/// derive(master_seed, i), sample mean and unbiased variance.
McStats mc_uncertainty(const PotentialNet& net, const Eigen::VectorXd& x, double t_norm,
                       int n_samples, std::uint64_t master_seed);

/// Regular lattice: per-axis [min, max] with `nodes` grid points
/// (endpoints included).
struct LatticeSpec {
    std::vector<double> mins;
    std::vector<double> maxs;
    std::vector<int> nodes;

    int dims() const { return static_cast<int>(nodes.size()); }
    std::size_t total_nodes() const;
    double coord(int axis, int index) const;
    double spacing(int axis) const;
};

struct DriftField {
    LatticeSpec grid;
    double t_norm = 0.0;
    std::vector<Eigen::VectorXd> positions;
    std::vector<Eigen::VectorXd> drift;
    std::vector<double> potential;
    std::vector<double> mc_variance;
    std::vector<std::uint8_t> low_support;
};

struct DriftFieldOptions {
    int n_mc = 10;
    std::uint64_t seed = 0;
    /// Low-support distance; when absent, 2x the median nearest-neighbour
    /// spacing of the training points.
    std::optional<double> support_radius;
    /// Spot-check the analytic gradient against finite differences at a
    /// few nodes while building.
    bool validate_gradient = true;
};

DriftField drift_field(const PotentialNet& net, const LatticeSpec& grid, double t_norm,
                       const std::vector<Eigen::VectorXd>& train_points,
                       const DriftFieldOptions& options = {});

void write_drift_field_csv(const std::string& path, const DriftField& field);

void save_potential_net(const std::string& path, const PotentialNet& net);
PotentialNet load_potential_net(const std::string& path);

/// Boltzmann-weighted marginal of a potential down to two kept axes:
///   phi2(a, b) = -kT log sum_rest exp(-phi(a, b, rest, t) / kT) * d rest
/// evaluated with a log-sum-exp stabilized rectangle rule on a product
/// lattice over the marginalized axes. For 2-D potentials this returns phi
/// on the grid directly.
template <typename PhiFn>
Eigen::MatrixXd marginalize_boltzmann(PhiFn&& phi, int total_dim, std::pair<int, int> keep_dims,
                                      const LatticeSpec& kept_grid,
                                      const std::vector<std::pair<double, double>>& marg_ranges,
                                      int marg_nodes, double t_norm, double kT) {
    if (kept_grid.dims() != 2) throw ConfigError("marginalize_boltzmann: kept grid must be 2-D");
    if (!(kT > 0.0)) throw ConfigError("marginalize_boltzmann: kT must be > 0");
    const int a_axis = keep_dims.first;
    const int b_axis = keep_dims.second;
    if (a_axis == b_axis || a_axis < 0 || b_axis < 0 || a_axis >= total_dim || b_axis >= total_dim) {
        throw ConfigError("marginalize_boltzmann: bad kept axes");
    }
    std::vector<int> marg_axes;
    for (int ax = 0; ax < total_dim; ++ax) {
        if (ax != a_axis && ax != b_axis) marg_axes.push_back(ax);
    }
    if (marg_axes.size() != marg_ranges.size()) {
        throw ConfigError("marginalize_boltzmann: need one range per marginalized axis");
    }

    const int na = kept_grid.nodes[0];
    const int nb = kept_grid.nodes[1];
    Eigen::MatrixXd out(na, nb);
    std::atomic<bool> non_finite{false}; // exceptions cannot cross the parallel region

    if (marg_axes.empty()) {
        exec::parallel_for(static_cast<std::ptrdiff_t>(na) * nb, [&](std::ptrdiff_t idx) {
            const int ia = static_cast<int>(idx / nb);
            const int ib = static_cast<int>(idx % nb);
            Eigen::VectorXd x(total_dim);
            x(a_axis) = kept_grid.coord(0, ia);
            x(b_axis) = kept_grid.coord(1, ib);
            const double v = phi(x, t_norm);
            if (!std::isfinite(v)) non_finite.store(true, std::memory_order_relaxed);
            out(ia, ib) = v;
        });
        if (non_finite.load()) throw NumericError("marginalize_boltzmann: non-finite potential");
        return out;
    }

    const std::size_t m = marg_axes.size();
    std::size_t lattice = 1;
    double log_cell = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (marg_nodes < 2) throw ConfigError("marginalize_boltzmann: need >= 2 nodes per axis");
        lattice *= static_cast<std::size_t>(marg_nodes);
        log_cell += std::log((marg_ranges[i].second - marg_ranges[i].first) /
                             static_cast<double>(marg_nodes - 1));
    }

    exec::parallel_for(static_cast<std::ptrdiff_t>(na) * nb, [&](std::ptrdiff_t idx) {
        const int ia = static_cast<int>(idx / nb);
        const int ib = static_cast<int>(idx % nb);
        Eigen::VectorXd x(total_dim);
        x(a_axis) = kept_grid.coord(0, ia);
        x(b_axis) = kept_grid.coord(1, ib);

        double max_arg = -std::numeric_limits<double>::infinity();
        std::vector<double> args(lattice);
        for (std::size_t node = 0; node < lattice; ++node) {
            std::size_t rest = node;
            for (std::size_t i = 0; i < m; ++i) {
                const int ni = static_cast<int>(rest % static_cast<std::size_t>(marg_nodes));
                rest /= static_cast<std::size_t>(marg_nodes);
                const double lo = marg_ranges[i].first;
                const double hi = marg_ranges[i].second;
                x(marg_axes[i]) = lo + (hi - lo) * ni / static_cast<double>(marg_nodes - 1);
            }
            const double v = phi(x, t_norm);
            if (!std::isfinite(v)) non_finite.store(true, std::memory_order_relaxed);
            args[node] = -v / kT;
            max_arg = std::max(max_arg, args[node]);
        }
        double sum = 0.0;
        for (double a : args) sum += std::exp(a - max_arg);
        out(ia, ib) = -kT * (max_arg + std::log(sum) + log_cell);
    });
    if (non_finite.load()) throw NumericError("marginalize_boltzmann: non-finite potential");
    return out;
}

Eigen::MatrixXd marginalize_boltzmann_net(const PotentialNet& net, std::pair<int, int> keep_dims,
                                          const LatticeSpec& kept_grid,
                                          const std::vector<std::pair<double, double>>& marg_ranges,
                                          int marg_nodes, double t_norm, double kT);

} // namespace stancedyn
