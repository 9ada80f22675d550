#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "stancedyn/landscape.hpp"
#include "stancedyn/latent.hpp"

namespace stancedyn {

/// Closed-form potentials used as ground truth for landscape recovery.
/// Drift follows the library's plus-gradient convention: the drift of an
/// attracting well points toward its center.
struct AnalyticPotential {
    enum class Kind { QuadraticBowl, DoubleWell, Tilted };
    Kind kind = Kind::QuadraticBowl;
    int dimension = 2;

    // quadratic bowl / tilted base
    Eigen::VectorXd center; // d (defaults to origin)
    double stiffness = 0.2;

    // double well along axis 0, quadratic confinement on the others
    double barrier = 0.1;
    double spacing = 1.0;

    // tilted: bowl plus a linear term (tilt_rate * t) . x
    Eigen::VectorXd tilt_rate; // d (defaults to zero)

    static AnalyticPotential quadratic_bowl(int dim, double stiffness,
                                            const Eigen::VectorXd& center = {});
    static AnalyticPotential double_well(int dim, double barrier, double spacing);
    static AnalyticPotential tilted(int dim, double stiffness, const Eigen::VectorXd& tilt_rate);
};

/// phi(x, t) under the plus-gradient convention (attractors are maxima).
double true_potential(const AnalyticPotential& p, const Eigen::VectorXd& x, double t_norm);

/// Closed-form drift grad phi(x, t).
Eigen::VectorXd true_drift(const AnalyticPotential& p, const Eigen::VectorXd& x, double t_norm);

struct SimulateOptions {
    int n_traj = 1;
    int n_steps = 1;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    double t0_norm = 1.0;
    double dt_norm = 0.0; // 0: one default 2-day bin
    double init_box = 2.0; // initial positions uniform on [-box, box]^d
};

struct SimulateResult {
    std::vector<LatentTrajectory> trajectories;
    std::vector<std::uint8_t> diverged; // per trajectory, |x| > 1e6 hit
};

/// x_{t+1} = x_t + true_drift(x_t, t) + N(0, sigma^2 I); per-trajectory
/// derived seeds, fully deterministic.
SimulateResult simulate(const AnalyticPotential& p, const SimulateOptions& options);

struct RecoveryScore {
    double mean_cosine = 0.0;
    double rmse = 0.0;
    std::size_t nodes_scored = 0;
};

/// Compare a learned drift field with the analytic one on the masked
/// nodes; nodes where the true drift is exactly zero are skipped for the
/// cosine average.
RecoveryScore recovery_score(const DriftField& learned, const AnalyticPotential& p,
                             const std::vector<std::uint8_t>& node_mask);

} // namespace stancedyn
