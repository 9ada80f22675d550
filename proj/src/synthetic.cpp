#include "stancedyn/synthetic.hpp"

#include <cmath>

#include "stancedyn/common.hpp"
#include "stancedyn/exec.hpp"
#include "stancedyn/rng.hpp"
#include "stancedyn/timebase.hpp"

namespace stancedyn {

namespace {

Eigen::VectorXd centered(const AnalyticPotential& p, const Eigen::VectorXd& x) {
    if (p.center.size() == 0) return x;
    return x - p.center;
}

} // namespace

AnalyticPotential AnalyticPotential::quadratic_bowl(int dim, double stiffness,
                                                    const Eigen::VectorXd& center) {
    AnalyticPotential p;
    p.kind = Kind::QuadraticBowl;
    p.dimension = dim;
    p.stiffness = stiffness;
    p.center = center.size() > 0 ? center : Eigen::VectorXd::Zero(dim);
    return p;
}

AnalyticPotential AnalyticPotential::double_well(int dim, double barrier, double spacing) {
    AnalyticPotential p;
    p.kind = Kind::DoubleWell;
    p.dimension = dim;
    p.barrier = barrier;
    p.spacing = spacing;
    p.center = Eigen::VectorXd::Zero(dim);
    return p;
}

AnalyticPotential AnalyticPotential::tilted(int dim, double stiffness,
                                            const Eigen::VectorXd& tilt_rate) {
    AnalyticPotential p;
    p.kind = Kind::Tilted;
    p.dimension = dim;
    p.stiffness = stiffness;
    p.center = Eigen::VectorXd::Zero(dim);
    p.tilt_rate = tilt_rate;
    return p;
}

double true_potential(const AnalyticPotential& p, const Eigen::VectorXd& x, double t_norm) {
    if (x.size() != p.dimension) throw DataError("true_potential: dimension mismatch");
    switch (p.kind) {
        case AnalyticPotential::Kind::QuadraticBowl: {
            if (!(p.stiffness > 0.0)) throw ConfigError("quadratic bowl: stiffness must be > 0");
            return -0.5 * p.stiffness * centered(p, x).squaredNorm();
        }
        case AnalyticPotential::Kind::DoubleWell: {
            if (!(p.spacing > 0.0)) throw ConfigError("double well: spacing must be > 0");
            const double s2 = p.spacing * p.spacing;
            const double q = x(0) * x(0) - s2;
            double v = p.barrier * q * q / (s2 * s2);
            // quadratic confinement on the remaining axes
            const double k_perp = 4.0 * p.barrier / s2;
            for (Eigen::Index i = 1; i < x.size(); ++i) v += 0.5 * k_perp * x(i) * x(i);
            return -v;
        }
        case AnalyticPotential::Kind::Tilted: {
            const Eigen::VectorXd tilt =
                p.tilt_rate.size() > 0 ? p.tilt_rate : Eigen::VectorXd::Zero(p.dimension);
            return -0.5 * p.stiffness * centered(p, x).squaredNorm() + t_norm * tilt.dot(x);
        }
    }
    throw ConfigError("true_potential: unknown kind");
}

Eigen::VectorXd true_drift(const AnalyticPotential& p, const Eigen::VectorXd& x, double t_norm) {
    if (x.size() != p.dimension) throw DataError("true_drift: dimension mismatch");
    switch (p.kind) {
        case AnalyticPotential::Kind::QuadraticBowl:
            return -p.stiffness * centered(p, x);
        case AnalyticPotential::Kind::DoubleWell: {
            const double s2 = p.spacing * p.spacing;
            Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
            g(0) = -4.0 * p.barrier * x(0) * (x(0) * x(0) - s2) / (s2 * s2);
            const double k_perp = 4.0 * p.barrier / s2;
            for (Eigen::Index i = 1; i < x.size(); ++i) g(i) = -k_perp * x(i);
            return g;
        }
        case AnalyticPotential::Kind::Tilted: {
            const Eigen::VectorXd tilt =
                p.tilt_rate.size() > 0 ? p.tilt_rate : Eigen::VectorXd::Zero(p.dimension);
            return -p.stiffness * centered(p, x) + t_norm * tilt;
        }
    }
    throw ConfigError("true_drift: unknown kind");
}

SimulateResult simulate(const AnalyticPotential& p, const SimulateOptions& options) {
    if (options.n_traj < 1 || options.n_steps < 1) {
        throw ConfigError("simulate: n_traj and n_steps must be >= 1");
    }
    if (options.sigma < 0.0) throw ConfigError("simulate: sigma must be >= 0");
    const double dt = options.dt_norm > 0.0 ? options.dt_norm
                                            : bin_step_normalized(TimeBinning::defaults());

    SimulateResult res;
    res.trajectories.resize(static_cast<std::size_t>(options.n_traj));
    res.diverged.assign(static_cast<std::size_t>(options.n_traj), 0);

    exec::parallel_for(options.n_traj, [&](std::ptrdiff_t ti) {
        auto engine = make_engine(derive_seed(options.seed, static_cast<std::uint64_t>(ti)));
        std::uniform_real_distribution<double> box(-options.init_box, options.init_box);
        std::normal_distribution<double> gauss(0.0, 1.0);

        LatentTrajectory traj;
        traj.person_id = "sim" + std::to_string(ti);
        Eigen::VectorXd x(p.dimension);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = box(engine);
        double t = options.t0_norm;
        traj.times.push_back(t);
        traj.coords.push_back(x);
        for (int s = 1; s < options.n_steps; ++s) {
            Eigen::VectorXd next = x + true_drift(p, x, t);
            if (options.sigma > 0.0) {
                for (Eigen::Index i = 0; i < next.size(); ++i) next(i) += options.sigma * gauss(engine);
            }
            x = next;
            t += dt;
            if (x.norm() > 1e6) {
                res.diverged[static_cast<std::size_t>(ti)] = 1;
                break;
            }
            traj.times.push_back(t);
            traj.coords.push_back(x);
        }
        res.trajectories[static_cast<std::size_t>(ti)] = std::move(traj);
    });
    return res;
}

RecoveryScore recovery_score(const DriftField& learned, const AnalyticPotential& p,
                             const std::vector<std::uint8_t>& node_mask) {
    if (node_mask.size() != learned.positions.size()) {
        throw DataError("recovery_score: mask size mismatch");
    }
    std::size_t selected = 0;
    for (auto m : node_mask) selected += m;
    if (selected < 10) throw DataError("recovery_score: mask selects fewer than 10 nodes");

    RecoveryScore score;
    double cos_sum = 0.0;
    std::size_t cos_n = 0;
    double sq_sum = 0.0;
    for (std::size_t i = 0; i < node_mask.size(); ++i) {
        if (!node_mask[i]) continue;
        const Eigen::VectorXd truth = true_drift(p, learned.positions[i], learned.t_norm);
        const Eigen::VectorXd& est = learned.drift[i];
        sq_sum += (truth - est).squaredNorm();
        const double tn = truth.norm();
        const double en = est.norm();
        if (tn > 0.0 && en > 0.0) {
            cos_sum += truth.dot(est) / (tn * en);
            ++cos_n;
        }
    }
    score.nodes_scored = selected;
    score.mean_cosine = cos_n > 0 ? cos_sum / static_cast<double>(cos_n) : 0.0;
    score.rmse = std::sqrt(sq_sum / static_cast<double>(selected));
    return score;
}

} // namespace stancedyn
