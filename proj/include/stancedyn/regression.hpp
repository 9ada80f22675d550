#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace stancedyn {

/// Gaussian RBF kernel over time, lengthscale in days. The default 228.3
/// encodes 7.5 months at 30.44 days per month.
struct RbfKernelParams {
    double lengthscale_days = 228.3;
    double signal_scale = 1.0;
};

/// signal_scale^2 * exp(-(t1 - t2)^2 / (2 l^2))
double rbf_kernel(double t1, double t2, const RbfKernelParams& params);

/// Kernel ridge fit with posterior variance. The dual coefficients solve
/// (K + alpha I) c = y - prior_mean; alpha comes from leave-one-out CV on
/// the supplied grid via the closed-form ridge identity.
struct RegressionFit {
    std::vector<double> train_times;
    std::vector<double> train_labels;
    double alpha = 1.0;
    Eigen::VectorXd dual_coefficients;
    double prior_mean = 0.0;
    RbfKernelParams kernel;
    double loo_rss = 0.0;
    double condition_estimate = 1.0;

    // Cholesky of (K + alpha I), kept for posterior variance queries.
    Eigen::MatrixXd chol_lower;
};

/// 13 log-spaced values in [1e-3, 1e3].
std::vector<double> default_alpha_grid();

RegressionFit bkrr_fit(std::span<const double> times, std::span<const double> labels,
                       const RbfKernelParams& params, const std::vector<double>& alpha_grid,
                       double prior_mean = 0.0);

struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
};

std::vector<Prediction> bkrr_predict(const RegressionFit& fit, std::span<const double> query_times);

} // namespace stancedyn
