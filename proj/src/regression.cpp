#include "stancedyn/regression.hpp"

#include <cmath>
#include <limits>

#include "stancedyn/common.hpp"

namespace stancedyn {

double rbf_kernel(double t1, double t2, const RbfKernelParams& params) {
    if (!(params.lengthscale_days > 0.0)) throw ConfigError("rbf_kernel: lengthscale must be > 0");
    const double d = (t1 - t2) / params.lengthscale_days;
    return params.signal_scale * params.signal_scale * std::exp(-0.5 * d * d);
}

std::vector<double> default_alpha_grid() {
    std::vector<double> grid;
    grid.reserve(13);
    for (int i = 0; i < 13; ++i) {
        grid.push_back(std::pow(10.0, -3.0 + 6.0 * static_cast<double>(i) / 12.0));
    }
    return grid;
}

RegressionFit bkrr_fit(std::span<const double> times, std::span<const double> labels,
                       const RbfKernelParams& params, const std::vector<double>& alpha_grid,
                       double prior_mean) {
    const Eigen::Index n = static_cast<Eigen::Index>(times.size());
    if (n == 0) throw DataError("bkrr_fit: empty series");
    if (labels.size() != times.size()) throw DataError("bkrr_fit: times/labels length mismatch");
    if (alpha_grid.empty()) throw ConfigError("bkrr_fit: empty alpha grid");
    for (double a : alpha_grid) {
        if (!(a > 0.0)) throw ConfigError("bkrr_fit: alpha grid values must be > 0");
    }

    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k = rbf_kernel(times[static_cast<std::size_t>(i)],
                                        times[static_cast<std::size_t>(j)], params);
            K(i, j) = k;
            K(j, i) = k;
        }
    }
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] - prior_mean;

    // LOO residuals from the hat matrix H = K (K + aI)^-1:
    //   e_i = (y_i - yhat_i) / (1 - H_ii)
    // One eigendecomposition serves the whole grid.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
    if (eig.info() != Eigen::Success) throw NumericError("bkrr_fit: eigendecomposition failed");
    const Eigen::VectorXd lambda = eig.eigenvalues();
    const Eigen::MatrixXd Q = eig.eigenvectors();
    const Eigen::VectorXd qty = Q.transpose() * y;

    double best_alpha = alpha_grid.front();
    double best_rss = std::numeric_limits<double>::infinity();
    for (double a : alpha_grid) {
        Eigen::VectorXd shrink(n);
        for (Eigen::Index j = 0; j < n; ++j) shrink(j) = lambda(j) / (lambda(j) + a);
        const Eigen::VectorXd yhat = Q * shrink.cwiseProduct(qty);
        double rss = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double hii = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) hii += Q(i, j) * Q(i, j) * shrink(j);
            const double denom = 1.0 - hii;
            const double e = (y(i) - yhat(i)) / denom;
            rss += e * e;
        }
        if (rss < best_rss) {
            best_rss = rss;
            best_alpha = a;
        }
    }

    RegressionFit fit;
    fit.train_times.assign(times.begin(), times.end());
    fit.train_labels.assign(labels.begin(), labels.end());
    fit.alpha = best_alpha;
    fit.prior_mean = prior_mean;
    fit.kernel = params;
    fit.loo_rss = best_rss;

    const double lo = lambda.minCoeff() + best_alpha;
    const double hi = lambda.maxCoeff() + best_alpha;
    fit.condition_estimate = hi / lo;
    if (!(lo > 0.0) || !std::isfinite(fit.condition_estimate) || fit.condition_estimate > 1e15) {
        throw NumericError("bkrr_fit: system numerically singular after regularization, cond ~ " +
                           std::to_string(fit.condition_estimate));
    }

    Eigen::MatrixXd A = K;
    A.diagonal().array() += best_alpha;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        throw NumericError("bkrr_fit: Cholesky failed, cond ~ " + std::to_string(fit.condition_estimate));
    }
    fit.dual_coefficients = llt.solve(y);
    fit.chol_lower = llt.matrixL();
    return fit;
}

std::vector<Prediction> bkrr_predict(const RegressionFit& fit, std::span<const double> query_times) {
    const Eigen::Index n = static_cast<Eigen::Index>(fit.train_times.size());
    std::vector<Prediction> out;
    out.reserve(query_times.size());
    const auto L = fit.chol_lower.triangularView<Eigen::Lower>();
    for (double t : query_times) {
        Eigen::VectorXd kstar(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            kstar(i) = rbf_kernel(t, fit.train_times[static_cast<std::size_t>(i)], fit.kernel);
        }
        Prediction p;
        p.mean = kstar.dot(fit.dual_coefficients) + fit.prior_mean;
        const double kss = rbf_kernel(t, t, fit.kernel);
        const Eigen::VectorXd v = L.solve(kstar);
        p.variance = std::max(0.0, kss - v.squaredNorm());
        out.push_back(p);
    }
    return out;
}

} // namespace stancedyn
