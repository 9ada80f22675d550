#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "stancedyn/regression.hpp"

using namespace stancedyn;

TEST_CASE("rbf kernel values") {
    RbfKernelParams p;
    p.lengthscale_days = 10.0;
    CHECK(rbf_kernel(3.0, 3.0, p) == doctest::Approx(1.0));
    CHECK(rbf_kernel(0.0, 10.0, p) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(rbf_kernel(0.0, 20.0, p) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(rbf_kernel(5.0, 1.0, p) == rbf_kernel(1.0, 5.0, p)); // symmetric
}

TEST_CASE("single observation shrinks toward the prior mean") {
    const std::vector<double> t = {0.0};
    const std::vector<double> y = {1.0};
    RbfKernelParams p;
    p.lengthscale_days = 10.0;
    const RegressionFit fit = bkrr_fit(t, y, p, {1.0});
    CHECK(fit.dual_coefficients(0) == doctest::Approx(0.5).epsilon(1e-12));
    const auto pred = bkrr_predict(fit, std::vector<double>{0.0});
    CHECK(pred[0].mean == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("all-neutral labels give identically zero predictions") {
    const std::vector<double> t = {0.0, 5.0, 9.0, 14.0};
    const std::vector<double> y = {0.0, 0.0, 0.0, 0.0};
    const RegressionFit fit = bkrr_fit(t, y, RbfKernelParams{}, default_alpha_grid());
    for (Eigen::Index i = 0; i < fit.dual_coefficients.size(); ++i) {
        CHECK(fit.dual_coefficients(i) == doctest::Approx(0.0));
    }
    for (const auto& pr : bkrr_predict(fit, std::vector<double>{-3.0, 2.0, 30.0})) {
        CHECK(pr.mean == doctest::Approx(0.0));
    }
}

namespace {

/// Brute-force dense oracle: explicit inverse of (K + alpha I).
void dense_oracle(const std::vector<double>& t, const std::vector<double>& y,
                  const RbfKernelParams& p, double alpha, const std::vector<double>& q,
                  std::vector<double>& mean, std::vector<double>& var) {
    const Eigen::Index n = static_cast<Eigen::Index>(t.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            K(i, j) = rbf_kernel(t[static_cast<std::size_t>(i)], t[static_cast<std::size_t>(j)], p);
        }
    }
    Eigen::MatrixXd A = K;
    A.diagonal().array() += alpha;
    const Eigen::MatrixXd Ainv = A.inverse();
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) yv(i) = y[static_cast<std::size_t>(i)];
    mean.clear();
    var.clear();
    for (double tq : q) {
        Eigen::VectorXd ks(n);
        for (Eigen::Index i = 0; i < n; ++i) ks(i) = rbf_kernel(tq, t[static_cast<std::size_t>(i)], p);
        mean.push_back(ks.dot(Ainv * yv));
        var.push_back(std::max(0.0, rbf_kernel(tq, tq, p) - ks.dot(Ainv * ks)));
    }
}

} // namespace

TEST_CASE("solver matches the dense oracle on random instances") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> ud(0.0, 400.0);
    std::uniform_int_distribution<int> label(-1, 1);
    RbfKernelParams p; // the default 228.3-day lengthscale
    for (int rep = 0; rep < 6; ++rep) {
        const int n = 5 + rep * 9; // up to 50
        std::vector<double> t, y;
        for (int i = 0; i < n; ++i) {
            t.push_back(ud(rng));
            y.push_back(static_cast<double>(label(rng)));
        }
        const RegressionFit fit = bkrr_fit(t, y, p, default_alpha_grid());
        std::vector<double> q = {-50.0, 13.0, 111.0, 390.0, 500.0};
        const auto pred = bkrr_predict(fit, q);
        std::vector<double> mean, var;
        dense_oracle(t, y, p, fit.alpha, q, mean, var);
        for (std::size_t i = 0; i < q.size(); ++i) {
            CHECK(pred[i].mean == doctest::Approx(mean[i]).epsilon(1e-8));
            CHECK(pred[i].variance == doctest::Approx(var[i]).epsilon(1e-8));
        }
    }
}

TEST_CASE("far-away queries revert to the prior") {
    RbfKernelParams p;
    p.lengthscale_days = 5.0;
    const std::vector<double> t = {0.0, 2.0, 4.0};
    const std::vector<double> y = {1.0, 1.0, -1.0};
    const RegressionFit fit = bkrr_fit(t, y, p, default_alpha_grid());
    const auto pred = bkrr_predict(fit, std::vector<double>{4.0 + 10.0 * p.lengthscale_days});
    CHECK(std::abs(pred[0].mean - fit.prior_mean) < 1e-8);
    CHECK(std::abs(pred[0].variance - rbf_kernel(0.0, 0.0, p)) < 1e-8);
}

TEST_CASE("label negation flips predicted means exactly") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> ud(0.0, 300.0);
    std::vector<double> t, y, yn;
    for (int i = 0; i < 17; ++i) {
        t.push_back(ud(rng));
        const double lab = static_cast<double>((i % 3) - 1);
        y.push_back(lab);
        yn.push_back(-lab);
    }
    const auto grid = default_alpha_grid();
    const RegressionFit f1 = bkrr_fit(t, y, RbfKernelParams{}, grid);
    const RegressionFit f2 = bkrr_fit(t, yn, RbfKernelParams{}, grid);
    CHECK(f1.alpha == f2.alpha); // LOO RSS identical under negation
    const std::vector<double> q = {10.0, 100.0, 250.0};
    const auto p1 = bkrr_predict(f1, q);
    const auto p2 = bkrr_predict(f2, q);
    for (std::size_t i = 0; i < q.size(); ++i) {
        CHECK(p1[i].mean == doctest::Approx(-p2[i].mean).epsilon(1e-12));
        CHECK(p1[i].variance == doctest::Approx(p2[i].variance).epsilon(1e-12));
    }
}

TEST_CASE("LOO alpha selection is permutation invariant") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ud(0.0, 600.0);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<double> t, y;
    for (int i = 0; i < 25; ++i) {
        t.push_back(ud(rng));
        y.push_back(std::clamp(std::round(std::sin(t.back() / 90.0) + noise(rng)), -1.0, 1.0));
    }
    const auto grid = default_alpha_grid();
    const RegressionFit base = bkrr_fit(t, y, RbfKernelParams{}, grid);

    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<double> tp, yp;
    for (std::size_t i : idx) {
        tp.push_back(t[i]);
        yp.push_back(y[i]);
    }
    const RegressionFit perm = bkrr_fit(tp, yp, RbfKernelParams{}, grid);
    CHECK(base.alpha == perm.alpha);
    CHECK(base.loo_rss == doctest::Approx(perm.loo_rss).epsilon(1e-8));
}

TEST_CASE("constant-label fit lies between prior mean and the label") {
    // points spread over several lengthscales keep the kernel matrix
    // well-conditioned; the fitted means then sit strictly inside (0, 1)
    RbfKernelParams p;
    p.lengthscale_days = 20.0;
    const std::vector<double> t = {0.0, 30.0, 55.0, 80.0};
    const std::vector<double> y = {1.0, 1.0, 1.0, 1.0};
    const RegressionFit fit = bkrr_fit(t, y, p, default_alpha_grid());
    const auto pred = bkrr_predict(fit, t);
    for (const auto& pr : pred) {
        CHECK(pr.mean > 0.0);
        CHECK(pr.mean < 1.0);
    }
    // testable norm bound
    double c1 = 0.0;
    for (Eigen::Index i = 0; i < fit.dual_coefficients.size(); ++i) {
        c1 += std::abs(fit.dual_coefficients(i));
    }
    const double max_k = 1.0; // unit signal scale
    for (const auto& pr : pred) CHECK(std::abs(pr.mean) <= c1 * max_k + 1e-12);
}

TEST_CASE("posterior variance shrinks as points accumulate at the query") {
    RbfKernelParams p;
    p.lengthscale_days = 20.0;
    std::vector<double> t = {0.0};
    std::vector<double> y = {1.0};
    double prev = 1e9;
    for (int k = 0; k < 4; ++k) {
        const RegressionFit fit = bkrr_fit(t, y, p, {0.5});
        const auto pred = bkrr_predict(fit, std::vector<double>{50.0});
        CHECK(pred[0].variance >= 0.0);
        CHECK(pred[0].variance <= prev + 1e-12);
        prev = pred[0].variance;
        t.push_back(50.0);
        y.push_back(k % 2 == 0 ? 1.0 : 0.0);
    }
}
