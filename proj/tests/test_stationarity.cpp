#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "stancedyn/common.hpp"
#include "stancedyn/stationarity.hpp"
#include "stationarity_fixtures.hpp"

using namespace stancedyn;

namespace {

std::vector<double> white_noise(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (auto& v : y) v = g(rng);
    return y;
}

std::vector<double> random_walk(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> y(static_cast<std::size_t>(n));
    double acc = 0.0;
    for (auto& v : y) {
        acc += g(rng);
        v = acc;
    }
    return y;
}

LatentTrajectory traj_of(const std::vector<std::pair<double, Eigen::Vector2d>>& pts,
                         const std::string& id) {
    LatentTrajectory t;
    t.person_id = id;
    for (const auto& [time, x] : pts) {
        t.times.push_back(time);
        t.coords.push_back(x);
    }
    return t;
}

} // namespace

TEST_CASE("adf statistic matches the reference fixture to 1e-6") {
    std::vector<double> s1(fixtures::kSeries1, fixtures::kSeries1 + 120);
    std::vector<double> s2(fixtures::kSeries2, fixtures::kSeries2 + 120);

    const AdfResult c1 = adf_test(s1, AdfRegression::Constant, 8);
    CHECK(c1.statistic == doctest::Approx(-5.426661103243).epsilon(1e-6));
    CHECK(c1.lag_used == 0);
    const AdfResult ct1 = adf_test(s1, AdfRegression::ConstantTrend, 8);
    CHECK(ct1.statistic == doctest::Approx(-5.407876192431).epsilon(1e-6));
    CHECK(ct1.lag_used == 0);

    const AdfResult c2 = adf_test(s2, AdfRegression::Constant, 8);
    CHECK(c2.statistic == doctest::Approx(-5.018204252071).epsilon(1e-6));
    CHECK(c2.lag_used == 2);
    const AdfResult ct2 = adf_test(s2, AdfRegression::ConstantTrend, 8);
    CHECK(ct2.statistic == doctest::Approx(-5.026041247499).epsilon(1e-6));
    CHECK(ct2.lag_used == 2);

    // MacKinnon p-values against the same reference
    CHECK(c1.p_value == doctest::Approx(0.000002976756).epsilon(1e-4));
    CHECK(ct1.p_value == doctest::Approx(0.000034952090).epsilon(1e-4));
}

TEST_CASE("kpss statistic matches the reference fixture to 1e-6") {
    std::vector<double> s1(fixtures::kSeries1, fixtures::kSeries1 + 120);
    const KpssResult level = kpss_test(s1, KpssRegression::Level);
    CHECK(level.statistic == doctest::Approx(0.192157920933).epsilon(1e-6));
    CHECK(level.p_value == doctest::Approx(0.10));
    const KpssResult trend = kpss_test(s1, KpssRegression::Trend);
    CHECK(trend.statistic == doctest::Approx(0.187025901527).epsilon(1e-6));
    CHECK(trend.p_value == doctest::Approx(0.020865286927).epsilon(1e-6));
}

TEST_CASE("adf rejects white noise and keeps random walks") {
    int wn_reject = 0, rw_keep = 0;
    const int n_seeds = 40;
    for (int s = 0; s < n_seeds; ++s) {
        const auto wn = white_noise(2000, 1000 + static_cast<std::uint64_t>(s));
        if (adf_test(wn, AdfRegression::ConstantTrend, 5).p_value < 0.01) ++wn_reject;
        const auto rw = random_walk(2000, 5000 + static_cast<std::uint64_t>(s));
        if (adf_test(rw, AdfRegression::ConstantTrend, 5).p_value > 0.10) ++rw_keep;
    }
    CHECK(wn_reject >= static_cast<int>(0.95 * n_seeds));
    CHECK(rw_keep >= static_cast<int>(0.85 * n_seeds));
}

TEST_CASE("kpss keeps white noise and rejects random walks") {
    int wn_keep = 0, rw_reject = 0;
    const int n_seeds = 40;
    for (int s = 0; s < n_seeds; ++s) {
        const auto wn = white_noise(2000, 3000 + static_cast<std::uint64_t>(s));
        if (kpss_test(wn, KpssRegression::Level).p_value >= 0.10 - 1e-12) ++wn_keep;
        const auto rw = random_walk(2000, 7000 + static_cast<std::uint64_t>(s));
        if (kpss_test(rw, KpssRegression::Level).p_value <= 0.01 + 1e-12) ++rw_reject;
    }
    CHECK(wn_keep >= static_cast<int>(0.85 * n_seeds));
    CHECK(rw_reject >= static_cast<int>(0.9 * n_seeds));
}

TEST_CASE("adf statistic is invariant to affine scaling in constant mode") {
    const auto y = white_noise(300, 42);
    std::vector<double> scaled(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) scaled[i] = -3.7 * y[i] + 11.0;
    const AdfResult a = adf_test(y, AdfRegression::Constant, 6);
    const AdfResult b = adf_test(scaled, AdfRegression::Constant, 6);
    CHECK(a.lag_used == b.lag_used);
    CHECK(std::abs(a.statistic - b.statistic) < 1e-8);
}

TEST_CASE("adf rejects degenerate inputs") {
    std::vector<double> constant(50, 1.0);
    CHECK_THROWS_AS(adf_test(constant, AdfRegression::Constant), DataError);
    std::vector<double> tiny = {1.0, 2.0, 1.5};
    CHECK_THROWS_AS(adf_test(tiny, AdfRegression::Constant), DataError);
}

TEST_CASE("kpss rejects short series") {
    std::vector<double> tiny = {1.0, 2.0, 1.5, 0.5};
    CHECK_THROWS_AS(kpss_test(tiny, KpssRegression::Level), DataError);
}

TEST_CASE("fisher_combine") {
    SUBCASE("all ones give statistic 0, p 1") {
        const auto r = fisher_combine(std::vector<double>{1.0, 1.0});
        CHECK(r.statistic == doctest::Approx(0.0));
        CHECK(r.p_value == doctest::Approx(1.0));
    }
    SUBCASE("two 0.05 values") {
        const auto r = fisher_combine(std::vector<double>{0.05, 0.05});
        CHECK(r.statistic == doctest::Approx(11.98).epsilon(1e-3));
        CHECK(r.p_value == doctest::Approx(0.0175).epsilon(0.0005 / 0.0175));
    }
    SUBCASE("single p is the identity") {
        for (double p : {0.9, 0.5, 0.04, 1e-6}) {
            const auto r = fisher_combine(std::vector<double>{p});
            CHECK(std::abs(r.p_value - p) < 1e-9);
        }
    }
    SUBCASE("rejects p <= 0") {
        CHECK_THROWS_AS(fisher_combine(std::vector<double>{0.5, 0.0}), DataError);
    }
    SUBCASE("permutation invariant and monotone") {
        const auto a = fisher_combine(std::vector<double>{0.3, 0.04, 0.77});
        const auto b = fisher_combine(std::vector<double>{0.77, 0.3, 0.04});
        CHECK(a.p_value == doctest::Approx(b.p_value).epsilon(1e-12));
        const auto c = fisher_combine(std::vector<double>{0.3, 0.02, 0.77});
        CHECK(c.p_value <= a.p_value);
    }
}

TEST_CASE("rolling drift") {
    SUBCASE("time-invariant cloud has zero drift") {
        std::vector<LatentTrajectory> trajs;
        for (int p = 0; p < 4; ++p) {
            std::vector<std::pair<double, Eigen::Vector2d>> pts;
            for (int t = 0; t < 60; ++t) {
                pts.emplace_back(1.0 + 0.01 * t,
                                 Eigen::Vector2d(0.5 * p - 1.0, 1.0 - 0.5 * p));
            }
            trajs.push_back(traj_of(pts, "p" + std::to_string(p)));
        }
        const DriftReport rep = rolling_drift(trajs, 6);
        CHECK(rep.n_windows == 6);
        for (double d : rep.mean_drift_d) CHECK(d == doctest::Approx(0.0));
        for (double v : rep.variance_drift) CHECK(v == doctest::Approx(0.0));
    }
    SUBCASE("two windows with means 0 and 1 and sd 1 give d = 1") {
        std::vector<LatentTrajectory> trajs;
        std::mt19937_64 rng(7);
        std::normal_distribution<double> g(0.0, 1.0);
        std::vector<std::pair<double, Eigen::Vector2d>> pts;
        for (int t = 0; t < 4000; ++t) {
            const double mean = t < 2000 ? 0.0 : 1.0;
            pts.emplace_back(1.0 + 0.001 * t, Eigen::Vector2d(mean + g(rng), 0.5 * g(rng)));
        }
        trajs.push_back(traj_of(pts, "p"));
        const DriftReport rep = rolling_drift(trajs, 2);
        CHECK(rep.mean_drift_d[0] == doctest::Approx(1.0).epsilon(0.08));
        CHECK(rep.mean_drift_d[1] == doctest::Approx(0.0).epsilon(0.15));

        LatentTrajectory rev = trajs[0];
        std::reverse(rev.coords.begin(), rev.coords.end());
        const DriftReport rep2 = rolling_drift(std::vector<LatentTrajectory>{rev}, 2);
        CHECK(rep2.mean_drift_d[0] == doctest::Approx(-rep.mean_drift_d[0]).epsilon(0.02));
    }
    SUBCASE("needs two windows") {
        CHECK_THROWS_AS(rolling_drift({}, 1), ConfigError);
    }
}

TEST_CASE("stationarity report verdicts") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 1.0);

    SUBCASE("white-noise trajectories read stationary") {
        std::vector<LatentTrajectory> trajs;
        for (int p = 0; p < 5; ++p) {
            std::vector<std::pair<double, Eigen::Vector2d>> pts;
            for (int t = 0; t < 400; ++t) {
                pts.emplace_back(1.0 + 0.005 * t, Eigen::Vector2d(g(rng), g(rng)));
            }
            trajs.push_back(traj_of(pts, "p" + std::to_string(p)));
        }
        StationarityConfig cfg;
        const StationarityReport rep = stationarity_report(trajs, cfg);
        REQUIRE(rep.dimensions.size() == 2);
        CHECK(rep.verdict == "stationary");
        for (const auto& dim : rep.dimensions) {
            CHECK(dim.adf_combined_p < 0.05);
            CHECK(dim.kpss_combined_p > 0.05);
        }
    }
    SUBCASE("random-walk trajectories read unit-root") {
        std::vector<LatentTrajectory> trajs;
        for (int p = 0; p < 5; ++p) {
            std::vector<std::pair<double, Eigen::Vector2d>> pts;
            Eigen::Vector2d acc(0.0, 0.0);
            for (int t = 0; t < 400; ++t) {
                acc += Eigen::Vector2d(g(rng), g(rng));
                pts.emplace_back(1.0 + 0.005 * t, acc);
            }
            trajs.push_back(traj_of(pts, "p" + std::to_string(p)));
        }
        StationarityConfig cfg;
        const StationarityReport rep = stationarity_report(trajs, cfg);
        CHECK(rep.verdict == "unit-root");
    }
    SUBCASE("json rendering carries the fields") {
        std::vector<LatentTrajectory> trajs;
        for (int p = 0; p < 3; ++p) {
            std::vector<std::pair<double, Eigen::Vector2d>> pts;
            for (int t = 0; t < 100; ++t) {
                pts.emplace_back(1.0 + 0.01 * t, Eigen::Vector2d(g(rng), g(rng)));
            }
            trajs.push_back(traj_of(pts, "p" + std::to_string(p)));
        }
        StationarityConfig cfg;
        const std::string json = stationarity_report_json(stationarity_report(trajs, cfg));
        CHECK(json.find("\"verdict\"") != std::string::npos);
        CHECK(json.find("adf_combined_p") != std::string::npos);
        CHECK(json.find("mean_drift_cohens_d") != std::string::npos);
    }
}
