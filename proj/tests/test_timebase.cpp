#include <doctest.h>

#include <cmath>

#include "stancedyn/common.hpp"
#include "stancedyn/timebase.hpp"

using namespace stancedyn;

TEST_CASE("iso8601 parsing and formatting") {
    CHECK(parse_iso8601("1970-01-01").ms == 0);
    CHECK(parse_iso8601("1970-01-02").ms == 86400000);
    CHECK(parse_iso8601("2022-03-01T00:00:00Z") == parse_iso8601("2022-03-01"));
    // offsets convert to UTC
    CHECK(parse_iso8601("2022-03-01T02:00:00+02:00") == parse_iso8601("2022-03-01T00:00:00Z"));
    CHECK(parse_iso8601("2022-02-28T22:30:00-01:30") == parse_iso8601("2022-03-01T00:00:00Z"));
    CHECK(parse_iso8601("2022-03-01T12:00:00.250Z").ms ==
          parse_iso8601("2022-03-01T12:00:00Z").ms + 250);

    CHECK(format_iso8601(parse_iso8601("2024-02-29T23:59:59Z")) == "2024-02-29T23:59:59Z");
    CHECK(format_iso8601(parse_iso8601("2022-07-05T01:02:03.040Z")) == "2022-07-05T01:02:03.040Z");

    CHECK_THROWS_AS(parse_iso8601("not a date"), DataError);
    CHECK_THROWS_AS(parse_iso8601("2022-13-01"), DataError);
    CHECK_THROWS_AS(parse_iso8601("2022-03-01T12:00:00"), DataError); // zone required
    CHECK_THROWS_AS(parse_iso8601("2022-03-01T25:00:00Z"), DataError);
}

TEST_CASE("bin_index") {
    const TimeBinning b = TimeBinning::defaults();
    CHECK(bin_index(b.epoch, b) == 0);
    CHECK(bin_index(parse_iso8601("2022-01-03T00:00:00Z"), b) == 1);
    CHECK(bin_index(parse_iso8601("2022-01-02T23:59:00Z"), b) == 0);
    CHECK_THROWS_AS(bin_index(parse_iso8601("2021-12-31T23:59:59Z"), b), DataError);
}

TEST_CASE("bin_index is monotone in the timestamp") {
    const TimeBinning b = TimeBinning::defaults();
    std::int64_t prev = -1;
    for (int h = 0; h < 24 * 30; h += 7) {
        UtcInstant ts{b.epoch.ms + static_cast<std::int64_t>(h) * 3600000};
        const std::int64_t idx = bin_index(ts, b);
        CHECK(idx >= prev);
        prev = idx;
    }
}

TEST_CASE("normalize_time anchors") {
    const TimeBinning b = TimeBinning::defaults();
    CHECK(normalize_time(parse_iso8601("2022-01-01"), b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(normalize_time(parse_iso8601("2025-01-01"), b) == doctest::Approx(4.0).epsilon(1e-12));
    // day 547 of the 1096-day span
    CHECK(normalize_time(parse_iso8601("2023-07-02"), b) ==
          doctest::Approx(1.0 + 3.0 * 547.0 / 1096.0).epsilon(1e-12));
}

TEST_CASE("normalize_time is strictly increasing and affine") {
    const TimeBinning b = TimeBinning::defaults();
    const UtcInstant t0 = parse_iso8601("2022-05-01");
    const UtcInstant t1 = parse_iso8601("2023-02-11T06:00:00Z");
    const UtcInstant t2 = parse_iso8601("2024-10-03T18:30:00Z");
    const double v0 = normalize_time(t0, b);
    const double v1 = normalize_time(t1, b);
    const double v2 = normalize_time(t2, b);
    CHECK(v0 < v1);
    CHECK(v1 < v2);
    const double d1 = days_between(t0, t1);
    const double d2 = days_between(t0, t2);
    CHECK(std::abs((v1 - v0) / d1 - (v2 - v0) / d2) < 1e-12);
}

TEST_CASE("degenerate anchors rejected") {
    TimeBinning b = TimeBinning::defaults();
    b.anchor1_at = b.anchor0_at;
    CHECK_THROWS_AS(normalize_time(parse_iso8601("2022-06-01"), b), ConfigError);
}

TEST_CASE("bin step in normalized time") {
    const TimeBinning b = TimeBinning::defaults();
    CHECK(bin_step_normalized(b) == doctest::Approx(3.0 * 2.0 / 1096.0).epsilon(1e-12));
    CHECK(bin_center_normalized(0, b) ==
          doctest::Approx(normalize_time(parse_iso8601("2022-01-02"), b)).epsilon(1e-12));
}
