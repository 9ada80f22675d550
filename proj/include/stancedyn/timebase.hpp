#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace stancedyn {

/// A UTC instant with millisecond resolution.
struct UtcInstant {
    std::int64_t ms = 0; // milliseconds since 1970-01-01T00:00:00Z

    friend bool operator==(UtcInstant a, UtcInstant b) { return a.ms == b.ms; }
    friend bool operator!=(UtcInstant a, UtcInstant b) { return a.ms != b.ms; }
    friend bool operator<(UtcInstant a, UtcInstant b) { return a.ms < b.ms; }
    friend bool operator<=(UtcInstant a, UtcInstant b) { return a.ms <= b.ms; }
    friend bool operator>(UtcInstant a, UtcInstant b) { return a.ms > b.ms; }
    friend bool operator>=(UtcInstant a, UtcInstant b) { return a.ms >= b.ms; }
};

/// Parse an ISO-8601 timestamp. Accepts a date ("2022-03-01", midnight UTC)
/// or a date-time with explicit zone ("2022-03-01T12:30:00Z",
/// "2022-03-01T12:30:00.250+02:00"). Offsets are converted to UTC.
/// Throws DataError on malformed input.
UtcInstant parse_iso8601(std::string_view text);

/// Render as "YYYY-MM-DDTHH:MM:SSZ" (with ".mmm" when sub-second).
std::string format_iso8601(UtcInstant t);

/// Fractional days from `a` to `b` (negative when b precedes a).
double days_between(UtcInstant a, UtcInstant b);

UtcInstant add_days(UtcInstant t, double days);

/// Time discretization and the normalized model time coordinate.
/// Bins are `bin_width_days` wide starting at `epoch`; normalized time is
/// the line through the two anchors, measured in whole days.
struct TimeBinning {
    UtcInstant epoch;
    double bin_width_days = 2.0;
    UtcInstant anchor0_at;
    double anchor0_value = 1.0;
    UtcInstant anchor1_at;
    double anchor1_value = 4.0;

    /// epoch 2022-01-01, 2-day bins, anchors 2022-01-01 -> 1 and 2025-01-01 -> 4.
    static TimeBinning defaults();
};

/// floor((ts - epoch) / bin_width). Throws DataError when ts < epoch.
std::int64_t bin_index(UtcInstant ts, const TimeBinning& binning);

/// Linear map through the binning anchors (extrapolates outside them).
/// Throws ConfigError when the anchors are degenerate.
double normalize_time(UtcInstant ts, const TimeBinning& binning);

UtcInstant bin_start(std::int64_t bin, const TimeBinning& binning);
UtcInstant bin_center(std::int64_t bin, const TimeBinning& binning);

/// Normalized time of a bin center.
double bin_center_normalized(std::int64_t bin, const TimeBinning& binning);

/// Increment of normalized time per bin (one landscape step).
double bin_step_normalized(const TimeBinning& binning);

} // namespace stancedyn
