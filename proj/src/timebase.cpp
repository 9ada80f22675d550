#include "stancedyn/timebase.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "stancedyn/common.hpp"

namespace stancedyn {

namespace {

constexpr std::int64_t kMsPerDay = 86400000;

// Howard Hinnant's civil-days algorithm.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}

bool parse_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    out = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
        out = out * 10 + (s[i] - '0');
    }
    return true;
}

[[noreturn]] void bad(std::string_view text) {
    throw DataError("invalid ISO-8601 timestamp: '" + std::string(text) + "'");
}

} // namespace

UtcInstant parse_iso8601(std::string_view text) {
    int year = 0, month = 0, day = 0;
    if (!parse_int(text, 0, 4, year) || text.size() < 10 || text[4] != '-' || text[7] != '-' ||
        !parse_int(text, 5, 2, month) || !parse_int(text, 8, 2, day)) {
        bad(text);
    }
    if (month < 1 || month > 12 || day < 1 || day > 31) bad(text);

    std::int64_t ms = days_from_civil(year, month, day) * kMsPerDay;
    if (text.size() == 10) return UtcInstant{ms}; // date only, midnight UTC

    if (text[10] != 'T' && text[10] != ' ') bad(text);
    int hh = 0, mi = 0, ss = 0;
    if (!parse_int(text, 11, 2, hh) || text.size() < 16 || text[13] != ':' ||
        !parse_int(text, 14, 2, mi)) {
        bad(text);
    }
    std::size_t pos = 16;
    if (pos < text.size() && text[pos] == ':') {
        if (!parse_int(text, pos + 1, 2, ss)) bad(text);
        pos += 3;
    }
    if (hh > 23 || mi > 59 || ss > 60) bad(text);
    ms += (static_cast<std::int64_t>(hh) * 3600 + mi * 60 + ss) * 1000;

    if (pos < text.size() && text[pos] == '.') {
        std::size_t digits = 0;
        std::int64_t frac = 0;
        ++pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            if (digits < 3) frac = frac * 10 + (text[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) bad(text);
        while (digits < 3) {
            frac *= 10;
            ++digits;
        }
        ms += frac;
    }

    // zone designator is mandatory for date-times
    if (pos >= text.size()) bad(text);
    if (text[pos] == 'Z') {
        if (pos + 1 != text.size()) bad(text);
        return UtcInstant{ms};
    }
    if (text[pos] != '+' && text[pos] != '-') bad(text);
    const int sign = text[pos] == '+' ? 1 : -1;
    int oh = 0, om = 0;
    if (!parse_int(text, pos + 1, 2, oh)) bad(text);
    std::size_t opos = pos + 3;
    if (opos < text.size() && text[opos] == ':') ++opos;
    if (opos < text.size()) {
        if (!parse_int(text, opos, 2, om) || opos + 2 != text.size()) bad(text);
    } else if (opos != text.size()) {
        bad(text);
    }
    if (oh > 14 || om > 59) bad(text);
    ms -= sign * (static_cast<std::int64_t>(oh) * 3600 + om * 60) * 1000;
    return UtcInstant{ms};
}

std::string format_iso8601(UtcInstant t) {
    std::int64_t days = t.ms / kMsPerDay;
    std::int64_t rem = t.ms % kMsPerDay;
    if (rem < 0) {
        rem += kMsPerDay;
        days -= 1;
    }
    int y, m, d;
    civil_from_days(days, y, m, d);
    const int hh = static_cast<int>(rem / 3600000);
    const int mi = static_cast<int>((rem / 60000) % 60);
    const int ss = static_cast<int>((rem / 1000) % 60);
    const int ms = static_cast<int>(rem % 1000);
    char buf[40];
    if (ms != 0) {
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", y, m, d, hh, mi, ss, ms);
    } else {
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d, hh, mi, ss);
    }
    return buf;
}

double days_between(UtcInstant a, UtcInstant b) {
    return static_cast<double>(b.ms - a.ms) / static_cast<double>(kMsPerDay);
}

UtcInstant add_days(UtcInstant t, double days) {
    return UtcInstant{t.ms + static_cast<std::int64_t>(std::llround(days * kMsPerDay))};
}

TimeBinning TimeBinning::defaults() {
    TimeBinning b;
    b.epoch = parse_iso8601("2022-01-01");
    b.bin_width_days = 2.0;
    b.anchor0_at = parse_iso8601("2022-01-01");
    b.anchor0_value = 1.0;
    b.anchor1_at = parse_iso8601("2025-01-01");
    b.anchor1_value = 4.0;
    return b;
}

std::int64_t bin_index(UtcInstant ts, const TimeBinning& binning) {
    if (ts < binning.epoch) {
        throw DataError("bin_index: timestamp " + format_iso8601(ts) + " precedes the binning epoch");
    }
    const double days = days_between(binning.epoch, ts);
    return static_cast<std::int64_t>(std::floor(days / binning.bin_width_days));
}

double normalize_time(UtcInstant ts, const TimeBinning& binning) {
    const double span = days_between(binning.anchor0_at, binning.anchor1_at);
    if (!(span > 0.0) || !(binning.anchor1_value > binning.anchor0_value)) {
        throw ConfigError("normalize_time: anchors must be strictly increasing");
    }
    const double d = days_between(binning.anchor0_at, ts);
    return binning.anchor0_value + (binning.anchor1_value - binning.anchor0_value) * d / span;
}

UtcInstant bin_start(std::int64_t bin, const TimeBinning& binning) {
    return add_days(binning.epoch, static_cast<double>(bin) * binning.bin_width_days);
}

UtcInstant bin_center(std::int64_t bin, const TimeBinning& binning) {
    return add_days(binning.epoch, (static_cast<double>(bin) + 0.5) * binning.bin_width_days);
}

double bin_center_normalized(std::int64_t bin, const TimeBinning& binning) {
    return normalize_time(bin_center(bin, binning), binning);
}

double bin_step_normalized(const TimeBinning& binning) {
    const double span = days_between(binning.anchor0_at, binning.anchor1_at);
    if (!(span > 0.0)) throw ConfigError("bin_step_normalized: degenerate anchors");
    return (binning.anchor1_value - binning.anchor0_value) * binning.bin_width_days / span;
}

} // namespace stancedyn
