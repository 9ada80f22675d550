#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "stancedyn/timebase.hpp"

namespace stancedyn {

enum class StanceLabel : int { Against = -1, Neutral = 0, Favor = 1 };

enum class Platform { Twitter, Instagram, TikTok, Bluesky };

/// One classified post: who said what about which target, when.
struct StanceObservation {
    std::string person_id;
    std::string target_id;
    UtcInstant timestamp;
    StanceLabel label = StanceLabel::Neutral;
    std::optional<Platform> platform;
    std::optional<std::string> account_id;
};

enum class FigureType { Politician, Influencer, Foreign, Other };

struct PersonMeta {
    std::string person_id;
    FigureType figure_type = FigureType::Other;
    std::optional<std::string> party;
    std::optional<std::string> province;
};

enum class ObservationFormat { Jsonl, Csv };

struct ParseReport {
    std::size_t total_rows = 0;
    std::size_t parsed = 0;
    std::size_t malformed = 0;
    std::size_t out_of_window = 0;
    std::size_t duplicates = 0;
    std::vector<std::string> sample_errors; // first few, for the failure report
};

struct ParseOptions {
    ObservationFormat format = ObservationFormat::Jsonl;
    /// Reject unknown columns / fields instead of ignoring them.
    bool strict = false;
    /// Keep accounts separate: the stream key becomes person_id/account_id.
    bool by_account = false;
    /// Study window [begin, end); rows outside are counted and skipped.
    UtcInstant window_begin = parse_iso8601("2022-01-01");
    UtcInstant window_end = parse_iso8601("2026-01-01");
};

/// Case-insensitive label names ("favor", "neutral", "against") or the
/// integer codes -1/0/+1. Returns nullopt for anything else.
std::optional<StanceLabel> parse_label(const std::string& text);
std::string label_name(StanceLabel l);

std::optional<Platform> parse_platform(const std::string& text);
std::string platform_name(Platform p);

std::optional<FigureType> parse_figure_type(const std::string& text);
std::string figure_type_name(FigureType t);

/// Parse a JSONL or CSV observation file. Well-formed rows become
/// observations; malformed rows are counted (never silently dropped), and
/// exact duplicates (person, target, timestamp, label) collapse to one.
/// Throws DataError when the file is unreadable or when more than half of
/// the rows are malformed.
std::vector<StanceObservation> parse_observations(const std::string& path, const ParseOptions& options,
                                                  ParseReport* report = nullptr);

/// CSV with header person_id,figure_type,party,province.
std::vector<PersonMeta> parse_person_meta(const std::string& path, bool strict = false);

/// Canonical JSONL / CSV writers (used by the round-trip tests and the
/// ingest stage output).
void write_observations_jsonl(const std::string& path, const std::vector<StanceObservation>& obs);
void write_observations_csv(const std::string& path, const std::vector<StanceObservation>& obs);

/// Keep only observations whose target has strictly more than `min_posts`
/// posts in `obs`. Order is preserved; the filter is idempotent.
std::vector<StanceObservation> filter_targets(const std::vector<StanceObservation>& obs,
                                              std::size_t min_posts);

} // namespace stancedyn
