#include "stancedyn/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

#include "stancedyn/common.hpp"

namespace stancedyn {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    // RFC-4180-ish: double quotes escape commas and embedded quotes.
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

struct ObsKey {
    std::string person, target;
    std::int64_t ms;
    int label;
    bool operator<(const ObsKey& o) const {
        return std::tie(person, target, ms, label) < std::tie(o.person, o.target, o.ms, o.label);
    }
};

const std::set<std::string> kKnownObsColumns = {"person_id", "target_id", "timestamp",
                                                "label",     "platform",  "account_id"};
const std::set<std::string> kKnownMetaColumns = {"person_id", "figure_type", "party", "province"};

} // namespace

std::optional<StanceLabel> parse_label(const std::string& text) {
    const std::string t = lower(text);
    if (t == "favor" || t == "1" || t == "+1") return StanceLabel::Favor;
    if (t == "neutral" || t == "0") return StanceLabel::Neutral;
    if (t == "against" || t == "-1") return StanceLabel::Against;
    return std::nullopt;
}

std::string label_name(StanceLabel l) {
    switch (l) {
        case StanceLabel::Favor: return "favor";
        case StanceLabel::Neutral: return "neutral";
        case StanceLabel::Against: return "against";
    }
    return "neutral";
}

std::optional<Platform> parse_platform(const std::string& text) {
    const std::string t = lower(text);
    if (t == "twitter" || t == "x") return Platform::Twitter;
    if (t == "instagram") return Platform::Instagram;
    if (t == "tiktok") return Platform::TikTok;
    if (t == "bluesky") return Platform::Bluesky;
    return std::nullopt;
}

std::string platform_name(Platform p) {
    switch (p) {
        case Platform::Twitter: return "twitter";
        case Platform::Instagram: return "instagram";
        case Platform::TikTok: return "tiktok";
        case Platform::Bluesky: return "bluesky";
    }
    return "twitter";
}

std::optional<FigureType> parse_figure_type(const std::string& text) {
    const std::string t = lower(text);
    if (t == "politician") return FigureType::Politician;
    if (t == "influencer") return FigureType::Influencer;
    if (t == "foreign") return FigureType::Foreign;
    if (t == "other") return FigureType::Other;
    return std::nullopt;
}

std::string figure_type_name(FigureType t) {
    switch (t) {
        case FigureType::Politician: return "politician";
        case FigureType::Influencer: return "influencer";
        case FigureType::Foreign: return "foreign";
        case FigureType::Other: return "other";
    }
    return "other";
}

namespace {

// Parse one row already split into (field -> value). Returns an error
// message, or empty string on success.
std::string row_to_observation(const std::unordered_map<std::string, std::string>& fields,
                               const ParseOptions& options, StanceObservation& out,
                               bool& out_of_window) {
    out_of_window = false;
    auto get = [&](const char* name) -> const std::string* {
        auto it = fields.find(name);
        return it == fields.end() ? nullptr : &it->second;
    };
    const std::string* person = get("person_id");
    const std::string* target = get("target_id");
    const std::string* ts = get("timestamp");
    const std::string* label = get("label");
    if (!person || person->empty()) return "missing person_id";
    if (!target || target->empty()) return "missing target_id";
    if (!ts || ts->empty()) return "missing timestamp";
    if (!label || label->empty()) return "missing label";

    const auto parsed_label = parse_label(*label);
    if (!parsed_label) return "unknown label '" + *label + "'";

    UtcInstant instant;
    try {
        instant = parse_iso8601(*ts);
    } catch (const DataError& e) {
        return e.what();
    }

    out.person_id = *person;
    out.target_id = *target;
    out.timestamp = instant;
    out.label = *parsed_label;
    out.platform.reset();
    out.account_id.reset();
    if (const std::string* p = get("platform"); p && !p->empty()) {
        const auto plat = parse_platform(*p);
        if (!plat) return "unknown platform '" + *p + "'";
        out.platform = plat;
    }
    if (const std::string* a = get("account_id"); a && !a->empty()) out.account_id = *a;

    if (instant < options.window_begin || !(instant < options.window_end)) {
        out_of_window = true;
        return {};
    }
    if (options.by_account) {
        out.person_id += "/" + (out.account_id ? *out.account_id : std::string("main"));
    }
    return {};
}

} // namespace

std::vector<StanceObservation> parse_observations(const std::string& path, const ParseOptions& options,
                                                  ParseReport* report) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open observation file: " + path);

    ParseReport local;
    ParseReport& rep = report ? *report : local;
    rep = ParseReport{};

    std::vector<StanceObservation> out;
    std::set<ObsKey> seen;

    auto note_error = [&](std::size_t line_no, const std::string& msg) {
        ++rep.malformed;
        if (rep.sample_errors.size() < 10) {
            rep.sample_errors.push_back("line " + std::to_string(line_no) + ": " + msg);
        }
    };

    auto push = [&](const StanceObservation& obs) {
        ObsKey key{obs.person_id, obs.target_id, obs.timestamp.ms, static_cast<int>(obs.label)};
        if (!seen.insert(key).second) {
            ++rep.duplicates; // cross-platform repost, keep one
            return;
        }
        out.push_back(obs);
        ++rep.parsed;
    };

    std::string line;
    std::size_t line_no = 0;

    if (options.format == ObservationFormat::Jsonl) {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
            ++rep.total_rows;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                note_error(line_no, "not a JSON object");
                continue;
            }
            std::unordered_map<std::string, std::string> fields;
            bool bad_field = false;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (kKnownObsColumns.count(it.key()) == 0) {
                    if (options.strict) {
                        note_error(line_no, "unknown field '" + it.key() + "'");
                        bad_field = true;
                        break;
                    }
                    continue;
                }
                if (it.value().is_string()) {
                    fields[it.key()] = it.value().get<std::string>();
                } else if (it.value().is_number_integer()) {
                    fields[it.key()] = std::to_string(it.value().get<long long>());
                } else if (!it.value().is_null()) {
                    note_error(line_no, "field '" + it.key() + "' has non-string value");
                    bad_field = true;
                    break;
                }
            }
            if (bad_field) continue;
            StanceObservation obs;
            bool oow = false;
            const std::string err = row_to_observation(fields, options, obs, oow);
            if (!err.empty()) {
                note_error(line_no, err);
            } else if (oow) {
                ++rep.out_of_window;
            } else {
                push(obs);
            }
        }
    } else {
        if (!std::getline(in, line)) {
            // empty file: zero rows, handled below
            line.clear();
        }
        std::vector<std::string> header = split_csv_line(line);
        if (!line.empty() && options.strict) {
            for (const auto& col : header) {
                if (kKnownObsColumns.count(col) == 0) {
                    throw DataError("unknown column '" + col + "' in " + path);
                }
            }
        }
        line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
            ++rep.total_rows;
            const std::vector<std::string> cells = split_csv_line(line);
            if (cells.size() != header.size()) {
                note_error(line_no, "expected " + std::to_string(header.size()) + " columns, got " +
                                        std::to_string(cells.size()));
                continue;
            }
            std::unordered_map<std::string, std::string> fields;
            for (std::size_t c = 0; c < header.size(); ++c) {
                if (kKnownObsColumns.count(header[c]) != 0) fields[header[c]] = cells[c];
            }
            StanceObservation obs;
            bool oow = false;
            const std::string err = row_to_observation(fields, options, obs, oow);
            if (!err.empty()) {
                note_error(line_no, err);
            } else if (oow) {
                ++rep.out_of_window;
            } else {
                push(obs);
            }
        }
    }

    if (rep.total_rows > 0 && rep.malformed * 2 > rep.total_rows) {
        std::ostringstream msg;
        msg << "parse failure in " << path << ": " << rep.malformed << " of " << rep.total_rows
            << " rows malformed";
        for (const auto& e : rep.sample_errors) msg << "\n  " << e;
        throw DataError(msg.str());
    }
    return out;
}

std::vector<PersonMeta> parse_person_meta(const std::string& path, bool strict) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open metadata file: " + path);
    std::string line;
    if (!std::getline(in, line)) return {};
    const std::vector<std::string> header = split_csv_line(line);
    if (strict) {
        for (const auto& col : header) {
            if (kKnownMetaColumns.count(col) == 0) {
                throw DataError("unknown column '" + col + "' in " + path);
            }
        }
    }
    auto col_of = [&](const char* name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        return -1;
    };
    const int c_person = col_of("person_id");
    const int c_type = col_of("figure_type");
    const int c_party = col_of("party");
    const int c_prov = col_of("province");
    if (c_person < 0) throw DataError("metadata file missing person_id column: " + path);

    std::vector<PersonMeta> out;
    std::set<std::string> ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        auto cell = [&](int c) -> std::string {
            return (c >= 0 && c < static_cast<int>(cells.size())) ? cells[c] : std::string();
        };
        PersonMeta meta;
        meta.person_id = cell(c_person);
        if (meta.person_id.empty()) {
            throw DataError(path + ": empty person_id on line " + std::to_string(line_no));
        }
        if (!ids.insert(meta.person_id).second) {
            throw DataError(path + ": duplicate person_id '" + meta.person_id + "'");
        }
        if (const std::string t = cell(c_type); !t.empty()) {
            const auto ft = parse_figure_type(t);
            if (!ft) throw DataError(path + ": unknown figure_type '" + t + "'");
            meta.figure_type = *ft;
        }
        if (const std::string p = cell(c_party); !p.empty()) meta.party = p;
        if (const std::string p = cell(c_prov); !p.empty()) meta.province = p;
        out.push_back(std::move(meta));
    }
    return out;
}

void write_observations_jsonl(const std::string& path, const std::vector<StanceObservation>& obs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& o : obs) {
        nlohmann::json j;
        j["person_id"] = o.person_id;
        j["target_id"] = o.target_id;
        j["timestamp"] = format_iso8601(o.timestamp);
        j["label"] = label_name(o.label);
        if (o.platform) j["platform"] = platform_name(*o.platform);
        if (o.account_id) j["account_id"] = *o.account_id;
        out << j.dump() << '\n';
    }
}

void write_observations_csv(const std::string& path, const std::vector<StanceObservation>& obs) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "person_id,target_id,timestamp,label,platform,account_id\n";
    for (const auto& o : obs) {
        out << csv_escape(o.person_id) << ',' << csv_escape(o.target_id) << ','
            << format_iso8601(o.timestamp) << ',' << label_name(o.label) << ','
            << (o.platform ? platform_name(*o.platform) : "") << ','
            << (o.account_id ? csv_escape(*o.account_id) : "") << '\n';
    }
}

std::vector<StanceObservation> filter_targets(const std::vector<StanceObservation>& obs,
                                              std::size_t min_posts) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& o : obs) ++counts[o.target_id];
    std::vector<StanceObservation> out;
    out.reserve(obs.size());
    for (const auto& o : obs) {
        if (counts[o.target_id] > min_posts) out.push_back(o);
    }
    return out;
}

} // namespace stancedyn
