#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "stancedyn/common.hpp"
#include "stancedyn/ingest.hpp"

using namespace stancedyn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("stancedyn_ingest_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const {
        const fs::path p = path / name;
        std::ofstream out(p);
        out << content;
        return p.string();
    }
};

} // namespace

TEST_CASE("jsonl row maps to an observation") {
    TempDir tmp;
    const std::string path = tmp.file(
        "obs.jsonl",
        R"({"person_id":"A","target_id":"climate","timestamp":"2022-03-01T00:00:00Z","label":"favor"})"
        "\n");
    ParseReport report;
    const auto obs = parse_observations(path, ParseOptions{}, &report);
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].person_id == "A");
    CHECK(obs[0].target_id == "climate");
    CHECK(obs[0].timestamp == parse_iso8601("2022-03-01"));
    CHECK(obs[0].label == StanceLabel::Favor);
    CHECK(report.parsed == 1);
    CHECK(report.malformed == 0);
}

TEST_CASE("empty file gives an empty list") {
    TempDir tmp;
    ParseReport report;
    const auto obs = parse_observations(tmp.file("empty.jsonl", ""), ParseOptions{}, &report);
    CHECK(obs.empty());
    CHECK(report.total_rows == 0);
}

TEST_CASE("label parsing is case-insensitive") {
    CHECK(parse_label("FAVOR") == StanceLabel::Favor);
    CHECK(parse_label("Against") == StanceLabel::Against);
    CHECK(parse_label("neutral") == StanceLabel::Neutral);
    CHECK(parse_label("-1") == StanceLabel::Against);
    CHECK(!parse_label("meh").has_value());

    TempDir tmp;
    const std::string path = tmp.file(
        "obs.csv",
        "person_id,target_id,timestamp,label\nA,tax,2022-05-01T10:00:00Z,FAVOR\n");
    ParseOptions opts;
    opts.format = ObservationFormat::Csv;
    const auto obs = parse_observations(path, opts);
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].label == StanceLabel::Favor);
}

TEST_CASE("malformed rows are counted and a majority aborts") {
    TempDir tmp;
    const std::string good =
        R"({"person_id":"A","target_id":"x","timestamp":"2022-03-01T00:00:00Z","label":"favor"})";
    ParseReport report;
    SUBCASE("minority of bad rows is reported, not fatal") {
        const std::string path = tmp.file("obs.jsonl", good + "\n" + good + "\nnot json\n");
        const auto obs = parse_observations(path, ParseOptions{}, &report);
        CHECK(obs.size() == 1); // duplicates collapse
        CHECK(report.malformed == 1);
        CHECK(report.duplicates == 1);
        CHECK(report.sample_errors.size() == 1);
    }
    SUBCASE("majority of bad rows aborts") {
        const std::string path = tmp.file("obs.jsonl", good + "\nbad\nbad\nbad\n");
        CHECK_THROWS_AS(parse_observations(path, ParseOptions{}, &report), DataError);
    }
    SUBCASE("unreadable file") {
        CHECK_THROWS_AS(parse_observations((tmp.path / "nope.jsonl").string(), ParseOptions{}), DataError);
    }
}

TEST_CASE("study window filters rows without counting them malformed") {
    TempDir tmp;
    const std::string path = tmp.file(
        "obs.jsonl",
        R"({"person_id":"A","target_id":"x","timestamp":"2021-06-01T00:00:00Z","label":"favor"})"
        "\n"
        R"({"person_id":"A","target_id":"x","timestamp":"2022-06-01T00:00:00Z","label":"favor"})"
        "\n");
    ParseReport report;
    const auto obs = parse_observations(path, ParseOptions{}, &report);
    CHECK(obs.size() == 1);
    CHECK(report.out_of_window == 1);
    CHECK(report.malformed == 0);
}

TEST_CASE("strict mode rejects unknown columns") {
    TempDir tmp;
    const std::string path = tmp.file(
        "obs.csv", "person_id,target_id,timestamp,label,mystery\nA,x,2022-05-01T10:00:00Z,favor,1\n");
    ParseOptions opts;
    opts.format = ObservationFormat::Csv;
    const auto obs = parse_observations(path, opts); // lenient: ignored
    CHECK(obs.size() == 1);
    opts.strict = true;
    CHECK_THROWS_AS(parse_observations(path, opts), DataError);
}

TEST_CASE("by-account keeps account streams separate") {
    TempDir tmp;
    const std::string path = tmp.file(
        "obs.jsonl",
        R"({"person_id":"A","target_id":"x","timestamp":"2022-03-01T00:00:00Z","label":"favor","account_id":"a1","platform":"twitter"})"
        "\n"
        R"({"person_id":"A","target_id":"x","timestamp":"2022-03-02T00:00:00Z","label":"favor","account_id":"a2","platform":"tiktok"})"
        "\n");
    ParseOptions opts;
    const auto merged = parse_observations(path, opts);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].person_id == merged[1].person_id);
    opts.by_account = true;
    const auto split = parse_observations(path, opts);
    REQUIRE(split.size() == 2);
    CHECK(split[0].person_id != split[1].person_id);
}

TEST_CASE("round-trip: serialize(parse(x)) equals the normalized form") {
    TempDir tmp;
    // mixed zones and label case; canonical form is UTC + lowercase labels
    const std::string path = tmp.file(
        "obs.jsonl",
        R"({"person_id":"A","target_id":"x","timestamp":"2022-03-01T02:00:00+02:00","label":"FAVOR"})"
        "\n"
        R"({"person_id":"B","target_id":"y","timestamp":"2022-04-01T00:00:00Z","label":"against","platform":"bluesky"})"
        "\n");
    const auto obs = parse_observations(path, ParseOptions{});
    const std::string out1 = (tmp.path / "out1.jsonl").string();
    write_observations_jsonl(out1, obs);
    const auto obs2 = parse_observations(out1, ParseOptions{});
    const std::string out2 = (tmp.path / "out2.jsonl").string();
    write_observations_jsonl(out2, obs2);
    std::ifstream f1(out1), f2(out2);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    CHECK(s1.find("2022-03-01T00:00:00Z") != std::string::npos);
    CHECK(s1.find("favor") != std::string::npos);

    // same through the CSV writer
    const std::string csv_path = (tmp.path / "out.csv").string();
    write_observations_csv(csv_path, obs);
    ParseOptions csv_opts;
    csv_opts.format = ObservationFormat::Csv;
    const auto obs3 = parse_observations(csv_path, csv_opts);
    REQUIRE(obs3.size() == obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        CHECK(obs3[i].person_id == obs[i].person_id);
        CHECK(obs3[i].timestamp == obs[i].timestamp);
        CHECK(obs3[i].label == obs[i].label);
    }
}

TEST_CASE("filter_targets") {
    auto make = [](const std::string& target) {
        StanceObservation o;
        o.person_id = "p";
        o.target_id = target;
        o.timestamp = parse_iso8601("2022-02-01");
        o.label = StanceLabel::Neutral;
        return o;
    };
    std::vector<StanceObservation> obs;
    for (int i = 0; i < 5; ++i) obs.push_back(make("big"));
    for (int i = 0; i < 3; ++i) obs.push_back(make("small"));

    SUBCASE("min_posts 0 is the identity") {
        CHECK(filter_targets(obs, 0).size() == obs.size());
    }
    SUBCASE("threshold is strict (more than)") {
        std::vector<StanceObservation> exactly;
        for (int i = 0; i < 400; ++i) exactly.push_back(make("t"));
        CHECK(filter_targets(exactly, 400).empty());
        exactly.push_back(make("t"));
        CHECK(filter_targets(exactly, 400).size() == 401);
    }
    SUBCASE("counting and order preservation") {
        const auto kept = filter_targets(obs, 4);
        REQUIRE(kept.size() == 5);
        for (const auto& o : kept) CHECK(o.target_id == "big");
    }
    SUBCASE("idempotent") {
        const auto once = filter_targets(obs, 4);
        const auto twice = filter_targets(once, 4);
        CHECK(once.size() == twice.size());
    }
}

TEST_CASE("person metadata") {
    TempDir tmp;
    const std::string path = tmp.file("meta.csv",
                                      "person_id,figure_type,party,province\n"
                                      "A,politician,NDP,BC\n"
                                      "B,influencer,,\n");
    const auto meta = parse_person_meta(path);
    REQUIRE(meta.size() == 2);
    CHECK(meta[0].figure_type == FigureType::Politician);
    CHECK(meta[0].party == "NDP");
    CHECK(!meta[1].party.has_value());

    const std::string dup = tmp.file("dup.csv", "person_id,figure_type\nA,politician\nA,influencer\n");
    CHECK_THROWS_AS(parse_person_meta(dup), DataError);
}
