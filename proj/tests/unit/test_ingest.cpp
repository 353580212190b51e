#include <filesystem>
#include <set>
#include <string>

#include "doctest.h"

#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/ingest.hpp"

using namespace biasaudit;

namespace {

std::string jsonl_row(const std::string& id, int score, const std::string& sg, const std::string& ag,
                      const std::string& comment = "solid shift") {
    return "{\"id\":\"" + id + "\",\"comment\":\"" + comment + "\",\"global_score\":" + std::to_string(score) +
           ",\"student_gender\":\"" + sg + "\",\"assessor_gender\":\"" + ag + "\"}\n";
}

std::vector<EvaluationRecord> make_records(std::size_t n, int score, GroupLabel g, const std::string& prefix) {
    std::vector<EvaluationRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        EvaluationRecord r;
        r.id = prefix + std::to_string(i);
        r.comment = "comment " + std::to_string(i);
        r.global_score = score;
        r.student_gender = g;
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST_CASE("jsonl: three well-formed rows") {
    const std::string text = jsonl_row("a", 0, "M", "F") + jsonl_row("b", 2, "F", "") + jsonl_row("c", 3, "", "M");
    const auto r = parse_jsonl_records(text);
    CHECK(r.errors.empty());
    REQUIRE(r.dataset.size() == 3);
    CHECK(r.dataset.records()[1].student_gender == GroupLabel::F);
    CHECK(r.dataset.records()[1].assessor_gender == GroupLabel::Unspecified);
    CHECK(r.dataset.at("c").global_score == 3);
}

TEST_CASE("jsonl: score out of range is collected, not dropped silently") {
    const std::string text = jsonl_row("a", 1, "M", "F") + jsonl_row("b", 5, "F", "M");
    const auto r = parse_jsonl_records(text);
    CHECK(r.dataset.size() == 1);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].line == 2);
    CHECK(r.errors[0].id == "b");
    CHECK(r.errors[0].message.find("score out of range") != std::string::npos);
}

TEST_CASE("jsonl: malformed rows, bad labels, empty comments") {
    const std::string text = "{not json}\n" + jsonl_row("a", 1, "X", "F") + jsonl_row("b", 1, "M", "F", "   ") +
                             "\n" + jsonl_row("c", 2, "m", "f");
    const auto r = parse_jsonl_records(text);
    CHECK(r.dataset.size() == 1);
    CHECK(r.errors.size() == 3);
    CHECK(r.dataset.records()[0].student_gender == GroupLabel::M);
}

TEST_CASE("jsonl: duplicate id is fatal") {
    const std::string text = jsonl_row("a", 1, "M", "F") + jsonl_row("a", 2, "F", "M");
    CHECK_THROWS_AS(parse_jsonl_records(text), ValidationError);
}

TEST_CASE("jsonl: optional and unknown fields") {
    const std::string text =
        "{\"id\":\"a\",\"comment\":\"ok\",\"global_score\":1,\"student_gender\":\"M\",\"assessor_gender\":\"F\","
        "\"assessor_rank\":\"attending\",\"institution\":\"north\",\"student_id\":17}\n";
    const auto r = parse_jsonl_records(text);
    REQUIRE(r.dataset.size() == 1);
    const auto& rec = r.dataset.records()[0];
    CHECK(rec.assessor_rank == "attending");
    CHECK(rec.institution == "north");
    CHECK(rec.metadata.at("student_id") == "17");
    const auto again = parse_jsonl_records(records_to_jsonl(r.dataset.records()));
    CHECK(again.dataset.records()[0].metadata.at("student_id") == "17");
    CHECK(records_to_jsonl(again.dataset.records()) == records_to_jsonl(r.dataset.records()));
}

TEST_CASE("csv: header-named fields, quoting, metadata") {
    const std::string text =
        "global_score,id,comment,student_gender,assessor_gender,site\n"
        "2,a,\"good, thorough \"\"work\"\"\",F,M,east\n"
        "1,b,\"line one\nline two\",M,,west\n"
        "9,c,bad,M,F,west\n";
    const auto r = parse_csv_records(text);
    REQUIRE(r.dataset.size() == 2);
    CHECK(r.dataset.at("a").comment == "good, thorough \"work\"");
    CHECK(r.dataset.at("b").comment == "line one\nline two");
    CHECK(r.dataset.at("b").assessor_gender == GroupLabel::Unspecified);
    CHECK(r.dataset.at("a").metadata.at("site") == "east");
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].id == "c");
}

TEST_CASE("csv: unterminated quote and duplicate id") {
    CHECK_THROWS_AS(parse_csv_records("id,comment,global_score\na,\"open,1\n"), ValidationError);
    CHECK_THROWS_AS(parse_csv_records("id,comment,global_score\na,x,1\na,y,2\n"), ValidationError);
}

TEST_CASE("load_records: file errors and stable reload") {
    CHECK_THROWS_AS(load_records("/nonexistent/file.jsonl", InputFormat::Jsonl), IoError);
    CHECK_THROWS_AS(parse_format("xml"), ValidationError);
    CHECK(format_for_path("a/b.csv") == InputFormat::Csv);
    CHECK(format_for_path("a/b.jsonl") == InputFormat::Jsonl);
    const auto path = std::filesystem::temp_directory_path() / "biasaudit_ingest_reload.jsonl";
    write_file_atomic(path, jsonl_row("z", 1, "M", "F") + jsonl_row("a", 2, "F", "M"));
    const auto first = load_records(path, InputFormat::Jsonl);
    const auto second = load_records(path, InputFormat::Jsonl);
    CHECK(records_to_jsonl(first.dataset.records()) == records_to_jsonl(second.dataset.records()));
    CHECK(first.dataset.records()[0].id == "z");
    CHECK(first.dataset.provenance().source == path.string());
    std::filesystem::remove(path);
}

TEST_CASE("3162-row file reports its group counts") {
    std::string text;
    for (int i = 0; i < 3162; ++i) text += jsonl_row("r" + std::to_string(i), i % 4, i < 1767 ? "M" : "F", "M");
    const auto r = parse_jsonl_records(text);
    REQUIRE(r.errors.empty());
    const auto s = summarize(r.dataset);
    CHECK(s.records == 3162);
    CHECK(s.student_counts.at(GroupLabel::M) == 1767);
    CHECK(s.student_counts.at(GroupLabel::F) == 1395);
}

TEST_CASE("summarize") {
    const auto one = parse_jsonl_records(jsonl_row("a", 1, "M", "F", "one two three four five"));
    const auto s = summarize(one.dataset);
    CHECK(s.mean_words == 5.0);
    CHECK(s.max_words == 5);
    const auto two = parse_jsonl_records(jsonl_row("a", 0, "M", "F") + jsonl_row("b", 3, "F", "M"));
    const auto t = summarize(two.dataset);
    CHECK(t.score_distribution[0] == 0.5);
    CHECK(t.score_distribution[1] == 0.0);
    CHECK(t.score_distribution[3] == 0.5);
    CHECK_THROWS_AS(summarize(Dataset{}), ValidationError);
}

TEST_CASE("largest remainder rounding") {
    CHECK(allocate_largest_remainder(10, {}) == std::array<std::size_t, 3>{7, 2, 1});
    CHECK(allocate_largest_remainder(3162, {}) == std::array<std::size_t, 3>{2214, 474, 474});
    CHECK(allocate_largest_remainder(0, {}) == std::array<std::size_t, 3>{0, 0, 0});
    CHECK(allocate_largest_remainder(1, {}) == std::array<std::size_t, 3>{1, 0, 0});
    CHECK(allocate_largest_remainder(100, {}) == std::array<std::size_t, 3>{70, 15, 15});
}

TEST_CASE("split: ten records of one stratum") {
    const Dataset ds(make_records(10, 2, GroupLabel::M, "r"));
    const auto split = stratified_split(ds, {}, 1);
    CHECK(split.sizes() == std::array<std::size_t, 3>{7, 2, 1});
}

TEST_CASE("split: ratios must sum to one") {
    const Dataset ds(make_records(10, 2, GroupLabel::M, "r"));
    CHECK_THROWS_AS(stratified_split(ds, {0.7, 0.2, 0.2}, 1), ValidationError);
    CHECK_THROWS_AS(stratified_split(ds, {1.2, -0.1, -0.1}, 1), ValidationError);
    CHECK_NOTHROW(stratified_split(ds, {0.7, 0.15, 0.15 + 5e-10}, 1));
}

TEST_CASE("split: determinism and seed sensitivity") {
    std::vector<EvaluationRecord> recs;
    for (int s = 0; s < 4; ++s)
        for (auto g : {GroupLabel::M, GroupLabel::F}) {
            auto part = make_records(12 + s, s, g, std::to_string(s) + std::string(to_string(g)) + "-");
            recs.insert(recs.end(), part.begin(), part.end());
        }
    const Dataset ds(recs);
    const auto a = stratified_split(ds, {}, 7);
    const auto b = stratified_split(ds, {}, 7);
    const auto c = stratified_split(ds, {}, 8);
    CHECK(a.partition_of == b.partition_of);
    CHECK(a.partition_of != c.partition_of);
}

TEST_CASE("split: per-stratum quotas within one record, totals exact, exhaustive") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        std::vector<EvaluationRecord> recs;
        std::size_t total = 0;
        for (int s = 0; s < 4; ++s)
            for (auto g : {GroupLabel::M, GroupLabel::F, GroupLabel::Unspecified}) {
                const std::size_t n = 1 + (seed * 7 + s * 5 + static_cast<int>(g) * 3) % 23;
                auto part = make_records(n, s, g, std::to_string(s) + "-" + std::to_string(static_cast<int>(g)) + "-");
                recs.insert(recs.end(), part.begin(), part.end());
                total += n;
            }
        const Dataset ds(recs);
        const auto split = stratified_split(ds, {}, seed);
        CHECK(split.partition_of.size() == ds.size());
        CHECK(split.sizes() == allocate_largest_remainder(total, {}));
        std::map<int, std::array<std::size_t, 3>> per;
        std::map<int, std::size_t> n;
        for (const auto& r : ds.records()) {
            ++per[r.global_score][static_cast<int>(split.partition_of.at(r.id))];
            ++n[r.global_score];
        }
        const double ratios[3] = {0.7, 0.15, 0.15};
        for (const auto& [key, sizes] : per)
            for (int p = 0; p < 3; ++p) CHECK(std::abs(static_cast<double>(sizes[p]) - ratios[p] * n[key]) < 1.0);
    }
}

TEST_CASE("split: 3162 records give 2214 train") {
    std::vector<EvaluationRecord> recs;
    const std::size_t per_score[4] = {158, 1107, 1423, 474};
    for (int s = 0; s < 4; ++s) {
        const std::size_t m = per_score[s] * 1767 / 3162;
        auto a = make_records(m, s, GroupLabel::M, std::to_string(s) + "m");
        auto b = make_records(per_score[s] - m, s, GroupLabel::F, std::to_string(s) + "f");
        recs.insert(recs.end(), a.begin(), a.end());
        recs.insert(recs.end(), b.begin(), b.end());
    }
    const Dataset ds(recs);
    REQUIRE(ds.size() == 3162);
    CHECK(stratified_split(ds, {}, 0).sizes()[0] == 2214);
}

TEST_CASE("split file round trip and select") {
    const Dataset ds(make_records(20, 1, GroupLabel::F, "r"));
    const auto split = stratified_split(ds, {}, 3);
    const auto back = split_from_jsonl(split_to_jsonl(split, ds), ds);
    CHECK(back.partition_of == split.partition_of);
    const auto test = select(ds, split, Partition::Test);
    CHECK(test.size() == split.sizes()[2]);
    CHECK_THROWS_AS(split_from_jsonl("{\"id\":\"nope\",\"partition\":\"test\"}\n", ds), ValidationError);
}
