#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "affectflow/cemoflow.hpp"
#include "affectflow/rng.hpp"
#include "oracles.hpp"

using namespace affectflow;
using namespace affectflow::cemoflow;

namespace {

// Synthetic annotated segment: n records spaced `gap` seconds apart.
AnnotatedSegment make_segment(const std::string& id, std::size_t n, int gap,
                              std::uint64_t seed, int start_minute = 0) {
    AnnotatedSegment seg;
    seg.segment.conversation_id = id;
    SplitMix64 rng(seed);
    int total = start_minute * 60;
    for (std::size_t i = 0; i < n; ++i) {
        ingest::UtteranceRecord rec;
        rec.conversation_id = id;
        rec.speaker_id = "s";
        rec.text = "synthetic utterance";
        rec.timestamp.year = 2020;
        rec.timestamp.month = 1;
        rec.timestamp.day = 15;
        rec.timestamp.hh = (total / 3600) % 24;
        rec.timestamp.mm = (total / 60) % 60;
        rec.timestamp.ss = total % 60;
        total += gap;
        seg.segment.records.push_back(rec);

        annotate::EmotionVector e;
        double sum = 0.0;
        for (double& v : e.e) {
            v = rng.uniform(0.05, 1.0);
            sum += v;
        }
        for (double& v : e.e) v /= sum;
        seg.emotions.push_back(e);
    }
    seg.segment.t_start = seg.segment.records.front().timestamp;
    seg.segment.t_end = seg.segment.records.back().timestamp;
    return seg;
}

AnnotatedSegment constant_segment(const std::string& id, std::size_t n, int gap) {
    AnnotatedSegment seg = make_segment(id, n, gap, 1);
    annotate::EmotionVector e;
    e.e = {0.25, 0.15, 0.20, 0.10, 0.18, 0.12};
    for (auto& v : seg.emotions) v = e;
    return seg;
}

}  // namespace

TEST_CASE("build_cemoflow: knot rows reproduce raw values, counting rule holds") {
    const auto built = build_cemoflow({make_segment("c1", 2, 30, 7)}, 4);
    CHECK(built.rows.size() == 5);  // factor*(n-1)+1
    REQUIRE(built.ranges.size() == 1);
    CHECK(built.ranges[0].row_count == 5);

    // first and last rows are raw knots
    const auto& first = built.rows.front();
    CHECK(first.tau() == 0.0);
    CHECK(first.delta() == 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) sum += first.emotion(j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(first.sin_h() * first.sin_h() + first.cos_h() * first.cos_h() ==
          doctest::Approx(1.0).epsilon(1e-12));
    const auto& last = built.rows.back();
    CHECK(last.tau() == 30.0);
}

TEST_CASE("build_cemoflow: 20-knot single-segment corpus at factor 26 gives 495 rows") {
    const auto built = build_cemoflow({make_segment("c1", 20, 25, 11)}, 26);
    CHECK(built.rows.size() == 26 * 19 + 1);  // 495
}

TEST_CASE("build_cemoflow: constant emotions stay constant, delta is zero everywhere") {
    const auto built = build_cemoflow({constant_segment("c1", 6, 20)}, 8);
    for (const auto& row : built.rows) {
        CHECK(row.emotion(0) == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(row.emotion(5) == doctest::Approx(0.12).epsilon(1e-12));
        CHECK(row.delta() == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
}

TEST_CASE("build_cemoflow: per-segment tau/delta reset and running t_tilde") {
    const auto built =
        build_cemoflow({make_segment("c1", 4, 30, 3), make_segment("c2", 3, 45, 4, 30)}, 5);
    REQUIRE(built.ranges.size() == 2);
    const auto& r2 = built.ranges[1];
    const auto& boundary = built.rows[r2.first_row];
    CHECK(boundary.tau() == 0.0);    // resets at the segment's first knot
    CHECK(boundary.delta() == 0.0);
    // the abscissa continues from the previous segment's last knot
    CHECK(boundary.t_tilde() == built.rows[r2.first_row - 1].t_tilde());
    for (std::size_t i = 1; i < built.rows.size(); ++i)
        CHECK(built.rows[i].t_tilde() >= built.rows[i - 1].t_tilde());
    // within segments the abscissa strictly increases
    for (std::size_t i = r2.first_row + 1; i < r2.first_row + r2.row_count; ++i)
        CHECK(built.rows[i].t_tilde() > built.rows[i - 1].t_tilde());
}

TEST_CASE("build_cemoflow: single-knot segment emits its raw row unchanged") {
    const auto built = build_cemoflow(
        {make_segment("c1", 3, 20, 5), make_segment("solo", 1, 0, 6, 10)}, 7);
    REQUIRE(built.ranges.size() == 2);
    CHECK(built.ranges[1].row_count == 1);
    const auto& solo = built.rows[built.ranges[1].first_row];
    CHECK(solo.tau() == 0.0);
    CHECK(solo.delta() == 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < 6; ++j) sum += solo.emotion(j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("write_cemoflow csv: header, empty file, bit-exact round trip") {
    const std::string path = (std::filesystem::temp_directory_path() / "af_cemoflow.csv").string();

    CHECK(write_cemoflow({}, path) == 0);
    {
        std::ifstream in(path);
        std::string header;
        std::getline(in, header);
        CHECK(header == kCsvHeader);
        std::string rest;
        CHECK_FALSE(std::getline(in, rest));
    }

    SplitMix64 rng(2718);
    std::vector<CemoflowRow> rows(100);
    for (auto& row : rows)
        for (double& v : row.cols) v = rng.uniform(-10.0, 10.0) * std::pow(10.0, rng.uniform(-8.0, 8.0));
    CHECK(write_cemoflow(rows, path) == 100);
    const auto loaded = read_cemoflow_csv(path);
    REQUIRE(loaded.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < kNumColumns; ++c)
            CHECK(loaded[i].cols[c] == rows[i].cols[c]);  // bit-exact
}

TEST_CASE("write_cemoflow jsonl: keys match the csv header names") {
    const std::string path = (std::filesystem::temp_directory_path() / "af_cemoflow.jsonl").string();
    CemoflowRow row;
    for (std::size_t c = 0; c < kNumColumns; ++c) row.cols[c] = static_cast<double>(c) * 1.5;
    write_cemoflow({row}, path, FileFormat::jsonl);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    const auto j = nlohmann::json::parse(line);
    for (std::size_t c = 0; c < kNumColumns; ++c) {
        REQUIRE(j.contains(kColumnNames[c]));
        CHECK(j.at(kColumnNames[c]).get<double>() == row.cols[c]);
    }
}

TEST_CASE("write_cemoflow: unwritable path raises an io error") {
    CHECK_THROWS_AS(write_cemoflow({}, "/nonexistent_dir/x.csv"), input_error);
}

TEST_CASE("summary_stats: hand-checked column and degenerate cases") {
    std::vector<CemoflowRow> rows(3);
    rows[0].cols[0] = 1.0;
    rows[1].cols[0] = 2.0;
    rows[2].cols[0] = 3.0;
    const SummaryStats stats = summary_stats(rows);
    const ColumnStats& c = stats.columns[0];
    CHECK(c.count == 3);
    CHECK(c.mean == doctest::Approx(2.0));
    CHECK(c.std_dev == doctest::Approx(1.0));  // sample std with N-1
    CHECK(c.min == 1.0);
    CHECK(c.max == 3.0);
    CHECK(c.p50 == doctest::Approx(2.0));
    CHECK(c.p25 == doctest::Approx(1.5));
    CHECK(c.p75 == doctest::Approx(2.5));

    // constant column
    const ColumnStats& flat = stats.columns[3];
    CHECK(flat.std_dev == 0.0);
    CHECK(flat.min == flat.max);

    // single row: quartiles collapse to the value
    std::vector<CemoflowRow> one(1);
    one[0].cols[0] = 42.0;
    const SummaryStats s1 = summary_stats(one);
    CHECK(s1.columns[0].p25 == 42.0);
    CHECK(s1.columns[0].p50 == 42.0);
    CHECK(s1.columns[0].p75 == 42.0);
    CHECK(s1.columns[0].std_dev == 0.0);

    CHECK_THROWS_AS(summary_stats({}), std::invalid_argument);
}

TEST_CASE("summary_stats matches the independent two-pass oracle on random data") {
    SplitMix64 rng(31415);
    std::vector<CemoflowRow> rows(500);
    for (auto& row : rows)
        for (double& v : row.cols) v = rng.uniform(-100.0, 100.0);
    const SummaryStats stats = summary_stats(rows);
    for (std::size_t c = 0; c < kNumColumns; ++c) {
        std::vector<double> xs;
        for (const auto& row : rows) xs.push_back(row.cols[c]);
        const auto oracle = oracles::stats_two_pass(xs);
        auto close = [](double a, double b) {
            return std::abs(a - b) <= 1e-10 * std::max({1.0, std::abs(a), std::abs(b)});
        };
        CHECK(close(stats.columns[c].mean, oracle.mean));
        CHECK(close(stats.columns[c].std_dev, oracle.std_dev));
        CHECK(close(stats.columns[c].min, oracle.min));
        CHECK(close(stats.columns[c].p25, oracle.p25));
        CHECK(close(stats.columns[c].p50, oracle.p50));
        CHECK(close(stats.columns[c].p75, oracle.p75));
        CHECK(close(stats.columns[c].max, oracle.max));
        CHECK(stats.columns[c].min <= stats.columns[c].p25);
        CHECK(stats.columns[c].p25 <= stats.columns[c].p50);
        CHECK(stats.columns[c].p50 <= stats.columns[c].p75);
        CHECK(stats.columns[c].p75 <= stats.columns[c].max);
    }
}

TEST_CASE("stats JSON mirrors the table shape") {
    std::vector<CemoflowRow> rows(4);
    SplitMix64 rng(1);
    for (auto& row : rows)
        for (double& v : row.cols) v = rng.uniform(0.0, 1.0);
    const auto j = stats_to_json(summary_stats(rows));
    for (std::size_t c = 0; c < kNumColumns; ++c) {
        REQUIRE(j.contains(kColumnNames[c]));
        const auto& col = j.at(kColumnNames[c]);
        for (const char* field : {"count", "mean", "std", "min", "p25", "p50", "p75", "max"})
            CHECK(col.contains(field));
    }
}

TEST_CASE("segment index round trip") {
    const std::vector<SegmentRange> ranges = {{"c1", 0, 287, false}, {"c2", 287, 183, true}};
    const std::string path = (std::filesystem::temp_directory_path() / "af_segidx.json").string();
    write_segment_index(ranges, path);
    const auto loaded = read_segment_index(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].conversation_id == "c1");
    CHECK(loaded[0].first_row == 0);
    CHECK(loaded[0].row_count == 287);
    CHECK_FALSE(loaded[0].noise);
    CHECK(loaded[1].noise);
}
