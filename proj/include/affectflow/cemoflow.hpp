#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "affectflow/annotate.hpp"
#include "affectflow/common.hpp"
#include "affectflow/csv.hpp"
#include "affectflow/ingest.hpp"
#include "affectflow/spline.hpp"
#include "affectflow/temporal.hpp"

namespace affectflow::cemoflow {

// Column order is the published schema and is load-bearing: cumulative time,
// delay, the six soft labels, affective magnitude, then the cyclic pairs.
inline constexpr std::size_t kNumColumns = 15;
inline constexpr std::array<const char*, kNumColumns> kColumnNames = {
    "t_tilde", "tau", "e0", "e1", "e2", "e3", "e4", "e5",
    "delta",   "sin_h", "cos_h", "sin_m", "cos_m", "sin_s", "cos_s"};

inline const std::string kCsvHeader =
    "t_tilde,tau,e0,e1,e2,e3,e4,e5,delta,sin_h,cos_h,sin_m,cos_m,sin_s,cos_s";

struct CemoflowRow {
    std::array<double, kNumColumns> cols{};

    double& operator[](std::size_t i) { return cols[i]; }
    double operator[](std::size_t i) const { return cols[i]; }

    double t_tilde() const { return cols[0]; }
    double tau() const { return cols[1]; }
    double emotion(std::size_t j) const { return cols[2 + j]; }
    double delta() const { return cols[8]; }
    double sin_h() const { return cols[9]; }
    double cos_h() const { return cols[10]; }
};

// One conversation's records with their emotion annotations.
struct AnnotatedSegment {
    ingest::Segment segment;
    std::vector<annotate::EmotionVector> emotions;
};

struct SegmentRange {
    std::string conversation_id;
    std::size_t first_row = 0;
    std::size_t row_count = 0;
    bool noise = false;
};

struct CemoflowBuild {
    std::vector<CemoflowRow> rows;
    std::vector<SegmentRange> ranges;
};

// Interpolates every value column of each segment against the segment's
// cumulative-time knots and resamples at `factor` points per piece. The
// delay and magnitude columns restart at 0 on each segment's first knot;
// t_tilde is the interpolation abscissa itself and keeps running across
// segments, so it is non-decreasing over the whole file.
inline CemoflowBuild build_cemoflow(const std::vector<AnnotatedSegment>& segments, int factor) {
    if (factor < 1) throw std::invalid_argument("build_cemoflow: factor must be >= 1");
    CemoflowBuild out;
    double t_base = 0.0;

    for (const auto& annotated : segments) {
        const auto& records = annotated.segment.records;
        const auto& emotions = annotated.emotions;
        if (records.empty()) throw std::invalid_argument("build_cemoflow: empty segment");
        if (records.size() != emotions.size())
            throw std::invalid_argument("build_cemoflow: segment records/emotions mismatch");

        const std::size_t n = records.size();
        const auto taus = temporal::compute_delay(records);
        const auto delta = temporal::affective_magnitude(emotions);
        std::vector<double> knot_t(n);
        double running = t_base;
        for (std::size_t i = 0; i < n; ++i) {
            running += taus[i];
            knot_t[i] = running;
        }

        // value columns in file order minus the abscissa
        std::array<std::vector<double>, kNumColumns - 1> knots;
        for (auto& col : knots) col.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const temporal::CyclicEncoding cyc = temporal::cyclic_transform(records[i].timestamp);
            knots[0][i] = taus[i];
            for (std::size_t j = 0; j < kNumEmotions; ++j) knots[1 + j][i] = emotions[i].e[j];
            knots[7][i] = delta[i];
            knots[8][i] = cyc.sin_h;
            knots[9][i] = cyc.cos_h;
            knots[10][i] = cyc.sin_m;
            knots[11][i] = cyc.cos_m;
            knots[12][i] = cyc.sin_s;
            knots[13][i] = cyc.cos_s;
        }

        SegmentRange range;
        range.conversation_id = annotated.segment.conversation_id;
        range.first_row = out.rows.size();
        range.noise = annotated.segment.has_noise();

        if (n == 1) {
            CemoflowRow row;
            row.cols[0] = knot_t[0];
            for (std::size_t c = 0; c + 1 < kNumColumns; ++c) row.cols[1 + c] = knots[c][0];
            out.rows.push_back(row);
        } else {
            std::vector<double> dense_t;
            std::array<std::vector<double>, kNumColumns - 1> dense;
            for (std::size_t c = 0; c < knots.size(); ++c) {
                const spline::SplineCurve curve =
                    spline::fit_segment(knot_t, knots[c], kColumnNames[1 + c]);
                auto [ts, vs] = spline::resample(curve, factor);
                if (c == 0) dense_t = std::move(ts);
                dense[c] = std::move(vs);
            }
            for (std::size_t r = 0; r < dense_t.size(); ++r) {
                CemoflowRow row;
                row.cols[0] = dense_t[r];
                for (std::size_t c = 0; c < dense.size(); ++c) row.cols[1 + c] = dense[c][r];
                out.rows.push_back(row);
            }
        }

        range.row_count = out.rows.size() - range.first_row;
        out.ranges.push_back(std::move(range));
        t_base = knot_t.back();
    }
    return out;
}

enum class FileFormat { csv, jsonl };

// Writes the dataset with 17-significant-digit floats; reading the file back
// reproduces the exact doubles. Returns the number of rows written.
inline std::size_t write_cemoflow(const std::vector<CemoflowRow>& rows, const std::string& path,
                                  FileFormat format = FileFormat::csv) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write dataset: " + path);
    if (format == FileFormat::csv) {
        out << kCsvHeader << "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < kNumColumns; ++c)
                out << (c ? "," : "") << csv::format_double(row.cols[c]);
            out << "\n";
        }
    } else {
        for (const auto& row : rows) {
            nlohmann::ordered_json j;
            for (std::size_t c = 0; c < kNumColumns; ++c) j[kColumnNames[c]] = row.cols[c];
            out << j.dump() << "\n";
        }
    }
    if (!out) throw input_error("write failed: " + path);
    return rows.size();
}

inline std::vector<CemoflowRow> read_cemoflow_csv(const std::string& path) {
    const auto raw = csv::read_file(path);
    if (raw.empty()) throw input_error(path + ": missing header row");
    std::string header;
    for (std::size_t i = 0; i < raw.front().size(); ++i)
        header += (i ? "," : "") + raw.front()[i];
    if (header != kCsvHeader)
        throw input_error(path + ": unexpected header '" + header + "'");
    std::vector<CemoflowRow> rows;
    rows.reserve(raw.size() - 1);
    for (std::size_t i = 1; i < raw.size(); ++i) {
        if (raw[i].size() != kNumColumns)
            throw input_error(path + ", line " + std::to_string(i + 1) + ": expected 15 columns");
        CemoflowRow row;
        for (std::size_t c = 0; c < kNumColumns; ++c)
            row.cols[c] = csv::parse_double(raw[i][c], path + ", line " + std::to_string(i + 1));
        rows.push_back(row);
    }
    return rows;
}

// Sidecar mapping rows back to conversations; the 15-column schema itself
// carries no segment ids.
inline void write_segment_index(const std::vector<SegmentRange>& ranges,
                                const std::string& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& r : ranges) {
        j.push_back({{"conversation_id", r.conversation_id},
                     {"first_row", r.first_row},
                     {"row_count", r.row_count},
                     {"noise", r.noise}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write segment index: " + path);
    out << j.dump(2) << "\n";
}

inline std::vector<SegmentRange> read_segment_index(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open segment index: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error(path + ": invalid JSON: " + std::string(e.what()));
    }
    std::vector<SegmentRange> ranges;
    for (const auto& item : j) {
        SegmentRange r;
        r.conversation_id = item.at("conversation_id").get<std::string>();
        r.first_row = item.at("first_row").get<std::size_t>();
        r.row_count = item.at("row_count").get<std::size_t>();
        r.noise = item.at("noise").get<bool>();
        ranges.push_back(std::move(r));
    }
    return ranges;
}

struct ColumnStats {
    std::size_t count = 0;
    double mean = 0.0;
    double std_dev = 0.0;  // sample standard deviation (N-1); 0 for a single row
    double min = 0.0;
    double p25 = 0.0;
    double p50 = 0.0;
    double p75 = 0.0;
    double max = 0.0;
};

struct SummaryStats {
    std::array<ColumnStats, kNumColumns> columns;
};

namespace detail {

// Quantile by linear interpolation between the closest order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= n) return sorted[n - 1];
    const double w = h - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

// Deterministic two-pass statistics per column.
inline SummaryStats summary_stats(const std::vector<CemoflowRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("summary_stats: empty input");
    SummaryStats stats;
    const std::size_t n = rows.size();
    std::vector<double> values(n);
    for (std::size_t c = 0; c < kNumColumns; ++c) {
        for (std::size_t i = 0; i < n; ++i) values[i] = rows[i].cols[c];
        ColumnStats& cs = stats.columns[c];
        cs.count = n;
        double sum = 0.0;
        for (double v : values) sum += v;
        cs.mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (double v : values) ss += (v - cs.mean) * (v - cs.mean);
        cs.std_dev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        cs.min = sorted.front();
        cs.max = sorted.back();
        cs.p25 = detail::quantile_sorted(sorted, 0.25);
        cs.p50 = detail::quantile_sorted(sorted, 0.50);
        cs.p75 = detail::quantile_sorted(sorted, 0.75);
    }
    return stats;
}

// Report with one object per column, fields matching the published table.
inline nlohmann::ordered_json stats_to_json(const SummaryStats& stats) {
    nlohmann::ordered_json j;
    for (std::size_t c = 0; c < kNumColumns; ++c) {
        const ColumnStats& cs = stats.columns[c];
        j[kColumnNames[c]] = {{"count", cs.count}, {"mean", cs.mean}, {"std", cs.std_dev},
                              {"min", cs.min},     {"p25", cs.p25},   {"p50", cs.p50},
                              {"p75", cs.p75},     {"max", cs.max}};
    }
    return j;
}

}  // namespace affectflow::cemoflow
