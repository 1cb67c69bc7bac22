#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "affectflow/common.hpp"
#include "affectflow/csv.hpp"

namespace affectflow::ingest {

// Wall-clock timestamp in the corpus format yyyy:MM:dd:hh:mm:ss.
struct Timestamp {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31
    int hh = 0;
    int mm = 0;
    int ss = 0;

    int seconds_of_day() const { return hh * 3600 + mm * 60 + ss; }

    // Days since 1970-01-01, proleptic Gregorian (Howard Hinnant's algorithm).
    std::int64_t days_from_civil() const {
        std::int64_t y = year;
        const int m = month;
        y -= m <= 2;
        const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                             static_cast<unsigned>(day) - 1u;
        const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
        return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
    }

    std::int64_t epoch_seconds() const { return days_from_civil() * 86400 + seconds_of_day(); }

    bool operator==(const Timestamp&) const = default;
};

namespace detail {
inline bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}
}  // namespace detail

// Strict parse of yyyy:MM:dd:hh:mm:ss (field widths 4:2:2:2:2:2).
// Throws input_error with `context` prefixed on any malformation.
inline Timestamp parse_timestamp(std::string_view s, const std::string& context) {
    auto fail = [&](const std::string& why) -> Timestamp {
        throw input_error(context + ": bad timestamp '" + std::string(s) + "' (" + why + ")");
    };
    std::array<std::string_view, 6> parts;
    std::size_t start = 0, n = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ':') {
            if (n == 6) return fail("too many fields");
            parts[n++] = s.substr(start, i - start);
            start = i + 1;
        }
    }
    if (n != 6) return fail("expected 6 fields");
    static constexpr std::size_t widths[6] = {4, 2, 2, 2, 2, 2};
    for (std::size_t i = 0; i < 6; ++i) {
        if (parts[i].size() != widths[i] || !detail::all_digits(parts[i]))
            return fail("field " + std::to_string(i) + " malformed");
    }
    auto to_int = [](std::string_view v) {
        int out = 0;
        for (char c : v) out = out * 10 + (c - '0');
        return out;
    };
    Timestamp t;
    t.year = to_int(parts[0]);
    t.month = to_int(parts[1]);
    t.day = to_int(parts[2]);
    t.hh = to_int(parts[3]);
    t.mm = to_int(parts[4]);
    t.ss = to_int(parts[5]);
    if (t.month < 1 || t.month > 12) return fail("month out of range");
    if (t.day < 1 || t.day > 31) return fail("day out of range");
    if (t.hh > 23) return fail("hour out of range");
    if (t.mm > 59) return fail("minute out of range");
    if (t.ss > 59) return fail("second out of range");
    return t;
}

struct UtteranceRecord {
    Timestamp timestamp;
    std::string conversation_id;
    std::string speaker_id;
    std::string text;
    bool is_noise = false;
};

// One conversation window: all records sharing a conversation_id, in order.
struct Segment {
    std::string conversation_id;
    std::vector<UtteranceRecord> records;
    Timestamp t_start;
    Timestamp t_end;
    bool has_noise() const {
        return std::any_of(records.begin(), records.end(),
                           [](const UtteranceRecord& r) { return r.is_noise; });
    }
};

// Column-name mapping for the raw corpus CSV.
struct CsvSchema {
    std::string timestamp = "timestamp";
    std::string conversation_id = "conversation_id";
    std::string speaker_id = "speaker_id";
    std::string text = "text";
};

struct RemovalReport {
    std::size_t removed_rows = 0;
    std::size_t flagged_windows = 0;
    std::size_t stripped_links = 0;
};

// Reads the corpus CSV. Header row required; rows keep file order and
// is_noise starts false. Malformed rows and missing columns are fatal,
// reported with their line number (header is line 1).
inline std::vector<UtteranceRecord> parse_corpus(const std::string& path,
                                                 const CsvSchema& schema = {}) {
    const auto rows = csv::read_file(path);
    if (rows.empty()) throw input_error(path + ": missing header row");
    const auto& header = rows.front();
    auto column = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw input_error(path + ": missing column '" + name + "'");
    };
    const std::size_t c_ts = column(schema.timestamp);
    const std::size_t c_conv = column(schema.conversation_id);
    const std::size_t c_spk = column(schema.speaker_id);
    const std::size_t c_text = column(schema.text);

    std::vector<UtteranceRecord> records;
    records.reserve(rows.size() - 1);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const std::string context = path + ", line " + std::to_string(i + 1);
        const std::size_t needed = std::max({c_ts, c_conv, c_spk, c_text}) + 1;
        if (row.size() < needed) throw input_error(context + ": too few columns");
        UtteranceRecord rec;
        rec.timestamp = parse_timestamp(row[c_ts], context);
        rec.conversation_id = row[c_conv];
        rec.speaker_id = row[c_spk];
        rec.text = row[c_text];
        records.push_back(std::move(rec));
    }
    return records;
}

namespace detail {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool link_starts_at(std::string_view text, std::size_t pos) {
    // Token start only: position 0 or preceded by whitespace, so e.g.
    // "awww." is not treated as a link.
    if (pos > 0 && !is_space(text[pos - 1])) return false;
    const auto rest = text.substr(pos);
    return rest.starts_with("http://") || rest.starts_with("https://") ||
           rest.starts_with("www.");
}

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

}  // namespace detail

// Removes web-link substrings (http://, https://, www. up to the next
// whitespace). Returns the stripped text and the number of links removed.
inline std::pair<std::string, std::size_t> strip_links(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t links = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (detail::link_starts_at(text, i)) {
            ++links;
            while (i < text.size() && !detail::is_space(text[i])) ++i;
        } else {
            out.push_back(text[i]);
            ++i;
        }
    }
    return {out, links};
}

// Noise cleaning: rows reduced to a single character (or nothing) once links
// are stripped are removed, and every surviving record in a conversation
// window that lost a row is flagged is_noise. Idempotent.
inline std::pair<std::vector<UtteranceRecord>, RemovalReport> clean(
    std::vector<UtteranceRecord> records) {
    RemovalReport report;
    std::vector<UtteranceRecord> kept;
    kept.reserve(records.size());
    std::map<std::string, bool> window_lost_row;

    for (auto& rec : records) {
        auto [stripped, links] = strip_links(rec.text);
        if (detail::trim(stripped).size() <= 1) {
            ++report.removed_rows;
            window_lost_row[rec.conversation_id] = true;
            continue;
        }
        report.stripped_links += links;
        rec.text = std::move(stripped);
        kept.push_back(std::move(rec));
    }
    for (auto& rec : kept) {
        auto it = window_lost_row.find(rec.conversation_id);
        if (it != window_lost_row.end()) rec.is_noise = true;
    }
    report.flagged_windows = window_lost_row.size();
    return {std::move(kept), report};
}

// Stable sort by epoch seconds; equal timestamps keep file order.
inline std::vector<UtteranceRecord> sort_chronologically(std::vector<UtteranceRecord> records) {
    std::stable_sort(records.begin(), records.end(),
                     [](const UtteranceRecord& a, const UtteranceRecord& b) {
                         return a.timestamp.epoch_seconds() < b.timestamp.epoch_seconds();
                     });
    return records;
}

// Groups records into one Segment per conversation_id, ordered by t_start
// (ties broken by first appearance). Record order inside each conversation
// is preserved and must be chronological.
inline std::vector<Segment> segment(const std::vector<UtteranceRecord>& records) {
    std::map<std::string, std::size_t> index;
    std::vector<Segment> segments;
    std::vector<std::size_t> first_seen;
    for (const auto& rec : records) {
        auto [it, inserted] = index.try_emplace(rec.conversation_id, segments.size());
        if (inserted) {
            segments.push_back(Segment{rec.conversation_id, {}, rec.timestamp, rec.timestamp});
            first_seen.push_back(first_seen.size());
        }
        Segment& seg = segments[it->second];
        if (!seg.records.empty() &&
            rec.timestamp.epoch_seconds() < seg.records.back().timestamp.epoch_seconds()) {
            throw input_error("conversation '" + rec.conversation_id +
                              "': timestamps not chronologically sorted");
        }
        seg.records.push_back(rec);
        seg.t_end = rec.timestamp;
    }
    std::vector<std::size_t> order(segments.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return segments[a].t_start.epoch_seconds() < segments[b].t_start.epoch_seconds();
    });
    std::vector<Segment> out;
    out.reserve(segments.size());
    for (std::size_t idx : order) out.push_back(std::move(segments[idx]));
    return out;
}

}  // namespace affectflow::ingest
