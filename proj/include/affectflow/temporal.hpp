#pragma once

#include <cmath>
#include <cstdlib>
#include <vector>

#include "affectflow/annotate.hpp"
#include "affectflow/common.hpp"
#include "affectflow/ingest.hpp"

namespace affectflow::temporal {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kTauMin = 1.0;      // clamp bounds for the delay column
inline constexpr double kTauMax = 86400.0;

// sin/cos pairs of the clock angles 2*pi*hh/24, 2*pi*mm/60, 2*pi*ss/60.
struct CyclicEncoding {
    double sin_h = 0.0, cos_h = 1.0;
    double sin_m = 0.0, cos_m = 1.0;
    double sin_s = 0.0, cos_s = 1.0;
};

struct TemporalRow {
    double tau = 0.0;        // delay since previous utterance, seconds
    double t_tilde = 0.0;    // cumulative time, seconds
    double delta_mag = 0.0;  // L1 shift between consecutive emotion vectors
    CyclicEncoding cyclic;
};

inline CyclicEncoding cyclic_transform(const ingest::Timestamp& t) {
    CyclicEncoding enc;
    const double ah = kTwoPi * t.hh / 24.0;
    const double am = kTwoPi * t.mm / 60.0;
    const double as = kTwoPi * t.ss / 60.0;
    enc.sin_h = std::sin(ah);
    enc.cos_h = std::cos(ah);
    enc.sin_m = std::sin(am);
    enc.cos_m = std::cos(am);
    enc.sin_s = std::sin(as);
    enc.cos_s = std::cos(as);
    return enc;
}

// Delay column from full seconds-since-epoch differences. tau_0 = 0, later
// rows are clamped to [1, 86400]. Operates on raw timestamps; cyclic
// encoding happens afterwards.
inline std::vector<double> compute_delay(const std::vector<ingest::UtteranceRecord>& records) {
    std::vector<double> taus(records.size(), 0.0);
    for (std::size_t i = 1; i < records.size(); ++i) {
        const double gap = static_cast<double>(std::llabs(
            records[i].timestamp.epoch_seconds() - records[i - 1].timestamp.epoch_seconds()));
        taus[i] = std::clamp(gap, kTauMin, kTauMax);
    }
    return taus;
}

// Delay read off the ss field alone (the literal column difference), kept
// for comparison against the full-timestamp reading.
inline std::vector<double> compute_delay_ss_field(
    const std::vector<ingest::UtteranceRecord>& records) {
    std::vector<double> taus(records.size(), 0.0);
    for (std::size_t i = 1; i < records.size(); ++i)
        taus[i] = std::abs(static_cast<double>(records[i].timestamp.ss) -
                           static_cast<double>(records[i - 1].timestamp.ss));
    return taus;
}

// Prefix sum of tau; strictly increasing after the first entry thanks to the
// clamp's lower bound.
inline std::vector<double> cumulative_time(const std::vector<double>& taus) {
    std::vector<double> t_tilde(taus.size(), 0.0);
    double running = 0.0;
    for (std::size_t i = 0; i < taus.size(); ++i) {
        running += taus[i];
        t_tilde[i] = running;
    }
    return t_tilde;
}

// L1 distance between consecutive emotion vectors; 0 for the first row.
inline std::vector<double> affective_magnitude(
    const std::vector<annotate::EmotionVector>& emotions) {
    if (emotions.empty()) throw std::invalid_argument("affective_magnitude: empty input");
    std::vector<double> delta(emotions.size(), 0.0);
    for (std::size_t i = 1; i < emotions.size(); ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < kNumEmotions; ++j)
            d += std::abs(emotions[i].e[j] - emotions[i - 1].e[j]);
        delta[i] = d;
    }
    return delta;
}

// Two-argument arctangent, result in (-pi, pi]. Recovers the clock angle
// modulo 2*pi from a (sin, cos) pair.
inline double arctan2_recombine(double sin_v, double cos_v) {
    if (sin_v == 0.0 && cos_v == 0.0)
        throw std::invalid_argument("arctan2_recombine: both arguments zero");
    const double a = std::atan2(sin_v, cos_v);
    constexpr double pi = 3.14159265358979323846264338328;
    return a == -pi ? pi : a;
}

// Full per-row temporal features for one chronologically sorted, annotated
// record list. Delay is computed from raw timestamps before any cyclic
// transform, as the pipeline ordering requires.
inline std::vector<TemporalRow> build_temporal_rows(
    const std::vector<ingest::UtteranceRecord>& records,
    const std::vector<annotate::EmotionVector>& emotions) {
    if (records.size() != emotions.size())
        throw std::invalid_argument("build_temporal_rows: records/emotions length mismatch");
    if (records.empty()) return {};
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].timestamp.epoch_seconds() < records[i - 1].timestamp.epoch_seconds())
            throw input_error("build_temporal_rows: records not chronologically sorted at index " +
                              std::to_string(i));
    }
    const auto taus = compute_delay(records);
    const auto t_tilde = cumulative_time(taus);
    const auto delta = affective_magnitude(emotions);
    std::vector<TemporalRow> rows(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        rows[i].tau = taus[i];
        rows[i].t_tilde = t_tilde[i];
        rows[i].delta_mag = delta[i];
        rows[i].cyclic = cyclic_transform(records[i].timestamp);
    }
    return rows;
}

}  // namespace affectflow::temporal
