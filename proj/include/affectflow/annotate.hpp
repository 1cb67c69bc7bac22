#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "affectflow/common.hpp"
#include "affectflow/csv.hpp"

namespace affectflow::annotate {

// 6 soft-label probabilities in the fixed label order
// sadness, joy, love, anger, fear, surprise. Sums to 1 within 1e-6.
struct EmotionVector {
    std::array<double, kNumEmotions> e{};

    double& operator[](std::size_t i) { return e[i]; }
    double operator[](std::size_t i) const { return e[i]; }

    double sum() const {
        double s = 0.0;
        for (double v : e) s += v;
        return s;
    }

    bool is_valid(double sum_tol = 1e-6) const {
        for (double v : e)
            if (!(v >= 0.0 && v <= 1.0)) return false;
        return std::abs(sum() - 1.0) <= sum_tol;
    }

    std::size_t argmax() const {
        return static_cast<std::size_t>(
            std::max_element(e.begin(), e.end()) - e.begin());
    }
};

struct LogitVector {
    std::array<double, kNumEmotions> z{};
};

enum class AnnotationSource { file, endpoint };

struct AnnotationConfig {
    double delta = 1.0;  // softmax temperature, > 0
    AnnotationSource source = AnnotationSource::file;
    std::string endpoint_url;
    std::string api_token;  // sent as a bearer token when non-empty
    int batch_size = 32;
    int max_concurrent = 4;
};

// p(e_i) = exp(z_i/delta) / sum_j exp(z_j/delta), computed with
// max-subtraction so large logits cannot overflow.
inline EmotionVector temperature_softmax(const LogitVector& logits, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("temperature_softmax: delta must be > 0");
    for (double z : logits.z)
        if (!std::isfinite(z)) throw std::invalid_argument("temperature_softmax: non-finite logit");

    std::array<double, kNumEmotions> scaled;
    for (std::size_t i = 0; i < kNumEmotions; ++i) scaled[i] = logits.z[i] / delta;
    const double zmax = *std::max_element(scaled.begin(), scaled.end());
    EmotionVector out;
    double denom = 0.0;
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
        out.e[i] = std::exp(scaled[i] - zmax);
        denom += out.e[i];
    }
    for (double& v : out.e) v /= denom;
    return out;
}

// Validates a raw annotation row. Sums within `renorm_tol` of 1 are
// renormalized; anything worse is rejected.
inline EmotionVector validate_emotion_row(EmotionVector v, const std::string& context,
                                          double renorm_tol = 1e-4) {
    for (double x : v.e) {
        if (!std::isfinite(x) || x < 0.0 || x > 1.0)
            throw input_error(context + ": component outside [0,1]");
    }
    const double s = v.sum();
    if (std::abs(s - 1.0) > renorm_tol)
        throw input_error(context + ": probabilities sum to " + csv::format_double(s) +
                          ", outside simplex tolerance");
    for (double& x : v.e) x /= s;
    return v;
}

// Precomputed annotations: CSV with columns e0..e5, one row per record in
// the same order as `records`.
template <class Record>
inline std::vector<EmotionVector> annotate_from_file(const std::vector<Record>& records,
                                                     const std::string& path) {
    const auto rows = csv::read_file(path);
    if (rows.empty()) throw input_error(path + ": missing header row");
    const auto& header = rows.front();
    std::array<std::size_t, kNumEmotions> cols;
    for (int j = 0; j < kNumEmotions; ++j) {
        const std::string name = "e" + std::to_string(j);
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw input_error(path + ": missing column '" + name + "'");
        cols[static_cast<std::size_t>(j)] = static_cast<std::size_t>(it - header.begin());
    }
    if (rows.size() - 1 != records.size())
        throw input_error(path + ": " + std::to_string(rows.size() - 1) + " annotation rows for " +
                          std::to_string(records.size()) + " records");

    std::vector<EmotionVector> out;
    out.reserve(records.size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::string context = path + ", row " + std::to_string(i);
        EmotionVector v;
        for (std::size_t j = 0; j < kNumEmotions; ++j) {
            if (cols[j] >= rows[i].size()) throw input_error(context + ": too few columns");
            v.e[j] = csv::parse_double(rows[i][cols[j]], context);
        }
        out.push_back(validate_emotion_row(v, context));
    }
    return out;
}

}  // namespace affectflow::annotate
