#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "affectflow/annotate.hpp"
#include "affectflow/common.hpp"
#include "affectflow/csv.hpp"
#include "affectflow/rng.hpp"

namespace affectflow::steering {

// One unit-norm anchor direction per emotion label in decoder embedding space.
struct AnchorSet {
    int d_emb = 0;
    std::array<std::vector<double>, kNumEmotions> anchors;

    void validate() const {
        for (const auto& a : anchors) {
            if (static_cast<int>(a.size()) != d_emb)
                throw std::invalid_argument("AnchorSet: anchor dimension mismatch");
            double norm_sq = 0.0;
            for (double v : a) norm_sq += v * v;
            if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-9)
                throw std::invalid_argument("AnchorSet: anchor is not unit norm");
        }
    }

    // Seeded random orthonormal set (modified Gram-Schmidt on Gaussian draws).
    static AnchorSet random_orthonormal(int d_emb, std::uint64_t seed) {
        if (d_emb < kNumEmotions)
            throw std::invalid_argument("AnchorSet: d_emb must be >= 6 for an orthonormal set");
        AnchorSet set;
        set.d_emb = d_emb;
        SplitMix64 rng(seed);
        for (int j = 0; j < kNumEmotions; ++j) {
            std::vector<double> v(static_cast<std::size_t>(d_emb));
            for (double& x : v) x = rng.normal();
            for (int prev = 0; prev < j; ++prev) {
                const auto& a = set.anchors[static_cast<std::size_t>(prev)];
                double dot = 0.0;
                for (int c = 0; c < d_emb; ++c) dot += v[static_cast<std::size_t>(c)] * a[static_cast<std::size_t>(c)];
                for (int c = 0; c < d_emb; ++c) v[static_cast<std::size_t>(c)] -= dot * a[static_cast<std::size_t>(c)];
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
            set.anchors[static_cast<std::size_t>(j)] = std::move(v);
        }
        return set;
    }

    // CSV, 6 rows x d_emb columns, no header. Rows close to unit norm are
    // renormalized exactly; anything clearly off is rejected.
    static AnchorSet load_csv(const std::string& path) {
        const auto rows = csv::read_file(path);
        if (rows.size() != kNumEmotions)
            throw input_error(path + ": expected 6 anchor rows, got " + std::to_string(rows.size()));
        AnchorSet set;
        set.d_emb = static_cast<int>(rows.front().size());
        for (std::size_t j = 0; j < kNumEmotions; ++j) {
            if (rows[j].size() != static_cast<std::size_t>(set.d_emb))
                throw input_error(path + ": ragged anchor rows");
            std::vector<double> v(rows[j].size());
            for (std::size_t c = 0; c < rows[j].size(); ++c)
                v[c] = csv::parse_double(rows[j][c], path + ", anchor row " + std::to_string(j));
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (std::abs(norm - 1.0) > 1e-6)
                throw input_error(path + ": anchor row " + std::to_string(j) +
                                  " has norm " + csv::format_double(norm) + ", expected 1");
            for (double& x : v) x /= norm;
            set.anchors[j] = std::move(v);
        }
        return set;
    }

    void save_csv(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw input_error("cannot write anchors: " + path);
        for (const auto& a : anchors) {
            for (std::size_t c = 0; c < a.size(); ++c)
                out << (c ? "," : "") << csv::format_double(a[c]);
            out << "\n";
        }
    }
};

struct SteeringVector {
    std::vector<double> u;             // unit direction in embedding space
    double strength = 0.0;             // lambda >= 0
    double source_t = 0.0;             // trajectory time this vector came from
    std::vector<double> source_state;  // latent state snapshot
};

// u = normalize(sum_j e_j * anchor_j); strength = lambda_base * (1 + |dh/dt|)
// so faster affective movement steers harder.
inline SteeringVector build_steering(const annotate::EmotionVector& emotions, double dhdt_norm,
                                     const AnchorSet& anchors, double lambda_base) {
    anchors.validate();
    if (!(dhdt_norm >= 0.0)) throw std::invalid_argument("build_steering: dhdt_norm must be >= 0");
    if (!(lambda_base >= 0.0)) throw std::invalid_argument("build_steering: lambda_base must be >= 0");
    SteeringVector sv;
    sv.u.assign(static_cast<std::size_t>(anchors.d_emb), 0.0);
    for (std::size_t j = 0; j < kNumEmotions; ++j)
        for (std::size_t c = 0; c < sv.u.size(); ++c) sv.u[c] += emotions.e[j] * anchors.anchors[j][c];
    double norm = 0.0;
    for (double v : sv.u) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 1e-12))
        throw std::invalid_argument("build_steering: emotion/anchor combination is the zero vector");
    for (double& v : sv.u) v /= norm;
    sv.strength = lambda_base * (1.0 + dhdt_norm);
    return sv;
}

// Additive latent intervention: hidden + lambda * u. strength 0 is a
// bit-exact identity.
inline std::vector<double> inject(const std::vector<double>& hidden, const SteeringVector& sv) {
    if (hidden.size() != sv.u.size())
        throw std::invalid_argument("inject: hidden/steering dimension mismatch");
    if (sv.strength == 0.0) return hidden;
    std::vector<double> out(hidden.size());
    for (std::size_t i = 0; i < hidden.size(); ++i) out[i] = hidden[i] + sv.strength * sv.u[i];
    return out;
}

// Deterministic baseline hidden state for (seed, layer, position): the mock
// decoder's layers are independent pseudo-random draws, so an injection at
// one layer cannot leak into any other layer's baseline.
inline std::vector<double> mock_hidden_state(std::uint64_t seed, int layer, int position,
                                             int d_emb) {
    SplitMix64 rng(derive_seed(seed, "mock.layer." + std::to_string(layer) + ".pos." +
                                         std::to_string(position)));
    std::vector<double> h(static_cast<std::size_t>(d_emb));
    for (double& v : h) v = rng.normal();
    return h;
}

struct MockLayerRecord {
    int layer = 0;
    std::vector<double> pre_norm;    // per position, before injection
    std::vector<double> post_norm;   // per position, after injection
    std::vector<double> shift_norm;  // per position, ||post - pre||
};

struct MockTrace {
    std::vector<MockLayerRecord> layers;
};

// Drives the injection contract: seeded pseudo-random hidden states for
// every (layer, position), with the steering vector added exactly at the
// declared layers. The trace shows the additive shift happens only there.
inline MockTrace mock_decoder_run(int seq_len, int layers, const SteeringVector& sv,
                                  const std::set<int>& inject_layers,
                                  std::uint64_t seed = 0x5eed) {
    if (seq_len < 1 || layers < 1)
        throw std::invalid_argument("mock_decoder_run: seq_len and layers must be >= 1");
    for (int l : inject_layers)
        if (l < 0 || l >= layers)
            throw std::invalid_argument("mock_decoder_run: inject layer " + std::to_string(l) +
                                        " out of range [0, " + std::to_string(layers) + ")");
    const int d_emb = static_cast<int>(sv.u.size());
    MockTrace trace;
    trace.layers.resize(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
        MockLayerRecord& rec = trace.layers[static_cast<std::size_t>(l)];
        rec.layer = l;
        const bool steer = inject_layers.count(l) > 0;
        for (int pos = 0; pos < seq_len; ++pos) {
            const std::vector<double> pre = mock_hidden_state(seed, l, pos, d_emb);
            const std::vector<double> post = steer ? inject(pre, sv) : pre;
            double pre_n = 0.0, post_n = 0.0, shift = 0.0;
            for (std::size_t i = 0; i < pre.size(); ++i) {
                pre_n += pre[i] * pre[i];
                post_n += post[i] * post[i];
                const double dv = post[i] - pre[i];
                shift += dv * dv;
            }
            rec.pre_norm.push_back(std::sqrt(pre_n));
            rec.post_norm.push_back(std::sqrt(post_n));
            rec.shift_norm.push_back(std::sqrt(shift));
        }
    }
    return trace;
}

// One exported steering record per utterance time.
struct ExportRecord {
    double t = 0.0;
    std::vector<double> u;
    double lambda = 0.0;
    annotate::EmotionVector emotions;
};

inline void write_steering_jsonl(const std::string& path,
                                 const std::vector<ExportRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write steering export: " + path);
    for (const auto& rec : records) {
        nlohmann::ordered_json j;
        j["t"] = rec.t;
        j["u"] = rec.u;
        j["lambda"] = rec.lambda;
        j["emotions"] = rec.emotions.e;
        out << j.dump() << "\n";
    }
}

}  // namespace affectflow::steering
