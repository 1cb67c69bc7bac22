#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "affectflow/annotate.hpp"
#include "affectflow/common.hpp"
#include "affectflow/odecore.hpp"
#include "affectflow/rng.hpp"

namespace affectflow::model {

using annotate::EmotionVector;

// Leaky continuous-time recurrent dynamics with per-neuron learnable time
// constants and a softmax readout:
//   dh/dt = (-h + W_h tanh(h) + W_x x + b) / exp(log_tau_c)
//   p     = softmax(W_out h + b_out)
struct DynamicsParams {
    int d = 16;  // latent dimension
    int k = 8;   // input feature count
    std::vector<double> w_h;        // d x d, row-major
    std::vector<double> w_x;        // d x k
    std::vector<double> b;          // d
    std::vector<double> log_tau_c;  // d, time constants are exp() of this
    std::vector<double> w_out;      // 6 x d
    std::vector<double> b_out;      // 6

    static DynamicsParams zeros(int d, int k) {
        DynamicsParams p;
        p.d = d;
        p.k = k;
        p.w_h.assign(static_cast<std::size_t>(d) * d, 0.0);
        p.w_x.assign(static_cast<std::size_t>(d) * k, 0.0);
        p.b.assign(d, 0.0);
        p.log_tau_c.assign(d, 0.0);
        p.w_out.assign(static_cast<std::size_t>(kNumEmotions) * d, 0.0);
        p.b_out.assign(kNumEmotions, 0.0);
        return p;
    }

    static DynamicsParams random_init(int d, int k, std::uint64_t seed, double tau0 = 2.0) {
        DynamicsParams p = zeros(d, k);
        SplitMix64 rng(seed);
        const double sh = 1.0 / std::sqrt(static_cast<double>(d));
        const double sx = 1.0 / std::sqrt(static_cast<double>(k));
        for (double& w : p.w_h) w = sh * rng.normal();
        for (double& w : p.w_x) w = sx * rng.normal();
        for (double& w : p.w_out) w = sh * rng.normal();
        for (double& v : p.log_tau_c) v = std::log(tau0);
        return p;
    }

    std::array<std::vector<double>*, 6> blocks() {
        return {&w_h, &w_x, &b, &log_tau_c, &w_out, &b_out};
    }
    std::array<const std::vector<double>*, 6> blocks() const {
        return {&w_h, &w_x, &b, &log_tau_c, &w_out, &b_out};
    }
    static std::array<const char*, 6> block_names() {
        return {"w_h", "w_x", "b", "log_tau_c", "w_out", "b_out"};
    }
};

using ParamGradients = DynamicsParams;  // same block layout

struct TrajectorySample {
    double t = 0.0;                 // on the segment's cumulative-time axis
    std::vector<double> features;   // cyclic(6) + tau + delta, plus optional lagged emotions
    EmotionVector target;
};

struct TrainConfig {
    double lr = 0.02;
    int batch_segments = 8;
    long max_steps = 5000;
    std::uint64_t seed = 42;
    int patience_window = 5;
    double stop_eps = 1e-2;
    int latent_dim = 16;
    bool lagged_emotion_inputs = false;  // feed previous-row emotions as extra inputs
};

inline void check_shapes(const DynamicsParams& p) {
    const std::size_t d = static_cast<std::size_t>(p.d);
    const std::size_t k = static_cast<std::size_t>(p.k);
    if (p.d < 1 || p.k < 1 || p.w_h.size() != d * d || p.w_x.size() != d * k ||
        p.b.size() != d || p.log_tau_c.size() != d ||
        p.w_out.size() != kNumEmotions * d || p.b_out.size() != kNumEmotions)
        throw std::invalid_argument("DynamicsParams: inconsistent shapes");
}

// dh/dt at state h with input features x (time-invariant given x).
inline std::vector<double> dynamics(const DynamicsParams& p, double /*t*/,
                                    const std::vector<double>& h,
                                    const std::vector<double>& x) {
    const std::size_t d = static_cast<std::size_t>(p.d);
    const std::size_t k = static_cast<std::size_t>(p.k);
    if (h.size() != d || x.size() != k)
        throw std::invalid_argument("dynamics: state/feature size mismatch");
    std::vector<double> s(d), out(d);
    for (std::size_t i = 0; i < d; ++i) s[i] = std::tanh(h[i]);
    for (std::size_t i = 0; i < d; ++i) {
        double acc = -h[i] + p.b[i];
        const double* wh = &p.w_h[i * d];
        for (std::size_t j = 0; j < d; ++j) acc += wh[j] * s[j];
        const double* wx = &p.w_x[i * k];
        for (std::size_t j = 0; j < k; ++j) acc += wx[j] * x[j];
        out[i] = acc / std::exp(p.log_tau_c[i]);
    }
    for (double v : out)
        if (!std::isfinite(v)) throw numeric_error("dynamics: non-finite derivative");
    return out;
}

namespace detail {

inline std::array<double, kNumEmotions> softmax6(const std::array<double, kNumEmotions>& a) {
    const double zmax = *std::max_element(a.begin(), a.end());
    std::array<double, kNumEmotions> out{};
    double denom = 0.0;
    for (std::size_t j = 0; j < kNumEmotions; ++j) {
        out[j] = std::exp(a[j] - zmax);
        denom += out[j];
    }
    for (double& v : out) v /= denom;
    return out;
}

inline std::array<double, kNumEmotions> readout_logits(const DynamicsParams& p,
                                                       const std::vector<double>& h) {
    std::array<double, kNumEmotions> a{};
    const std::size_t d = static_cast<std::size_t>(p.d);
    for (std::size_t j = 0; j < kNumEmotions; ++j) {
        double acc = p.b_out[j];
        const double* w = &p.w_out[j * d];
        for (std::size_t c = 0; c < d; ++c) acc += w[c] * h[c];
        a[j] = acc;
    }
    return a;
}

}  // namespace detail

inline EmotionVector readout(const DynamicsParams& p, const std::vector<double>& h) {
    EmotionVector out;
    out.e = detail::softmax6(detail::readout_logits(p, h));
    return out;
}

enum class IntegrationMode { fixed_rk4, adaptive_dopri5 };

struct ForwardResult {
    std::vector<EmotionVector> predictions;
    std::vector<std::vector<double>> states;  // latent h at each sample time
    long nfe = 0;
};

namespace detail {

inline void check_samples(const DynamicsParams& p, const std::vector<TrajectorySample>& samples) {
    if (samples.empty()) throw std::invalid_argument("forward: empty sample list");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].features.size() != static_cast<std::size_t>(p.k))
            throw std::invalid_argument("forward: feature width mismatch");
        if (i > 0 && !(samples[i].t > samples[i - 1].t))
            throw std::invalid_argument("forward: sample times must be strictly increasing");
    }
}

inline ode::VectorField frozen_field(const DynamicsParams& p, const std::vector<double>& x,
                                     long& fev_counter) {
    ode::VectorField f;
    f.dim = p.d;
    f.eval = [&p, &x, &fev_counter](double /*t*/, std::span<const double> y,
                                    std::span<double> dydt) {
        ++fev_counter;
        const std::size_t d = static_cast<std::size_t>(p.d);
        const std::size_t k = static_cast<std::size_t>(p.k);
        for (std::size_t i = 0; i < d; ++i) {
            double acc = -y[i] + p.b[i];
            const double* wh = &p.w_h[i * d];
            for (std::size_t j = 0; j < d; ++j) acc += wh[j] * std::tanh(y[j]);
            const double* wx = &p.w_x[i * k];
            for (std::size_t j = 0; j < k; ++j) acc += wx[j] * x[j];
            dydt[i] = acc / std::exp(p.log_tau_c[i]);
        }
    };
    return f;
}

}  // namespace detail

// Integrates the latent state across the sample grid, holding features
// constant over each interval (zero-order hold on the left sample), and
// reads out an emotion vector at every sample time. NFE counts evaluations
// of the dynamics: 4 per interval for fixed RK4, the solver's count for
// adaptive mode, 0 for a single sample.
inline ForwardResult forward_trajectory(const DynamicsParams& p,
                                        const std::vector<TrajectorySample>& samples,
                                        IntegrationMode mode, std::vector<double> h_state,
                                        const ode::SolverConfig& solver_cfg = {}) {
    check_shapes(p);
    detail::check_samples(p, samples);
    if (h_state.size() != static_cast<std::size_t>(p.d))
        throw std::invalid_argument("forward: h_init size mismatch");

    ForwardResult result;
    result.predictions.push_back(readout(p, h_state));
    result.states.push_back(h_state);
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
        const double t0 = samples[i].t;
        const double t1 = samples[i + 1].t;
        if (mode == IntegrationMode::fixed_rk4) {
            long fev = 0;
            const ode::VectorField f = detail::frozen_field(p, samples[i].features, fev);
            h_state = ode::rk4_step(f, t0, h_state, t1 - t0);
            result.nfe += fev;
        } else {
            long fev = 0;
            const ode::VectorField f = detail::frozen_field(p, samples[i].features, fev);
            ode::SolverConfig cfg = solver_cfg;
            cfg.h_init = std::min(cfg.h_init, t1 - t0);
            cfg.h_min = std::min(cfg.h_min, cfg.h_init);
            const ode::OdeSolution sol = ode::dopri5_solve(f, t0, t1, h_state, cfg);
            h_state = sol.states.back();
            result.nfe += fev;
        }
        result.predictions.push_back(readout(p, h_state));
        result.states.push_back(h_state);
    }
    return result;
}

// Euler baseline: one update per interval, NFE = 1 per interval.
inline ForwardResult discrete_baseline(const DynamicsParams& p,
                                       const std::vector<TrajectorySample>& samples,
                                       std::vector<double> h_state) {
    check_shapes(p);
    detail::check_samples(p, samples);
    ForwardResult result;
    result.predictions.push_back(readout(p, h_state));
    result.states.push_back(h_state);
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
        const double dt = samples[i + 1].t - samples[i].t;
        const std::vector<double> dh = dynamics(p, samples[i].t, h_state, samples[i].features);
        for (std::size_t c = 0; c < h_state.size(); ++c) h_state[c] += dt * dh[c];
        result.nfe += 1;
        result.predictions.push_back(readout(p, h_state));
        result.states.push_back(h_state);
    }
    return result;
}

// Mean squared error over samples and the 6 emotion components.
inline double loss(const std::vector<EmotionVector>& predictions,
                   const std::vector<EmotionVector>& targets) {
    if (predictions.size() != targets.size())
        throw std::invalid_argument("loss: prediction/target length mismatch");
    if (predictions.empty()) throw std::invalid_argument("loss: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        for (std::size_t j = 0; j < kNumEmotions; ++j) {
            const double r = predictions[i].e[j] - targets[i].e[j];
            acc += r * r;
        }
    return acc / (static_cast<double>(predictions.size()) * kNumEmotions);
}

struct BackwardResult {
    ParamGradients grads;
    double loss_value = 0.0;
    std::vector<EmotionVector> predictions;
};

namespace detail {

struct IntervalTrace {
    std::vector<double> h0;                    // state at the interval start
    std::array<std::vector<double>, 4> k;      // RK4 stage derivatives
};

// VJP of f(h, x) = (-h + W_h tanh(h) + W_x x + b) / tau_c.
// upstream: dL/df. k_val: the stored f output (for the log_tau gradient).
// Returns dL/dh and accumulates parameter gradients.
inline std::vector<double> field_vjp(const DynamicsParams& p, const std::vector<double>& h_in,
                                     const std::vector<double>& x,
                                     const std::vector<double>& k_val,
                                     const std::vector<double>& upstream, ParamGradients& g) {
    const std::size_t d = static_cast<std::size_t>(p.d);
    const std::size_t k = static_cast<std::size_t>(p.k);
    std::vector<double> w(d), s(d), gh(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        w[i] = upstream[i] / std::exp(p.log_tau_c[i]);
        s[i] = std::tanh(h_in[i]);
    }
    for (std::size_t i = 0; i < d; ++i) {
        g.b[i] += w[i];
        g.log_tau_c[i] += -upstream[i] * k_val[i];
        double* gwh = &g.w_h[i * d];
        for (std::size_t j = 0; j < d; ++j) gwh[j] += w[i] * s[j];
        double* gwx = &g.w_x[i * k];
        for (std::size_t j = 0; j < k; ++j) gwx[j] += w[i] * x[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
        double acc = -w[j];
        const double sech2 = 1.0 - s[j] * s[j];
        double wsum = 0.0;
        for (std::size_t i = 0; i < d; ++i) wsum += p.w_h[i * d + j] * w[i];
        acc += sech2 * wsum;
        gh[j] = acc;
    }
    return gh;
}

}  // namespace detail

// Exact reverse-mode gradients of the MSE loss through the fixed-RK4 unroll,
// the tanh recurrence, the softmax readout and the time-constant exponential.
// Discretize-then-optimize: the gradient is exact for the discrete objective
// forward_trajectory(fixed_rk4) computes.
inline BackwardResult backward(const DynamicsParams& p,
                               const std::vector<TrajectorySample>& samples,
                               const std::vector<double>& h_init) {
    check_shapes(p);
    detail::check_samples(p, samples);
    const std::size_t d = static_cast<std::size_t>(p.d);
    const std::size_t S = samples.size();

    // forward, retaining stage values
    std::vector<std::vector<double>> h_at(S);
    std::vector<detail::IntervalTrace> intervals(S - 1);
    h_at[0] = h_init;
    for (std::size_t i = 0; i + 1 < S; ++i) {
        const double dt = samples[i + 1].t - samples[i].t;
        const std::vector<double>& x = samples[i].features;
        detail::IntervalTrace& tr = intervals[i];
        tr.h0 = h_at[i];
        std::vector<double> tmp(d);
        tr.k[0] = dynamics(p, 0.0, tr.h0, x);
        for (std::size_t c = 0; c < d; ++c) tmp[c] = tr.h0[c] + 0.5 * dt * tr.k[0][c];
        tr.k[1] = dynamics(p, 0.0, tmp, x);
        for (std::size_t c = 0; c < d; ++c) tmp[c] = tr.h0[c] + 0.5 * dt * tr.k[1][c];
        tr.k[2] = dynamics(p, 0.0, tmp, x);
        for (std::size_t c = 0; c < d; ++c) tmp[c] = tr.h0[c] + dt * tr.k[2][c];
        tr.k[3] = dynamics(p, 0.0, tmp, x);
        h_at[i + 1].resize(d);
        for (std::size_t c = 0; c < d; ++c)
            h_at[i + 1][c] = tr.h0[c] + dt / 6.0 *
                                            (tr.k[0][c] + 2.0 * tr.k[1][c] + 2.0 * tr.k[2][c] +
                                             tr.k[3][c]);
        for (double v : h_at[i + 1])
            if (!std::isfinite(v))
                throw numeric_error("backward: non-finite state in forward unroll");
    }

    BackwardResult result;
    result.grads = ParamGradients::zeros(p.d, p.k);
    result.predictions.reserve(S);
    std::vector<std::array<double, kNumEmotions>> probs(S);
    for (std::size_t i = 0; i < S; ++i) {
        probs[i] = detail::softmax6(detail::readout_logits(p, h_at[i]));
        EmotionVector ev;
        ev.e = probs[i];
        result.predictions.push_back(ev);
        for (std::size_t j = 0; j < kNumEmotions; ++j) {
            const double r = probs[i][j] - samples[i].target.e[j];
            result.loss_value += r * r;
        }
    }
    result.loss_value /= static_cast<double>(S) * kNumEmotions;

    ParamGradients& g = result.grads;
    const double loss_scale = 2.0 / (static_cast<double>(S) * kNumEmotions);

    std::vector<double> gh(d, 0.0);
    for (std::size_t ii = S; ii-- > 0;) {
        // readout contribution at sample ii
        std::array<double, kNumEmotions> gp{}, ga{};
        double dot = 0.0;
        for (std::size_t j = 0; j < kNumEmotions; ++j) {
            gp[j] = loss_scale * (probs[ii][j] - samples[ii].target.e[j]);
            dot += gp[j] * probs[ii][j];
        }
        for (std::size_t j = 0; j < kNumEmotions; ++j) ga[j] = probs[ii][j] * (gp[j] - dot);
        for (std::size_t j = 0; j < kNumEmotions; ++j) {
            g.b_out[j] += ga[j];
            double* gw = &g.w_out[j * d];
            for (std::size_t c = 0; c < d; ++c) gw[c] += ga[j] * h_at[ii][c];
        }
        for (std::size_t c = 0; c < d; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < kNumEmotions; ++j) acc += p.w_out[j * d + c] * ga[j];
            gh[c] += acc;
        }

        if (ii == 0) break;

        // pull gh back through interval ii-1
        const detail::IntervalTrace& tr = intervals[ii - 1];
        const double dt = samples[ii].t - samples[ii - 1].t;
        const std::vector<double>& x = samples[ii - 1].features;

        std::vector<double> u1(d), u2(d), u3(d), u4(d), gh_start = gh, stage_in(d);
        for (std::size_t c = 0; c < d; ++c) {
            u1[c] = dt / 6.0 * gh[c];
            u2[c] = dt / 3.0 * gh[c];
            u3[c] = dt / 3.0 * gh[c];
            u4[c] = dt / 6.0 * gh[c];
        }
        // k4 = f(h0 + dt*k3)
        for (std::size_t c = 0; c < d; ++c) stage_in[c] = tr.h0[c] + dt * tr.k[2][c];
        std::vector<double> gs = detail::field_vjp(p, stage_in, x, tr.k[3], u4, g);
        for (std::size_t c = 0; c < d; ++c) {
            gh_start[c] += gs[c];
            u3[c] += dt * gs[c];
        }
        // k3 = f(h0 + dt/2*k2)
        for (std::size_t c = 0; c < d; ++c) stage_in[c] = tr.h0[c] + 0.5 * dt * tr.k[1][c];
        gs = detail::field_vjp(p, stage_in, x, tr.k[2], u3, g);
        for (std::size_t c = 0; c < d; ++c) {
            gh_start[c] += gs[c];
            u2[c] += 0.5 * dt * gs[c];
        }
        // k2 = f(h0 + dt/2*k1)
        for (std::size_t c = 0; c < d; ++c) stage_in[c] = tr.h0[c] + 0.5 * dt * tr.k[0][c];
        gs = detail::field_vjp(p, stage_in, x, tr.k[1], u2, g);
        for (std::size_t c = 0; c < d; ++c) {
            gh_start[c] += gs[c];
            u1[c] += 0.5 * dt * gs[c];
        }
        // k1 = f(h0)
        gs = detail::field_vjp(p, tr.h0, x, tr.k[0], u1, g);
        for (std::size_t c = 0; c < d; ++c) gh_start[c] += gs[c];

        gh = std::move(gh_start);
    }

    for (const auto* block : g.blocks())
        for (double v : *block)
            if (!std::isfinite(v)) throw numeric_error("backward: non-finite gradient");
    return result;
}

// True when the last `window` losses all sit within eps of the running
// minimum over the whole history.
inline bool should_stop(const std::vector<double>& history, int window, double eps) {
    if (window < 1) throw std::invalid_argument("should_stop: window must be >= 1");
    if (history.size() < static_cast<std::size_t>(window)) return false;
    const double lmin = *std::min_element(history.begin(), history.end());
    for (std::size_t i = history.size() - static_cast<std::size_t>(window); i < history.size(); ++i)
        if (std::abs(history[i] - lmin) > eps) return false;
    return true;
}

struct AdamState {
    long t = 0;
    ParamGradients m;
    ParamGradients v;

    static AdamState zeros(int d, int k) {
        AdamState s;
        s.m = ParamGradients::zeros(d, k);
        s.v = ParamGradients::zeros(d, k);
        return s;
    }
};

inline void adam_update(DynamicsParams& params, const ParamGradients& grads, AdamState& state,
                        double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    auto pb = params.blocks();
    auto gb = grads.blocks();
    auto mb = state.m.blocks();
    auto vb = state.v.blocks();
    for (std::size_t blk = 0; blk < pb.size(); ++blk) {
        std::vector<double>& theta = *pb[blk];
        const std::vector<double>& g = *gb[blk];
        std::vector<double>& m = *mb[blk];
        std::vector<double>& v = *vb[blk];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
}

struct TrainResult {
    DynamicsParams params;         // best (lowest-loss) parameters seen
    std::vector<double> loss_history;
    bool early_stopped = false;
    long steps_run = 0;
};

struct ResumeState {
    DynamicsParams params;
    AdamState adam;
    long step0 = 0;
};

// Gradient-descent loop (Adam) over shuffled segment batches. Stops when
// the early-stopping rule fires or max_steps is reached. Deterministic for
// a fixed (cfg, seed, dataset).
inline TrainResult train(const std::vector<std::vector<TrajectorySample>>& dataset,
                         const TrainConfig& cfg,
                         const std::optional<ResumeState>& resume = std::nullopt,
                         AdamState* adam_out = nullptr) {
    if (dataset.empty()) throw input_error("train: empty dataset");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
    if (cfg.batch_segments < 1) throw std::invalid_argument("train: batch_segments must be >= 1");
    const std::size_t feat = dataset.front().front().features.size();
    for (const auto& seg : dataset) {
        if (seg.empty()) throw input_error("train: dataset contains an empty segment");
        for (const auto& s : seg)
            if (s.features.size() != feat) throw input_error("train: inconsistent feature width");
    }

    const int d = resume ? resume->params.d : cfg.latent_dim;
    const int k = static_cast<int>(feat);
    DynamicsParams params = resume ? resume->params
                                   : DynamicsParams::random_init(d, k, derive_seed(cfg.seed, "train.init"));
    if (params.k != k) throw input_error("train: checkpoint feature width does not match dataset");
    AdamState adam = resume ? resume->adam : AdamState::zeros(d, k);
    const std::vector<double> h0(static_cast<std::size_t>(d), 0.0);

    SplitMix64 shuffle_rng(derive_seed(cfg.seed, "train.shuffle"));
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch_n = std::min<std::size_t>(dataset.size(),
                                                      static_cast<std::size_t>(cfg.batch_segments));
    std::size_t pos = order.size();  // forces an initial shuffle

    TrainResult result;
    DynamicsParams best = params;
    double best_loss = std::numeric_limits<double>::infinity();

    for (long step = 0; step < cfg.max_steps; ++step) {
        if (pos + batch_n > order.size()) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.below(i)]);
            pos = 0;
        }
        std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                       order.begin() + static_cast<std::ptrdiff_t>(pos + batch_n));
        pos += batch_n;
        std::sort(batch.begin(), batch.end());  // fixed accumulation order

        ParamGradients grads = ParamGradients::zeros(d, k);
        double batch_loss = 0.0;
        for (std::size_t idx : batch) {
            BackwardResult r = backward(params, dataset[idx], h0);
            batch_loss += r.loss_value;
            auto gb = grads.blocks();
            auto rb = r.grads.blocks();
            for (std::size_t blk = 0; blk < gb.size(); ++blk)
                for (std::size_t i = 0; i < gb[blk]->size(); ++i)
                    (*gb[blk])[i] += (*rb[blk])[i];
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        batch_loss *= inv;
        for (auto* blk : grads.blocks())
            for (double& v : *blk) v *= inv;

        if (!std::isfinite(batch_loss))
            throw numeric_error("train: loss diverged at step " + std::to_string(step));

        result.loss_history.push_back(batch_loss);
        result.steps_run = step + 1;
        if (batch_loss < best_loss) {
            best_loss = batch_loss;
            best = params;
        }
        if (should_stop(result.loss_history, cfg.patience_window, cfg.stop_eps)) {
            result.early_stopped = true;
            break;
        }
        adam_update(params, grads, adam, cfg.lr);
    }

    result.params = std::move(best);
    if (adam_out) *adam_out = adam;
    return result;
}

// ---- checkpoint (versioned JSON, lossless double round-trip) ----

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::ordered_json params_to_json(const DynamicsParams& p) {
    nlohmann::ordered_json j;
    auto blocks = p.blocks();
    auto names = DynamicsParams::block_names();
    for (std::size_t i = 0; i < blocks.size(); ++i) j[names[i]] = *blocks[i];
    return j;
}

inline void params_from_json(const nlohmann::json& j, DynamicsParams& p) {
    auto blocks = p.blocks();
    auto names = DynamicsParams::block_names();
    for (std::size_t i = 0; i < blocks.size(); ++i)
        *blocks[i] = j.at(names[i]).get<std::vector<double>>();
    check_shapes(p);
}

struct Checkpoint {
    DynamicsParams params;
    AdamState adam;
    TrainConfig cfg;
    long step = 0;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::ordered_json j;
    j["format"] = "affectflow-checkpoint";
    j["version"] = kCheckpointVersion;
    j["d"] = ckpt.params.d;
    j["k"] = ckpt.params.k;
    j["seed"] = ckpt.cfg.seed;
    j["step"] = ckpt.step;
    j["train_config"] = {{"lr", ckpt.cfg.lr},
                         {"batch_segments", ckpt.cfg.batch_segments},
                         {"max_steps", ckpt.cfg.max_steps},
                         {"patience_window", ckpt.cfg.patience_window},
                         {"stop_eps", ckpt.cfg.stop_eps},
                         {"latent_dim", ckpt.cfg.latent_dim},
                         {"lagged_emotion_inputs", ckpt.cfg.lagged_emotion_inputs}};
    j["params"] = params_to_json(ckpt.params);
    j["adam"] = {{"t", ckpt.adam.t},
                 {"m", params_to_json(ckpt.adam.m)},
                 {"v", params_to_json(ckpt.adam.v)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write checkpoint: " + path);
    out << j.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw input_error(path + ": invalid checkpoint JSON: " + std::string(e.what()));
    }
    if (j.value("format", "") != "affectflow-checkpoint")
        throw input_error(path + ": not an affectflow checkpoint");
    if (j.value("version", -1) != kCheckpointVersion)
        throw input_error(path + ": unsupported checkpoint version");
    Checkpoint ckpt;
    const int d = j.at("d").get<int>();
    const int k = j.at("k").get<int>();
    ckpt.params = DynamicsParams::zeros(d, k);
    params_from_json(j.at("params"), ckpt.params);
    ckpt.step = j.at("step").get<long>();
    const auto& tc = j.at("train_config");
    ckpt.cfg.lr = tc.at("lr").get<double>();
    ckpt.cfg.batch_segments = tc.at("batch_segments").get<int>();
    ckpt.cfg.max_steps = tc.at("max_steps").get<long>();
    ckpt.cfg.patience_window = tc.at("patience_window").get<int>();
    ckpt.cfg.stop_eps = tc.at("stop_eps").get<double>();
    ckpt.cfg.latent_dim = tc.at("latent_dim").get<int>();
    ckpt.cfg.lagged_emotion_inputs = tc.at("lagged_emotion_inputs").get<bool>();
    ckpt.cfg.seed = j.at("seed").get<std::uint64_t>();
    ckpt.adam = AdamState::zeros(d, k);
    if (j.contains("adam")) {
        ckpt.adam.t = j["adam"].at("t").get<long>();
        params_from_json(j["adam"].at("m"), ckpt.adam.m);
        params_from_json(j["adam"].at("v"), ckpt.adam.v);
    }
    return ckpt;
}

}  // namespace affectflow::model
