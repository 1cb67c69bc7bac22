#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "affectflow/common.hpp"

namespace affectflow::spline {

// One cubic Hermite piece: knot times, values and slopes.
struct HermiteSegment {
    double t_i = 0.0, t_ip1 = 1.0;
    double v_i = 0.0, v_ip1 = 0.0;
    double m_i = 0.0, m_ip1 = 0.0;
};

struct HermiteBasis {
    double h00, h10, h01, h11;
};

// Basis at local coordinate x in [0,1]. Written so h00 + h01 == 1 holds
// exactly in floating point (h00 is literally 1 - h01) and the endpoint
// identities h00(0)=1, h01(1)=1 are exact.
inline HermiteBasis hermite_basis(double x) {
    HermiteBasis b;
    b.h01 = x * x * (3.0 - 2.0 * x);          // -2x^3 + 3x^2
    b.h00 = 1.0 - b.h01;                      //  2x^3 - 3x^2 + 1
    b.h10 = x * (1.0 - x) * (1.0 - x);        //  x^3 - 2x^2 + x
    b.h11 = x * x * (x - 1.0);                //  x^3 - x^2
    return b;
}

inline double hermite_eval_local(const HermiteSegment& seg, double x) {
    const double dt = seg.t_ip1 - seg.t_i;
    const HermiteBasis b = hermite_basis(x);
    return b.h00 * seg.v_i + b.h10 * dt * seg.m_i + b.h01 * seg.v_ip1 + b.h11 * dt * seg.m_ip1;
}

// f(t) for t in [t_i, t_ip1]; no extrapolation.
inline double hermite_eval(const HermiteSegment& seg, double t) {
    if (!(seg.t_ip1 > seg.t_i)) throw std::invalid_argument("hermite_eval: knot times not increasing");
    if (t < seg.t_i || t > seg.t_ip1)
        throw std::invalid_argument("hermite_eval: t outside segment");
    return hermite_eval_local(seg, (t - seg.t_i) / (seg.t_ip1 - seg.t_i));
}

// df/dt; basis derivatives h00'=6x^2-6x, h10'=3x^2-4x+1, h01'=-h00', h11'=3x^2-2x.
inline double hermite_deriv(const HermiteSegment& seg, double t) {
    if (t < seg.t_i || t > seg.t_ip1)
        throw std::invalid_argument("hermite_deriv: t outside segment");
    const double dt = seg.t_ip1 - seg.t_i;
    const double x = (t - seg.t_i) / dt;
    const double dh00 = 6.0 * x * x - 6.0 * x;
    const double dh10 = 3.0 * x * x - 4.0 * x + 1.0;
    const double dh11 = 3.0 * x * x - 2.0 * x;
    return (dh00 * seg.v_i - dh00 * seg.v_ip1) / dt + dh10 * seg.m_i + dh11 * seg.m_ip1;
}

// Exact integral of the cubic over its segment:
// dt * [ (v_i + v_ip1)/2 + dt * (m_i - m_ip1)/12 ].
inline double hermite_integral(const HermiteSegment& seg) {
    const double dt = seg.t_ip1 - seg.t_i;
    return dt * (0.5 * (seg.v_i + seg.v_ip1) + dt * (seg.m_i - seg.m_ip1) / 12.0);
}

// Finite-difference slope estimates: forward at the first knot, central in
// the interior, backward at the last knot.
inline std::vector<double> estimate_slopes(const std::vector<double>& t,
                                           const std::vector<double>& v) {
    if (t.size() != v.size()) throw std::invalid_argument("estimate_slopes: length mismatch");
    const std::size_t n = t.size();
    if (n < 2) throw std::invalid_argument("estimate_slopes: need at least 2 points");
    for (std::size_t i = 1; i < n; ++i)
        if (!(t[i] > t[i - 1])) throw std::invalid_argument("estimate_slopes: t not strictly increasing");

    std::vector<double> m(n);
    m[0] = (v[1] - v[0]) / (t[1] - t[0]);
    for (std::size_t i = 1; i + 1 < n; ++i)
        m[i] = (v[i + 1] - v[i - 1]) / (t[i + 1] - t[i - 1]);
    m[n - 1] = (v[n - 1] - v[n - 2]) / (t[n - 1] - t[n - 2]);
    return m;
}

// Piecewise cubic Hermite curve over one temporal segment. C1 inside the
// segment (shared knot slopes); joins between segments are the caller's
// business and stay C0. A single knot degenerates to a constant curve.
struct SplineCurve {
    std::string column_name;
    std::vector<double> knot_t;
    std::vector<double> knot_v;
    std::vector<double> knot_m;  // empty for the single-knot case

    std::size_t piece_count() const { return knot_t.size() < 2 ? 0 : knot_t.size() - 1; }
    double t_min() const { return knot_t.front(); }
    double t_max() const { return knot_t.back(); }

    HermiteSegment piece(std::size_t k) const {
        return HermiteSegment{knot_t[k], knot_t[k + 1], knot_v[k], knot_v[k + 1],
                              knot_m[k], knot_m[k + 1]};
    }

    double eval(double t) const {
        if (knot_t.size() == 1) return knot_v[0];
        if (t < t_min() || t > t_max())
            throw std::invalid_argument("SplineCurve::eval: t outside segment");
        // index of the piece containing t
        auto it = std::upper_bound(knot_t.begin(), knot_t.end(), t);
        std::size_t k = static_cast<std::size_t>(it - knot_t.begin());
        k = (k == 0) ? 0 : k - 1;
        if (k >= piece_count()) k = piece_count() - 1;
        return hermite_eval(piece(k), t);
    }
};

inline SplineCurve fit_segment(const std::vector<double>& t, const std::vector<double>& v,
                               std::string column_name = {}) {
    if (t.size() != v.size()) throw std::invalid_argument("fit_segment: length mismatch");
    if (t.empty()) throw std::invalid_argument("fit_segment: empty knot list");
    SplineCurve curve;
    curve.column_name = std::move(column_name);
    curve.knot_t = t;
    curve.knot_v = v;
    if (t.size() >= 2) curve.knot_m = estimate_slopes(t, v);
    return curve;
}

// Dense sampling: `factor` equally spaced local-x points per piece, sharing
// endpoints at joins. Total points = factor*(n-1) + 1.
inline std::pair<std::vector<double>, std::vector<double>> resample(const SplineCurve& curve,
                                                                    int factor) {
    if (factor < 1) throw std::invalid_argument("resample: factor must be >= 1");
    std::vector<double> ts, vs;
    if (curve.knot_t.size() == 1) {
        return {{curve.knot_t[0]}, {curve.knot_v[0]}};
    }
    const std::size_t pieces = curve.piece_count();
    ts.reserve(pieces * static_cast<std::size_t>(factor) + 1);
    vs.reserve(ts.capacity());
    for (std::size_t k = 0; k < pieces; ++k) {
        const HermiteSegment seg = curve.piece(k);
        for (int j = 0; j < factor; ++j) {
            if (j == 0) {
                ts.push_back(seg.t_i);
                vs.push_back(seg.v_i);  // knot rows reproduce raw values exactly
            } else {
                const double x = static_cast<double>(j) / factor;
                ts.push_back(seg.t_i + x * (seg.t_ip1 - seg.t_i));
                vs.push_back(hermite_eval_local(seg, x));
            }
        }
    }
    ts.push_back(curve.knot_t.back());
    vs.push_back(curve.knot_v.back());
    return {std::move(ts), std::move(vs)};
}

// Natural cubic spline baseline (C2, zero second derivative at the ends).
// S_i(t) = a_i + b_i*dt + c_i*dt^2 + d_i*dt^3 with dt = t - t_i.
struct NaturalCubicPiece {
    double t_i = 0.0, t_ip1 = 1.0;
    double a_i = 0.0, b_i = 0.0, c_i = 0.0, d_i = 0.0;
};

struct NaturalCubicCurve {
    std::string column_name;
    std::vector<NaturalCubicPiece> pieces;
    std::vector<double> knot_c;  // c coefficients at every knot (c_0 = c_n = 0)

    double t_min() const { return pieces.front().t_i; }
    double t_max() const { return pieces.back().t_ip1; }

    double eval(double t) const {
        if (t < t_min() || t > t_max())
            throw std::invalid_argument("NaturalCubicCurve::eval: t outside segment");
        std::size_t k = pieces.size() - 1;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            if (t <= pieces[i].t_ip1) {
                k = i;
                break;
            }
        }
        const NaturalCubicPiece& p = pieces[k];
        const double dt = t - p.t_i;
        return p.a_i + dt * (p.b_i + dt * (p.c_i + dt * p.d_i));
    }

    double second_deriv(double t) const {
        if (t < t_min() || t > t_max())
            throw std::invalid_argument("NaturalCubicCurve::second_deriv: t outside segment");
        std::size_t k = pieces.size() - 1;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            if (t <= pieces[i].t_ip1) {
                k = i;
                break;
            }
        }
        const NaturalCubicPiece& p = pieces[k];
        return 2.0 * p.c_i + 6.0 * p.d_i * (t - p.t_i);
    }
};

// Solves the natural-boundary tridiagonal system for the c coefficients
// (Thomas algorithm), then fills b_i and d_i from them.
inline NaturalCubicCurve natural_cubic_fit(const std::vector<double>& t,
                                           const std::vector<double>& v,
                                           std::string column_name = {}) {
    if (t.size() != v.size()) throw std::invalid_argument("natural_cubic_fit: length mismatch");
    const std::size_t n = t.size();
    if (n < 3) throw std::invalid_argument("natural_cubic_fit: need at least 3 points");
    for (std::size_t i = 1; i < n; ++i)
        if (!(t[i] > t[i - 1]))
            throw std::invalid_argument("natural_cubic_fit: t not strictly increasing");

    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = t[i + 1] - t[i];

    // Interior equations:
    //   h_{i-1} c_{i-1} + 2(h_{i-1}+h_i) c_i + h_i c_{i+1}
    //     = 3((v_{i+1}-v_i)/h_i - (v_i-v_{i-1})/h_{i-1})
    std::vector<double> c(n, 0.0);
    if (n > 2) {
        const std::size_t m = n - 2;  // unknowns c_1..c_{n-2}
        std::vector<double> diag(m), upper(m), rhs(m);
        for (std::size_t i = 0; i < m; ++i) {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 3.0 * ((v[i + 2] - v[i + 1]) / h[i + 1] - (v[i + 1] - v[i]) / h[i]);
        }
        for (std::size_t i = 1; i < m; ++i) {
            const double w = h[i] / diag[i - 1];  // lower entry of row i is h_i
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        c[m] = rhs[m - 1] / diag[m - 1];
        for (std::size_t i = m - 1; i >= 1; --i) c[i] = (rhs[i - 1] - upper[i - 1] * c[i + 1]) / diag[i - 1];
    }

    NaturalCubicCurve curve;
    curve.column_name = std::move(column_name);
    curve.knot_c = c;
    curve.pieces.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        NaturalCubicPiece& p = curve.pieces[i];
        p.t_i = t[i];
        p.t_ip1 = t[i + 1];
        p.a_i = v[i];
        p.c_i = c[i];
        p.b_i = (v[i + 1] - v[i]) / h[i] - h[i] * (2.0 * c[i] + c[i + 1]) / 3.0;
        p.d_i = (c[i + 1] - c[i]) / (3.0 * h[i]);
    }
    return curve;
}

// Total excursion beyond [data_min, data_max] over probe_n uniform probes.
template <class Curve>
inline double overshoot(const Curve& curve, double data_min, double data_max, int probe_n) {
    if (probe_n < 100) throw std::invalid_argument("overshoot: probe_n must be >= 100");
    const double t0 = curve.t_min();
    const double t1 = curve.t_max();
    double lo = data_min, hi = data_max;
    for (int i = 0; i < probe_n; ++i) {
        const double t = t0 + (t1 - t0) * static_cast<double>(i) / (probe_n - 1);
        const double v = curve.eval(t);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return std::max(0.0, hi - data_max) + std::max(0.0, data_min - lo);
}

}  // namespace affectflow::spline
