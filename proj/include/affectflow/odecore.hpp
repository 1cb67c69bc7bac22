#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affectflow/common.hpp"

namespace affectflow::ode {

// Right-hand side dh/dt = f(t, h). eval must be deterministic in (t, h).
struct VectorField {
    int dim = 0;
    std::function<void(double t, std::span<const double> y, std::span<double> dydt)> eval;
};

struct SolverConfig {
    double rtol = 1e-6;
    double atol = 1e-8;
    double h_init = 0.1;
    double h_min = 1e-10;
    double h_max = 86400.0;
    long max_steps = 100000;
    double safety = 0.9;

    void validate() const {
        if (!(rtol > 0.0) || !(atol > 0.0))
            throw std::invalid_argument("SolverConfig: tolerances must be > 0");
        if (!(h_min > 0.0 && h_min <= h_init && h_init <= h_max))
            throw std::invalid_argument("SolverConfig: need 0 < h_min <= h_init <= h_max");
        if (max_steps < 1) throw std::invalid_argument("SolverConfig: max_steps must be >= 1");
        if (!(safety > 0.0 && safety < 1.0))
            throw std::invalid_argument("SolverConfig: safety must lie in (0,1)");
    }
};

struct OdeSolution {
    std::vector<double> ts;
    std::vector<std::vector<double>> states;
    long n_accepted = 0;
    long n_rejected = 0;
    long n_fev = 0;
};

namespace dopri5 {

// Dormand-Prince 5(4) tableau, 7 stages, FSAL.
inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;

inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                        a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                        a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;

// 5th-order weights (also row 7 of A: first-same-as-last).
inline constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                        b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;

// b5 - b4hat: error-estimate weights.
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                        e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

// Dense-output coefficients (Hairer, Norsett & Wanner, dopri5 contd5).
inline constexpr double d1 = -12715105075.0 / 11282082432.0;
inline constexpr double d3 = 87487479700.0 / 32700410799.0;
inline constexpr double d4 = -10690763975.0 / 1880347072.0;
inline constexpr double d5 = 701980252875.0 / 199316789632.0;
inline constexpr double d6 = -1453857185.0 / 822651844.0;
inline constexpr double d7 = 69997945.0 / 29380423.0;

}  // namespace dopri5

namespace detail {

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace detail

// Classical 4-stage Runge-Kutta update.
inline std::vector<double> rk4_step(const VectorField& f, double t,
                                    const std::vector<double>& y, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be > 0");
    const std::size_t n = y.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), out(n);
    f.eval(t, y, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
    f.eval(t + 0.5 * dt, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
    f.eval(t + 0.5 * dt, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * k3[i];
    f.eval(t + dt, tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if (!detail::all_finite(out))
        throw numeric_error("rk4_step: non-finite state at t = " + std::to_string(t));
    return out;
}

// Adaptive Dormand-Prince 5(4) with FSAL, mixed absolute/relative RMS error
// norm and the classic I controller (new dt = dt * safety * err^(-1/5),
// factor clamped to [0.2, 5]). If output_ts is non-empty the solution is
// emitted at exactly those times through the 5th-order dense interpolant;
// otherwise every accepted step point is recorded.
inline OdeSolution dopri5_solve(const VectorField& f, double t0, double t1,
                                const std::vector<double>& y0, const SolverConfig& cfg,
                                const std::vector<double>& output_ts = {}) {
    using namespace dopri5;
    cfg.validate();
    if (!(t1 > t0)) throw std::invalid_argument("dopri5_solve: need t1 > t0");
    if (static_cast<int>(y0.size()) != f.dim)
        throw std::invalid_argument("dopri5_solve: state size does not match field dim");
    for (std::size_t i = 0; i < output_ts.size(); ++i) {
        if (output_ts[i] < t0 || output_ts[i] > t1)
            throw std::invalid_argument("dopri5_solve: output time outside [t0, t1]");
        if (i > 0 && !(output_ts[i] > output_ts[i - 1]))
            throw std::invalid_argument("dopri5_solve: output times must be strictly increasing");
    }

    const std::size_t n = y0.size();
    OdeSolution sol;
    std::vector<double> y = y0;
    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ynew(n), tmp(n);

    double t = t0;
    f.eval(t, y, k1);
    sol.n_fev = 1;

    std::size_t next_out = 0;
    if (!output_ts.empty()) {
        while (next_out < output_ts.size() && output_ts[next_out] <= t0) {
            sol.ts.push_back(output_ts[next_out]);
            sol.states.push_back(y);
            ++next_out;
        }
    } else {
        sol.ts.push_back(t0);
        sol.states.push_back(y);
    }

    double dt = std::min(cfg.h_init, t1 - t0);
    long attempts = 0;

    while (t < t1) {
        if (++attempts > cfg.max_steps)
            throw numeric_error("dopri5_solve: max_steps exceeded at t = " + std::to_string(t));

        bool last = false;
        if (dt >= t1 - t) {
            dt = t1 - t;
            last = true;
        }

        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * a21 * k1[i];
        f.eval(t + c2 * dt, tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * (a31 * k1[i] + a32 * k2[i]);
        f.eval(t + c3 * dt, tmp, k3);
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + dt * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        f.eval(t + c4 * dt, tmp, k4);
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + dt * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        f.eval(t + c5 * dt, tmp, k5);
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + dt * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                                  a65 * k5[i]);
        f.eval(t + dt, tmp, k6);
        for (std::size_t i = 0; i < n; ++i)
            ynew[i] = y[i] + dt * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        f.eval(t + dt, ynew, k7);
        sol.n_fev += 6;

        // mixed abs/rel RMS error norm
        double err_sq = 0.0;
        bool finite = detail::all_finite(ynew);
        if (finite) {
            for (std::size_t i = 0; i < n; ++i) {
                const double e = dt * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                                       e6 * k6[i] + e7 * k7[i]);
                const double scale =
                    cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
                err_sq += (e / scale) * (e / scale);
            }
        }
        const double err = finite ? std::sqrt(err_sq / static_cast<double>(n))
                                  : std::numeric_limits<double>::infinity();

        if (err <= 1.0) {
            sol.n_accepted += 1;
            const double t_next = last ? t1 : t + dt;

            if (!output_ts.empty()) {
                // rcont only when an output time lands inside this step
                if (next_out < output_ts.size() && output_ts[next_out] <= t_next) {
                    std::vector<double> rc1 = y, rc2(n), rc3(n), rc4(n), rc5(n);
                    for (std::size_t i = 0; i < n; ++i) {
                        const double ydiff = ynew[i] - y[i];
                        const double bspl = dt * k1[i] - ydiff;
                        rc2[i] = ydiff;
                        rc3[i] = bspl;
                        rc4[i] = ydiff - dt * k7[i] - bspl;
                        rc5[i] = dt * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                                       d6 * k6[i] + d7 * k7[i]);
                    }
                    while (next_out < output_ts.size() && output_ts[next_out] <= t_next) {
                        const double theta = (output_ts[next_out] - t) / dt;
                        const double om = 1.0 - theta;
                        std::vector<double> yout(n);
                        for (std::size_t i = 0; i < n; ++i)
                            yout[i] = rc1[i] +
                                      theta * (rc2[i] + om * (rc3[i] + theta * (rc4[i] + om * rc5[i])));
                        sol.ts.push_back(output_ts[next_out]);
                        sol.states.push_back(std::move(yout));
                        ++next_out;
                    }
                }
            } else {
                sol.ts.push_back(t_next);
                sol.states.push_back(ynew);
            }

            t = t_next;
            y = ynew;
            k1 = k7;  // FSAL

            double fac = (err == 0.0) ? 5.0 : cfg.safety * std::pow(err, -0.2);
            fac = std::clamp(fac, 0.2, 5.0);
            dt = std::clamp(dt * fac, cfg.h_min, cfg.h_max);
        } else {
            sol.n_rejected += 1;
            double fac = std::isfinite(err) ? cfg.safety * std::pow(err, -0.2) : 0.2;
            fac = std::max(fac, 0.2);
            dt *= fac;
            if (dt < cfg.h_min)
                throw numeric_error(
                    "dopri5_solve: step size underflow below h_min with err > 1 at t = " +
                    std::to_string(t) + " (stiff problem?)");
        }
    }
    return sol;
}

// Fixed-step single update using the 5th-order stage combination of the
// Dormand-Prince pair (no error estimate, no FSAL). Used for order checks.
inline std::vector<double> dopri5_fixed_step(const VectorField& f, double t,
                                             const std::vector<double>& y, double dt) {
    using namespace dopri5;
    const std::size_t n = y.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), tmp(n), out(n);
    f.eval(t, y, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * a21 * k1[i];
    f.eval(t + c2 * dt, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + dt * (a31 * k1[i] + a32 * k2[i]);
    f.eval(t + c3 * dt, tmp, k3);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + dt * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    f.eval(t + c4 * dt, tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + dt * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    f.eval(t + c5 * dt, tmp, k5);
    for (std::size_t i = 0; i < n; ++i)
        tmp[i] = y[i] + dt * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    f.eval(t + dt, tmp, k6);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = y[i] + dt * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    return out;
}

// A vector field together with its known exact solution, for validation.
struct AnalyticProblem {
    VectorField f;
    double t0 = 0.0;
    double t1 = 1.0;
    std::vector<double> y0;
    std::function<std::vector<double>(double)> exact;
};

enum class FixedMethod { rk4, dopri5_fifth };

// Observed convergence order: least-squares slope of log(global error)
// against log(dt) over fixed-step integrations. Returns nullopt when the
// errors sit at machine precision (nothing to fit).
inline std::optional<double> order_check(const AnalyticProblem& problem,
                                         const std::vector<double>& dts, FixedMethod method) {
    if (dts.size() < 4) throw std::invalid_argument("order_check: need at least 4 step sizes");
    for (std::size_t i = 1; i < dts.size(); ++i) {
        if (!(dts[i] > 0.0) || !(dts[0] > 0.0))
            throw std::invalid_argument("order_check: step sizes must be positive");
        const double r0 = dts[1] / dts[0];
        const double ri = dts[i] / dts[i - 1];
        if (std::abs(ri - r0) > 1e-6 * std::abs(r0))
            throw std::invalid_argument("order_check: step sizes must form a geometric sequence");
    }

    std::vector<double> log_dt, log_err;
    for (double dt_req : dts) {
        const long steps = std::max<long>(1, std::lround((problem.t1 - problem.t0) / dt_req));
        const double dt = (problem.t1 - problem.t0) / static_cast<double>(steps);
        std::vector<double> y = problem.y0;
        double t = problem.t0;
        for (long s = 0; s < steps; ++s) {
            y = (method == FixedMethod::rk4) ? rk4_step(problem.f, t, y, dt)
                                             : dopri5_fixed_step(problem.f, t, y, dt);
            t += dt;
        }
        const std::vector<double> ref = problem.exact(problem.t1);
        double err = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) err += (y[i] - ref[i]) * (y[i] - ref[i]);
        err = std::sqrt(err);
        if (err > 1e-13) {
            log_dt.push_back(std::log(dt));
            log_err.push_back(std::log(err));
        }
    }
    if (log_dt.size() < 2) return std::nullopt;

    const double k = static_cast<double>(log_dt.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < log_dt.size(); ++i) {
        sx += log_dt[i];
        sy += log_err[i];
        sxx += log_dt[i] * log_dt[i];
        sxy += log_dt[i] * log_err[i];
    }
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

}  // namespace affectflow::ode
