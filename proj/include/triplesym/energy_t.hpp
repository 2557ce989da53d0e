#pragma once

#include "triplesym/bezoutian.hpp"
#include "triplesym/errors.hpp"
#include "triplesym/linalg.hpp"
#include "triplesym/parallel.hpp"
#include "triplesym/symbols.hpp"
#include "triplesym/weights.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace triplesym {

using SourceFn = std::function<cplx(double)>;
using LowerFn = std::function<std::array<cplx, 3>(double)>;

/// dU/dt = i |xi| A(t) U + B(t) U + F(t) for one frequency.
struct FrequencySystem {
    double xi = 1.0;
    std::function<Mat3d(double)> A_of_t;
    std::function<Mat3c(double)> B_of_t;  ///< empty means zero
    std::function<Vec3c(double)> F_of_t;  ///< empty means zero
    CoefficientField field;               ///< source of a, b for frames along the trajectory
    double y = 0.0;

    Vec3c rhs(double t, const Vec3c& U) const {
        Vec3c r = cplx(0.0, xi) * (A_of_t(t) * U);
        if (B_of_t) r += B_of_t(t) * U;
        if (F_of_t) r += F_of_t(t);
        return r;
    }
    Vec3c source(double t) const { return F_of_t ? F_of_t(t) : Vec3c{}; }
};

/// Lower-order block with first row i (b1, b2, b3).
inline Mat3c lower_block(const std::array<cplx, 3>& b) {
    Mat3c B;
    for (std::size_t k = 0; k < 3; ++k) B(0, k) = cplx(0.0, 1.0) * b[k];
    return B;
}

/// System for the field frozen at y. A scalar source s(t) enters as F = (i s, 0, 0).
/// `lower` overrides the field's lower-order terms.
inline FrequencySystem make_frequency_system(const CoefficientField& f, double y, double xi, SourceFn source = {},
                                             LowerFn lower = {}) {
    if (!(xi >= 1.0)) throw InputError("make_frequency_system: |xi| must be >= 1");
    FrequencySystem s;
    s.xi = xi;
    s.field = f;
    s.y = y;
    s.A_of_t = [f, y](double t) { return build_bezoutian(f.a(t, y), f.b(t, y)).A; };
    if (lower)
        s.B_of_t = [lower](double t) { return lower_block(lower(t)); };
    else if (f.lower_terms)
        s.B_of_t = [f, y](double t) { return lower_block(f.lower(t, y)); };
    if (source) s.F_of_t = [source](double t) { return Vec3c{{cplx(0.0, 1.0) * source(t), cplx{}, cplx{}}}; };
    return s;
}

/// Smallest nonzero value of smooth_bump; integrators driven by it use an absolute tolerance just above.
inline constexpr double kBumpCutExponent = 200.0;
inline constexpr double kBumpAtol = 1e-84;

/// C-infinity switch-on exp(-tau / (t - t0)) for t > t0, vanishing to all orders at t0. Values below
/// exp(-200) are flushed to zero so the integrator never sees subnormals.
inline SourceFn smooth_bump(double t0, double tau) {
    return [t0, tau](double t) -> cplx {
        const double e = t > t0 ? tau / (t - t0) : kBumpCutExponent;
        return e < kBumpCutExponent ? std::exp(-e) : 0.0;
    };
}

// ---------------------------------------------------------------------------------------------
// Gauge reduction

/// tau^3 + c2 xi tau^2 + c1 xi^2 tau + c0 xi^3 with xi = direction * |xi|.
struct RawSymbol {
    std::string name = "raw";
    ScalarMap c2, c1, c0;
    ScalarMap c2_t, c2_tt;  ///< optional; finite differences otherwise
    Domain domain;
};

struct GaugeReduction {
    /// Reduced field. lower_terms hold (b1, b2, |xi| b3); lower_for(xi) divides the last by |xi|.
    CoefficientField field;
    int direction = 1;
    bool identity = false;
    std::function<double(double, double)> c2_integral;  ///< int_0^t c2(s, y) ds

    /// E(t, xi) = exp(i/3 * direction |xi| int_0^t c2); u = v / E.
    cplx phase(double t, double y, double xi) const {
        if (identity) return 1.0;
        return std::exp(cplx(0.0, direction * xi * c2_integral(t, y) / 3.0));
    }
    LowerFn lower_for(double y, double xi) const {
        if (identity) return {};
        return [f = field, y, xi](double t) {
            auto b = f.lower(t, y);
            b[2] /= xi;
            return b;
        };
    }
};

namespace detail {

/// Composite 4-point Gauss-Legendre on [0, t].
inline double integrate_from_zero(const std::function<double(double)>& g, double t) {
    if (t == 0.0) return 0.0;
    static constexpr std::array<double, 4> x{-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                             0.8611363115940526};
    static constexpr std::array<double, 4> w{0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                             0.3478548451374538};
    const int panels = std::max(16, static_cast<int>(std::ceil(std::abs(t) / 0.01)));
    const double h = t / panels;
    double s = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = (p + 0.5) * h;
        for (std::size_t k = 0; k < 4; ++k) s += w[k] * g(mid + 0.5 * h * x[k]);
    }
    return 0.5 * h * s;
}

}  // namespace detail

/// Removes the tau^2 term by the shift tau -> tau - c2 xi / 3 and the phase E.
inline GaugeReduction gauge_reduce(const RawSymbol& raw, int xi_direction) {
    if (!raw.c2 || !raw.c1 || !raw.c0) throw InputError("gauge_reduce: c2, c1, c0 are required");
    const double sgn = xi_direction >= 0 ? 1.0 : -1.0;
    GaugeReduction g;
    g.direction = static_cast<int>(sgn);
    const Domain dom = raw.domain;
    const auto c2 = raw.c2, c1 = raw.c1, c0 = raw.c0;

    auto c2_t = raw.c2_t ? raw.c2_t : ScalarMap([c2, dom](double t, double y) {
        return fd_first([&](double s) { return c2(s, y); }, t, fd_step(t, 1.0), dom.t_lo, dom.t_hi);
    });
    auto c2_tt = raw.c2_tt ? raw.c2_tt : ScalarMap([c2, dom](double t, double y) {
        const double h = std::pow(kMachineEps, 0.25) * std::max(std::abs(t), 1.0);
        return fd_second([&](double s) { return c2(s, y); }, t, h, dom.t_lo, dom.t_hi);
    });

    CoefficientField& f = g.field;
    f.name = raw.name + "|reduced";
    f.domain = dom;
    f.a = [c2, c1](double t, double y) {
        const double p = c2(t, y);
        return p * p / 3.0 - c1(t, y);
    };
    f.b = [c2, c1, c0, sgn](double t, double y) {
        const double p = c2(t, y);
        return -sgn * (2.0 * p * p * p / 27.0 - c1(t, y) * p / 3.0 + c0(t, y));
    };

    // Probe whether c2 vanishes; then the reduction is the identity.
    bool zero = true;
    for (int i = 0; i <= 16 && zero; ++i)
        for (int j = 0; j <= 4 && zero; ++j) {
            const double t = dom.t_lo + (dom.t_hi - dom.t_lo) * i / 16.0;
            const double y = dom.y_lo + (dom.y_hi - dom.y_lo) * j / 4.0;
            zero = c2(t, y) == 0.0;
        }
    g.identity = zero;
    if (!zero) {
        f.lower_terms = std::array<ComplexMap, 3>{
            [](double, double) { return cplx{}; },
            [c2_t, sgn](double t, double y) { return cplx(0.0, -sgn * c2_t(t, y)); },
            [c2_tt, sgn](double t, double y) { return cplx(-sgn * c2_tt(t, y) / 3.0, 0.0); }};
        g.c2_integral = [c2](double t, double y) {
            return detail::integrate_from_zero([&](double s) { return c2(s, y); }, t);
        };
    }
    return g;
}

// ---------------------------------------------------------------------------------------------
// Integrator

struct IntegratorSpec {
    double rtol = 1e-9;
    double atol = 1e-12;
    double safety = 0.5;     ///< step cap safety / (|xi| (1 + sup |A|))
    double h_max = 0.0;      ///< extra absolute cap when positive
    double fixed_step = 0.0; ///< plain RK4 with this step when positive
    std::size_t max_steps = 100'000'000;
    double blowup = 1e150;   ///< |U| beyond this stops the run
};

struct StepStats {
    std::size_t accepted = 0, rejected = 0;
    double h_cap = 0.0;
    double h_smallest = std::numeric_limits<double>::infinity();
    bool blew_up = false;
};

struct Trajectory {
    std::vector<double> t;
    std::vector<Vec3c> U;
    StepStats stats;
};

/// Max row-sum norm of A sampled on [t0, t1].
inline double sup_A_norm(const FrequencySystem& sys, double t0, double t1, int samples = 257) {
    double m = 0.0;
    for (int i = 0; i < samples; ++i) {
        const Mat3d A = sys.A_of_t(t0 + (t1 - t0) * i / (samples - 1));
        for (std::size_t r = 0; r < 3; ++r) m = std::max(m, std::abs(A(r, 0)) + std::abs(A(r, 1)) + std::abs(A(r, 2)));
    }
    return m;
}

inline Vec3c rk4_step(const FrequencySystem& sys, double t, const Vec3c& U, double h) {
    const Vec3c k1 = sys.rhs(t, U);
    const Vec3c k2 = sys.rhs(t + 0.5 * h, U + (0.5 * h) * k1);
    const Vec3c k3 = sys.rhs(t + 0.5 * h, U + (0.5 * h) * k2);
    const Vec3c k4 = sys.rhs(t + h, U + h * k3);
    return U + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// RK4 from t0 to t1. Adaptive runs use step doubling with local extrapolation and accept when the
/// error estimate is below (atol + rtol |U|) times the step length, floored at roundoff level. obs(t, U) sees every accepted step.
template <class Observer>
StepStats integrate(const FrequencySystem& sys, double t0, double t1, Vec3c U, const IntegratorSpec& spec,
                    Observer&& obs) {
    if (!(t1 > t0)) throw InputError("integrate: empty time span");
    StepStats st;
    st.h_cap = spec.safety / (sys.xi * (1.0 + sup_A_norm(sys, t0, t1)));
    if (spec.h_max > 0.0) st.h_cap = std::min(st.h_cap, spec.h_max);
    double h = spec.fixed_step > 0.0 ? spec.fixed_step : st.h_cap;
    double t = t0;
    obs(t, U);
    while (t < t1) {
        if (st.accepted + st.rejected >= spec.max_steps)
            throw NumericalError("integrate: step budget exhausted at t=" + std::to_string(t));
        const bool last = h >= t1 - t;
        const double hs = last ? t1 - t : h;
        if (spec.fixed_step > 0.0) {
            U = rk4_step(sys, t, U, hs);
            t = last ? t1 : t + hs;
            ++st.accepted;
        } else {
            const Vec3c full = rk4_step(sys, t, U, hs);
            const Vec3c half = rk4_step(sys, t + 0.5 * hs, rk4_step(sys, t, U, 0.5 * hs), 0.5 * hs);
            const Vec3c diff = half - full;
            const double err = norm(diff) / 15.0;
            const double scale = std::max(norm(U), norm(half));
            // Below a few ulps of |U| the estimate is roundoff, whatever the step length.
            const double tol = std::max((spec.atol + spec.rtol * scale) * hs, 16.0 * kMachineEps * scale);
            if (err <= tol) {
                U = half + (1.0 / 15.0) * diff;
                t = last ? t1 : t + hs;
                ++st.accepted;
                st.h_smallest = std::min(st.h_smallest, hs);
            } else {
                ++st.rejected;
            }
            const double fac = err == 0.0 ? 2.0 : std::clamp(0.9 * std::pow(tol / err, 0.25), 0.2, 2.0);
            if (!(last && err <= tol)) h = std::min(st.h_cap, hs * fac);
            if (h < 1e-14 * std::max(1.0, std::abs(t)))
                throw NumericalError("integrate: stiffness, step underflow at t=" + std::to_string(t) +
                                     " h=" + std::to_string(h) + " |xi|=" + std::to_string(sys.xi));
            if (err > tol) continue;
        }
        const double n = norm(U);
        if (!std::isfinite(n) || n > spec.blowup) {
            st.blew_up = true;
            return st;
        }
        obs(t, U);
    }
    return st;
}

/// Trajectory recorded on every `stride`-th accepted step and at t1.
inline Trajectory solve_frequency(const FrequencySystem& sys, double t0, double t1, const Vec3c& U0,
                                  const IntegratorSpec& spec = {}, std::size_t stride = 1) {
    Trajectory tr;
    std::size_t k = 0;
    tr.stats = integrate(sys, t0, t1, U0, spec, [&](double t, const Vec3c& U) {
        if (k++ % std::max<std::size_t>(stride, 1) == 0 || t == t1) {
            tr.t.push_back(t);
            tr.U.push_back(U);
        }
    });
    return tr;
}

// ---------------------------------------------------------------------------------------------
// Weighted energies

/// Frame-side quantities at one point of a trajectory.
struct FrameSample {
    double form = 0.0;                 ///< <Lambda V, V>
    std::array<double, 3> components{};///< lambda_k |V_k|^2
    double dlambda = 0.0;              ///< <(d_t Lambda) V, V>
    cplx lambda_b{};                   ///< <Lambda BB V, V>
    double source_cross = 0.0;         ///< 2 Re <Lambda T^{-1} F, V>
    double source_form = 0.0;          ///< <Lambda T^{-1} F, T^{-1} F>
};

inline FrameSample frame_sample(const FrequencySystem& sys, double t, const Vec3c& U) {
    const SpectralFrame fr = frame_at(sys.field, t, sys.y);
    const FrameDerivatives fd = frame_derivatives(sys.field, t, sys.y, fr);
    const Mat3d Tt = fr.T.transpose();
    const Vec3c V = Tt * U;
    Mat3c BB = to_complex(fd.dt_TinvT);
    if (sys.B_of_t) BB += to_complex(Tt) * sys.B_of_t(t) * to_complex(fr.T);
    const Vec3c BV = BB * V;
    const Vec3c FV = Tt * sys.source(t);
    FrameSample s;
    for (std::size_t k = 0; k < 3; ++k) {
        const double l = fr.lambda[k];
        s.components[k] = l * std::norm(V[k]);
        s.form += s.components[k];
        s.dlambda += fd.dt_lambda[k] * std::norm(V[k]);
        s.lambda_b += l * BV[k] * std::conj(V[k]);
        s.source_cross += 2.0 * l * std::real(FV[k] * std::conj(V[k]));
        s.source_form += l * std::norm(FV[k]);
    }
    return s;
}

struct RegionVerdict {
    int region = 0;
    double lo = 0.0, hi = 0.0;
    WeightKind kind = WeightKind::t;
    int exponent_sign = -1;
    bool continuation = false;  ///< data carried over from the previous region
    double C = std::numeric_limits<double>::quiet_NaN();  ///< sup LHS / RHS
    double C_dlambda = 0.0;  ///< sup phi |<d_t Lambda V, V>| / <Lambda V, V>
    double C_b = 0.0;        ///< sup phi |<Lambda BB V, V>| / <Lambda V, V>
    double C_source = 0.0;   ///< sup |2 Re <Lambda F, V>| / (phi^-1 <Lambda V,V> + phi <Lambda F,F>)
    bool nonincreasing = true;  ///< damped variant only

    bool finite() const {
        return std::isfinite(C) && std::isfinite(C_dlambda) && std::isfinite(C_b) && std::isfinite(C_source);
    }
    bool pass() const { return finite() && nonincreasing; }
};

struct EnergyTrace {
    std::vector<double> times;
    std::vector<int> region;
    std::vector<double> energy;  ///< g_j <Lambda V, V>, divided by g_j at the region midpoint
    std::vector<double> form;    ///< <Lambda V, V>
    std::vector<std::array<double, 3>> components;
    std::vector<std::array<double, 3>> diagnostics;  ///< d_t Lambda term, Lambda BB term, source term ratios
    double xi = 1.0;
    double gamma = 0.0;
    int N = 8;
    std::optional<double> gamma0;  ///< damped variant: least admissible gamma
    double rate_sup = 0.0;         ///< damped variant: sup of the undamped log-energy rate (may be negative)
    std::vector<RegionVerdict> verdicts;
    std::vector<std::string> warnings;

    bool pass() const {
        if (verdicts.empty()) return false;
        return std::all_of(verdicts.begin(), verdicts.end(), [](const RegionVerdict& v) { return v.pass(); });
    }
};

struct MonitorOptions {
    double bump_fraction = 0.1;   ///< switch-on scale as a fraction of the first region's length
    int trace_points = 801;       ///< per region
    IntegratorSpec integrator{1e-9, kBumpAtol};
    Vec3c damped_data{{cplx(1.0), cplx(0.0, 1.0), cplx(1.0)}};  ///< damped variant initial data
};

namespace detail {

inline double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

inline double safe_log(double x) { return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

inline double region_phi(const Region& r, double t, double psi) {
    switch (r.kind) {
        case WeightKind::t: return t;
        case WeightKind::psi_minus_t: return psi - t;
        case WeightKind::t_minus_psi: return t - psi;
        default: throw InputError("monitor_weighted_energy: weight kind not defined on an interval partition");
    }
}

inline const PartitionSlice& slice_for(const WeightPartition& w, double y) {
    for (const auto& s : w.slices)
        if (std::abs(s.y - y) <= 1e-12 * (1.0 + std::abs(y))) return s;
    throw InputError("monitor_weighted_energy: partition has no slice at y=" + std::to_string(y));
}

/// Log-space trapezoid accumulator for int w(s) q(s) ds.
struct LogIntegral {
    double value = -std::numeric_limits<double>::infinity();
    double last_t = 0.0, last_log = -std::numeric_limits<double>::infinity();
    bool started = false;
    void add(double t, double log_integrand) {
        if (started && t > last_t) {
            const double piece = std::log(0.5 * (t - last_t)) + log_add(last_log, log_integrand);
            value = log_add(value, piece);
        }
        started = true;
        last_t = t;
        last_log = log_integrand;
    }
};

/// Region-by-region weighted energy runs on an interval partition.
inline EnergyTrace monitor_interval(const FrequencySystem& base, const WeightPartition& w, int N, double gamma,
                                    const MonitorOptions& opt) {
    const PartitionSlice& slice = slice_for(w, base.y);
    if (slice.regions.empty()) throw InputError("monitor_weighted_energy: empty partition slice");
    if (slice.regions.back().hi > base.field.domain.t_hi + 1e-12)
        throw InputError("monitor_weighted_energy: partition extends beyond the field's time domain");
    constexpr double ninf = -std::numeric_limits<double>::infinity();

    EnergyTrace tr;
    tr.xi = base.xi;
    tr.N = N;
    tr.gamma = gamma;

    const double tau = opt.bump_fraction * (slice.regions.front().hi - slice.regions.front().lo);
    FrequencySystem sys = base;
    Vec3c state{};
    bool have_state = false;

    for (const Region& r : slice.regions) {
        RegionVerdict v;
        v.region = r.index;
        v.lo = r.lo;
        v.hi = r.hi;
        v.kind = r.kind;
        v.exponent_sign = r.exponent_sign;
        v.continuation = r.exponent_sign > 0 && have_state;
        if (!v.continuation) {
            state = Vec3c{};
            sys = make_frequency_system(base.field, base.y, base.xi, smooth_bump(r.lo, tau));
            sys.B_of_t = base.B_of_t;
        }
        const double psi = slice.psi;
        const bool lemma_vanishing = r.exponent_sign < 0;
        const double log_u0 = safe_log(norm2(state));
        const double p_mid = region_phi(r, 0.5 * (r.lo + r.hi), psi);
        const double log_g_mid = weight_exponent(r.exponent_sign, N) * std::log(p_mid) - gamma * 0.5 * (r.lo + r.hi);

        LogIntegral iu, iff;
        double log_c = ninf;
        const double dt_trace = (r.hi - r.lo) / std::max(opt.trace_points - 1, 1);
        double next_trace = r.lo;

        IntegratorSpec spec = opt.integrator;
        const double hcap = std::min((r.hi - r.lo) / 2000.0, tau / (20.0 * std::max(N, 1)));
        spec.h_max = spec.h_max > 0.0 ? std::min(spec.h_max, hcap) : hcap;

        auto observe = [&](double t, const Vec3c& U) {
            const double phi = region_phi(r, t, psi);
            const double u2 = norm2(U), f2 = norm2(sys.source(t));
            const double lw = phi > 0.0 ? 2.0 * r.exponent_sign * N * std::log(phi) : (r.exponent_sign > 0 ? ninf : -ninf);
            iu.add(t, u2 > 0.0 ? lw + std::log(u2) : ninf);
            iff.add(t, f2 > 0.0 ? lw + std::log(f2) : ninf);
            double lhs, rhs;
            if (lemma_vanishing) {
                lhs = log_add(safe_log(u2), std::log(double(N)) + iu.value);
                rhs = iff.value;
            } else {
                const double pw = phi > 0.0 ? (2.0 * N - 1.0) * std::log(phi) : ninf;
                lhs = log_add(u2 > 0.0 ? pw + std::log(u2) : ninf, std::log(double(N)) + iu.value);
                rhs = log_add(log_u0, iff.value);
            }
            if (rhs > ninf && lhs > ninf) log_c = std::max(log_c, lhs - rhs);

            if (t + 1e-15 >= next_trace || t == r.hi) {
                next_trace += dt_trace;
                const FrameSample fs = frame_sample(sys, t, U);
                std::array<double, 3> diag{0.0, 0.0, 0.0};
                if (fs.form > 0.0 && phi > 0.0) {
                    diag[0] = phi * std::abs(fs.dlambda) / fs.form;
                    diag[1] = phi * std::abs(fs.lambda_b) / fs.form;
                    const double den = fs.form / phi + phi * fs.source_form;
                    diag[2] = den > 0.0 ? std::abs(fs.source_cross) / den : 0.0;
                    v.C_dlambda = std::max(v.C_dlambda, diag[0]);
                    v.C_b = std::max(v.C_b, diag[1]);
                    v.C_source = std::max(v.C_source, diag[2]);
                }
                const double lg = phi > 0.0 ? weight_exponent(r.exponent_sign, N) * std::log(phi) - gamma * t : ninf;
                const double le = fs.form > 0.0 ? lg + std::log(fs.form) - log_g_mid : ninf;
                tr.times.push_back(t);
                tr.region.push_back(r.index);
                tr.energy.push_back(le == ninf ? 0.0 : std::exp(le));
                tr.form.push_back(fs.form);
                tr.components.push_back(fs.components);
                tr.diagnostics.push_back(diag);
            }
        };
        Vec3c end = state;
        const StepStats st = integrate(sys, r.lo, r.hi, state, spec, [&](double t, const Vec3c& U) {
            observe(t, U);
            end = U;
        });
        if (st.blew_up) {
            tr.warnings.push_back("region " + std::to_string(r.index) + ": solution blew up");
            v.C = std::numeric_limits<double>::infinity();
        } else {
            v.C = log_c == ninf ? 0.0 : std::exp(log_c);
        }
        state = end;
        have_state = true;
        tr.verdicts.push_back(v);
    }
    return tr;
}

/// Damped variant on a frozen slice of a general partition: tracks
/// d/dt log(phi^{s N} e^{-gamma t} <Lambda V, V>) along a homogeneous trajectory.
inline EnergyTrace monitor_damped(const FrequencySystem& sys, const WeightPartition& w, int N, double gamma,
                                  const MonitorOptions& opt) {
    const double x = sys.y;
    if (std::abs(x) > w.delta * w.T) throw InputError("monitor_weighted_energy: slice outside the cone");
    const double lo = std::max(w.t_bottom, sys.field.domain.t_lo);
    const double hi = std::min(w.T - std::abs(x) / w.delta, sys.field.domain.t_hi);
    if (!(hi > lo)) throw InputError("monitor_weighted_energy: empty slice of the cone");
    constexpr double ninf = -std::numeric_limits<double>::infinity();

    EnergyTrace tr;
    tr.xi = sys.xi;
    tr.N = N;
    tr.gamma = gamma;

    struct Row {
        double t, log_form, log_phi;
        int region, sign;
        double rate;
    };
    std::vector<Row> rows;
    const double dt_trace = (hi - lo) / std::max(opt.trace_points - 1, 1);
    double next_trace = lo;
    IntegratorSpec spec = opt.integrator;
    const Vec3c U0 = (1.0 / norm(opt.damped_data)) * opt.damped_data;
    const StepStats st = integrate(sys, lo, hi, U0, spec, [&](double t, const Vec3c& U) {
        if (t + 1e-15 < next_trace && t != hi) return;
        next_trace += dt_trace;
        const auto ws = w.locate(t, x);
        if (!ws) return;
        const FrameSample fs = frame_sample(sys, t, U);
        const double form_direct = quad_form(build_bezoutian(sys.field.a(t, x), sys.field.b(t, x)).S, U);
        Row row{t, safe_log(form_direct), safe_log(ws->phi), ws->region, ws->exponent_sign, ninf};
        if (fs.form > 0.0 && ws->phi > 0.0) {
            const double d_form = fs.dlambda + 2.0 * std::real(fs.lambda_b) + fs.source_cross;
            row.rate = d_form / fs.form - N * std::abs(ws->phi_t) / ws->phi;
        }
        rows.push_back(row);
        tr.times.push_back(t);
        tr.region.push_back(ws->region);
        tr.form.push_back(fs.form);
        tr.components.push_back(fs.components);
        tr.diagnostics.push_back({fs.form > 0.0 ? ws->phi * std::abs(fs.dlambda) / fs.form : 0.0,
                                  fs.form > 0.0 ? ws->phi * std::abs(fs.lambda_b) / fs.form : 0.0, 0.0});
    });
    if (st.blew_up) throw NumericalError("monitor_weighted_energy: homogeneous solution blew up");

    double sup = ninf;
    for (const auto& r : rows) sup = std::max(sup, r.rate);
    tr.rate_sup = sup;
    const double g0 = std::max(0.0, sup);
    tr.gamma0 = g0;
    const double g_check = std::max(gamma, g0 * (1.0 + 1e-2) + 1e-6);

    // Group consecutive rows by region; check monotonicity of the damped log energy.
    std::size_t i = 0;
    while (i < rows.size()) {
        std::size_t j = i;
        while (j < rows.size() && rows[j].region == rows[i].region) ++j;
        RegionVerdict v;
        v.region = rows[i].region;
        v.lo = rows[i].t;
        v.hi = rows[j - 1].t;
        v.exponent_sign = rows[i].sign;
        v.C = 0.0;
        double prev = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t k = i; k < j; ++k) {
            const auto& r = rows[k];
            if (r.rate > ninf) v.C = std::max(v.C, r.rate);
            if (r.log_phi == ninf || r.log_form == ninf) {
                prev = std::numeric_limits<double>::quiet_NaN();
                tr.energy.push_back(0.0);
                continue;
            }
            const double le = r.sign * N * r.log_phi - g_check * r.t + r.log_form;
            tr.energy.push_back(std::exp(std::clamp(le - (r.sign * N * rows[i].log_phi - g_check * rows[i].t), -700.0,
                                                    700.0)));
            if (std::isfinite(prev) && le > prev + 1e-9 * (1.0 + std::abs(prev))) v.nonincreasing = false;
            prev = le;
        }
        tr.verdicts.push_back(v);
        i = j;
    }
    return tr;
}

}  // namespace detail

/// Weighted energies along the trajectory with the verdicts of the vanishing-data and continuation
/// inequalities per region. Interval partitions drive the system with their own switch-on source;
/// general partitions run the damped variant on the slice x = sys.y.
inline EnergyTrace monitor_weighted_energy(const FrequencySystem& sys, const WeightPartition& w, int N = 8,
                                           double gamma = 0.0, const MonitorOptions& opt = {}) {
    if (N < 1) throw InputError("monitor_weighted_energy: N must be positive");
    if (w.variant == PartitionVariant::general) return detail::monitor_damped(sys, w, N, gamma, opt);
    if (w.geometry != Geometry::interval) throw InputError("monitor_weighted_energy: interval partition expected");
    for (int n = N; n >= 1; --n) {
        EnergyTrace tr = detail::monitor_interval(sys, w, n, gamma, opt);
        const bool overflow = std::any_of(tr.energy.begin(), tr.energy.end(), [](double e) { return !std::isfinite(e); });
        if (!overflow) {
            if (n != N) tr.warnings.push_back("weight overflow: N reduced from " + std::to_string(N) + " to " + std::to_string(n));
            return tr;
        }
    }
    throw NumericalError("monitor_weighted_energy: weights overflow for every N");
}

/// Max over min of a list of positive constants; infinity if any is non-finite or zero.
inline double constant_spread(const std::vector<double>& cs) {
    if (cs.empty()) return std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double c : cs) {
        if (!std::isfinite(c) || !(c > 0.0)) return std::numeric_limits<double>::infinity();
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    return hi / lo;
}

/// Least damping rate for the frozen slice x0 of a general partition.
inline double measure_gamma0(const CoefficientField& f, const WeightPartition& w, double x0, int N, double xi,
                             const MonitorOptions& opt = {}) {
    const EnergyTrace tr = monitor_weighted_energy(make_frequency_system(f, x0, xi), w, N, 0.0, opt);
    return tr.gamma0.value_or(std::numeric_limits<double>::quiet_NaN());
}

// ---------------------------------------------------------------------------------------------
// Loss of derivatives

struct LossSpec {
    std::vector<double> xi_list;
    double y = 0.0;
    double t_end = 0.5;
    double bump_fraction = 0.05;  ///< switch-on scale relative to the time span
    int N_max = 40;
    double factor = 2.0;
    IntegratorSpec integrator{1e-8, kBumpAtol};
};

struct LossReport {
    std::vector<double> xi;
    std::vector<double> log_ratio;  ///< log sup_t (solution side / source side)
    std::optional<int> N0;
    bool failed = false;
    std::string reason;
};

/// Geometric list 2^lo .. 2^hi.
inline std::vector<double> geometric_xi(int lo_pow2, int hi_pow2) {
    std::vector<double> out;
    for (int k = lo_pow2; k <= hi_pow2; ++k) out.push_back(std::ldexp(1.0, k));
    return out;
}

/// log sup_t [ sum_k <xi>^{2(2-k)} |d_t^k u|^2 ] / int |f|^2 for one frequency, zero data and a switch-on
/// source. Returns +infinity on blow-up.
inline double derivative_loss_ratio(const CoefficientField& f, double xi, const LossSpec& spec) {
    const double t0 = f.domain.t_lo;
    const double t1 = std::min(spec.t_end, f.domain.t_hi);
    const double tau = spec.bump_fraction * (t1 - t0);
    const SourceFn src = smooth_bump(t0, tau);
    const FrequencySystem sys = make_frequency_system(f, spec.y, xi, src);
    const double jx2 = 1.0 + xi * xi;
    IntegratorSpec is = spec.integrator;
    is.h_max = is.h_max > 0.0 ? std::min(is.h_max, tau / 20.0) : tau / 20.0;
    double int_f = 0.0, last_t = t0, last_f = 0.0, best = -std::numeric_limits<double>::infinity();
    const StepStats st = integrate(sys, t0, t1, Vec3c{}, is, [&](double t, const Vec3c& U) {
        const double f2 = std::norm(src(t));
        int_f += 0.5 * (t - last_t) * (f2 + last_f);
        last_t = t;
        last_f = f2;
        if (!(int_f > 0.0)) return;
        const double d3 = std::norm(sys.rhs(t, U)[0]);
        const double lhs = std::norm(U[2]) / (xi * xi * xi * xi) * jx2 * jx2 + std::norm(U[1]) / (xi * xi) * jx2 +
                           std::norm(U[0]) + d3 / jx2;
        if (lhs > 0.0) best = std::max(best, std::log(lhs) - std::log(int_f));
    });
    if (st.blew_up || !std::isfinite(best)) return std::numeric_limits<double>::infinity();
    return best;
}

/// Least N0 with ratio <xi>^{-2 N0} bounded across xi_list by `factor` times its first value.
inline LossReport measure_derivative_loss(const CoefficientField& f, const LossSpec& spec) {
    if (spec.xi_list.size() < 2) throw InputError("measure_derivative_loss: need at least two frequencies");
    LossReport rep;
    rep.xi = spec.xi_list;
    rep.log_ratio = parallel_map<double>(spec.xi_list.size(), [&](std::size_t k) {
        return derivative_loss_ratio(f, spec.xi_list[k], spec);
    });
    for (std::size_t k = 0; k < rep.xi.size(); ++k)
        if (!std::isfinite(rep.log_ratio[k])) {
            rep.failed = true;
            rep.reason = "non-finite ratio at |xi|=" + std::to_string(rep.xi[k]);
            return rep;
        }
    for (int n0 = 0; n0 <= spec.N_max; ++n0) {
        auto scaled = [&](std::size_t k) { return rep.log_ratio[k] - n0 * std::log1p(rep.xi[k] * rep.xi[k]); };
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < rep.xi.size(); ++k) worst = std::max(worst, scaled(k));
        if (worst <= scaled(0) + std::log(spec.factor)) {
            rep.N0 = n0;
            return rep;
        }
    }
    rep.failed = true;
    rep.reason = "no bounded N0 <= " + std::to_string(spec.N_max);
    return rep;
}

}  // namespace triplesym
