#pragma once

#include "triplesym/bezoutian.hpp"
#include "triplesym/energy_t.hpp"
#include "triplesym/errors.hpp"
#include "triplesym/linalg.hpp"
#include "triplesym/parallel.hpp"
#include "triplesym/symbols.hpp"
#include "triplesym/weights.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace triplesym {

// ---------------------------------------------------------------------------------------------
// Geometry

/// Curve t = f(x) for x in [x_lo, x_hi].
struct SpaceCurve {
    std::string name;
    std::function<double(double)> f, df;
    double x_lo = 0.0, x_hi = 0.0;
};

/// |x| <= delta (T - t), 0 <= t <= T.
struct ConeDomain {
    double delta = 1.0;
    double T = 0.25;

    bool contains(double t, double x, double eps = 1e-12) const {
        return t >= -eps && t <= T + eps && std::abs(x) <= delta * (T - t) + eps;
    }
    double half_width() const { return delta * T; }

    SpaceCurve left_side() const {
        return {"left", [d = delta, T = T](double x) { return T + x / d; }, [d = delta](double) { return 1.0 / d; },
                -delta * T, 0.0};
    }
    SpaceCurve right_side() const {
        return {"right", [d = delta, T = T](double x) { return T - x / d; }, [d = delta](double) { return -1.0 / d; },
                0.0, delta * T};
    }
    SpaceCurve base() const {
        return {"base", [](double) { return 0.0; }, [](double) { return 0.0; }, -delta * T, delta * T};
    }
};

// ---------------------------------------------------------------------------------------------
// Systems d_t U = A d_x U + B U + F with A a companion matrix

using SpaceTimeSource = std::function<cplx(double, double)>;

struct ConeSystem {
    std::string name;
    std::function<Vec3d(double, double)> first_row;  ///< (r1, r2, r3): A has rows (r1,r2,r3), (1,0,0), (0,1,0)
    std::function<Mat3c(double, double)> lower;      ///< optional B
    SpaceTimeSource source;                          ///< optional scalar f, entering as F = (i f, 0, 0)
    std::optional<CoefficientField> field;           ///< set for reduced symbols; enables frames

    Mat3d A(double t, double x) const {
        const Vec3d r = first_row(t, x);
        return Mat3d{{r[0], r[1], r[2], 1.0, 0.0, 0.0, 0.0, 1.0, 0.0}};
    }
    Mat3c B(double t, double x) const { return lower ? lower(t, x) : Mat3c{}; }
    Vec3c F(double t, double x) const {
        if (!source) return {};
        return {{cplx(0.0, 1.0) * source(t, x), cplx{}, cplx{}}};
    }
};

/// Reduced symbol tau^3 - a tau - b: first row (0, a, b).
inline ConeSystem make_cone_system(const CoefficientField& f, SpaceTimeSource source = {}) {
    ConeSystem s;
    s.name = f.name;
    s.first_row = [f](double t, double x) { return Vec3d{{0.0, f.a(t, x), f.b(t, x)}}; };
    if (f.lower_terms) s.lower = [f](double t, double x) { return lower_block(f.lower(t, x)); };
    s.source = std::move(source);
    s.field = f;
    return s;
}

/// p = (tau - b xi)(tau^2 - a xi^2), with the partials the factored energies need.
struct FactoredField {
    std::string name;
    ScalarMap a, b;
    ScalarMap a_t, a_x, b_t, b_x, b_tt, b_xx;
    Domain domain;
};

inline FactoredField make_factored_field(const std::string& a_expr, const std::string& b_expr,
                                         Domain dom = {0.0, 1.0, -1.0, 1.0}) {
    const BiPoly a = BiPolyParser::parse(a_expr), b = BiPolyParser::parse(b_expr);
    auto fn = [](BiPoly p) -> ScalarMap { return [p = std::move(p)](double t, double x) { return p(t, x); }; };
    FactoredField d;
    d.name = "(tau-(" + b_expr + "))(tau^2-(" + a_expr + "))";
    d.a = fn(a);
    d.b = fn(b);
    d.a_t = fn(a.dt());
    d.a_x = fn(a.dy());
    d.b_t = fn(b.dt());
    d.b_x = fn(b.dy());
    d.b_tt = fn(b.dt().dt());
    d.b_xx = fn(b.dy().dy());
    d.domain = dom;
    return d;
}

/// Expanded symbol tau^3 - b tau^2 - a tau + ab: first row (b, a, -ab).
inline ConeSystem make_factored_system(const FactoredField& d, SpaceTimeSource source = {}) {
    ConeSystem s;
    s.name = d.name;
    s.first_row = [d](double t, double x) {
        const double a = d.a(t, x), b = d.b(t, x);
        return Vec3d{{b, a, -a * b}};
    };
    s.source = std::move(source);
    return s;
}

/// Roots of mu^3 - r1 mu^2 - r2 mu - r3, the eigenvalues of the companion matrix.
inline std::array<cplx, 3> companion_roots(const Vec3d& r) {
    const double s = r[0] / 3.0;
    const double ap = r[0] * r[0] / 3.0 + r[1];
    const double bp = -(s * s * s - r[0] * s * s - r[1] * s - r[2]);
    auto z = depressed_cubic_roots(ap, bp);
    for (auto& v : z) v += s;
    return z;
}

/// Grid maximum of |roots| over [t_lo, t_hi] x [x_lo, x_hi].
inline double tau_max(const ConeSystem& sys, double t_lo, double t_hi, double x_lo, double x_hi, int n = 101) {
    const auto rows = parallel_map<double>(static_cast<std::size_t>(n), [&](std::size_t i) {
        const double t = n == 1 ? t_lo : t_lo + (t_hi - t_lo) * static_cast<double>(i) / (n - 1);
        double m = 0.0;
        for (int j = 0; j < n; ++j) {
            const double x = n == 1 ? x_lo : x_lo + (x_hi - x_lo) * j / (n - 1);
            for (const auto& z : companion_roots(sys.first_row(t, x))) m = std::max(m, std::abs(z));
        }
        return m;
    });
    return *std::max_element(rows.begin(), rows.end());
}

inline double tau_max(const ConeSystem& sys, const ConeDomain& cone, int n = 101) {
    return tau_max(sys, 0.0, cone.T, -cone.half_width(), cone.half_width(), n);
}

struct SpacelikeReport {
    bool spacelike = false;
    double margin = 0.0;  ///< 1 - tau_max sup|f'|
    double tau_max = 0.0;
    double slope = 0.0;   ///< sup|f'|
};

inline SpacelikeReport spacelike_check(double tau_max_value, const SpaceCurve& c, int n = 201) {
    SpacelikeReport r;
    r.tau_max = tau_max_value;
    for (int k = 0; k < n; ++k) {
        const double x = c.x_lo + (c.x_hi - c.x_lo) * k / std::max(1, n - 1);
        r.slope = std::max(r.slope, std::abs(c.df(x)));
    }
    r.margin = 1.0 - tau_max_value * r.slope;
    r.spacelike = r.margin > 0.0;
    return r;
}

/// tau_max is taken over the bounding box of `cone`.
inline SpacelikeReport spacelike_check(const CoefficientField& f, const SpaceCurve& c, const ConeDomain& cone) {
    return spacelike_check(tau_max(make_cone_system(f), cone), c);
}

// ---------------------------------------------------------------------------------------------
// Cone solver

enum class Scheme { upwind, lax_friedrichs };

struct SchemeSpec {
    int cells = 256;  ///< spatial cells across the base
    double cfl = 0.9;
    Scheme scheme = Scheme::upwind;
    double conditioning_floor = 1e-6;  ///< below this 1/cond of the eigenvector matrix, fall back to LF
    bool track_potential = false;      ///< also carry (u, d_t u, d_x u)
    double tau_max = 0.0;              ///< 0 computes it over the cone
};

using InitialData = std::function<Vec3c(double)>;

struct GridSolveResult {
    ConeDomain cone;
    ConeSystem system;
    double dt = 0.0, dx = 0.0, x0 = 0.0;
    int nt = 0, nx = 0;  ///< levels 0..nt, nodes 0..nx
    double tau_max = 0.0;
    std::vector<Vec3c> U;
    std::vector<unsigned char> inside;
    std::vector<Vec3c> potential;  ///< (u, d_t u, d_x u) when tracked
    std::size_t fallback_nodes = 0;
    std::vector<double> level_energy;  ///< sum over the level of <S U, U> dx (reduced systems)
    double stokes_residual = std::numeric_limits<double>::quiet_NaN();

    std::size_t idx(int n, int i) const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(nx + 1) + static_cast<std::size_t>(i);
    }
    double t(int n) const { return n * dt; }
    double x(int i) const { return x0 + i * dx; }
    bool valid(int n, int i) const { return n >= 0 && n <= nt && i >= 0 && i <= nx && inside[idx(n, i)]; }
    const Vec3c& at(int n, int i) const { return U[idx(n, i)]; }
    std::size_t inside_count() const { return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), 1)); }
};

namespace detail {

struct NodeOperator {
    Mat3c plus, minus;  ///< upwind split
    double alpha = 0.0;
    bool lax_friedrichs = false;
};

inline NodeOperator node_operator(const Mat3d& A, const Vec3d& row, const SchemeSpec& spec) {
    NodeOperator op;
    const auto mu = companion_roots(row);
    for (const auto& z : mu) op.alpha = std::max(op.alpha, std::abs(z));
    const double scale = std::max(1.0, op.alpha);
    bool real = true;
    for (const auto& z : mu) real = real && std::abs(z.imag()) <= 1e-10 * scale;
    if (spec.scheme == Scheme::lax_friedrichs || !real) {
        op.lax_friedrichs = true;
        op.plus = to_complex(A);
        return op;
    }
    Mat3c R, Rinv;
    for (std::size_t k = 0; k < 3; ++k) R.set_col(k, {{cplx(mu[k].real() * mu[k].real()), cplx(mu[k].real()), cplx(1.0)}});
    auto inf_norm = [](const Mat3c& m) {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i) s = std::max(s, std::abs(m(i, 0)) + std::abs(m(i, 1)) + std::abs(m(i, 2)));
        return s;
    };
    if (!invert(R, Rinv) || 1.0 / (inf_norm(R) * inf_norm(Rinv)) < spec.conditioning_floor) {
        op.lax_friedrichs = true;
        op.plus = to_complex(A);
        return op;
    }
    const Mat3c dp = Mat3c::diag(std::max(mu[0].real(), 0.0), std::max(mu[1].real(), 0.0), std::max(mu[2].real(), 0.0));
    const Mat3c dm = Mat3c::diag(std::min(mu[0].real(), 0.0), std::min(mu[1].real(), 0.0), std::min(mu[2].real(), 0.0));
    op.plus = R * dp * Rinv;
    op.minus = R * dm * Rinv;
    return op;
}

/// Approximation of A d_x U at node i from its neighbours.
inline Vec3c spatial_term(const NodeOperator& op, const Vec3c& um, const Vec3c& u0, const Vec3c& up, double dx) {
    if (op.lax_friedrichs) {
        Vec3c c = (0.5 / dx) * (op.plus * (up - um));
        c += (0.5 * op.alpha / dx) * (up - 2.0 * u0 + um);
        return c;
    }
    return (1.0 / dx) * (op.plus * (up - u0)) + (1.0 / dx) * (op.minus * (u0 - um));
}

}  // namespace detail

/// Forward Euler with upwind fluxes on a regular grid clipped to the cone. dt = min(cfl dx / tau_max, dx / delta),
/// so every interior node of the next level has both neighbours inside the current one.
inline GridSolveResult solve_cone(const ConeSystem& sys, const ConeDomain& cone, const InitialData& U0,
                                  const SchemeSpec& spec = {}, const InitialData& potential0 = {}) {
    if (!(cone.delta > 0.0 && cone.T > 0.0)) throw InputError("solve_cone: cone needs delta > 0 and T > 0");
    if (!(spec.cfl > 0.0 && spec.cfl <= 0.9)) throw InputError("solve_cone: CFL number must lie in (0, 0.9]");
    if (spec.cells < 2) throw InputError("solve_cone: need at least two cells");
    GridSolveResult r;
    r.cone = cone;
    r.system = sys;
    r.tau_max = spec.tau_max > 0.0 ? spec.tau_max : tau_max(sys, cone);
    for (const auto& side : {cone.left_side(), cone.right_side()}) {
        const auto chk = spacelike_check(r.tau_max, side);
        if (!chk.spacelike)
            throw InputError("solve_cone: cone side '" + side.name + "' is not space-like (margin " +
                             std::to_string(chk.margin) + ")");
    }
    r.nx = spec.cells;
    r.dx = 2.0 * cone.half_width() / r.nx;
    r.x0 = -cone.half_width();
    r.dt = r.dx / cone.delta;
    if (r.tau_max > 0.0) r.dt = std::min(r.dt, spec.cfl * r.dx / r.tau_max);
    r.nt = static_cast<int>(std::floor(cone.T / r.dt + 1e-9));
    const std::size_t levels = static_cast<std::size_t>(r.nt) + 1, row = static_cast<std::size_t>(r.nx) + 1;
    r.U.assign(levels * row, Vec3c{});
    r.inside.assign(levels * row, 0);
    if (spec.track_potential) r.potential.assign(levels * row, Vec3c{});
    for (int i = 0; i <= r.nx; ++i) {
        r.inside[r.idx(0, i)] = 1;
        r.U[r.idx(0, i)] = U0(r.x(i));
        if (spec.track_potential && potential0) r.potential[r.idx(0, i)] = potential0(r.x(i));
    }
    std::vector<unsigned char> fell_back(row, 0);
    std::size_t fallbacks = 0;
    for (int n = 0; n < r.nt; ++n) {
        const double t = r.t(n), t1 = r.t(n + 1);
        parallel_for(row, [&](std::size_t k) {
            const int i = static_cast<int>(k);
            fell_back[k] = 0;
            const std::size_t out = r.idx(n + 1, i);
            if (!cone.contains(t1, r.x(i)) || !r.valid(n, i - 1) || !r.valid(n, i + 1)) return;
            const double x = r.x(i);
            const Vec3d rowc = sys.first_row(t, x);
            const Mat3d A{{rowc[0], rowc[1], rowc[2], 1.0, 0.0, 0.0, 0.0, 1.0, 0.0}};
            const auto op = detail::node_operator(A, rowc, spec);
            fell_back[k] = op.lax_friedrichs && spec.scheme == Scheme::upwind;
            const Vec3c& u0 = r.at(n, i);
            Vec3c rhs = detail::spatial_term(op, r.at(n, i - 1), u0, r.at(n, i + 1), r.dx);
            if (sys.lower) rhs += sys.B(t, x) * u0;
            if (sys.source) rhs += sys.F(t, x);
            r.U[out] = u0 + r.dt * rhs;
            r.inside[out] = 1;
            if (spec.track_potential) {
                const Vec3c& p = r.potential[r.idx(n, i)];
                const Vec3c& u1 = r.U[out];
                Vec3c q;
                q[1] = p[1] - 0.5 * r.dt * (u0[0] + u1[0]);
                q[2] = p[2] - 0.5 * r.dt * (u0[1] + u1[1]);
                q[0] = p[0] + 0.5 * r.dt * (p[1] + q[1]);
                r.potential[out] = q;
            }
        });
        fallbacks += static_cast<std::size_t>(std::count(fell_back.begin(), fell_back.end(), 1));
    }
    r.fallback_nodes = fallbacks;
    if (sys.field) {
        r.level_energy.assign(levels, 0.0);
        for (int n = 0; n <= r.nt; ++n)
            for (int i = 0; i <= r.nx; ++i) {
                if (!r.valid(n, i)) continue;
                const double t = r.t(n), x = r.x(i);
                r.level_energy[static_cast<std::size_t>(n)] +=
                    r.dx * quad_form(build_bezoutian(sys.field->a(t, x), sys.field->b(t, x)).S, r.at(n, i));
            }
    }
    return r;
}

// ---------------------------------------------------------------------------------------------
// Periodic strip: centred differences with RK4, for the conservation check

struct StripResult {
    double dx = 0.0, dt = 0.0;
    std::vector<double> times, energy;
    std::vector<Vec3c> U;
    double drift_per_unit_time = 0.0;  ///< max |E(t) - E(0)| / (E(0) t_end)
};

inline StripResult solve_periodic_strip(const CoefficientField& f, double length, int cells, const InitialData& U0,
                                        double t_end, double cfl = 0.9) {
    if (cells < 4 || !(length > 0.0) || !(t_end > 0.0)) throw InputError("solve_periodic_strip: bad grid");
    if (!(cfl > 0.0 && cfl <= 0.9)) throw InputError("solve_periodic_strip: CFL number must lie in (0, 0.9]");
    const ConeSystem sys = make_cone_system(f);
    StripResult out;
    out.dx = length / cells;
    const double tm = tau_max(sys, 0.0, t_end, 0.0, length, 33);
    const int steps = static_cast<int>(std::ceil(t_end / (cfl * out.dx / std::max(tm, 1e-300))));
    out.dt = t_end / steps;
    const std::size_t m = static_cast<std::size_t>(cells);
    std::vector<Vec3c> u(m);
    for (std::size_t i = 0; i < m; ++i) u[i] = U0(out.dx * static_cast<double>(i));
    auto energy = [&](double t, const std::vector<Vec3c>& v) {
        double e = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double x = out.dx * static_cast<double>(i);
            e += out.dx * quad_form(build_bezoutian(f.a(t, x), f.b(t, x)).S, v[i]);
        }
        return e;
    };
    auto rhs = [&](double t, const std::vector<Vec3c>& v) {
        std::vector<Vec3c> d(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double x = out.dx * static_cast<double>(i);
            const Vec3c& up = v[(i + 1) % m];
            const Vec3c& um = v[(i + m - 1) % m];
            d[i] = (0.5 / out.dx) * (sys.A(t, x) * (up - um));
            if (sys.lower) d[i] += sys.B(t, x) * v[i];
        }
        return d;
    };
    auto axpy = [&](const std::vector<Vec3c>& v, double h, const std::vector<Vec3c>& k) {
        std::vector<Vec3c> w(m);
        for (std::size_t i = 0; i < m; ++i) w[i] = v[i] + h * k[i];
        return w;
    };
    out.times.push_back(0.0);
    out.energy.push_back(energy(0.0, u));
    for (int s = 0; s < steps; ++s) {
        const double t = s * out.dt, h = out.dt;
        const auto k1 = rhs(t, u);
        const auto k2 = rhs(t + 0.5 * h, axpy(u, 0.5 * h, k1));
        const auto k3 = rhs(t + 0.5 * h, axpy(u, 0.5 * h, k2));
        const auto k4 = rhs(t + h, axpy(u, h, k3));
        for (std::size_t i = 0; i < m; ++i) u[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        out.times.push_back(t + h);
        out.energy.push_back(energy(t + h, u));
    }
    const double e0 = out.energy.front();
    for (double e : out.energy)
        out.drift_per_unit_time = std::max(out.drift_per_unit_time, std::abs(e - e0) / (std::abs(e0) * t_end));
    out.U = std::move(u);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Cell-based integrals over subregions

namespace detail {

/// g = |phi|^e in log form; a zero phi gives +-inf.
inline double log_weight(double phi, double e) {
    if (e == 0.0) return 0.0;
    const double ap = std::abs(phi);
    if (ap == 0.0) return e < 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    return e * std::log(ap);
}

/// v * exp(lw) with 0 * inf = 0.
inline double weighted(double lw, double v) {
    if (v == 0.0) return 0.0;
    return v * std::exp(lw);
}

inline double phi_of(WeightKind kind, double t, double psi) {
    switch (kind) {
        case WeightKind::psi_minus_t: return psi - t;
        case WeightKind::t_minus_psi: return t - psi;
        default: return t;
    }
}

/// Region membership and weight of each cell, read from a triple or double partition or the unit weight.
struct CellWeights {
    const WeightPartition* partition = nullptr;  ///< null: g = 1 on every cell
    std::vector<double> psi_node, psi_center;

    CellWeights(const GridSolveResult& r, const WeightPartition* w) : partition(w) {
        if (!w) return;
        if (w->variant == PartitionVariant::general)
            throw InputError("cell weights: general partitions are handled by the frequency monitor");
        if (w->geometry != Geometry::cone) throw InputError("cell weights: partition must use cone geometry");
        const std::size_t n = static_cast<std::size_t>(r.nx) + 1;
        psi_node = parallel_map<double>(n, [&](std::size_t i) { return w->psi(r.x(static_cast<int>(i))); });
        psi_center = parallel_map<double>(n - 1, [&](std::size_t i) { return w->psi(r.x(static_cast<int>(i)) + 0.5 * r.dx); });
    }

    std::optional<WeightSample> cell_sample(const GridSolveResult& r, int n, int i) const {
        const double tc = r.t(n) + 0.5 * r.dt, xc = r.x(i) + 0.5 * r.dx;
        if (!partition) return WeightSample{1, WeightKind::t, 1.0, 0.0, 0.0, -1};
        const double ps = psi_center[static_cast<std::size_t>(i)];
        const double psx = (psi_node[static_cast<std::size_t>(i) + 1] - psi_node[static_cast<std::size_t>(i)]) / r.dx;
        return partition->sample(tc, xc, ps, psx);
    }

    double corner_phi(const GridSolveResult& r, const WeightSample& s, int n, int i) const {
        if (!partition) return 1.0;
        return phi_of(s.kind, r.t(n), psi_node[static_cast<std::size_t>(i)]);
    }
};

inline bool cell_inside(const GridSolveResult& r, int n, int i) {
    return r.valid(n, i) && r.valid(n, i + 1) && r.valid(n + 1, i) && r.valid(n + 1, i + 1);
}

/// -oint over the cell boundary of P dx + Q dt (counter-clockwise), trapezoid on each edge.
/// Corner order: (n,i), (n,i+1), (n+1,i), (n+1,i+1).
inline double minus_cell_circulation(const std::array<double, 4>& P, const std::array<double, 4>& Q, double dx,
                                     double dt) {
    return dx * (0.5 * (P[2] + P[3]) - 0.5 * (P[0] + P[1])) - dt * (0.5 * (Q[1] + Q[3]) - 0.5 * (Q[0] + Q[2]));
}

struct CellFrameData {
    double E = 0.0, EA = 0.0, dt_lambda = 0.0, dx_lambdaA = 0.0, cross = 0.0, F2 = 0.0;
};

/// Frame quantities at a cell centre from the averaged corner state.
inline CellFrameData cell_frame_data(const GridSolveResult& r, int n, int i) {
    const CoefficientField& f = *r.system.field;
    const double tc = r.t(n) + 0.5 * r.dt, xc = r.x(i) + 0.5 * r.dx;
    const Vec3c Uc = 0.25 * (r.at(n, i) + r.at(n, i + 1) + r.at(n + 1, i) + r.at(n + 1, i + 1));
    const SpectralFrame fr = frame_at(f, tc, xc);
    const FrameDerivatives dv = frame_derivatives(f, tc, xc, fr);
    const Mat3c Tc = to_complex(fr.T), Tt = to_complex(fr.T.transpose());
    const Vec3c V = Tt * Uc;
    const Vec3c Ft = Tt * r.system.F(tc, xc);
    Mat3c Bc = to_complex(dv.dt_TinvT - fr.A_T * dv.dy_TinvT);
    if (r.system.lower) Bc += Tt * r.system.B(tc, xc) * Tc;
    const Vec3c W = Bc * V + Ft;
    CellFrameData c;
    for (std::size_t k = 0; k < 3; ++k) {
        c.E += fr.lambda[k] * std::norm(V[k]);
        c.dt_lambda += dv.dt_lambda[k] * std::norm(V[k]);
        c.cross += 2.0 * fr.lambda[k] * std::real(W[k] * std::conj(V[k]));
    }
    c.EA = quad_form(fr.Lambda * fr.A_T, V);
    c.dx_lambdaA = quad_form(dv.dy_LambdaAT, V);
    c.F2 = norm2(Ft);
    return c;
}

struct NodeForms {
    std::vector<double> E, EA;  ///< <S U, U> and <S A U, U> at every node
};

inline NodeForms node_forms(const GridSolveResult& r) {
    NodeForms nf;
    nf.E.assign(r.U.size(), 0.0);
    nf.EA.assign(r.U.size(), 0.0);
    parallel_for(static_cast<std::size_t>(r.nt) + 1, [&](std::size_t nn) {
        const int n = static_cast<int>(nn);
        for (int i = 0; i <= r.nx; ++i) {
            if (!r.valid(n, i)) continue;
            const Bezoutian z = build_bezoutian(r.system.field->a(r.t(n), r.x(i)), r.system.field->b(r.t(n), r.x(i)));
            nf.E[r.idx(n, i)] = quad_form(z.S, r.at(n, i));
            nf.EA[r.idx(n, i)] = quad_form(z.S * z.A, r.at(n, i));
        }
    });
    return nf;
}

/// Cells of region `region` in row-major order with their weight samples.
struct RegionCells {
    std::vector<std::pair<int, int>> cells;
    std::vector<WeightSample> samples;
};

inline RegionCells region_cells(const GridSolveResult& r, const CellWeights& cw, int region) {
    RegionCells rc;
    for (int n = 0; n < r.nt; ++n)
        for (int i = 0; i < r.nx; ++i) {
            if (!cell_inside(r, n, i)) continue;
            const auto s = cw.cell_sample(r, n, i);
            if (!s || s->region != region) continue;
            rc.cells.emplace_back(n, i);
            rc.samples.push_back(*s);
        }
    return rc;
}

inline void require_frames(const GridSolveResult& r, const char* who) {
    if (!r.system.field) throw InputError(std::string(who) + ": result was not produced from a reduced symbol");
}

inline void require_region(const WeightPartition* w, int region, const char* who) {
    const int max_region = !w ? 1 : (w->variant == PartitionVariant::double_root ? 2 : 3);
    if (region < 1 || region > max_region)
        throw InputError(std::string(who) + ": region " + std::to_string(region) + " is not part of the partition");
}

}  // namespace detail

struct StokesReport {
    double lhs = 0.0, rhs = 0.0;
    double boundary = 0.0;  ///< -oint G
    double scale = 0.0;     ///< sum of absolute cell contributions
    std::size_t cells = 0;
    double residual() const { return std::abs(lhs - rhs); }
};

/// Both sides of the weighted energy identity on the cells of one subregion. A null partition means g = 1 on the
/// whole clipped cone.
inline StokesReport stokes_identity(const GridSolveResult& r, const WeightPartition* w, int region, int N) {
    detail::require_frames(r, "stokes_identity");
    detail::require_region(w, region, "stokes_identity");
    const detail::CellWeights cw(r, w);
    const auto rc = detail::region_cells(r, cw, region);
    const auto nf = detail::node_forms(r);
    struct Part {
        double lhs = 0.0, rhs = 0.0, bnd = 0.0, scale = 0.0;
    };
    const auto parts = parallel_map<Part>(rc.cells.size(), [&](std::size_t k) {
        const auto [n, i] = rc.cells[k];
        const WeightSample& s = rc.samples[k];
        const double e = w ? weight_exponent(s.exponent_sign, N) : 0.0;
        std::array<double, 4> P{}, Q{};
        const std::array<std::pair<int, int>, 4> corners{{{n, i}, {n, i + 1}, {n + 1, i}, {n + 1, i + 1}}};
        for (std::size_t c = 0; c < 4; ++c) {
            const auto [cn, ci] = corners[c];
            const double lg = detail::log_weight(cw.corner_phi(r, s, cn, ci), e);
            P[c] = detail::weighted(lg, nf.E[r.idx(cn, ci)]);
            Q[c] = detail::weighted(lg, nf.EA[r.idx(cn, ci)]);
        }
        const auto d = detail::cell_frame_data(r, n, i);
        const double area = r.dx * r.dt;
        const double g = w ? std::exp(detail::log_weight(s.phi, e)) : 1.0;
        const double gt = w ? g * e * s.phi_t / s.phi : 0.0;
        const double gx = w ? g * e * s.phi_x / s.phi : 0.0;
        Part p;
        p.bnd = detail::minus_cell_circulation(P, Q, r.dx, r.dt);
        const std::array<double, 4> vol{-gt * d.E, -g * d.dt_lambda, gx * d.EA, g * d.dx_lambdaA};
        p.rhs = p.bnd;
        p.scale = std::abs(p.bnd);
        for (double v : vol) {
            p.rhs += area * v;
            p.scale += area * std::abs(v);
        }
        p.lhs = area * g * d.cross;
        p.scale += std::abs(p.lhs);
        return p;
    });
    StokesReport out;
    out.cells = rc.cells.size();
    for (const auto& p : parts) {
        out.lhs += p.lhs;
        out.rhs += p.rhs;
        out.boundary += p.bnd;
        out.scale += p.scale;
    }
    return out;
}

inline double stokes_identity_residual(const GridSolveResult& r, const WeightPartition* w, int region, int N) {
    return stokes_identity(r, w, region, N).residual();
}

// ---------------------------------------------------------------------------------------------
// Space-like boundary form

using FrameField = std::function<Vec3c(double)>;  ///< V(x) along a curve, in frame coordinates

struct BoundaryPositivity {
    double integral = 0.0;
    double scale = 0.0;
    double min_pointwise = 0.0;  ///< min over samples of (<Lambda V,V> + f' <Lambda A_T V,V>) / |V|^2
    bool nonnegative = false;
};

/// Integrates G(V) = g <Lambda V, V> dx + g <Lambda A_T V, V> dt along (f(x), x) by the trapezoid rule.
inline BoundaryPositivity verify_boundary_positivity(const CoefficientField& f, const SpaceCurve& curve,
                                                     const ConeDomain& cone, const std::function<double(double, double)>& g,
                                                     const FrameField& V, int samples = 401, double tol = 1e-12) {
    const auto chk = spacelike_check(f, curve, cone);
    if (!chk.spacelike)
        throw InputError("verify_boundary_positivity: curve '" + curve.name + "' is not space-like (margin " +
                         std::to_string(chk.margin) + ")");
    BoundaryPositivity out;
    out.min_pointwise = std::numeric_limits<double>::infinity();
    const double h = (curve.x_hi - curve.x_lo) / (samples - 1);
    for (int k = 0; k < samples; ++k) {
        const double x = curve.x_lo + h * k, t = curve.f(x);
        const SpectralFrame fr = frame_at(f, t, x);
        const Vec3c v = V(x);
        const double e = quad_form(fr.Lambda, v), ea = quad_form(fr.Lambda * fr.A_T, v);
        const double form = e + curve.df(x) * ea;
        const double w = (k == 0 || k == samples - 1) ? 0.5 * h : h;
        const double gv = g(t, x);
        out.integral += w * gv * form;
        out.scale += w * gv * (std::abs(e) + std::abs(curve.df(x) * ea));
        const double nv = norm2(v);
        if (nv > 0.0) out.min_pointwise = std::min(out.min_pointwise, form / nv);
    }
    if (!std::isfinite(out.min_pointwise)) out.min_pointwise = 0.0;
    out.nonnegative = out.integral >= -tol * out.scale;
    return out;
}

// ---------------------------------------------------------------------------------------------
// Weighted energy inequality on the cone subregions

struct ConeRegionVerdict {
    int region = 1;
    int N = 0;
    double boundary = 0.0;     ///< -oint G_j
    double dissipation = 0.0;  ///< N int phi^{-1} g <Lambda V, V>
    double source = 0.0;       ///< int phi g |F|^2
    double C = 0.0;
    std::size_t cells = 0;
    bool pass() const { return std::isfinite(C) && std::isfinite(boundary) && std::isfinite(dissipation); }
};

inline std::vector<ConeRegionVerdict> energy_inequality_x(const GridSolveResult& r, const WeightPartition& w, int region,
                                                          const std::vector<int>& Ns) {
    detail::require_frames(r, "energy_inequality_x");
    detail::require_region(&w, region, "energy_inequality_x");
    const detail::CellWeights cw(r, &w);
    const auto rc = detail::region_cells(r, cw, region);
    const auto nf = detail::node_forms(r);
    const auto data = parallel_map<detail::CellFrameData>(rc.cells.size(), [&](std::size_t k) {
        return detail::cell_frame_data(r, rc.cells[k].first, rc.cells[k].second);
    });
    std::vector<ConeRegionVerdict> out;
    for (int N : Ns) {
        ConeRegionVerdict v;
        v.region = region;
        v.N = N;
        v.cells = rc.cells.size();
        for (std::size_t k = 0; k < rc.cells.size(); ++k) {
            const auto [n, i] = rc.cells[k];
            const WeightSample& s = rc.samples[k];
            const double e = weight_exponent(s.exponent_sign, N);
            std::array<double, 4> P{}, Q{};
            const std::array<std::pair<int, int>, 4> corners{{{n, i}, {n, i + 1}, {n + 1, i}, {n + 1, i + 1}}};
            for (std::size_t c = 0; c < 4; ++c) {
                const auto [cn, ci] = corners[c];
                const double lg = detail::log_weight(cw.corner_phi(r, s, cn, ci), e);
                P[c] = detail::weighted(lg, nf.E[r.idx(cn, ci)]);
                Q[c] = detail::weighted(lg, nf.EA[r.idx(cn, ci)]);
            }
            const double area = r.dx * r.dt, lg = detail::log_weight(s.phi, e), lphi = std::log(std::abs(s.phi));
            v.boundary += detail::minus_cell_circulation(P, Q, r.dx, r.dt);
            v.dissipation += N * area * detail::weighted(lg - lphi, data[k].E);
            v.source += area * detail::weighted(lg + lphi, data[k].F2);
        }
        const double num = std::max(0.0, v.boundary + v.dissipation);
        v.C = num == 0.0 ? 0.0 : num / v.source;
        out.push_back(v);
    }
    return out;
}

/// Switch-on source exp(-tau / (t - t0(x))) * exp(-(x / width)^2).
inline SpaceTimeSource switch_on_source(double tau, double width, std::function<double(double)> t0 = {}) {
    return [tau, width, t0 = std::move(t0)](double t, double x) -> cplx {
        const double s = t0 ? t - t0(x) : t;
        const double e = s > 0.0 ? tau / s : kBumpCutExponent;
        if (e >= kBumpCutExponent) return 0.0;
        return std::exp(-e - (x / width) * (x / width));
    };
}

struct ConeEnergyOptions {
    SchemeSpec scheme{};
    double bump_fraction = 0.1;  ///< switch-on scale relative to T
    std::vector<int> Ns{4, 8, 16};
};

/// Runs the cone solve needed by each region: a zero-data run switched on at t = 0 for the first regions and,
/// for the region above t = psi(x), a run switched on along that curve so its data vanish there.
inline std::vector<ConeRegionVerdict> cone_energy_verdicts(const CoefficientField& f, const ConeDomain& cone,
                                                           const WeightPartition& w, const ConeEnergyOptions& opt = {}) {
    const double tau = opt.bump_fraction * cone.T, width = 0.5 * cone.half_width();
    const auto zero = [](double) { return Vec3c{}; };
    const auto first = solve_cone(make_cone_system(f, switch_on_source(tau, width)), cone, zero, opt.scheme);
    std::vector<ConeRegionVerdict> out;
    const int regions = w.variant == PartitionVariant::double_root ? 2 : 3;
    bool has_top = false;
    for (int i = 0; i <= first.nx; ++i) has_top = has_top || w.psi(first.x(i)) > 0.0;
    for (int j = 1; j <= (has_top ? regions : 1); ++j) {
        const bool top = j == regions;
        if (!top) {
            const auto v = energy_inequality_x(first, w, j, opt.Ns);
            out.insert(out.end(), v.begin(), v.end());
            continue;
        }
        std::vector<double> ps(static_cast<std::size_t>(first.nx) + 1);
        for (int i = 0; i <= first.nx; ++i) ps[static_cast<std::size_t>(i)] = w.psi(first.x(i));
        auto psi = [ps, x0 = first.x0, dx = first.dx](double x) {
            const double u = std::clamp((x - x0) / dx, 0.0, static_cast<double>(ps.size() - 1));
            const std::size_t k = std::min(static_cast<std::size_t>(u), ps.size() - 2);
            const double s = u - static_cast<double>(k);
            return (1.0 - s) * ps[k] + s * ps[k + 1];
        };
        const auto second = solve_cone(make_cone_system(f, switch_on_source(tau, width, psi)), cone, zero, opt.scheme);
        const auto v = energy_inequality_x(second, w, j, opt.Ns);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Domain of dependence

struct DependenceReport {
    double change = 0.0;        ///< |U'(P) - U(P)|
    double perturbation = 0.0;  ///< sup of the perturbation on the base
    double tolerance = 0.0;     ///< dx * perturbation
    double inside_change = 0.0; ///< control: same perturbation moved inside the backward cone
    bool support_outside = false;
    bool pass() const { return support_outside && change <= tolerance && inside_change > tolerance; }
};

/// Compares the value at (level n, node i) for base data and base data plus a bump centred at x_out, and, as a
/// control, at x_in. The backward cone of the point is |x - x_P| <= tau_max t_P.
inline DependenceReport check_domain_of_dependence(const ConeSystem& sys, const ConeDomain& cone, const InitialData& U0,
                                                   double t_point, double x_point, double x_out, double x_in,
                                                   double bump_width, const SchemeSpec& spec = {}) {
    auto bump = [bump_width](double c) {
        return [c, bump_width](double x) {
            const double s = (x - c) / bump_width;
            return std::abs(s) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0;
        };
    };
    const auto base = solve_cone(sys, cone, U0, spec);
    const int n = static_cast<int>(std::lround(t_point / base.dt));
    const int i = static_cast<int>(std::lround((x_point - base.x0) / base.dx));
    if (!base.valid(n, i)) throw InputError("check_domain_of_dependence: point lies outside the clipped cone");
    const double reach = base.tau_max * base.t(n);
    DependenceReport rep;
    rep.support_outside = std::abs(x_out - base.x(i)) - bump_width > reach;
    auto perturbed = [&](double c) {
        const auto b = bump(c);
        return solve_cone(sys, cone, [&](double x) { return U0(x) + b(x) * Vec3c{{cplx(1.0), cplx(0.5), cplx(0.25)}}; },
                          spec);
    };
    const auto out = perturbed(x_out);
    const auto in = perturbed(x_in);
    rep.perturbation = 1.0;
    rep.change = norm(out.at(n, i) - base.at(n, i));
    rep.inside_change = norm(in.at(n, i) - base.at(n, i));
    rep.tolerance = base.dx * rep.perturbation;
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Factored double-root energies

struct FactoredVerdict {
    std::string inequality;  ///< "P2", "P1", "combined"
    int region = 1;
    int N = 0;
    double lhs = 0.0;        ///< weighted source side
    double boundary = 0.0;   ///< -oint G
    double dissipation = 0.0;
    double C = 0.0;          ///< (boundary + dissipation)^+ / lhs
    bool pass() const { return std::isfinite(C) && C <= 1.0; }
};

struct FactoredReport {
    std::vector<FactoredVerdict> verdicts;
    bool pass() const {
        return !verdicts.empty() &&
               std::all_of(verdicts.begin(), verdicts.end(), [](const FactoredVerdict& v) { return v.pass(); });
    }
};

/// Checks the second-order, first-order and combined weighted inequalities on a solve of the factored system with
/// tracked potential. Without a partition the single weight phi = t is used.
inline FactoredReport factored_double_energy(const FactoredField& d, const GridSolveResult& r, const std::vector<int>& Ns,
                                             const WeightPartition* w = nullptr, int region = 1) {
    if (std::abs(d.b(0.0, 0.0)) <= 1e-8)
        throw AnalysisError("factored_double_energy: b(0,0) = 0, the factorization needs a simple transport root");
    if (r.potential.empty()) throw InputError("factored_double_energy: solve without tracked potential");
    detail::require_region(w, region, "factored_double_energy");
    const cplx I(0.0, 1.0);
    struct NodeValues {
        double P2w = 0.0, P1z = 0.0, Dtw = 0.0, Dxw = 0.0, z = 0.0, a = 0.0, b = 0.0;
        double flux2 = 0.0;  ///< a 2 Re(D_x w conj(D_t w))
    };
    std::vector<NodeValues> nv(r.U.size());
    parallel_for(static_cast<std::size_t>(r.nt) + 1, [&](std::size_t nn) {
        const int n = static_cast<int>(nn);
        const double t = r.t(n);
        for (int i = 0; i <= r.nx; ++i) {
            if (!r.valid(n, i)) continue;
            const double x = r.x(i);
            const Vec3c& U = r.at(n, i);
            const Vec3c& p = r.potential[r.idx(n, i)];
            const double a = d.a(t, x), b = d.b(t, x);
            const cplx Dxu = -I * p[2];
            const cplx Dtb = -I * d.b_t(t, x), Dxb = -I * d.b_x(t, x);
            const cplx Dta = -I * d.a_t(t, x), Dxa = -I * d.a_x(t, x);
            const cplx f = r.system.source ? r.system.source(t, x) : cplx{};
            const cplx Dtw = U[0] - Dtb * Dxu - b * U[1];
            const cplx Dxw = U[1] - Dxb * Dxu - b * U[2];
            const cplx P2w = f - 2.0 * Dtb * U[1] + d.b_tt(t, x) * Dxu + 2.0 * a * Dxb * U[2] - a * d.b_xx(t, x) * Dxu;
            const cplx z = U[0] - a * U[2];
            const cplx P1z = f - Dta * U[2] + b * Dxa * U[2];
            NodeValues& o = nv[r.idx(n, i)];
            o.P2w = std::norm(P2w);
            o.P1z = std::norm(P1z);
            o.Dtw = std::norm(Dtw);
            o.Dxw = std::norm(Dxw);
            o.z = std::norm(z);
            o.a = a;
            o.b = b;
            o.flux2 = 2.0 * a * std::real(Dxw * std::conj(Dtw));
        }
    });
    std::optional<detail::CellWeights> cw;
    if (w) cw.emplace(r, w);
    std::vector<std::pair<int, int>> cells;
    std::vector<WeightSample> samples;
    for (int n = 0; n < r.nt; ++n)
        for (int i = 0; i < r.nx; ++i) {
            if (!detail::cell_inside(r, n, i)) continue;
            if (!cw) {
                cells.emplace_back(n, i);
                samples.push_back({1, WeightKind::t, r.t(n) + 0.5 * r.dt, 1.0, 0.0, -1});
                continue;
            }
            const auto s = cw->cell_sample(r, n, i);
            if (!s || s->region != region) continue;
            cells.emplace_back(n, i);
            samples.push_back(*s);
        }
    FactoredReport rep;
    for (int N : Ns) {
        std::array<FactoredVerdict, 3> v;
        v[0].inequality = "P2";
        v[1].inequality = "P1";
        v[2].inequality = "combined";
        for (std::size_t k = 0; k < cells.size(); ++k) {
            const auto [n, i] = cells[k];
            const WeightSample& s = samples[k];
            const double e = weight_exponent(s.exponent_sign, N);
            const std::array<std::pair<int, int>, 4> corners{{{n, i}, {n, i + 1}, {n + 1, i}, {n + 1, i + 1}}};
            std::array<double, 4> P2{}, Q2{}, P1{}, Q1{};
            double src2 = 0.0, src1 = 0.0, dis2 = 0.0, dis1 = 0.0, dis1c = 0.0;
            for (std::size_t c = 0; c < 4; ++c) {
                const auto [cn, ci] = corners[c];
                const NodeValues& q = nv[r.idx(cn, ci)];
                const double phi = cw ? cw->corner_phi(r, s, cn, ci) : r.t(cn);
                const double lg = detail::log_weight(phi, e);
                const double lphi = phi == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(std::abs(phi));
                P2[c] = detail::weighted(lg, q.Dtw + q.a * q.Dxw);
                Q2[c] = detail::weighted(lg, q.flux2);
                P1[c] = detail::weighted(lg, q.z);
                Q1[c] = detail::weighted(lg, q.b * q.z);
                src2 += 0.25 * detail::weighted(lg + lphi, q.P2w);
                src1 += 0.25 * detail::weighted(lg + lphi, q.P1z);
                dis2 += 0.25 * detail::weighted(lg + lphi, q.Dtw + q.Dxw);
                dis1 += 0.25 * detail::weighted(lg - lphi, q.z);
                dis1c += 0.25 * detail::weighted(lg + lphi, q.z);
            }
            const double area = r.dx * r.dt;
            const double b2 = detail::minus_cell_circulation(P2, Q2, r.dx, r.dt);
            const double b1 = detail::minus_cell_circulation(P1, Q1, r.dx, r.dt);
            v[0].lhs += area * src2;
            v[0].boundary += b2;
            v[0].dissipation += N * area * dis2;
            v[1].lhs += area * src1;
            v[1].boundary += b1;
            v[1].dissipation += N * area * dis1;
            v[2].lhs += area * (src1 + src2);
            v[2].boundary += b1 + b2;
            v[2].dissipation += N * area * (dis2 + dis1c);
        }
        for (auto& x : v) {
            x.N = N;
            x.region = region;
            const double num = std::max(0.0, x.boundary + x.dissipation);
            x.C = num == 0.0 ? 0.0 : num / x.lhs;
            rep.verdicts.push_back(x);
        }
    }
    return rep;
}

}  // namespace triplesym
