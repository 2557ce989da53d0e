#pragma once

#include "triplesym/errors.hpp"
#include "triplesym/linalg.hpp"
#include "triplesym/polynomial.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace triplesym {

using ScalarMap = std::function<double(double, double)>;
using ComplexMap = std::function<cplx(double, double)>;

/// Rectangle [t_lo, t_hi] x [y_lo, y_hi]; y is a space variable or a frequency-direction parameter.
struct Domain {
    double t_lo = 0.0, t_hi = 1.0;
    double y_lo = -1.0, y_hi = 1.0;

    bool contains(double t, double y) const {
        const double et = 1e-12 * (1.0 + std::abs(t_hi - t_lo));
        const double ey = 1e-12 * (1.0 + std::abs(y_hi - y_lo));
        return t >= t_lo - et && t <= t_hi + et && y >= y_lo - ey && y <= y_hi + ey;
    }
};

/// Tensor probe grid with inclusive endpoints.
struct GridSpec {
    double t_lo = 0.0, t_hi = 1.0;
    double y_lo = 0.0, y_hi = 0.0;
    int nt = 101, ny = 1;

    double t(int i) const { return nt == 1 ? t_lo : t_lo + (t_hi - t_lo) * i / (nt - 1); }
    double y(int j) const { return ny == 1 ? y_lo : y_lo + (y_hi - y_lo) * j / (ny - 1); }
    std::size_t size() const { return static_cast<std::size_t>(nt) * static_cast<std::size_t>(ny); }

    /// Same box with the spacing halved in both directions.
    GridSpec refined() const {
        GridSpec g = *this;
        g.nt = nt > 1 ? 2 * nt - 1 : 1;
        g.ny = ny > 1 ? 2 * ny - 1 : 1;
        return g;
    }
};

/// Grid on t in (t_lo, t_hi] that skips the left endpoint: t_i = t_lo + (t_hi - t_lo) i / nt, i = 1..nt.
/// Refinement doubles nt, so the smallest sampled t halves as well.
struct OpenGrid {
    double t_lo = 0.0, t_hi = 0.05;
    double y_lo = 0.0, y_hi = 0.0;
    int nt = 100, ny = 1;

    double t(int i) const { return t_lo + (t_hi - t_lo) * (i + 1) / nt; }
    double y(int j) const { return ny == 1 ? y_lo : y_lo + (y_hi - y_lo) * j / (ny - 1); }
    std::size_t size() const { return static_cast<std::size_t>(nt) * static_cast<std::size_t>(ny); }
    OpenGrid refined() const {
        OpenGrid g = *this;
        g.nt = 2 * nt;
        g.ny = ny > 1 ? 2 * ny - 1 : 1;
        return g;
    }
};

enum class DerivativeMode { analytic, finite_difference };

/// Exact per-slice polynomial-in-t representations.
struct PolyInT {
    std::function<Poly(double)> a;
    std::function<Poly(double)> b;  ///< may be empty when b is not polynomial in t
    std::function<Poly(double)> delta;
};

inline constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

/// Central-difference step eps^(1/3) * max(|x|, floor).
inline double fd_step(double x, double floor) { return std::cbrt(kMachineEps) * std::max(std::abs(x), floor); }

/// First derivative of f at x, second-order accurate; one-sided near [lo, hi] edges.
template <class F>
double fd_first(F&& f, double x, double h, double lo, double hi) {
    if (x - h < lo && x + 2 * h <= hi) return (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2 * h)) / (2.0 * h);
    if (x + h > hi && x - 2 * h >= lo) return (3.0 * f(x) - 4.0 * f(x - h) + f(x - 2 * h)) / (2.0 * h);
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

template <class F>
double fd_second(F&& f, double x, double h, double lo, double hi) {
    if (x - h < lo && x + 3 * h <= hi) return (2.0 * f(x) - 5.0 * f(x + h) + 4.0 * f(x + 2 * h) - f(x + 3 * h)) / (h * h);
    if (x + h > hi && x - 3 * h >= lo) return (2.0 * f(x) - 5.0 * f(x - h) + 4.0 * f(x - 2 * h) - f(x - 3 * h)) / (h * h);
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

/// Coefficients a, b of tau^3 - a|xi|^2 tau - b|xi|^3 and the optional lower-order row (b1, b2, b3)
/// of the reduced first-order system.
struct CoefficientField {
    std::string name;
    ScalarMap a, b;
    std::optional<std::array<ComplexMap, 3>> lower_terms;
    Domain domain;
    DerivativeMode derivative_mode = DerivativeMode::finite_difference;
    double fd_floor = 1e-3;
    bool y_independent = false;

    // Analytic partials; any empty one falls back to finite differences.
    ScalarMap a_t, a_y, b_t, b_y, a_tt;
    std::optional<PolyInT> poly_t;

    double delta(double t, double y) const {
        const double av = a(t, y), bv = b(t, y);
        return 4.0 * av * av * av - 27.0 * bv * bv;
    }

    double dadt(double t, double y) const { return partial_t(a_t, a, t, y); }
    double dady(double t, double y) const { return partial_y(a_y, a, t, y); }
    double dbdt(double t, double y) const { return partial_t(b_t, b, t, y); }
    double dbdy(double t, double y) const { return partial_y(b_y, b, t, y); }
    double d2adt2(double t, double y) const {
        if (a_tt) return a_tt(t, y);
        const double h = std::pow(kMachineEps, 0.25) * std::max(std::abs(t), fd_floor);
        return fd_second([&](double s) { return a(s, y); }, t, h, domain.t_lo, domain.t_hi);
    }
    double ddelta_dt(double t, double y) const {
        const double av = a(t, y), bv = b(t, y);
        return 12.0 * av * av * dadt(t, y) - 54.0 * bv * dbdt(t, y);
    }

    std::array<cplx, 3> lower(double t, double y) const {
        if (!lower_terms) return {cplx{}, cplx{}, cplx{}};
        return {(*lower_terms)[0](t, y), (*lower_terms)[1](t, y), (*lower_terms)[2](t, y)};
    }

private:
    double partial_t(const ScalarMap& exact, const ScalarMap& f, double t, double y) const {
        if (exact) return exact(t, y);
        return fd_first([&](double s) { return f(s, y); }, t, fd_step(t, fd_floor), domain.t_lo, domain.t_hi);
    }
    double partial_y(const ScalarMap& exact, const ScalarMap& f, double t, double y) const {
        if (exact) return exact(t, y);
        if (y_independent) return 0.0;
        return fd_first([&](double s) { return f(t, s); }, y, fd_step(y, fd_floor), domain.y_lo, domain.y_hi);
    }
};

inline double discriminant(double a, double b) { return 4.0 * a * a * a - 27.0 * b * b; }

inline double discriminant(const CoefficientField& f, double t, double y) {
    if (!f.domain.contains(t, y))
        throw InputError("discriminant: point (" + std::to_string(t) + ", " + std::to_string(y) + ") outside domain");
    return f.delta(t, y);
}

inline double delta_tolerance(double a) { return 1e-10 * (1.0 + std::abs(a * a * a)); }
inline constexpr double kTripleTol = 1e-8;

struct GridPoint {
    double t = 0.0, y = 0.0;
};

struct HyperbolicityReport {
    double delta_min = std::numeric_limits<double>::infinity();
    std::vector<GridPoint> violation_points;
    std::vector<GridPoint> triple_points;
    std::vector<bool> effective;
    bool hyperbolic() const { return violation_points.empty(); }
};

enum class CriticalKind { triple, double_root };

/// Effective hyperbolicity at a triple point (d_t a != 0) or at a double point of
/// tau^2 - a xi^2 (d_t a != 0, else d_t^2 a != 0).
inline bool check_effective_hyperbolicity(const CoefficientField& f, GridPoint p,
                                          CriticalKind kind = CriticalKind::triple, double tol = kTripleTol) {
    if (!f.a) throw ConfigurationError("effective hyperbolicity: coefficient a unavailable");
    if (!f.domain.contains(p.t, p.y)) throw InputError("effective hyperbolicity: point outside domain");
    const double first = std::abs(f.dadt(p.t, p.y));
    if (kind == CriticalKind::triple) return first > tol;
    if (first > tol) return true;
    return std::abs(f.d2adt2(p.t, p.y)) > tol;
}

inline HyperbolicityReport check_hyperbolicity(const CoefficientField& f, const GridSpec& g,
                                               double triple_tol = kTripleTol) {
    HyperbolicityReport r;
    for (int i = 0; i < g.nt; ++i)
        for (int j = 0; j < g.ny; ++j) {
            const double t = g.t(i), y = g.y(j);
            if (!f.domain.contains(t, y)) throw InputError("check_hyperbolicity: grid leaves the domain");
            const double av = f.a(t, y), bv = f.b(t, y);
            const double d = discriminant(av, bv);
            r.delta_min = std::min(r.delta_min, d);
            if (d < -delta_tolerance(av)) r.violation_points.push_back({t, y});
            if (std::abs(av) <= triple_tol && std::pow(std::abs(bv), 2.0 / 3.0) <= triple_tol)
                r.triple_points.push_back({t, y});
        }
    for (const auto& p : r.triple_points) r.effective.push_back(check_effective_hyperbolicity(f, p));
    return r;
}

// ---------------------------------------------------------------------------------------------
// Family builders

/// Builder description. `kind` selects which fields apply.
struct FamilySpec {
    std::string kind = "tricomi";  ///< tricomi | polynomial | prescribed_delta | theta | general_triple
    std::string label;

    int l = 1;       ///< tricomi exponent
    double c = 0.0;  ///< tricomi transport speed

    std::string a_expr = "t";  ///< polynomial / prescribed_delta / theta
    std::string b_expr = "0";  ///< polynomial

    std::vector<cplx> roots;     ///< prescribed_delta; each non-real entry implies its conjugate
    double kappa = 0.0;          ///< prescribed_delta scale; 0 selects kappa_fraction * admissible max
    double kappa_fraction = 0.5;
    double root_y_coupling = 0.0;  ///< roots scale by (1 + coupling * y^2)

    double theta = 0.0;  ///< theta family: b = theta * 2/(3 sqrt 3) a^(3/2)

    std::string alpha_expr = "t-x";  ///< general_triple: a = alpha^2, b = theta 2/(3 sqrt 3) |alpha|^3

    Domain domain{0.0, 1.0, -1.0, 1.0};
};

namespace detail {

inline CoefficientField polynomial_field(const BiPoly& a, const BiPoly& b, const Domain& dom, std::string name) {
    CoefficientField f;
    f.name = std::move(name);
    f.domain = dom;
    f.a = [a](double t, double y) { return a(t, y); };
    f.b = [b](double t, double y) { return b(t, y); };
    f.a_t = [p = a.dt()](double t, double y) { return p(t, y); };
    f.a_y = [p = a.dy()](double t, double y) { return p(t, y); };
    f.b_t = [p = b.dt()](double t, double y) { return p(t, y); };
    f.b_y = [p = b.dy()](double t, double y) { return p(t, y); };
    f.a_tt = [p = a.dt().dt()](double t, double y) { return p(t, y); };
    f.derivative_mode = DerivativeMode::analytic;
    f.y_independent = !a.depends_on_y() && !b.depends_on_y();
    PolyInT pt;
    pt.a = [a](double y) { return a.in_t(y); };
    pt.b = [b](double y) { return b.in_t(y); };
    pt.delta = [a, b](double y) {
        const Poly pa = a.in_t(y), pb = b.in_t(y);
        return 4.0 * (pa * pa * pa) - 27.0 * (pb * pb);
    };
    f.poly_t = std::move(pt);
    return f;
}

inline std::vector<cplx> expand_conjugates(const std::vector<cplx>& roots) {
    std::vector<cplx> out;
    for (const auto& r : roots) {
        out.push_back(r);
        if (r.imag() != 0.0) out.push_back(std::conj(r));
    }
    return out;
}

inline double theta_factor() { return 2.0 / (3.0 * std::sqrt(3.0)); }

}  // namespace detail

/// tricomi(l, c): the symbol (tau^2 - t^l xi^2)(tau + c xi) reduced by completing the cube.
inline CoefficientField make_tricomi(int l, double c, const Domain& dom) {
    if (l < 1) throw InputError("tricomi: exponent must be >= 1");
    const BiPoly tl = BiPoly::var_t().pow(l);
    // tau^3 + c tau^2 - t^l tau - c t^l  ->  sigma^3 - a sigma - b
    const BiPoly a = BiPoly::constant(c * c / 3.0) + tl;
    const BiPoly b = (2.0 / 3.0 * c) * tl - BiPoly::constant(2.0 * c * c * c / 27.0);
    return detail::polynomial_field(a, b, dom, "tricomi(" + std::to_string(l) + "," + std::to_string(c) + ")");
}

/// Admissible upper bound for kappa: min over a probe grid of 4a^3 / profile where profile > 0.
inline double prescribed_kappa_max(const ScalarMap& a, const ScalarMap& profile, const Domain& dom, int n = 201) {
    double kmax = std::numeric_limits<double>::infinity();
    const int ny = dom.y_hi > dom.y_lo ? 41 : 1;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < ny; ++j) {
            const double t = dom.t_lo + (dom.t_hi - dom.t_lo) * i / (n - 1);
            const double y = ny == 1 ? dom.y_lo : dom.y_lo + (dom.y_hi - dom.y_lo) * j / (ny - 1);
            const double pv = profile(t, y);
            const double av = a(t, y);
            if (pv < -1e-14) throw InputError("prescribed_delta: target discriminant profile is negative on the domain");
            if (pv <= 0.0) continue;
            if (av <= 0.0) throw InputError("prescribed_delta: infeasible profile, 4a^3 <= 0 where the profile is positive");
            kmax = std::min(kmax, 4.0 * av * av * av / pv);
        }
    return kmax;
}

inline CoefficientField make_prescribed_delta(const FamilySpec& s) {
    const BiPoly apoly = BiPolyParser::parse(s.a_expr);
    const std::vector<cplx> roots = detail::expand_conjugates(s.roots);
    if (roots.size() != 3) throw InputError("prescribed_delta: exactly three roots (counting conjugates) are required");
    const double coupling = s.root_y_coupling;
    auto profile_poly = [roots, coupling](double y) {
        std::vector<cplx> r = roots;
        for (auto& z : r) z *= (1.0 + coupling * y * y);
        return poly_from_roots(r);
    };
    ScalarMap a = [apoly](double t, double y) { return apoly(t, y); };
    ScalarMap profile = [profile_poly](double t, double y) { return profile_poly(y)(t); };
    const double kmax = prescribed_kappa_max(a, profile, s.domain);
    double kappa = s.kappa;
    if (kappa <= 0.0) {
        if (!std::isfinite(kmax)) throw InputError("prescribed_delta: cannot choose kappa, profile vanishes identically");
        kappa = s.kappa_fraction * kmax;
    } else if (kappa > kmax) {
        throw InputError("prescribed_delta: kappa exceeds the admissible maximum " + std::to_string(kmax));
    }
    CoefficientField f;
    f.name = s.label.empty() ? "prescribed_delta" : s.label;
    f.domain = s.domain;
    f.y_independent = !apoly.depends_on_y() && coupling == 0.0;
    f.a = a;
    f.b = [a, profile, kappa](double t, double y) {
        const double av = a(t, y);
        return std::sqrt(std::max(0.0, (4.0 * av * av * av - kappa * profile(t, y)) / 27.0));
    };
    f.a_t = [p = apoly.dt()](double t, double y) { return p(t, y); };
    f.a_y = [p = apoly.dy()](double t, double y) { return p(t, y); };
    f.a_tt = [p = apoly.dt().dt()](double t, double y) { return p(t, y); };
    PolyInT pt;
    pt.a = [apoly](double y) { return apoly.in_t(y); };
    pt.delta = [profile_poly, kappa](double y) { return kappa * profile_poly(y); };
    f.poly_t = std::move(pt);
    return f;
}

/// b = theta * 2/(3 sqrt 3) * a^(3/2), so the discriminant is 4 (1 - theta^2) a^3.
inline CoefficientField make_theta(const FamilySpec& s) {
    if (s.theta < 0.0 || s.theta > 1.0) throw InputError("theta family: theta must lie in [0, 1]");
    const BiPoly apoly = BiPolyParser::parse(s.a_expr);
    const double k = s.theta * detail::theta_factor();
    CoefficientField f;
    f.name = s.label.empty() ? "theta(" + std::to_string(s.theta) + ")" : s.label;
    f.domain = s.domain;
    f.y_independent = !apoly.depends_on_y();
    f.a = [apoly](double t, double y) { return apoly(t, y); };
    f.b = [apoly, k](double t, double y) { return k * std::pow(std::max(0.0, apoly(t, y)), 1.5); };
    f.a_t = [p = apoly.dt()](double t, double y) { return p(t, y); };
    f.a_y = [p = apoly.dy()](double t, double y) { return p(t, y); };
    f.a_tt = [p = apoly.dt().dt()](double t, double y) { return p(t, y); };
    f.b_t = [apoly, k, p = apoly.dt()](double t, double y) {
        return 1.5 * k * std::sqrt(std::max(0.0, apoly(t, y))) * p(t, y);
    };
    f.b_y = [apoly, k, p = apoly.dy()](double t, double y) {
        return 1.5 * k * std::sqrt(std::max(0.0, apoly(t, y))) * p(t, y);
    };
    f.derivative_mode = DerivativeMode::analytic;
    const double scale = 4.0 * (1.0 - s.theta * s.theta);
    PolyInT pt;
    pt.a = [apoly](double y) { return apoly.in_t(y); };
    pt.delta = [apoly, scale](double y) {
        const Poly pa = apoly.in_t(y);
        return scale * (pa * pa * pa);
    };
    f.poly_t = std::move(pt);
    return f;
}

inline CoefficientField make_general_triple(const FamilySpec& s) {
    const BiPoly alpha = BiPolyParser::parse(s.alpha_expr);
    if (s.theta == 0.0) {
        auto f = detail::polynomial_field(alpha * alpha, BiPoly{}, s.domain,
                                          s.label.empty() ? "general_triple(" + s.alpha_expr + ")" : s.label);
        return f;
    }
    FamilySpec th = s;
    // a = alpha^2 >= 0 everywhere, so the theta construction applies with |alpha|^3 = a^(3/2).
    std::string sq = "(" + s.alpha_expr + ")^2";
    th.a_expr = sq;
    auto f = make_theta(th);
    f.name = s.label.empty() ? "general_triple(" + s.alpha_expr + ")" : s.label;
    return f;
}

inline CoefficientField make_family(const FamilySpec& s) {
    CoefficientField f;
    if (s.kind == "tricomi") {
        f = make_tricomi(s.l, s.c, s.domain);
    } else if (s.kind == "polynomial") {
        f = detail::polynomial_field(BiPolyParser::parse(s.a_expr), BiPolyParser::parse(s.b_expr), s.domain,
                                     "a=" + s.a_expr + ",b=" + s.b_expr);
    } else if (s.kind == "prescribed_delta") {
        f = make_prescribed_delta(s);
    } else if (s.kind == "theta") {
        f = make_theta(s);
    } else if (s.kind == "general_triple") {
        f = make_general_triple(s);
    } else {
        throw ConfigurationError("unknown family kind '" + s.kind + "'");
    }
    if (!s.label.empty()) f.name = s.label;
    return f;
}

/// Families used throughout the test-suite and the acceptance runs.
namespace families {

inline FamilySpec tricomi(int l = 1, double c = 0.0) {
    FamilySpec s;
    s.kind = "tricomi";
    s.l = l;
    s.c = c;
    s.label = "tricomi(" + std::to_string(l) + "," + (c == 0.0 ? std::string("0") : std::to_string(c)) + ")";
    return s;
}

inline FamilySpec polynomial(std::string a, std::string b = "0", Domain dom = {0.0, 1.0, -1.0, 1.0}) {
    FamilySpec s;
    s.kind = "polynomial";
    s.a_expr = std::move(a);
    s.b_expr = std::move(b);
    s.domain = dom;
    s.label = "a=" + s.a_expr + (s.b_expr == "0" ? std::string() : ",b=" + s.b_expr);
    return s;
}

inline FamilySpec theta(double th, std::string a = "t") {
    FamilySpec s;
    s.kind = "theta";
    s.theta = th;
    s.a_expr = std::move(a);
    s.label = "theta(" + std::to_string(th).substr(0, 4) + ")";
    return s;
}

/// a = t + 0.1, discriminant profile with roots -0.05 and 0.1 +- 0.05i, so psi = 0.1.
inline FamilySpec complex_nu(double y_coupling = 0.0) {
    FamilySpec s;
    s.kind = "prescribed_delta";
    s.a_expr = "t+0.1";
    s.roots = {cplx(-0.05, 0.0), cplx(0.1, 0.05)};
    s.root_y_coupling = y_coupling;
    s.label = y_coupling == 0.0 ? "complex_nu" : "complex_nu_y";
    return s;
}

/// Profile (t+0.1)(t+0.2)(t+0.3) with a = t + 0.1.
inline FamilySpec three_real() {
    FamilySpec s;
    s.kind = "prescribed_delta";
    s.a_expr = "t+0.1";
    s.roots = {cplx(-0.1), cplx(-0.2), cplx(-0.3)};
    s.label = "three_real";
    return s;
}

inline FamilySpec general_triple(std::string alpha = "t-x") {
    FamilySpec s;
    s.kind = "general_triple";
    s.alpha_expr = std::move(alpha);
    s.domain = {-0.5, 0.5, -0.5, 0.5};
    s.label = "general_triple(" + s.alpha_expr + ")";
    return s;
}

/// The families near a triple point that every certification runs on.
inline std::vector<FamilySpec> builtin() {
    return {tricomi(1, 0.0), polynomial("t+y^2"), theta(0.0), theta(0.5), theta(0.9), complex_nu(0.5), three_real()};
}

}  // namespace families

}  // namespace triplesym
