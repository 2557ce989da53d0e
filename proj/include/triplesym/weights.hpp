#pragma once

#include "triplesym/calculus.hpp"
#include "triplesym/errors.hpp"
#include "triplesym/measure.hpp"
#include "triplesym/polynomial.hpp"
#include "triplesym/symbols.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace triplesym {

// ---------------------------------------------------------------------------------------------
// Root profiles of the normalized discriminant cubic

enum class RootCase { conjugate_pair, three_real };

inline const char* to_string(RootCase c) { return c == RootCase::conjugate_pair ? "conjugate-pair" : "three-real"; }

/// Sign tolerance (relative to 1 + |nu|) for the nonpositivity of real roots.
inline constexpr double kRootSignTol = 1e-8;
/// Roots with |Im| below this fraction of the root scale count as real.
inline constexpr double kImagRelTol = 1e-5;

/// Delta(t, y) = e2 (t^3 + a1 t^2 + a2 t + a3) near the reference time, a = e1 (t + alpha).
struct RootProfile {
    double y = 0.0;
    double e1 = 0.0;
    double e2 = 0.0;
    std::array<double, 3> coeffs{};  ///< a1, a2, a3
    std::array<cplx, 3> nu{};        ///< conjugate pair: (real, upper, lower); three real: ascending
    RootCase case_tag = RootCase::three_real;
    double psi = 0.0;
    double alpha = 0.0;
    double fit_residual = 0.0;
    bool fitted = false;  ///< true when the cubic came from a least-squares fit

    double scale() const {
        double s = 0.0;
        for (const auto& z : nu) s = std::max(s, std::abs(z));
        return s;
    }

    /// Either one real root <= 0 with a conjugate pair, or three real roots <= 0.
    bool dichotomy_holds(double tol = kRootSignTol) const {
        const double lim = tol * (1.0 + scale());
        if (case_tag == RootCase::conjugate_pair) return nu[0].real() <= lim;
        return std::all_of(nu.begin(), nu.end(), [&](const cplx& z) { return z.real() <= lim; });
    }

    Poly normalized_cubic() const { return Poly({coeffs[2], coeffs[1], coeffs[0], 1.0}); }
};

struct ProfileOptions {
    double window_fraction = 0.2;  ///< fit window as a fraction of the t-extent of the domain
    int fit_points = 64;
    double residual_tol = 1e-6;
};

namespace detail {

inline double reference_time(const Domain& d) { return std::clamp(0.0, d.t_lo, d.t_hi); }

inline double max_abs_coeff(const Poly& p) {
    double m = 0.0;
    for (double c : p.c) m = std::max(m, std::abs(c));
    return m;
}

inline void classify_roots(RootProfile& p, const std::vector<cplx>& r) {
    double scale = 0.0;
    for (const auto& z : r) scale = std::max(scale, std::abs(z));
    const double im_tol = kImagRelTol * scale;
    std::vector<cplx> real, upper;
    for (const auto& z : r) {
        if (std::abs(z.imag()) <= im_tol)
            real.emplace_back(z.real(), 0.0);
        else if (z.imag() > 0.0)
            upper.push_back(z);
    }
    if (upper.size() == 1 && real.size() == 1) {
        p.case_tag = RootCase::conjugate_pair;
        p.nu = {real[0], upper[0], std::conj(upper[0])};
        p.psi = std::max(0.0, upper[0].real());
        return;
    }
    std::vector<double> re;
    for (const auto& z : r) re.push_back(z.real());
    std::sort(re.begin(), re.end());
    p.case_tag = RootCase::three_real;
    p.nu = {cplx(re[0]), cplx(re[1]), cplx(re[2])};
    p.psi = std::max(0.0, re[2]);
}

/// Polynomial in t equal to sum c_k ((t - t0) / h)^k.
inline Poly compose_affine(const std::vector<double>& c, double t0, double h) {
    const Poly base({-t0 / h, 1.0 / h});
    Poly acc({0.0});
    Poly power({1.0});
    for (double ck : c) {
        acc = acc + ck * power;
        power = power * base;
    }
    return acc;
}

}  // namespace detail

/// Root profile of the discriminant on the slice y. Uses the exact polynomial when the field
/// provides one, otherwise a least-squares cubic fit near the reference time.
inline RootProfile extract_root_profile(const CoefficientField& f, double y, const ProfileOptions& opt = {}) {
    RootProfile p;
    p.y = y;
    const double t0 = detail::reference_time(f.domain);
    std::vector<cplx> cubic_roots;
    if (f.poly_t && f.poly_t->delta) {
        Poly d = f.poly_t->delta(y);
        d.trim();
        if (d.degree() < 3)
            throw AnalysisError("discriminant has degree < 3 in t on the slice y=" + std::to_string(y) +
                                "; not an effectively hyperbolic triple point");
        const double third = d.derivative().derivative().derivative()(t0);
        if (std::abs(third) <= 1e-10 * detail::max_abs_coeff(d))
            throw AnalysisError("third t-derivative of the discriminant vanishes on the slice y=" + std::to_string(y) +
                                "; not effectively hyperbolic");
        auto roots = poly_roots(d);
        std::stable_sort(roots.begin(), roots.end(), [](const cplx& u, const cplx& v) { return std::abs(u) < std::abs(v); });
        cplx e2 = d.c.back();
        for (std::size_t k = 3; k < roots.size(); ++k) e2 *= (t0 - roots[k]);
        p.e2 = e2.real();
        cubic_roots.assign(roots.begin(), roots.begin() + 3);
        const Poly cubic = poly_from_roots(cubic_roots);
        p.coeffs = {cubic.c[2], cubic.c[1], cubic.c[0]};
    } else {
        const double h = opt.window_fraction * (f.domain.t_hi - f.domain.t_lo);
        const int n = std::max(opt.fit_points, 8);
        Eigen::MatrixXd m(n, 4);
        Eigen::VectorXd v(n);
        double vmax = 0.0;
        for (int i = 0; i < n; ++i) {
            const double u = static_cast<double>(i) / (n - 1);
            for (int k = 0; k < 4; ++k) m(i, k) = std::pow(u, k);
            v(i) = f.delta(t0 + h * u, y);
            vmax = std::max(vmax, std::abs(v(i)));
        }
        const Eigen::VectorXd c = m.colPivHouseholderQr().solve(v);
        const Poly fit = detail::compose_affine({c(0), c(1), c(2), c(3)}, t0, h);
        p.e2 = fit.c.size() == 4 ? fit.c[3] : 0.0;
        if (!(std::abs(p.e2) * h * h * h > 1e-10 * vmax))
            throw AnalysisError("fitted discriminant has no cubic term on the slice y=" + std::to_string(y) +
                                "; not effectively hyperbolic");
        const Poly cubic = (1.0 / p.e2) * fit;
        p.coeffs = {cubic.c[2], cubic.c[1], cubic.c[0]};
        double res = 0.0, norm = 0.0;
        for (int i = 0; i < n; ++i) {
            const double t = t0 + h * i / (n - 1);
            res = std::max(res, std::abs(v(i) / p.e2 - cubic(t)));
            norm = std::max(norm, std::abs(v(i) / p.e2));
        }
        p.fit_residual = norm > 0.0 ? res / norm : res;
        p.fitted = true;
        if (p.fit_residual > opt.residual_tol)
            throw AnalysisError("cubic fit residual " + std::to_string(p.fit_residual) + " exceeds tolerance on slice y=" +
                                std::to_string(y));
        cubic_roots = poly_roots(cubic);
    }
    detail::classify_roots(p, cubic_roots);
    p.e1 = f.dadt(t0, y);
    if (!(p.e1 > 0.0))
        throw AnalysisError("d_t a must be positive at the reference time on slice y=" + std::to_string(y));
    p.alpha = f.a(t0, y) / p.e1;
    return p;
}

struct AlphaNuComparison {
    bool holds = false;
    int witness = -1;
};

/// True iff some root satisfies |nu_j| >= eps * alpha; reports the first such j.
inline AlphaNuComparison certify_alpha_nu_comparison(const RootProfile& p, double eps) {
    for (int j = 0; j < 3; ++j)
        if (std::abs(p.nu[static_cast<std::size_t>(j)]) >= eps * p.alpha) return {true, j};
    return {};
}

// ---------------------------------------------------------------------------------------------
// Weight partitions

enum class Geometry { interval, cone };
enum class PartitionVariant { triple, double_root, general };
enum class WeightKind { t, psi_minus_t, t_minus_psi, sigma_minus, sigma_plus, t_minus_s_m, alpha };

inline const char* to_string(Geometry g) { return g == Geometry::interval ? "interval" : "cone"; }
inline const char* to_string(PartitionVariant v) {
    switch (v) {
        case PartitionVariant::triple: return "triple";
        case PartitionVariant::double_root: return "double";
        case PartitionVariant::general: return "general";
    }
    return "?";
}
inline const char* to_string(WeightKind k) {
    switch (k) {
        case WeightKind::t: return "t";
        case WeightKind::psi_minus_t: return "psi-t";
        case WeightKind::t_minus_psi: return "t-psi";
        case WeightKind::sigma_minus: return "sigma-t";
        case WeightKind::sigma_plus: return "t-sigma";
        case WeightKind::t_minus_s_m: return "t-s_m";
        case WeightKind::alpha: return "alpha";
    }
    return "?";
}

/// Weights decreasing in t carry the growing exponent 2N - 1, increasing ones -2N - 1.
inline int exponent_sign_for(double phi_t) { return phi_t > 0.0 ? -1 : 1; }

/// g = phi^(2 sign N - 1).
inline double weight_exponent(int exponent_sign, int N) { return 2.0 * exponent_sign * N - 1.0; }

struct Region {
    int index = 1;
    double lo = 0.0, hi = 0.0;
    WeightKind kind = WeightKind::t;
    int exponent_sign = -1;
};

struct PartitionSlice {
    double y = 0.0;
    double psi = 0.0;
    std::vector<double> breakpoints;
    std::vector<Region> regions;
    std::vector<double> sigma;  ///< general variant
    double t_star = 0.0;        ///< general variant
};

/// The weight active at a point.
struct WeightSample {
    int region = 0;
    WeightKind kind = WeightKind::t;
    double phi = 0.0, phi_t = 0.0, phi_x = 0.0;
    int exponent_sign = -1;
};

struct WeightPartition {
    PartitionVariant variant = PartitionVariant::triple;
    Geometry geometry = Geometry::interval;
    double delta = 0.5;  ///< interval top, or cone slope
    double T = 0.0;      ///< cone height
    double t_bottom = 0.0;
    std::vector<PartitionSlice> slices;
    std::vector<double> crossings;  ///< slices where tracked root curves meet
    bool x_divides_alpha = false;   ///< general variant: a(., 0) vanishes identically

    std::function<double(double)> psi_fn;
    std::function<std::optional<WeightSample>(double, double)> general_fn;

    double top() const { return geometry == Geometry::interval ? delta : T; }

    bool in_domain(double t, double x) const {
        const double e = 1e-12;
        if (t > top() + e || t < t_bottom - e) return false;
        return geometry == Geometry::interval || std::abs(x) <= delta * (T - t) + e;
    }

    double psi(double y) const { return psi_fn ? psi_fn(y) : 0.0; }

    double psi_x(double y) const {
        if (!psi_fn || geometry != Geometry::cone) return 0.0;
        const double h = 1e-6 * std::max(1.0, std::abs(y));
        return (psi_fn(y + h) - psi_fn(y - h)) / (2.0 * h);
    }

    /// Triple and double variants with a known psi at this slice.
    std::optional<WeightSample> sample(double t, double y, double ps, double ps_x = 0.0) const {
        if (!in_domain(t, y)) return std::nullopt;
        if (ps <= 0.0) return WeightSample{1, WeightKind::t, t, 1.0, 0.0, -1};
        if (variant == PartitionVariant::double_root) {
            if (t <= ps) return WeightSample{1, WeightKind::psi_minus_t, ps - t, -1.0, ps_x, 1};
            return WeightSample{2, WeightKind::t_minus_psi, t - ps, 1.0, -ps_x, -1};
        }
        if (t <= 0.5 * ps) return WeightSample{1, WeightKind::t, t, 1.0, 0.0, -1};
        if (t <= ps) return WeightSample{2, WeightKind::psi_minus_t, ps - t, -1.0, ps_x, 1};
        return WeightSample{3, WeightKind::t_minus_psi, t - ps, 1.0, -ps_x, -1};
    }

    std::optional<WeightSample> locate(double t, double y) const {
        if (variant == PartitionVariant::general) return general_fn ? general_fn(t, y) : std::nullopt;
        return sample(t, y, psi(y), psi_x(y));
    }

    std::function<bool(double, double)> region_predicate(int index) const {
        return [this, index](double t, double y) {
            const auto s = locate(t, y);
            return s && s->region == index;
        };
    }
};

namespace detail {

inline PartitionSlice triple_slice(double y, double psi, double top) {
    PartitionSlice s;
    s.y = y;
    s.psi = psi;
    if (psi <= 0.0) {
        s.breakpoints = {0.0, top};
        s.regions = {{1, 0.0, top, WeightKind::t, -1}};
    } else {
        s.breakpoints = {0.0, 0.5 * psi, psi, top};
        s.regions = {{1, 0.0, 0.5 * psi, WeightKind::t, -1},
                     {2, 0.5 * psi, psi, WeightKind::psi_minus_t, 1},
                     {3, psi, top, WeightKind::t_minus_psi, -1}};
    }
    return s;
}

inline PartitionSlice double_slice(double y, double psi, double top) {
    PartitionSlice s;
    s.y = y;
    s.psi = psi;
    if (psi <= 0.0) {
        s.breakpoints = {0.0, top};
        s.regions = {{1, 0.0, top, WeightKind::t, -1}};
    } else {
        s.breakpoints = {0.0, psi, top};
        s.regions = {{1, 0.0, psi, WeightKind::psi_minus_t, 1}, {2, psi, top, WeightKind::t_minus_psi, -1}};
    }
    return s;
}

}  // namespace detail

/// Delta default: midway between psi and t_hi, capped at 0.5 whenever that stays above psi.
inline double default_delta(double psi, const Domain& d) {
    const double mid = psi + 0.5 * (d.t_hi - psi);
    return psi < 0.5 ? std::min(0.5, mid) : mid;
}

/// Single-slice partition built from one profile (psi frozen).
inline WeightPartition build_partition(const RootProfile& p, double delta, double T = 0.0,
                                       Geometry geometry = Geometry::interval) {
    WeightPartition w;
    w.variant = PartitionVariant::triple;
    w.geometry = geometry;
    w.delta = delta;
    w.T = T;
    if (geometry == Geometry::interval && delta <= p.psi)
        throw InputError("partition: delta must exceed psi (delta=" + std::to_string(delta) +
                         ", psi=" + std::to_string(p.psi) + ")");
    if (geometry == Geometry::cone && T <= p.psi)
        throw InputError("partition: cone height must exceed psi");
    w.psi_fn = [psi = p.psi](double) { return psi; };
    w.slices.push_back(detail::triple_slice(p.y, p.psi, w.top()));
    return w;
}

/// Triple partition with psi(y) extracted on demand; `ys` only selects the recorded slices.
inline WeightPartition build_partition(const CoefficientField& f, const std::vector<double>& ys, double delta,
                                       double T = 0.0, Geometry geometry = Geometry::interval) {
    WeightPartition w;
    w.variant = PartitionVariant::triple;
    w.geometry = geometry;
    w.delta = delta;
    w.T = T;
    w.psi_fn = [f](double y) { return extract_root_profile(f, y).psi; };
    const auto profiles = parallel_map<RootProfile>(ys.size(), [&](std::size_t k) { return extract_root_profile(f, ys[k]); });
    for (const auto& p : profiles) {
        if (geometry == Geometry::interval && delta <= p.psi)
            throw InputError("partition: delta must exceed psi on slice y=" + std::to_string(p.y));
        if (geometry == Geometry::cone && T <= p.psi)
            throw InputError("partition: cone height must exceed psi on slice x=" + std::to_string(p.y));
        w.slices.push_back(detail::triple_slice(p.y, p.psi, w.top()));
    }
    return w;
}

/// Cone partition for the x-dependent triple case: |x| <= delta (T - t), psi = psi(x).
inline WeightPartition build_cone_partition(const CoefficientField& f, double delta, double T, int nx = 21) {
    std::vector<double> xs;
    const double half = delta * T;
    for (int k = 0; k < nx; ++k) xs.push_back(nx == 1 ? 0.0 : -half + 2.0 * half * k / (nx - 1));
    return build_partition(f, xs, delta, T, Geometry::cone);
}

// Double characteristics ---------------------------------------------------------------------

/// The quadratic factor of a(., y) near the reference time.
struct DoubleRootProfile {
    double y = 0.0;
    std::vector<cplx> nu;  ///< one or two roots of smallest modulus
    double psi = 0.0;      ///< common real part when the split applies, else 0
    bool split = false;
};

inline DoubleRootProfile extract_double_profile(const CoefficientField& f, double y) {
    if (!f.poly_t || !f.poly_t->a) throw AnalysisError("double-root profile requires a polynomial coefficient a");
    Poly pa = f.poly_t->a(y);
    pa.trim();
    if (pa.degree() < 1) throw AnalysisError("a is constant in t on slice y=" + std::to_string(y));
    auto roots = poly_roots(pa);
    std::stable_sort(roots.begin(), roots.end(), [](const cplx& u, const cplx& v) { return std::abs(u) < std::abs(v); });
    DoubleRootProfile p;
    p.y = y;
    p.nu.assign(roots.begin(), roots.begin() + std::min<std::ptrdiff_t>(2, static_cast<std::ptrdiff_t>(roots.size())));
    if (p.nu.size() == 2) {
        const double scale = std::max(std::abs(p.nu[0]), std::abs(p.nu[1]));
        const double tol = kImagRelTol * scale + 1e-14;
        if (std::abs(p.nu[0].real() - p.nu[1].real()) <= tol && p.nu[0].real() > tol) {
            p.split = true;
            p.psi = 0.5 * (p.nu[0].real() + p.nu[1].real());
        }
    }
    return p;
}

inline WeightPartition build_double_partition(const DoubleRootProfile& p, double delta) {
    if (p.split && delta <= p.psi) throw InputError("partition: delta must exceed psi");
    WeightPartition w;
    w.variant = PartitionVariant::double_root;
    w.delta = delta;
    w.psi_fn = [psi = p.psi](double) { return psi; };
    w.slices.push_back(detail::double_slice(p.y, p.psi, delta));
    return w;
}

// General triple characteristics, a = alpha^2 -------------------------------------------------

/// Distinct roots of a(., x) and the derived breakpoints.
struct AlphaSlice {
    double x = 0.0;
    std::vector<cplx> roots;
    std::vector<double> sigma;
    double t_star = 0.0;
    std::vector<double> s;  ///< s_0 .. s_m
};

namespace detail {

inline std::vector<cplx> cluster_roots(std::vector<cplx> r) {
    double scale = 0.0;
    for (const auto& z : r) scale = std::max(scale, std::abs(z));
    const double tol = 1e-5 * scale + 1e-12;
    std::vector<cplx> out;
    std::vector<int> count;
    for (const auto& z : r) {
        bool merged = false;
        for (std::size_t k = 0; k < out.size(); ++k)
            if (std::abs(out[k] - z) <= tol) {
                out[k] = (out[k] * static_cast<double>(count[k]) + z) / static_cast<double>(count[k] + 1);
                ++count[k];
                merged = true;
                break;
            }
        if (!merged) {
            out.push_back(z);
            count.push_back(1);
        }
    }
    for (auto& z : out)
        if (std::abs(z.imag()) <= tol) z = cplx(z.real(), 0.0);
    std::sort(out.begin(), out.end(), [](const cplx& u, const cplx& v) {
        return u.real() != v.real() ? u.real() < v.real() : u.imag() < v.imag();
    });
    return out;
}

/// Roots of a(., x) without a polynomial form: zeros and positive minima of a sampled densely.
inline std::vector<cplx> tracked_roots(const CoefficientField& f, double x, int n = 2001) {
    const double lo = f.domain.t_lo, hi = f.domain.t_hi;
    const double h = (hi - lo) / (n - 1);
    std::vector<double> v(static_cast<std::size_t>(n));
    double vmax = 0.0;
    for (int i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i)] = f.a(lo + h * i, x);
        vmax = std::max(vmax, std::abs(v[static_cast<std::size_t>(i)]));
    }
    std::vector<cplx> out;
    for (int i = 1; i + 1 < n; ++i) {
        const double l = v[static_cast<std::size_t>(i - 1)], c = v[static_cast<std::size_t>(i)],
                     r = v[static_cast<std::size_t>(i + 1)];
        if (!(c <= l && c < r)) continue;
        const double curv = (l - 2.0 * c + r) / (h * h);
        const double shift = curv > 0.0 ? 0.5 * h * (l - r) / (l - 2.0 * c + r) : 0.0;
        const double tm = lo + h * i + shift;
        const double amin = c - 0.125 * (l - r) * (l - r) / (l - 2.0 * c + r);
        if (amin <= 1e-10 * vmax) {
            out.emplace_back(tm, 0.0);
        } else if (curv > 0.0) {
            const double im = std::sqrt(2.0 * amin / curv);
            out.emplace_back(tm, im);
            out.emplace_back(tm, -im);
        }
    }
    return out;
}

}  // namespace detail

inline AlphaSlice alpha_slice(const CoefficientField& f, double x) {
    AlphaSlice s;
    s.x = x;
    std::vector<cplx> raw;
    if (f.poly_t && f.poly_t->a) {
        Poly pa = f.poly_t->a(x);
        pa.trim();
        raw = poly_roots(pa);
    } else {
        raw = detail::tracked_roots(f, x);
    }
    s.roots = detail::cluster_roots(raw);
    double sum = 0.0, scale = 0.0;
    for (const auto& z : s.roots) {
        sum += std::norm(z);
        scale = std::max(scale, std::abs(z.real()));
    }
    s.t_star = std::sqrt(sum);
    const double tol = 1e-5 * scale + 1e-12;
    for (const auto& z : s.roots)
        if (s.sigma.empty() || z.real() - s.sigma.back() > tol) s.sigma.push_back(z.real());
    if (!s.sigma.empty()) {
        s.s.push_back(-3.0 * s.t_star);
        for (std::size_t j = 0; j + 1 < s.sigma.size(); ++j) s.s.push_back(0.5 * (s.sigma[j] + s.sigma[j + 1]));
        s.s.push_back(3.0 * s.t_star);
    }
    return s;
}

namespace detail {

inline bool a_vanishes_at_x0(const CoefficientField& f) {
    if (f.poly_t && f.poly_t->a) return max_abs_coeff(f.poly_t->a(0.0)) <= 1e-14;
    for (int i = 0; i <= 200; ++i) {
        const double t = f.domain.t_lo + (f.domain.t_hi - f.domain.t_lo) * i / 200.0;
        if (std::abs(f.a(t, 0.0)) > 1e-14) return false;
    }
    return true;
}

/// d/dx of the k-th entry of member `which` of alpha_slice; NaN if the entry is missing on both sides.
template <class Pick>
double slice_derivative(const CoefficientField& f, double x, std::size_t k, std::size_t count, Pick&& pick) {
    const double h = 1e-6 * std::max(1.0, std::abs(x));
    const AlphaSlice p = alpha_slice(f, x + h), m = alpha_slice(f, x - h);
    const bool okp = pick(p).size() == count && k < count, okm = pick(m).size() == count && k < count;
    if (okp && okm) return (pick(p)[k] - pick(m)[k]) / (2.0 * h);
    const AlphaSlice c = alpha_slice(f, x);
    if (okp) return (pick(p)[k] - pick(c)[k]) / h;
    if (okm) return (pick(c)[k] - pick(m)[k]) / h;
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// General-case partition on the cone |x| <= delta_bar (T - t), -T <= t <= T.
inline WeightPartition build_alpha_partition(const CoefficientField& f, double delta_bar, double T, int nx = 41) {
    WeightPartition w;
    w.variant = PartitionVariant::general;
    w.geometry = Geometry::cone;
    w.delta = delta_bar;
    w.T = T;
    w.t_bottom = -T;
    w.x_divides_alpha = detail::a_vanishes_at_x0(f);
    const double half = 2.0 * delta_bar * T;
    std::vector<double> xs;
    for (int k = 0; k < nx; ++k) xs.push_back(-half + 2.0 * half * k / (nx - 1));
    const auto slices = parallel_map<AlphaSlice>(xs.size(), [&](std::size_t k) { return alpha_slice(f, xs[k]); });

    std::size_t lost_pos = 0, lost_neg = 0, pairs_pos = 0, pairs_neg = 0;
    for (std::size_t k = 0; k < slices.size(); ++k) {
        PartitionSlice ps;
        ps.y = slices[k].x;
        ps.sigma = slices[k].sigma;
        ps.t_star = slices[k].t_star;
        ps.breakpoints = slices[k].s;
        w.slices.push_back(ps);
        if (k == 0) continue;
        const double xa = slices[k - 1].x, xb = slices[k].x;
        if (xa * xb <= 0.0) continue;  // x = 0 separates the two Puiseux sides
        const bool changed = slices[k - 1].sigma.size() != slices[k].sigma.size();
        if (xb > 0.0) {
            ++pairs_pos;
            lost_pos += changed;
        } else {
            ++pairs_neg;
            lost_neg += changed;
        }
        if (changed) w.crossings.push_back(0.5 * (xa + xb));
    }
    if ((pairs_pos && 4 * lost_pos > pairs_pos) || (pairs_neg && 4 * lost_neg > pairs_neg))
        throw AnalysisError("root tracking lost ordering continuity across x-slices");

    const bool n_pos = w.x_divides_alpha;
    w.general_fn = [f, delta_bar, T, n_pos](double t, double x) -> std::optional<WeightSample> {
        const double e = 1e-12;
        if (t > T + e || t < -T - e || std::abs(x) > delta_bar * (T - t) + e) return std::nullopt;
        const AlphaSlice s = alpha_slice(f, x);
        const std::size_t m = s.sigma.size();
        if (m > 0 && t < s.s.front()) return std::nullopt;
        for (std::size_t j = 0; j < m; ++j) {
            if (t > s.s[j + 1]) continue;
            const double dsig = detail::slice_derivative(f, x, j, m, [](const AlphaSlice& a) { return a.sigma; });
            const int idx = static_cast<int>(2 * j + 1);
            if (t >= s.sigma[j]) return WeightSample{idx + 1, WeightKind::sigma_plus, t - s.sigma[j], 1.0, -dsig, -1};
            return WeightSample{idx, WeightKind::sigma_minus, s.sigma[j] - t, -1.0, dsig, 1};
        }
        const int idx = static_cast<int>(2 * m + 1);
        if (n_pos && m > 0) {
            const double dsm = detail::slice_derivative(f, x, m, m + 1, [](const AlphaSlice& a) { return a.s; });
            return WeightSample{idx, WeightKind::t_minus_s_m, t - s.s.back(), 1.0, -dsm, -1};
        }
        const double a = f.a(t, x);
        const double al = std::sqrt(std::max(0.0, a));
        const double at = f.dadt(t, x), ax = f.dady(t, x);
        return WeightSample{idx, WeightKind::alpha, al, at / (2.0 * al), ax / (2.0 * al), exponent_sign_for(at)};
    };
    return w;
}

// ---------------------------------------------------------------------------------------------
// Certifications

struct KeyPropositionReport {
    MeasuredConstant c1, c2, c3;                     ///< phi^2 a / Delta, |phi| |d_t Delta| / Delta, |phi| / a
    std::vector<std::array<MeasuredConstant, 3>> per_region;
    std::vector<int> region_index;
    MeasuredConstant phi_sq_lambda1, phi_dt_lambda1, phi_lambda2;  ///< consequences for the eigenvalues
    std::vector<GridPoint> degenerate;                             ///< Delta = 0 with phi != 0

    std::vector<MeasuredConstant> all() const {
        std::vector<MeasuredConstant> v{c1, c2, c3, phi_sq_lambda1, phi_dt_lambda1, phi_lambda2};
        for (const auto& r : per_region) v.insert(v.end(), r.begin(), r.end());
        return v;
    }
    bool pass() const { return all_confirmed(all()); }
};

namespace detail {

struct SliceCache {
    std::map<double, double> psi, psi_x;
    std::map<double, std::pair<Poly, Poly>> delta;  ///< Delta and d_t Delta in t, when polynomial
};

inline SliceCache slice_cache(const CoefficientField& f, const WeightPartition& w, const OpenGrid& g) {
    SliceCache c;
    std::vector<double> ys;
    for (const OpenGrid& gg : {g, g.refined()})
        for (int j = 0; j < gg.ny; ++j) ys.push_back(gg.y(j));
    std::sort(ys.begin(), ys.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    const auto psi = parallel_map<std::pair<double, double>>(ys.size(), [&](std::size_t k) {
        return std::pair{w.psi(ys[k]), w.psi_x(ys[k])};
    });
    for (std::size_t k = 0; k < ys.size(); ++k) {
        c.psi[ys[k]] = psi[k].first;
        c.psi_x[ys[k]] = psi[k].second;
        if (f.poly_t && f.poly_t->delta) {
            Poly d = f.poly_t->delta(ys[k]);
            c.delta[ys[k]] = {d, d.derivative()};
        }
    }
    return c;
}

}  // namespace detail

/// Measures the three key inequalities per subregion and overall, plus the eigenvalue consequences.
inline KeyPropositionReport certify_key_proposition(const CoefficientField& f, const WeightPartition& w, const OpenGrid& g) {
    if (w.variant == PartitionVariant::general)
        throw InputError("key proposition applies to the triple and double partitions");
    const auto cache = detail::slice_cache(f, w, g);
    auto locate = [&](double t, double y) { return w.sample(t, y, cache.psi.at(y), cache.psi_x.at(y)); };
    auto delta_pair = [&](double t, double y) {
        if (const auto it = cache.delta.find(y); it != cache.delta.end())
            return std::pair{it->second.first(t), it->second.second(t)};
        return std::pair{f.delta(t, y), f.ddelta_dt(t, y)};
    };
    auto degenerate = [&](double t, double y, double d) {
        const double a = f.a(t, y);
        return !(d > 1e-14 * (1.0 + std::abs(a * a * a)));
    };
    auto inside = [&](double t, double y) { return locate(t, y).has_value(); };

    using Ratio = std::function<std::optional<double>(double, double, const WeightSample&)>;
    const Ratio r1 = [&](double t, double y, const WeightSample& s) -> std::optional<double> {
        const double d = delta_pair(t, y).first;
        if (degenerate(t, y, d)) return std::nullopt;
        return s.phi * s.phi * f.a(t, y) / d;
    };
    const Ratio r2 = [&](double t, double y, const WeightSample& s) -> std::optional<double> {
        const auto [d, dd] = delta_pair(t, y);
        if (degenerate(t, y, d)) return std::nullopt;
        return s.phi * dd / d;
    };
    const Ratio r3 = [&](double t, double y, const WeightSample& s) -> std::optional<double> {
        const double a = f.a(t, y);
        if (!(a > kDenominatorFloor)) return std::nullopt;
        return s.phi / a;
    };
    auto measure = [&](const std::string& name, const Ratio& r, std::optional<int> region) {
        return measure_sup_within(
            name, g,
            [&](double t, double y) {
                const auto s = locate(t, y);
                return s && (!region || s->region == *region);
            },
            [&](double t, double y) { return r(t, y, *locate(t, y)); });
    };

    KeyPropositionReport rep;
    rep.c1 = measure("phi^2 a/Delta", r1, std::nullopt);
    rep.c2 = measure("|phi dt Delta|/Delta", r2, std::nullopt);
    rep.c3 = measure("|phi|/a", r3, std::nullopt);

    std::vector<int> seen;
    for (const auto& sl : w.slices)
        for (const auto& reg : sl.regions)
            if (std::find(seen.begin(), seen.end(), reg.index) == seen.end()) seen.push_back(reg.index);
    std::sort(seen.begin(), seen.end());
    for (int idx : seen) {
        const std::string tag = " [region " + std::to_string(idx) + "]";
        auto c1 = measure("phi^2 a/Delta" + tag, r1, idx);
        if (c1.total == 0) continue;
        rep.region_index.push_back(idx);
        rep.per_region.push_back({c1, measure("|phi dt Delta|/Delta" + tag, r2, idx), measure("|phi|/a" + tag, r3, idx)});
    }

    auto eig = [&](const std::string& name, auto&& fn) {
        return measure_sup_within(name, g, inside, [&](double t, double y) -> std::optional<double> {
            const auto l = field_eigenvalues(f, t, y);
            if (l[0] < 1e-14) return std::nullopt;
            return fn(t, y, *locate(t, y), l);
        });
    };
    rep.phi_sq_lambda1 = eig("phi^2/lambda1", [](double, double, const WeightSample& s, const std::array<double, 3>& l) {
        return s.phi * s.phi / l[0];
    });
    rep.phi_dt_lambda1 = eig("phi|dt lambda1|/lambda1", [&](double t, double y, const WeightSample& s,
                                                            const std::array<double, 3>& l) {
        return s.phi * eigenvalue_gradient(f, t, y).dt[0] / l[0];
    });
    rep.phi_lambda2 = eig("phi/lambda2", [](double, double, const WeightSample& s, const std::array<double, 3>& l) {
        return s.phi / l[1];
    });

    const OpenGrid fine = g.refined();
    for (int i = 0; i < fine.nt && rep.degenerate.size() < 10; ++i)
        for (int j = 0; j < fine.ny && rep.degenerate.size() < 10; ++j) {
            const double t = fine.t(i), y = fine.y(j);
            const auto s = locate(t, y);
            if (s && s->phi != 0.0 && degenerate(t, y, delta_pair(t, y).first)) rep.degenerate.push_back({t, y});
        }
    return rep;
}

struct GeneralTripleConditions {
    MeasuredConstant a_cubed;  ///< a^3 / Delta
    MeasuredConstant b_t;      ///< |d_t b| / (sqrt(a) |d_t a|)
    bool pass() const { return a_cubed.confirmed() && b_t.confirmed(); }
};

inline GeneralTripleConditions certify_general_triple_conditions(const CoefficientField& f, const OpenGrid& g) {
    GeneralTripleConditions r;
    r.a_cubed = measure_sup("a^3/Delta", g, [&](double t, double x) -> std::optional<double> {
        const double a = f.a(t, x);
        if (!(a > kDenominatorFloor)) return std::nullopt;
        return a * a * a / f.delta(t, x);
    });
    r.b_t = measure_sup("|dt b|/(sqrt(a)|dt a|)", g, [&](double t, double x) -> std::optional<double> {
        const double num = f.dbdt(t, x);
        if (num == 0.0) return 0.0;
        const double a = f.a(t, x);
        const double den = std::sqrt(std::max(0.0, a)) * std::abs(f.dadt(t, x));
        if (!(den > kDenominatorFloor)) return std::nullopt;
        return num / den;
    });
    return r;
}

struct GeneralWeightReport {
    MeasuredConstant phi_dt_a;  ///< phi |d_t a| / (a |d_t phi|)
    MeasuredConstant phi_rel;   ///< phi / |d_t phi|
    std::array<double, 3> shrink_scale{1.0, 0.5, 0.25};
    std::array<double, 3> shrink_sup{};
    bool shrink_decreasing = false;
    std::size_t alpha_checked = 0, alpha_violations = 0;

    bool pass() const {
        return phi_dt_a.confirmed() && phi_rel.confirmed() && shrink_decreasing && alpha_violations == 0;
    }
};

/// Sup of sqrt(a) |d_x phi| / |d_t phi| over the partition's cone sampled on an n x n box.
inline double general_transverse_sup(const CoefficientField& f, const WeightPartition& w, int n = 161) {
    const double T = w.T, half = w.delta * (T - w.t_bottom);
    std::vector<double> vals(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    parallel_for(vals.size(), [&](std::size_t k) {
        const int i = static_cast<int>(k / static_cast<std::size_t>(n)), j = static_cast<int>(k % static_cast<std::size_t>(n));
        const double t = w.t_bottom + (T - w.t_bottom) * (i + 0.5) / n;
        const double x = -half + 2.0 * half * (j + 0.5) / n;
        const auto s = w.locate(t, x);
        if (!s || s->phi_t == 0.0) return;
        vals[k] = std::sqrt(std::max(0.0, f.a(t, x))) * std::abs(s->phi_x) / std::abs(s->phi_t);
    });
    double sup = 0.0;
    for (double v : vals) sup = std::isfinite(v) ? std::max(sup, v) : std::numeric_limits<double>::infinity();
    return sup;
}

/// Checks the general-case weight conditions; |d_t phi| replaces d_t phi on the decreasing branches.
inline GeneralWeightReport certify_general_weight_conditions(const CoefficientField& f, const WeightPartition& w,
                                                             const OpenGrid& g) {
    if (w.variant != PartitionVariant::general) throw InputError("general weight conditions need the alpha partition");
    GeneralWeightReport r;
    auto inside = [&](double t, double x) { return w.locate(t, x).has_value(); };
    r.phi_dt_a = measure_sup_within("phi|dt a|/(a|dt phi|)", g, inside, [&](double t, double x) -> std::optional<double> {
        const auto s = *w.locate(t, x);
        const double a = f.a(t, x);
        if (!(a > kDenominatorFloor) || s.phi_t == 0.0) return std::nullopt;
        return s.phi * f.dadt(t, x) / (a * std::abs(s.phi_t));
    });
    r.phi_rel = measure_sup_within("phi/|dt phi|", g, inside, [&](double t, double x) -> std::optional<double> {
        const auto s = *w.locate(t, x);
        if (s.phi_t == 0.0) return std::nullopt;
        return s.phi / std::abs(s.phi_t);
    });
    for (std::size_t k = 0; k < 3; ++k) {
        const double e = r.shrink_scale[k];
        const WeightPartition wk = build_alpha_partition(f, e * w.delta, e * w.T, 21);
        r.shrink_sup[k] = general_transverse_sup(f, wk);
    }
    r.shrink_decreasing = std::isfinite(r.shrink_sup[0]) && r.shrink_sup[1] <= 1.1 * r.shrink_sup[0] &&
                          r.shrink_sup[2] <= 1.1 * r.shrink_sup[1] && r.shrink_sup[2] < 0.9 * r.shrink_sup[0];
    if (!w.x_divides_alpha) {
        const OpenGrid fine = g.refined();
        for (int i = 0; i < fine.nt; ++i)
            for (int j = 0; j < fine.ny; ++j) {
                const double t = fine.t(i), x = fine.y(j);
                const auto s = w.locate(t, x);
                if (!s || s->kind != WeightKind::alpha || !(f.a(t, x) > kDenominatorFloor)) continue;
                ++r.alpha_checked;
                if (!(f.a(t, x) > 0.0 && f.dadt(t, x) > 0.0)) ++r.alpha_violations;
            }
    }
    return r;
}

}  // namespace triplesym
