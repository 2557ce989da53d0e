#pragma once

#include "triplesym/bezoutian.hpp"
#include "triplesym/measure.hpp"
#include "triplesym/symbols.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace triplesym {

/// Denominators below this (times the local scale) mark a point as skipped.
inline constexpr double kDenominatorFloor = 1e-12;

/// Sup ratios |d_y a| / sqrt(a), |d_y b| / a, |d_t b| / sqrt(a) on the a > 0 part of the grid.
inline std::vector<MeasuredConstant> certify_coefficient_derivatives(const CoefficientField& f, const OpenGrid& g) {
    auto pos_a = [&](double t, double y) -> std::optional<double> {
        const double a = f.a(t, y);
        if (!(a > kDenominatorFloor)) return std::nullopt;
        return a;
    };
    std::vector<MeasuredConstant> out;
    out.push_back(measure_sup("|dy a|/sqrt(a)", g, [&](double t, double y) -> std::optional<double> {
        const auto a = pos_a(t, y);
        if (!a) return std::nullopt;
        return f.dady(t, y) / std::sqrt(*a);
    }));
    out.push_back(measure_sup("|dy b|/a", g, [&](double t, double y) -> std::optional<double> {
        const auto a = pos_a(t, y);
        if (!a) return std::nullopt;
        return f.dbdy(t, y) / *a;
    }));
    out.push_back(measure_sup("|dt b|/sqrt(a)", g, [&](double t, double y) -> std::optional<double> {
        const auto a = pos_a(t, y);
        if (!a) return std::nullopt;
        return f.dbdt(t, y) / std::sqrt(*a);
    }));
    return out;
}

/// Eigenvalues of S along the field.
inline std::array<double, 3> field_eigenvalues(const CoefficientField& f, double t, double y) {
    return bezoutian_eigenvalues(build_bezoutian(f.a(t, y), f.b(t, y)));
}

/// Central differences of the three eigenvalues in t and in y.
struct EigenvalueGradient {
    std::array<double, 3> dt{}, dy{};
};

inline EigenvalueGradient eigenvalue_gradient(const CoefficientField& f, double t, double y) {
    EigenvalueGradient g;
    const double ht = fd_step(t, f.fd_floor);
    const auto lp = field_eigenvalues(f, t + ht, y), lm = field_eigenvalues(f, t - ht, y);
    for (std::size_t k = 0; k < 3; ++k) g.dt[k] = (lp[k] - lm[k]) / (2.0 * ht);
    if (!f.y_independent) {
        const double hy = fd_step(y, f.fd_floor);
        const auto yp = field_eigenvalues(f, t, y + hy), ym = field_eigenvalues(f, t, y - hy);
        for (std::size_t k = 0; k < 3; ++k) g.dy[k] = (yp[k] - ym[k]) / (2.0 * hy);
    }
    return g;
}

/// Sup ratios |dy l1|/a^{3/2}, |dy l2|/sqrt(a), |dy l3|/sqrt(a), |dt l1|/a, |dt l2|, |dt l3|.
inline std::vector<MeasuredConstant> certify_eigenvalue_derivatives(const CoefficientField& f, const OpenGrid& g) {
    struct Spec {
        const char* name;
        bool in_t;
        std::size_t k;
        double power;
    };
    const std::array<Spec, 6> specs{{{"|dy lambda1|/a^1.5", false, 0, 1.5},
                                     {"|dy lambda2|/sqrt(a)", false, 1, 0.5},
                                     {"|dy lambda3|/sqrt(a)", false, 2, 0.5},
                                     {"|dt lambda1|/a", true, 0, 1.0},
                                     {"|dt lambda2|", true, 1, 0.0},
                                     {"|dt lambda3|", true, 2, 0.0}}};
    std::vector<MeasuredConstant> out;
    for (const auto& s : specs)
        out.push_back(measure_sup(s.name, g, [&](double t, double y) -> std::optional<double> {
            const double a = f.a(t, y);
            if (!(a > kDenominatorFloor)) return std::nullopt;
            const auto grad = eigenvalue_gradient(f, t, y);
            const double d = s.in_t ? grad.dt[s.k] : grad.dy[s.k];
            return d / std::pow(a, s.power);
        }));
    return out;
}

using WeightFn = std::function<double(double, double)>;

/// Sup of |dy lambda1| / lambda1 * phi sqrt(a); points with lambda1 < 1e-14 are skipped.
inline MeasuredConstant certify_lambda1_log_derivative(const CoefficientField& f, const OpenGrid& g, const WeightFn& phi) {
    return measure_sup("|dy lambda1|/lambda1*phi*sqrt(a)", g, [&](double t, double y) -> std::optional<double> {
        const double a = f.a(t, y);
        const auto l = field_eigenvalues(f, t, y);
        if (!(a > kDenominatorFloor) || l[0] < 1e-14) return std::nullopt;
        const auto grad = eigenvalue_gradient(f, t, y);
        return grad.dy[0] / l[0] * phi(t, y) * std::sqrt(a);
    });
}

}  // namespace triplesym
