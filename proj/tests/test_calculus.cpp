#include "triplesym/calculus.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace triplesym;

namespace {
const MeasuredConstant& find(const std::vector<MeasuredConstant>& ms, const std::string& name) {
    for (const auto& m : ms)
        if (m.name == name) return m;
    throw std::runtime_error("missing constant " + name);
}
const OpenGrid kSmall{0.0, 0.05, -0.05, 0.05, 40, 11};
}  // namespace

TEST(CoefficientDerivatives, TricomiRatiosFinite) {
    const auto ms = certify_coefficient_derivatives(make_family(families::tricomi()), kSmall);
    for (const auto& m : ms) {
        EXPECT_TRUE(m.confirmed()) << m.name;
        EXPECT_TRUE(std::isfinite(m.value));
    }
    EXPECT_EQ(find(ms, "|dt b|/sqrt(a)").value, 0.0);
}

TEST(CoefficientDerivatives, ParabolicBottomClosedForm) {
    const auto f = make_family(families::polynomial("t+y^2"));
    const auto ms = certify_coefficient_derivatives(f, kSmall);
    const auto& m = find(ms, "|dy a|/sqrt(a)");
    // Oracle: sup of 2|y| / sqrt(t + y^2) on the refined grid, evaluated directly.
    const OpenGrid fine = kSmall.refined();
    double sup = 0.0;
    for (int i = 0; i < fine.nt; ++i)
        for (int j = 0; j < fine.ny; ++j) {
            const double t = fine.t(i), y = fine.y(j);
            sup = std::max(sup, 2.0 * std::abs(y) / std::sqrt(t + y * y));
        }
    EXPECT_NEAR(m.value_refined, sup, 1e-12);
    EXPECT_LE(m.value_refined, 2.0);
    EXPECT_TRUE(m.confirmed());
}

TEST(CoefficientDerivatives, ThetaFamilyTimeRatio) {
    const double theta = 0.9;
    const auto ms = certify_coefficient_derivatives(make_family(families::theta(theta)), kSmall);
    // b = theta 2/(3 sqrt 3) t^{3/2}  =>  d_t b / sqrt(a) = theta / sqrt(3)
    EXPECT_NEAR(find(ms, "|dt b|/sqrt(a)").value, theta / std::sqrt(3.0), 1e-12);
}

TEST(CoefficientDerivatives, TrimsPointsWithZeroA) {
    const auto f = make_family(families::general_triple("t-x"));
    OpenGrid g{-0.1, 0.1, -0.1, 0.1, 40, 41};
    const auto ms = certify_coefficient_derivatives(f, g);
    EXPECT_GT(ms[0].skipped, 0u);
}

TEST(EigenvalueDerivatives, TricomiMiddleEigenvalueSlope) {
    const auto ms = certify_eigenvalue_derivatives(make_family(families::tricomi()), kSmall);
    EXPECT_NEAR(find(ms, "|dt lambda2|").value, 2.0, 1e-6);
    EXPECT_EQ(find(ms, "|dy lambda1|/a^1.5").value, 0.0);
    EXPECT_EQ(find(ms, "|dy lambda2|/sqrt(a)").value, 0.0);
    EXPECT_EQ(find(ms, "|dy lambda3|/sqrt(a)").value, 0.0);
    for (const auto& m : ms) EXPECT_TRUE(m.confirmed()) << m.name;
}

TEST(EigenvalueDerivatives, ParabolicBottomStable) {
    const auto ms = certify_eigenvalue_derivatives(make_family(families::polynomial("t+y^2")), kSmall);
    for (const auto& m : ms) EXPECT_TRUE(m.confirmed()) << m.name << " " << m.value << " " << m.value_refined;
}

TEST(EigenvalueDerivatives, FiniteDifferenceMatchesImplicitDerivative) {
    // Independent oracle: d lambda / dt = -(dq/dt)(lambda) / q'(lambda) for a = t, b = 0.
    const auto f = make_family(families::tricomi());
    for (double t : {0.01, 0.03, 0.2}) {
        const auto l = field_eigenvalues(f, t, 0.0);
        const auto g = eigenvalue_gradient(f, t, 0.0);
        for (std::size_t k = 0; k < 3; ++k) {
            const double lam = l[k], a = t;
            // q = lam^3 - (3+2a+a^2) lam^2 + (6a+2a^2+2a^3) lam - 4a^3
            const double dq_da = -(2 + 2 * a) * lam * lam + (6 + 4 * a + 6 * a * a) * lam - 12 * a * a;
            const double dq_dl = 3 * lam * lam - 2 * (3 + 2 * a + a * a) * lam + (6 * a + 2 * a * a + 2 * a * a * a);
            EXPECT_NEAR(g.dt[k], -dq_da / dq_dl, 1e-7 * (1.0 + std::abs(dq_da / dq_dl)));
        }
    }
}

TEST(LogDerivative, TricomiIsZero) {
    const auto m = certify_lambda1_log_derivative(make_family(families::tricomi()), kSmall,
                                                  [](double t, double) { return t; });
    EXPECT_EQ(m.value, 0.0);
    EXPECT_TRUE(m.confirmed());
}

TEST(LogDerivative, ParabolicBottomBounded) {
    const auto m = certify_lambda1_log_derivative(make_family(families::polynomial("t+y^2")), kSmall,
                                                  [](double t, double) { return t; });
    EXPECT_TRUE(std::isfinite(m.value));
    EXPECT_TRUE(m.confirmed()) << m.value << " " << m.value_refined;
}

TEST(FiniteDifferences, CentralDifferenceIsSecondOrder) {
    const auto f = make_family(families::theta(0.7, "t+0.2*y^3"));
    const double t = 0.03, y = 0.4;
    const double exact_t = f.b_t(t, y), exact_y = f.b_y(t, y);
    auto err = [&](double h) {
        const double dt = fd_first([&](double s) { return f.b(s, y); }, t, h, 0.0, 1.0);
        const double dy = fd_first([&](double s) { return f.b(t, s); }, y, h, -1.0, 1.0);
        return std::pair{std::abs(dt - exact_t), std::abs(dy - exact_y)};
    };
    const auto [e1t, e1y] = err(4e-3);
    const auto [e2t, e2y] = err(2e-3);
    EXPECT_GE(std::log2(e1t / e2t), 1.8);
    EXPECT_GE(std::log2(e1y / e2y), 1.8);
}

TEST(FiniteDifferences, OneSidedAtDomainEdge) {
    auto f = make_family(families::polynomial("t^2+3*t"));
    f.a_t = nullptr;
    EXPECT_NEAR(f.dadt(0.0, 0.0), 3.0, 1e-8);
    EXPECT_NEAR(f.dadt(1.0, 0.0), 5.0, 1e-8);
}

TEST(BuiltinFamilies, AllRatiosRefinementStable) {
    for (const auto& spec : families::builtin()) {
        const auto f = make_family(spec);
        auto ms = certify_coefficient_derivatives(f, kSmall);
        const auto ev = certify_eigenvalue_derivatives(f, kSmall);
        ms.insert(ms.end(), ev.begin(), ev.end());
        for (const auto& m : ms)
            EXPECT_TRUE(m.confirmed()) << spec.label << " " << m.name << " " << m.value << " -> " << m.value_refined;
    }
}
