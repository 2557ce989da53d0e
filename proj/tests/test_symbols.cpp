#include "triplesym/symbols.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace triplesym;

TEST(Discriminant, TripleRootIsZero) { EXPECT_EQ(discriminant(0.0, 0.0), 0.0); }

TEST(Discriminant, CubicWithRootsZeroPlusMinusOne) { EXPECT_EQ(discriminant(1.0, 0.0), 4.0); }

TEST(Discriminant, DoubleRootFactorization) {
    // tau^3 - 3 tau - 2 = (tau + 1)^2 (tau - 2)
    EXPECT_EQ(discriminant(3.0, 2.0), 0.0);
}

TEST(Discriminant, ScaledDoubleRootsStayExactlyZero) {
    // (tau + s)^2 (tau - 2 s) has a = 3 s^2, b = 2 s^3; powers of two keep the arithmetic exact.
    for (int k = -20; k <= 20; ++k) {
        const double s = std::ldexp(1.0, k);
        EXPECT_EQ(discriminant(3.0 * s * s, 2.0 * s * s * s), 0.0) << "s = 2^" << k;
    }
}

TEST(Discriminant, FieldRejectsPointsOutsideDomain) {
    const auto f = make_family(families::tricomi());
    EXPECT_THROW(discriminant(f, -0.5, 0.0), InputError);
    EXPECT_NO_THROW(discriminant(f, 0.5, 0.0));
}

TEST(Hyperbolicity, TricomiHasTriplePointAtOrigin) {
    const auto f = make_family(families::tricomi());
    const auto r = check_hyperbolicity(f, GridSpec{0.0, 1.0, 0.0, 0.0, 101, 1});
    EXPECT_DOUBLE_EQ(r.delta_min, 0.0);
    EXPECT_TRUE(r.violation_points.empty());
    ASSERT_EQ(r.triple_points.size(), 1u);
    EXPECT_EQ(r.triple_points[0].t, 0.0);
    EXPECT_TRUE(r.effective[0]);
}

TEST(Hyperbolicity, NegativeTricomiViolatesForPositiveTime) {
    const auto f = make_family(families::polynomial("-t"));
    const auto r = check_hyperbolicity(f, GridSpec{0.0, 1.0, 0.0, 0.0, 11, 1});
    EXPECT_EQ(r.violation_points.size(), 10u);
    for (const auto& p : r.violation_points) EXPECT_GT(p.t, 0.0);
    EXPECT_NEAR(r.delta_min, -4.0, 1e-12);
    EXPECT_FALSE(r.hyperbolic());
}

TEST(Hyperbolicity, ParabolicBottomHasSingleTriplePoint) {
    const auto f = make_family(families::polynomial("t+y^2"));
    const auto r = check_hyperbolicity(f, GridSpec{0.0, 0.5, -0.5, 0.5, 51, 51});
    EXPECT_TRUE(r.hyperbolic());
    ASSERT_EQ(r.triple_points.size(), 1u);
    EXPECT_EQ(r.triple_points[0].t, 0.0);
    EXPECT_NEAR(r.triple_points[0].y, 0.0, 1e-15);
}

TEST(Hyperbolicity, ViolationsIffNegativeMinimum) {
    for (const auto& spec : {families::tricomi(), families::polynomial("-t"), families::polynomial("t-0.5")}) {
        const auto r = check_hyperbolicity(make_family(spec), GridSpec{0.0, 1.0, 0.0, 0.0, 41, 1});
        EXPECT_EQ(r.violation_points.empty(), r.delta_min >= -delta_tolerance(1.0)) << spec.label;
    }
}

TEST(EffectiveHyperbolicity, TricomiExponentOneIsEffective) {
    EXPECT_TRUE(check_effective_hyperbolicity(make_family(families::tricomi(1, 0.0)), {0.0, 0.0}));
}

TEST(EffectiveHyperbolicity, TricomiExponentTwoIsNot) {
    EXPECT_FALSE(check_effective_hyperbolicity(make_family(families::tricomi(2, 0.0)), {0.0, 0.0}));
}

TEST(EffectiveHyperbolicity, DoubleVariantUsesSecondDerivative) {
    const auto f = make_family(families::polynomial("t^2"));
    EXPECT_FALSE(check_effective_hyperbolicity(f, {0.0, 0.0}, CriticalKind::triple));
    EXPECT_TRUE(check_effective_hyperbolicity(f, {0.0, 0.0}, CriticalKind::double_root));
    const auto g = make_family(families::polynomial("t^3"));
    EXPECT_FALSE(check_effective_hyperbolicity(g, {0.0, 0.0}, CriticalKind::double_root));
}

TEST(EffectiveHyperbolicity, MissingCoefficientIsConfigurationError) {
    CoefficientField f;
    EXPECT_THROW(check_effective_hyperbolicity(f, {0.0, 0.0}), ConfigurationError);
}

TEST(EffectiveHyperbolicity, FiniteDifferencePathAgreesWithAnalytic) {
    auto f = make_family(families::polynomial("t^2"));
    f.a_t = nullptr;
    f.a_tt = nullptr;
    EXPECT_TRUE(check_effective_hyperbolicity(f, {0.0, 0.0}, CriticalKind::double_root));
    EXPECT_NEAR(f.d2adt2(0.0, 0.0), 2.0, 1e-4);
}

TEST(Families, TricomiIsLinearTime) {
    const auto f = make_family(families::tricomi(1, 0.0));
    for (double t : {0.0, 0.1, 0.7}) {
        EXPECT_EQ(f.a(t, 0.3), t);
        EXPECT_EQ(f.b(t, 0.3), 0.0);
    }
}

TEST(Families, TricomiWithTransportMatchesShiftedRoots) {
    // Roots of (tau^2 - t)(tau + c) shifted by c/3 must be the roots of sigma^3 - a sigma - b.
    const double c = 0.4, t = 0.3;
    const auto f = make_family(families::tricomi(1, c));
    const double a = f.a(t, 0.0), b = f.b(t, 0.0);
    for (double tau : {std::sqrt(t), -std::sqrt(t), -c}) {
        const double s = tau + c / 3.0;
        EXPECT_NEAR(s * s * s - a * s - b, 0.0, 1e-14);
    }
}

TEST(Families, GeneralTripleSquaresAlpha) {
    const auto f = make_family(families::general_triple("t-x"));
    for (double t : {-0.3, 0.0, 0.2})
        for (double x : {-0.1, 0.25}) {
            EXPECT_NEAR(f.a(t, x), (t - x) * (t - x), 1e-15);
            EXPECT_EQ(f.b(t, x), 0.0);
        }
}

namespace {
// Cubic through four samples of the discriminant, solved with the generic root finder.
std::vector<cplx> roots_from_samples(const CoefficientField& f, double y) {
    const std::array<double, 4> ts{0.0, 0.3, 0.6, 0.9};
    std::array<double, 4> vs{};
    for (std::size_t i = 0; i < 4; ++i) vs[i] = f.delta(ts[i], y);
    Poly interp({0.0});
    for (std::size_t i = 0; i < 4; ++i) {
        Poly basis({1.0});
        double denom = 1.0;
        for (std::size_t j = 0; j < 4; ++j) {
            if (j == i) continue;
            basis = basis * Poly({-ts[j], 1.0});
            denom *= ts[i] - ts[j];
        }
        interp = interp + (vs[i] / denom) * basis;
    }
    return poly_roots(interp);
}
}  // namespace

TEST(Families, PrescribedDeltaRoundTrip) {
    const auto f = make_family(families::complex_nu());
    const auto r = roots_from_samples(f, 0.0);
    ASSERT_EQ(r.size(), 3u);
    // Sorted by real part: -0.05, then 0.1 -+ 0.05i.
    EXPECT_NEAR(std::abs(r[0] - cplx(-0.05, 0.0)), 0.0, 1e-6);
    EXPECT_NEAR(std::abs(r[1] - cplx(0.1, -0.05)), 0.0, 1e-6);
    EXPECT_NEAR(std::abs(r[2] - cplx(0.1, 0.05)), 0.0, 1e-6);
}

TEST(Families, PrescribedDeltaRespectsBounds) {
    const auto f = make_family(families::complex_nu(0.5));
    for (int i = 0; i <= 50; ++i)
        for (int j = 0; j <= 10; ++j) {
            const double t = i / 50.0, y = -1.0 + j / 5.0;
            const double a = f.a(t, y), d = f.delta(t, y);
            EXPECT_GE(d, -delta_tolerance(a));
            EXPECT_LE(d, 4.0 * a * a * a * (1.0 + 1e-12));
        }
}

TEST(Families, PrescribedDeltaInfeasibleProfileIsRejected) {
    FamilySpec s = families::complex_nu();
    s.a_expr = "t-0.5";  // 4a^3 < 0 where the profile is positive
    EXPECT_THROW(make_family(s), InputError);
    FamilySpec k = families::complex_nu();
    k.kappa = 1e6;
    EXPECT_THROW(make_family(k), InputError);
}

TEST(Families, UnknownKindIsConfigurationError) {
    FamilySpec s;
    s.kind = "nope";
    EXPECT_THROW(make_family(s), ConfigurationError);
}

TEST(Families, EveryBuiltinIsHyperbolicOnItsDomain) {
    for (const auto& spec : families::builtin()) {
        const auto f = make_family(spec);
        const auto& d = f.domain;
        const auto r = check_hyperbolicity(f, GridSpec{d.t_lo, d.t_hi, d.y_lo, d.y_hi, 81, 21});
        EXPECT_TRUE(r.hyperbolic()) << spec.label << " delta_min=" << r.delta_min;
    }
    const auto g = make_family(families::general_triple());
    EXPECT_TRUE(check_hyperbolicity(g, GridSpec{-0.5, 0.5, -0.5, 0.5, 41, 41}).hyperbolic());
}

TEST(Families, PolynomialRepresentationMatchesEvaluators) {
    std::vector<FamilySpec> specs = families::builtin();
    specs.push_back(families::general_triple());
    specs.push_back(families::tricomi(2, 0.3));
    for (const auto& spec : specs) {
        const auto f = make_family(spec);
        ASSERT_TRUE(f.poly_t.has_value()) << spec.label;
        const auto& d = f.domain;
        for (int j = 0; j <= 6; ++j) {
            const double y = d.y_lo + (d.y_hi - d.y_lo) * j / 6.0;
            const Poly pa = f.poly_t->a(y), pd = f.poly_t->delta(y);
            for (int i = 0; i <= 20; ++i) {
                const double t = d.t_lo + (d.t_hi - d.t_lo) * i / 20.0;
                EXPECT_NEAR(pa(t), f.a(t, y), 1e-12 * (1.0 + std::abs(f.a(t, y)))) << spec.label;
                const double dv = f.delta(t, y);
                // b is a square root for prescribed families, so allow the cancellation in 4a^3 - 27 b^2.
                const double a = f.a(t, y);
                EXPECT_NEAR(pd(t), dv, 1e-12 * (1.0 + std::abs(dv) + 4.0 * std::abs(a * a * a))) << spec.label;
            }
        }
    }
}

TEST(Parser, HandlesPrecedenceAndPowers) {
    const BiPoly p = BiPolyParser::parse("-(t+0.1)*(t-x) + 2*t^2/4");
    for (double t : {-0.3, 0.2})
        for (double x : {0.5, -1.0}) EXPECT_NEAR(p(t, x), -(t + 0.1) * (t - x) + 0.5 * t * t, 1e-15);
    EXPECT_THROW(BiPolyParser::parse("t+z"), std::invalid_argument);
    EXPECT_THROW(BiPolyParser::parse("(t"), std::invalid_argument);
    EXPECT_THROW(BiPolyParser::parse("t/x"), std::invalid_argument);
}

TEST(Parser, RandomPolynomialsEvaluateConsistently) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        const double c0 = u(rng), c1 = u(rng), c2 = u(rng);
        char buf[200];
        std::snprintf(buf, sizeof buf, "%.17g + %.17g*t*y + %.17g*(t-y)^3", c0, c1, c2);
        const BiPoly p = BiPolyParser::parse(buf);
        const double t = u(rng), y = u(rng);
        EXPECT_NEAR(p(t, y), c0 + c1 * t * y + c2 * std::pow(t - y, 3), 1e-13);
    }
}

TEST(Polynomial, RootsOfKnownCubic) {
    const Poly p = poly_from_roots({cplx(-0.1), cplx(-0.2), cplx(-0.3)});
    const auto r = poly_roots(p);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_NEAR(r[0].real(), -0.3, 1e-12);
    EXPECT_NEAR(r[1].real(), -0.2, 1e-12);
    EXPECT_NEAR(r[2].real(), -0.1, 1e-12);
}

TEST(Polynomial, ZeroRootsArePeeledExactly) {
    const auto r = poly_roots(Poly({0.0, 0.0, 0.0, 4.0}));
    ASSERT_EQ(r.size(), 3u);
    for (const auto& z : r) EXPECT_EQ(z, cplx(0.0));
}
