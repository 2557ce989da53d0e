#include "triplesym/weights.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace triplesym;

namespace {

const OpenGrid kKeyGrid{0.0, 0.5, -1.0, 1.0, 60, 9};

OpenGrid general_grid(double delta_bar, double T) {
    return OpenGrid{-T, T, -2.0 * delta_bar * T, 2.0 * delta_bar * T, 60, 59};
}

RootProfile manual_profile(double alpha, std::array<cplx, 3> nu) {
    RootProfile p;
    p.alpha = alpha;
    p.nu = nu;
    return p;
}

}  // namespace

TEST(RootProfile, TricomiIsTripleZero) {
    const auto p = extract_root_profile(make_family(families::tricomi()), 0.3);
    EXPECT_DOUBLE_EQ(p.e2, 4.0);
    for (const auto& z : p.nu) EXPECT_EQ(std::abs(z), 0.0);
    EXPECT_EQ(p.psi, 0.0);
    EXPECT_EQ(p.alpha, 0.0);
    EXPECT_TRUE(p.dichotomy_holds());
}

TEST(RootProfile, ComplexPairRoundTrip) {
    const auto f = make_family(families::complex_nu());
    const auto p = extract_root_profile(f, 0.0);
    ASSERT_EQ(p.case_tag, RootCase::conjugate_pair);
    EXPECT_NEAR(p.nu[0].real(), -0.05, 1e-6);
    EXPECT_NEAR(p.nu[1].real(), 0.1, 1e-6);
    EXPECT_NEAR(p.nu[1].imag(), 0.05, 1e-6);
    EXPECT_NEAR(p.psi, 0.1, 1e-6);
    EXPECT_NEAR(p.alpha, 0.1, 1e-12);  // a = t + 0.1
    EXPECT_TRUE(p.dichotomy_holds());
}

TEST(RootProfile, CoupledRootsScaleWithSlice) {
    const auto f = make_family(families::complex_nu(0.5));
    for (double y : {-1.0, -0.3, 0.4, 1.0}) {
        const double s = 1.0 + 0.5 * y * y;
        const auto p = extract_root_profile(f, y);
        EXPECT_NEAR(p.psi, 0.1 * s, 1e-6) << y;
    }
}

TEST(RootProfile, ThreeRealRootsGiveZeroPsi) {
    const auto p = extract_root_profile(make_family(families::three_real()), 0.0);
    EXPECT_EQ(p.case_tag, RootCase::three_real);
    EXPECT_EQ(p.psi, 0.0);
    EXPECT_NEAR(p.nu[0].real(), -0.3, 1e-6);
    EXPECT_NEAR(p.nu[1].real(), -0.2, 1e-6);
    EXPECT_NEAR(p.nu[2].real(), -0.1, 1e-6);
}

TEST(RootProfile, FittedCubicReproducesNormalizedDiscriminant) {
    auto f = make_family(families::complex_nu());
    const auto exact = extract_root_profile(f, 0.0);
    f.poly_t.reset();
    const auto fit = extract_root_profile(f, 0.0);
    EXPECT_TRUE(fit.fitted);
    EXPECT_LT(fit.fit_residual, 1e-6);
    // Oracle: the cubic built from the prescribed roots.
    const Poly target = poly_from_roots({cplx(-0.05), cplx(0.1, 0.05), cplx(0.1, -0.05)});
    const Poly got = fit.normalized_cubic();
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(got.c[k], target.c[k], 1e-6) << k;
    EXPECT_NEAR(fit.e2, exact.e2, 1e-6 * exact.e2);
    EXPECT_NEAR(fit.psi, 0.1, 1e-5);
}

TEST(RootProfile, RejectsNonEffectiveTriplePoint) {
    EXPECT_THROW(extract_root_profile(make_family(families::tricomi(2)), 0.0), AnalysisError);
    EXPECT_THROW(extract_root_profile(make_family(families::theta(1.0)), 0.0), AnalysisError);
}

TEST(RootProfile, DichotomyHoldsOnBuiltinFamilies) {
    for (const auto& spec : families::builtin()) {
        const auto f = make_family(spec);
        for (int j = 0; j <= 20; ++j) {
            const double y = -1.0 + 0.1 * j;
            const auto p = extract_root_profile(f, y);
            EXPECT_TRUE(p.dichotomy_holds()) << spec.label << " y=" << y;
            const Poly cubic = p.normalized_cubic();
            for (const auto& z : p.nu) EXPECT_LT(std::abs(cubic(z)), 1e-8 * (1.0 + std::pow(p.scale(), 3))) << spec.label;
        }
    }
}

TEST(AlphaNu, Examples) {
    EXPECT_TRUE(certify_alpha_nu_comparison(manual_profile(0.0, {}), 0.1).holds);
    const auto r = certify_alpha_nu_comparison(manual_profile(0.01, {cplx(-0.05), cplx(0.1, 0.05), cplx(0.1, -0.05)}), 0.1);
    EXPECT_TRUE(r.holds);
    EXPECT_EQ(r.witness, 0);
    EXPECT_FALSE(certify_alpha_nu_comparison(manual_profile(1.0, {cplx(1e-6), cplx(0, 1e-6), cplx(0, -1e-6)}), 0.1).holds);
}

TEST(Partition, ZeroPsiIsSingleRegion) {
    const auto w = build_partition(extract_root_profile(make_family(families::tricomi()), 0.0), 0.5);
    ASSERT_EQ(w.slices.size(), 1u);
    ASSERT_EQ(w.slices[0].regions.size(), 1u);
    EXPECT_EQ(w.slices[0].regions[0].kind, WeightKind::t);
    const auto s = w.locate(0.3, 0.0);
    ASSERT_TRUE(s);
    EXPECT_DOUBLE_EQ(s->phi, 0.3);
}

TEST(Partition, Breakpoints) {
    RootProfile p;
    p.psi = 0.1;
    const auto w = build_partition(p, 0.5);
    const std::vector<double> expect{0.0, 0.05, 0.1, 0.5};
    EXPECT_EQ(w.slices[0].breakpoints, expect);
    EXPECT_EQ(w.locate(0.02, 0)->region, 1);
    EXPECT_NEAR(w.locate(0.07, 0)->phi, 0.03, 1e-15);
    EXPECT_EQ(w.locate(0.07, 0)->exponent_sign, 1);
    EXPECT_NEAR(w.locate(0.3, 0)->phi, 0.2, 1e-15);
    EXPECT_FALSE(w.locate(0.6, 0));
    EXPECT_THROW(build_partition(p, 0.1), InputError);
}

TEST(Partition, CoverageWithoutGaps) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> psi_d(0.0, 0.4);
    for (int k = 0; k < 200; ++k) {
        RootProfile p;
        p.psi = psi_d(rng);
        const auto w = build_partition(p, 0.5);
        const auto& sl = w.slices[0];
        EXPECT_EQ(sl.regions.front().lo, 0.0);
        EXPECT_EQ(sl.regions.back().hi, 0.5);
        for (std::size_t r = 1; r < sl.regions.size(); ++r) EXPECT_EQ(sl.regions[r].lo, sl.regions[r - 1].hi);
        for (int i = 1; i <= 100; ++i) {
            const double t = 0.5 * i / 100.0;
            const auto s = w.locate(t, 0.0);
            ASSERT_TRUE(s);
            EXPECT_GE(s->phi, 0.0);
            EXPECT_EQ(std::abs(s->phi_t), 1.0);
        }
    }
}

TEST(Partition, ConeGeometry) {
    RootProfile p;
    p.psi = 0.1;
    const auto w = build_partition(p, 2.0, 0.4, Geometry::cone);
    EXPECT_TRUE(w.locate(0.2, 0.3).has_value());
    EXPECT_FALSE(w.locate(0.2, 0.5).has_value());
    EXPECT_TRUE(w.region_predicate(2)(0.07, 0.0));
    EXPECT_FALSE(w.region_predicate(2)(0.2, 0.0));
}

TEST(Partition, DoubleRootSplit) {
    // a = (t - 0.2)^2 + 0.01, b = 1
    const auto f = make_family(families::polynomial("t^2-0.4*t+0.05", "1"));
    const auto p = extract_double_profile(f, 0.0);
    ASSERT_TRUE(p.split);
    EXPECT_NEAR(p.psi, 0.2, 1e-12);
    const auto w = build_double_partition(p, 0.5);
    ASSERT_EQ(w.slices[0].regions.size(), 2u);
    EXPECT_EQ(w.slices[0].regions[0].kind, WeightKind::psi_minus_t);
    EXPECT_EQ(w.slices[0].regions[0].hi, 0.2);
    EXPECT_EQ(w.slices[0].regions[1].kind, WeightKind::t_minus_psi);
    EXPECT_NEAR(w.locate(0.05, 0)->phi, 0.15, 1e-15);

    const auto q = extract_double_profile(make_family(families::polynomial("t", "1")), 0.0);
    EXPECT_FALSE(q.split);
    EXPECT_EQ(build_double_partition(q, 0.5).slices[0].regions.size(), 1u);
}

TEST(KeyProposition, TricomiClosedForm) {
    const auto f = make_family(families::tricomi());
    const auto w = build_partition(f, {0.0}, 0.5);
    const auto r = certify_key_proposition(f, w, kKeyGrid);
    EXPECT_NEAR(r.c1.value_refined, 0.25, 1e-12);
    EXPECT_NEAR(r.c2.value_refined, 3.0, 1e-12);
    EXPECT_NEAR(r.c3.value_refined, 1.0, 1e-12);
    EXPECT_TRUE(r.pass());
    EXPECT_TRUE(r.degenerate.empty());
}

TEST(KeyProposition, ComplexPairFamilyStable) {
    const auto f = make_family(families::complex_nu(0.5));
    const auto w = build_partition(f, {-1.0, 0.0, 1.0}, 0.5);
    const auto r = certify_key_proposition(f, w, kKeyGrid);
    EXPECT_EQ(r.region_index.size(), 3u);
    for (const auto& m : r.all()) {
        EXPECT_TRUE(std::isfinite(m.value)) << m.name;
        EXPECT_TRUE(m.confirmed()) << m.name << " " << m.value << " -> " << m.value_refined;
    }
}

TEST(KeyProposition, ThreeRealFamilyStable) {
    const auto f = make_family(families::three_real());
    const auto r = certify_key_proposition(f, build_partition(f, {0.0}, 0.5), kKeyGrid);
    EXPECT_TRUE(r.pass());
}

TEST(GeneralTriple, ConditionsClosedForm) {
    const OpenGrid g = general_grid(0.25, 0.2);
    const auto r0 = certify_general_triple_conditions(make_family(families::general_triple("t-x")), g);
    EXPECT_NEAR(r0.a_cubed.value_refined, 0.25, 1e-12);
    EXPECT_EQ(r0.b_t.value_refined, 0.0);
    const auto r1 = certify_general_triple_conditions(make_family(families::polynomial("t^2+x^2", "0", {-0.5, 0.5, -0.5, 0.5})), g);
    EXPECT_NEAR(r1.a_cubed.value_refined, 0.25, 1e-12);
    auto spec = families::general_triple("t-x");
    spec.theta = 0.5;
    const auto r2 = certify_general_triple_conditions(make_family(spec), g);
    EXPECT_NEAR(r2.a_cubed.value_refined, 1.0 / 3.0, 1e-9);
    EXPECT_TRUE(r2.pass());
}

TEST(AlphaPartition, SliceExamples) {
    const auto d = alpha_slice(make_family(families::general_triple("t-x")), 0.1);
    ASSERT_EQ(d.sigma.size(), 1u);
    EXPECT_NEAR(d.sigma[0], 0.1, 1e-7);
    EXPECT_NEAR(d.t_star, 0.1, 1e-7);
    EXPECT_NEAR(d.s.front(), -0.3, 1e-6);
    EXPECT_NEAR(d.s.back(), 0.3, 1e-6);

    const auto c = alpha_slice(make_family(families::polynomial("t^2+x^2", "0", {-0.5, 0.5, -0.5, 0.5})), -0.2);
    ASSERT_EQ(c.sigma.size(), 1u);
    EXPECT_NEAR(c.sigma[0], 0.0, 1e-12);
    EXPECT_NEAR(c.t_star, std::sqrt(2.0) * 0.2, 1e-12);

    const auto z = alpha_slice(make_family(families::general_triple("t")), 0.3);
    ASSERT_EQ(z.sigma.size(), 1u);
    EXPECT_EQ(z.sigma[0], 0.0);
    EXPECT_EQ(z.t_star, 0.0);
}

TEST(AlphaPartition, TrackedRootsMatchPolynomialRoots) {
    auto f = make_family(families::general_triple("t-x"));
    f.poly_t.reset();
    const auto d = alpha_slice(f, 0.137);
    ASSERT_EQ(d.sigma.size(), 1u);
    EXPECT_NEAR(d.sigma[0], 0.137, 1e-4);
}

TEST(AlphaPartition, WeightsFollowRootCurve) {
    const auto f = make_family(families::general_triple("t-x"));
    const auto w = build_alpha_partition(f, 0.25, 0.2);
    EXPECT_FALSE(w.x_divides_alpha);
    EXPECT_TRUE(w.crossings.empty());
    const auto plus = w.locate(0.05, 0.02);
    ASSERT_TRUE(plus);
    EXPECT_EQ(plus->kind, WeightKind::sigma_plus);
    EXPECT_NEAR(plus->phi, 0.03, 1e-7);
    EXPECT_NEAR(plus->phi_x, -1.0, 1e-5);
    const auto minus = w.locate(0.0, 0.02);
    ASSERT_TRUE(minus);
    EXPECT_EQ(minus->kind, WeightKind::sigma_minus);
    EXPECT_NEAR(minus->phi, 0.02, 1e-7);
    const auto top = w.locate(0.15, 0.01);
    ASSERT_TRUE(top);
    EXPECT_EQ(top->kind, WeightKind::alpha);
    EXPECT_NEAR(top->phi, 0.14, 1e-12);
    EXPECT_FALSE(w.locate(-0.1, 0.01));  // below s_0 = -3|x|
}

TEST(AlphaPartition, FactorXSelectsShiftedWeight) {
    const auto f = make_family(families::polynomial("x^2*(t-x)^2", "0", {-0.5, 0.5, -0.5, 0.5}));
    const auto w = build_alpha_partition(f, 0.25, 0.2);
    EXPECT_TRUE(w.x_divides_alpha);
    const auto top = w.locate(0.15, 0.01);
    ASSERT_TRUE(top);
    EXPECT_EQ(top->kind, WeightKind::t_minus_s_m);
    EXPECT_NEAR(top->phi, 0.15 - 0.03, 1e-6);
}

TEST(GeneralWeights, ShiftedRootFamily) {
    const auto f = make_family(families::general_triple("t-x"));
    const auto w = build_alpha_partition(f, 0.25, 0.2);
    const auto r = certify_general_weight_conditions(f, w, general_grid(0.25, 0.2));
    EXPECT_NEAR(r.phi_dt_a.value_refined, 2.0, 1e-6);
    EXPECT_TRUE(r.phi_dt_a.confirmed()) << r.phi_dt_a.skipped << "/" << r.phi_dt_a.total;
    EXPECT_TRUE(r.phi_rel.confirmed());
    EXPECT_TRUE(r.shrink_decreasing) << r.shrink_sup[0] << " " << r.shrink_sup[1] << " " << r.shrink_sup[2];
    EXPECT_GT(r.alpha_checked, 0u);
    EXPECT_EQ(r.alpha_violations, 0u);
    EXPECT_TRUE(r.pass());
}
