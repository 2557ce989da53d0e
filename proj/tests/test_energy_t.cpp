#include "triplesym/energy_t.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace triplesym;

namespace {

CoefficientField constant_field(double a, double b = 0.0) {
    return make_family(families::polynomial(std::to_string(a), std::to_string(b)));
}

Vec3c unit_data() {
    const Vec3c u{{cplx(0.3, -0.2), cplx(1.0, 0.5), cplx(-0.7, 0.1)}};
    return (1.0 / norm(u)) * u;
}

/// exp(i xi A t) U0 through the eigen-decomposition of the constant matrix A.
Vec3c propagate_exactly(const Mat3d& A, double xi, double t, const Vec3c& U0) {
    Eigen::Matrix3d M;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) M(i, j) = A(i, j);
    Eigen::EigenSolver<Eigen::Matrix3d> es(M);
    const Eigen::Matrix3cd V = es.eigenvectors();
    Eigen::Vector3cd u0(U0[0], U0[1], U0[2]);
    Eigen::Vector3cd c = V.lu().solve(u0);
    for (int k = 0; k < 3; ++k) c(k) *= std::exp(cplx(0.0, xi * t) * es.eigenvalues()(k));
    const Eigen::Vector3cd u = V * c;
    return Vec3c{{u(0), u(1), u(2)}};
}

/// Raw equation D^3 u + c2 xi D^2 u + c1 xi^2 D u + c0 xi^3 u = f with D = -i d/dt, integrated as a
/// first-order system in (u, u', u'') with a plain fixed-step RK4.
cplx solve_raw(const RawSymbol& r, double xi_signed, const SourceFn& f, double t1, int steps) {
    using State = std::array<cplx, 3>;
    auto rhs = [&](double t, const State& s) {
        const double c2 = r.c2(t, 0.0), c1 = r.c1(t, 0.0), c0 = r.c0(t, 0.0);
        const cplx i(0.0, 1.0);
        const cplx third = -i * (f(t) + c2 * xi_signed * s[2] + i * c1 * xi_signed * xi_signed * s[1] -
                                 c0 * xi_signed * xi_signed * xi_signed * s[0]);
        return State{s[1], s[2], third};
    };
    auto axpy = [](const State& a, double h, const State& b) {
        return State{a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]};
    };
    State s{};
    const double h = t1 / steps;
    for (int n = 0; n < steps; ++n) {
        const double t = n * h;
        const State k1 = rhs(t, s), k2 = rhs(t + h / 2, axpy(s, h / 2, k1)), k3 = rhs(t + h / 2, axpy(s, h / 2, k2)),
                    k4 = rhs(t + h, axpy(s, h, k3));
        for (int k = 0; k < 3; ++k) s[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
    return s[0];
}

RawSymbol transport_raw() {
    RawSymbol r;
    r.name = "transport";
    r.c2 = [](double t, double) { return 0.5 + t; };
    r.c2_t = [](double, double) { return 1.0; };
    r.c2_tt = [](double, double) { return 0.0; };
    r.c1 = [](double, double) { return -1.0; };
    r.c0 = [](double t, double) { return 0.1 * t; };
    r.domain = {0.0, 1.0, -1.0, 1.0};
    return r;
}

}  // namespace

TEST(FrequencySystem, MatrixMatchesBezoutian) {
    const auto f = make_family(families::theta(0.5));
    const auto sys = make_frequency_system(f, 0.2, 32.0);
    for (double t : {0.0, 0.1, 0.7}) {
        const Mat3d A = sys.A_of_t(t);
        const Mat3d ref = build_bezoutian(f.a(t, 0.2), f.b(t, 0.2)).A;
        for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(A.m[k], ref.m[k]);
    }
}

TEST(FrequencySystem, RejectsLowFrequency) {
    EXPECT_THROW(make_frequency_system(constant_field(1.0), 0.0, 0.5), InputError);
}

TEST(FrequencySystem, EigenSpeedsOfUnitSymbol) {
    const auto sys = make_frequency_system(constant_field(1.0), 0.0, 1.0);
    const Mat3d A = sys.A_of_t(0.0);
    Eigen::Matrix3d M;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) M(i, j) = A(i, j);
    std::vector<double> ev;
    for (const auto& z : Eigen::EigenSolver<Eigen::Matrix3d>(M).eigenvalues()) {
        EXPECT_NEAR(z.imag(), 0.0, 1e-14);
        ev.push_back(z.real());
    }
    std::sort(ev.begin(), ev.end());
    EXPECT_NEAR(ev[0], -1.0, 1e-14);
    EXPECT_NEAR(ev[1], 0.0, 1e-14);
    EXPECT_NEAR(ev[2], 1.0, 1e-14);
}

TEST(Integrator, ConservesSymmetrizedEnergy) {
    const auto f = constant_field(1.0);
    const Mat3d S = build_bezoutian(1.0, 0.0).S;
    for (double xi : {16.0, 256.0, 4096.0}) {
        const auto sys = make_frequency_system(f, 0.0, xi);
        const Vec3c U0 = unit_data();
        const double e0 = quad_form(S, U0);
        double drift = 0.0;
        integrate(sys, 0.0, 1.0, U0, IntegratorSpec{}, [&](double, const Vec3c& U) {
            drift = std::max(drift, std::abs(quad_form(S, U) - e0) / e0);
        });
        EXPECT_LE(drift, 1e-8) << "xi=" << xi;
    }
}

TEST(Integrator, MatchesMatrixExponential) {
    const auto f = constant_field(0.8, 0.1);
    for (double xi : {16.0, 256.0}) {
        const auto sys = make_frequency_system(f, 0.0, xi);
        const auto tr = solve_frequency(sys, 0.0, 1.0, unit_data());
        const Vec3c exact = propagate_exactly(sys.A_of_t(0.0), xi, 1.0, unit_data());
        EXPECT_LE(norm(tr.U.back() - exact), 1e-8) << "xi=" << xi;
        EXPECT_EQ(tr.t.back(), 1.0);
    }
}

TEST(Integrator, FourthOrderSelfConvergence) {
    const auto sys = make_frequency_system(make_family(families::tricomi()), 0.0, 8.0);
    auto run = [&](double h) {
        IntegratorSpec s;
        s.fixed_step = h;
        return solve_frequency(sys, 0.1, 0.6, unit_data(), s).U.back();
    };
    const Vec3c u1 = run(0.01), u2 = run(0.005), u4 = run(0.0025);
    const double order = std::log2(norm(u1 - u2) / norm(u2 - u4));
    EXPECT_GE(order, 3.8);
}

TEST(Integrator, TricomiAgreesWithRichardsonReference) {
    const auto sys = make_frequency_system(make_family(families::tricomi()), 0.0, 64.0, smooth_bump(0.0, 0.02));
    const Vec3c U0 = unit_data();
    auto fixed = [&](double h) {
        IntegratorSpec s;
        s.fixed_step = h;
        return solve_frequency(sys, 0.0, 0.5, U0, s).U.back();
    };
    const Vec3c coarse = fixed(2e-4), fine = fixed(1e-4);
    const Vec3c reference = fine + (1.0 / 15.0) * (fine - coarse);
    const Vec3c adaptive = solve_frequency(sys, 0.0, 0.5, U0).U.back();
    EXPECT_LE(norm(adaptive - reference) / norm(reference), 1e-6);
}

TEST(Integrator, StepUnderflowIsReported) {
    const auto sys = make_frequency_system(constant_field(1.0), 0.0, 4.0,
                                           [](double t) -> cplx { return t < 0.5 ? 0.0 : 1e6; });
    EXPECT_THROW(solve_frequency(sys, 0.0, 1.0, unit_data()), NumericalError);
}

TEST(Integrator, BlowUpStopsTheRun) {
    const auto sys = make_frequency_system(make_family(families::polynomial("-1")), 0.0, 512.0);
    IntegratorSpec s;
    s.blowup = 1e30;
    const auto tr = solve_frequency(sys, 0.0, 1.0, unit_data(), s);
    EXPECT_TRUE(tr.stats.blew_up);
    EXPECT_LT(tr.t.back(), 1.0);
}

TEST(Gauge, ReducedInputIsIdentity) {
    RawSymbol r;
    r.c2 = [](double, double) { return 0.0; };
    r.c1 = [](double t, double) { return -t; };
    r.c0 = [](double, double) { return 0.3; };
    const auto g = gauge_reduce(r, 1);
    EXPECT_TRUE(g.identity);
    EXPECT_FALSE(g.field.lower_terms.has_value());
    EXPECT_EQ(g.phase(0.7, 0.0, 100.0), cplx(1.0));
    EXPECT_EQ(g.field.a(0.4, 0.0), 0.4);
    EXPECT_EQ(g.field.b(0.4, 0.0), -0.3);
}

TEST(Gauge, CompletingTheCube) {
    auto r = transport_raw();
    r.c2_t = nullptr;  // exercise the finite-difference fallback
    r.c2_tt = nullptr;
    const auto g = gauge_reduce(r, 1);
    const double t = 0.4, p = 0.9;
    EXPECT_NEAR(g.field.a(t, 0.0), p * p / 3.0 + 1.0, 1e-15);
    EXPECT_NEAR(g.field.b(t, 0.0), -(2.0 * p * p * p / 27.0 + p / 3.0 + 0.04), 1e-15);
    const auto low = g.field.lower(t, 0.0);
    EXPECT_EQ(low[0], cplx{});
    EXPECT_NEAR(low[1].imag(), -1.0, 1e-8);
    EXPECT_NEAR(std::abs(low[2]), 0.0, 1e-6);
    for (double s : {0.0, 0.3, 1.0}) EXPECT_NEAR(std::abs(g.phase(s, 0.0, 300.0)), 1.0, 1e-14);
    // int_0^1 (0.5 + s) ds = 1
    EXPECT_NEAR(g.c2_integral(1.0, 0.0), 1.0, 1e-14);
}

TEST(Gauge, ConstantCoefficientRootsShift) {
    RawSymbol r;
    r.c2 = [](double, double) { return 0.6; };
    r.c1 = [](double, double) { return -2.0; };
    r.c0 = [](double, double) { return 0.25; };
    for (int dir : {1, -1}) {
        const auto g = gauge_reduce(r, dir);
        const double a = g.field.a(0.0, 0.0), b = g.field.b(0.0, 0.0);
        auto raw = poly_roots(Poly({0.25 * dir, -2.0, 0.6 * dir, 1.0}));
        auto red = poly_roots(Poly({-b, -a, 0.0, 1.0}));
        auto key = [](cplx z) { return std::pair{z.real(), z.imag()}; };
        std::sort(raw.begin(), raw.end(), [&](cplx x, cplx y) { return key(x) < key(y); });
        std::sort(red.begin(), red.end(), [&](cplx x, cplx y) { return key(x) < key(y); });
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(std::abs(red[k] - (raw[k] + 0.6 * dir / 3.0)), 0.0, 1e-12);
    }
}

TEST(Gauge, ReducedSystemReproducesRawSolution) {
    const auto r = transport_raw();
    const double xi = 8.0, t1 = 0.5;
    const SourceFn f = smooth_bump(0.0, 0.05);
    for (int dir : {1, -1}) {
        const auto g = gauge_reduce(r, dir);
        const SourceFn reduced_src = [&](double t) { return g.phase(t, 0.0, xi) * f(t); };
        const auto sys = make_frequency_system(g.field, 0.0, xi, reduced_src, g.lower_for(0.0, xi));
        const Vec3c U = solve_frequency(sys, 0.0, t1, Vec3c{}).U.back();
        const cplx v = U[2] / (xi * xi);
        const cplx u = v / g.phase(t1, 0.0, xi);
        const cplx u_raw = solve_raw(r, dir * xi, f, t1, 20000);
        EXPECT_NEAR(std::abs(u - u_raw), 0.0, 1e-7 * std::abs(u_raw)) << "dir=" << dir;
        EXPECT_NEAR(std::abs(v), std::abs(u_raw), 1e-7 * std::abs(u_raw));
    }
}

TEST(Monitor, FrozenCoefficientsConserveForm) {
    const auto sys = make_frequency_system(constant_field(1.0, 0.2), 0.0, 64.0);
    const FrameSample s = frame_sample(sys, 0.3, unit_data());
    EXPECT_EQ(s.dlambda, 0.0);
    EXPECT_EQ(std::abs(s.lambda_b), 0.0);
    EXPECT_EQ(s.source_cross, 0.0);
}

TEST(Monitor, ComponentsSumToSymmetrizedForm) {
    const auto f = make_family(families::complex_nu());
    const auto w = build_partition(f, {0.0}, 0.5);
    const auto tr = monitor_weighted_energy(make_frequency_system(f, 0.0, 64.0), w, 8);
    ASSERT_FALSE(tr.times.empty());
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        EXPECT_GE(tr.energy[k], 0.0);
        const double s = tr.components[k][0] + tr.components[k][1] + tr.components[k][2];
        EXPECT_NEAR(s, tr.form[k], 1e-12 * std::max(tr.form[k], 1e-300));
        for (double c : tr.components[k]) EXPECT_GE(c, 0.0);
    }
}

TEST(Monitor, FormMatchesBezoutianQuadraticForm) {
    // <Lambda V, V> from the frame equals <S U, U> computed directly.
    const auto f = make_family(families::theta(0.5));
    const auto sys = make_frequency_system(f, 0.0, 16.0);
    std::mt19937 rng(7);
    std::normal_distribution<double> n;
    for (int k = 0; k < 50; ++k) {
        const double t = 0.01 + 0.9 * k / 49.0;
        const Vec3c U{{cplx(n(rng), n(rng)), cplx(n(rng), n(rng)), cplx(n(rng), n(rng))}};
        const double direct = quad_form(build_bezoutian(f.a(t, 0.0), f.b(t, 0.0)).S, U);
        EXPECT_NEAR(frame_sample(sys, t, U).form, direct, 1e-12 * direct);
    }
}

TEST(Monitor, TricomiSingleRegionStableAcrossFrequencies) {
    const auto f = make_family(families::tricomi());
    const auto w = build_partition(f, {0.0}, 0.5);
    ASSERT_EQ(w.slices[0].regions.size(), 1u);
    std::vector<double> cs;
    for (double xi : {16.0, 64.0, 256.0}) {
        const auto tr = monitor_weighted_energy(make_frequency_system(f, 0.0, xi), w, 8);
        ASSERT_EQ(tr.verdicts.size(), 1u);
        EXPECT_TRUE(tr.pass()) << "xi=" << xi;
        EXPECT_TRUE(tr.warnings.empty());
        cs.push_back(tr.verdicts[0].C);
    }
    EXPECT_LT(constant_spread(cs), 2.0);
}

TEST(Monitor, ComplexRootsThreeRegions) {
    const auto f = make_family(families::complex_nu());
    const auto w = build_partition(f, {0.0}, 0.5);
    const auto tr = monitor_weighted_energy(make_frequency_system(f, 0.0, 64.0), w, 8);
    ASSERT_EQ(tr.verdicts.size(), 3u);
    EXPECT_FALSE(tr.verdicts[0].continuation);
    EXPECT_TRUE(tr.verdicts[1].continuation);
    EXPECT_FALSE(tr.verdicts[2].continuation);
    for (const auto& v : tr.verdicts) {
        EXPECT_TRUE(v.pass()) << v.region;
        EXPECT_LE(v.C_source, 1.0 + 1e-9);  // Cauchy-Schwarz bound
    }
}

TEST(Monitor, SliceMismatchIsInputError) {
    const auto f = make_family(families::tricomi());
    const auto w = build_partition(f, {0.0}, 0.5);
    EXPECT_THROW(monitor_weighted_energy(make_frequency_system(f, 0.3, 16.0), w, 8), InputError);
}

TEST(Monitor, DampedEnergyOnGeneralTriple) {
    const auto f = make_family(families::general_triple());
    const auto w = build_alpha_partition(f, 0.5, 0.2);
    for (int N : {1, 8}) {
        const auto tr = monitor_weighted_energy(make_frequency_system(f, -0.05, 64.0), w, N);
        ASSERT_TRUE(tr.gamma0.has_value());
        EXPECT_TRUE(std::isfinite(tr.rate_sup));
        EXPECT_GE(*tr.gamma0, 0.0);
        EXPECT_GE(*tr.gamma0, tr.rate_sup);
        ASSERT_FALSE(tr.verdicts.empty());
        for (const auto& v : tr.verdicts) EXPECT_TRUE(v.nonincreasing) << "N=" << N << " region " << v.region;
    }
}

TEST(DerivativeLoss, StrictlyHyperbolicHasNoLoss) {
    LossSpec s;
    s.xi_list = geometric_xi(4, 10);
    const auto rep = measure_derivative_loss(constant_field(1.0), s);
    ASSERT_FALSE(rep.failed) << rep.reason;
    EXPECT_EQ(rep.N0, 0);
}

TEST(DerivativeLoss, EllipticRegionFails) {
    LossSpec s;
    s.xi_list = geometric_xi(4, 14);
    const auto rep = measure_derivative_loss(make_family(families::polynomial("-t")), s);
    EXPECT_TRUE(rep.failed);
    EXPECT_FALSE(rep.N0.has_value());
}

TEST(DerivativeLoss, TricomiFinite) {
    LossSpec s;
    s.xi_list = geometric_xi(4, 9);
    const auto rep = measure_derivative_loss(make_family(families::tricomi()), s);
    ASSERT_FALSE(rep.failed) << rep.reason;
    ASSERT_TRUE(rep.N0.has_value());
    EXPECT_LE(*rep.N0, 40);
}
