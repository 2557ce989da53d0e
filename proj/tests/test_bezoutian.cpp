#include "triplesym/bezoutian.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace triplesym;

namespace {

Eigen::Matrix3d to_eigen(const Mat3d& m) {
    Eigen::Matrix3d e;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) e(i, j) = m(i, j);
    return e;
}

/// Random (a, b) with a in [0, 2] and nonnegative discriminant.
std::pair<double, double> hyperbolic_sample(std::mt19937_64& rng, double a_min = 0.0) {
    std::uniform_real_distribution<double> ua(a_min, 2.0), ut(-1.0, 1.0);
    const double a = ua(rng);
    const double bmax = std::sqrt(4.0 * a * a * a / 27.0);
    return {a, ut(rng) * bmax};
}

}  // namespace

TEST(BuildBezoutian, TriplePointGivesDiagonal) {
    const auto z = build_bezoutian(0.0, 0.0);
    EXPECT_EQ(max_abs(z.S - Mat3d::diag(3.0, 0.0, 0.0)), 0.0);
}

TEST(BuildBezoutian, UnitCase) {
    const auto z = build_bezoutian(1.0, 0.0);
    EXPECT_EQ(max_abs(z.S - Mat3d{{3, 0, -1, 0, 2, 0, -1, 0, 1}}), 0.0);
    const Mat3d sa = z.S * z.A;
    EXPECT_EQ(max_abs(sa - Mat3d{{0, 2, 0, 2, 0, 0, 0, 0, 0}}), 0.0);
    EXPECT_EQ(asymmetry(sa), 0.0);
}

TEST(CharacteristicCubic, TriplePoint) {
    const auto q = characteristic_cubic(build_bezoutian(0.0, 0.0));
    EXPECT_EQ(q.c2, -3.0);
    EXPECT_EQ(q.c1, 0.0);
    EXPECT_EQ(q.c0, 0.0);
}

TEST(CharacteristicCubic, UnitCaseVanishesAtTwo) {
    const auto q = characteristic_cubic(build_bezoutian(1.0, 0.0));
    EXPECT_EQ(q.c2, -6.0);
    EXPECT_EQ(q.c1, 10.0);
    EXPECT_EQ(q.c0, -4.0);
    EXPECT_EQ(8.0 + q.c2 * 4.0 + q.c1 * 2.0 + q.c0, 0.0);
}

TEST(CharacteristicCubic, MatchesDeterminantExpansion) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 200; ++k) {
        const double a = u(rng), b = u(rng), lam = u(rng);
        const auto z = build_bezoutian(a, b);
        const auto q = characteristic_cubic(z);
        const double direct = det(lam * Mat3d::identity() - z.S);
        const double poly = ((lam + q.c2) * lam + q.c1) * lam + q.c0;
        EXPECT_NEAR(direct, poly, 1e-12 * (1.0 + std::abs(direct)));
        EXPECT_EQ(q.c0, -discriminant(a, b));
    }
}

TEST(EigenDecompose, TriplePointFrame) {
    const auto f = eigen_decompose(build_bezoutian(0.0, 0.0));
    EXPECT_TRUE(f.degenerate);
    EXPECT_EQ(f.lambda[0], 0.0);
    EXPECT_EQ(f.lambda[1], 0.0);
    EXPECT_EQ(f.lambda[2], 3.0);
    EXPECT_LE(max_abs(f.T.transpose() * f.T - Mat3d::identity()), 0.0);
    EXPECT_LE(max_abs(f.T.transpose() * build_bezoutian(0, 0).S * f.T - f.Lambda), 0.0);
}

TEST(EigenDecompose, UnitCaseEigenvalues) {
    const auto f = eigen_decompose(build_bezoutian(1.0, 0.0));
    EXPECT_NEAR(f.lambda[0], 2.0 - std::sqrt(2.0), 1e-14);
    EXPECT_NEAR(f.lambda[1], 2.0, 1e-14);
    EXPECT_NEAR(f.lambda[2], 2.0 + std::sqrt(2.0), 1e-14);
    EXPECT_FALSE(f.fallback);
}

TEST(EigenDecompose, SmallAWithinEigenvalueBounds) {
    const double a = 1e-2, K = 2.0;
    const auto f = eigen_decompose(build_bezoutian(a, 0.0));
    const double d = 4e-6;
    EXPECT_GE(f.lambda[0], d / (6 * a + 2 * a * a + 2 * a * a * a));
    EXPECT_LE(f.lambda[0], (2.0 / 3.0 + K * a) * a * a);
    // Independent oracle: the 2x2 block [[3, -a], [-a, a^2]] decouples when b = 0.
    const double tr = 3.0 + a * a, dt = 2.0 * a * a;
    const double small = dt / (0.5 * (tr + std::sqrt(tr * tr - 4.0 * dt)));
    EXPECT_NEAR(f.lambda[0], small, 1e-15 * small + 1e-300);
}

TEST(EigenDecompose, FrameInvariantsOnRandomSamples) {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 20000; ++k) {
        const auto [a, b] = hyperbolic_sample(rng);
        const auto z = build_bezoutian(a, b);
        const auto f = eigen_decompose(z);
        const double sn = norm(z.S);
        EXPECT_LE(max_abs(f.T.transpose() * f.T - Mat3d::identity()), 1e-10) << a << " " << b;
        EXPECT_LE(max_abs(f.T.transpose() * z.S * f.T - f.Lambda), 1e-9 * (1.0 + sn)) << a << " " << b;
        EXPECT_LE(asymmetry(f.Lambda * f.A_T), 1e-9 * (1.0 + sn * norm(z.A))) << a << " " << b;
        EXPECT_GE(f.lambda[0], -1e-12);
        EXPECT_LE(f.lambda[0], f.lambda[1]);
        EXPECT_LE(f.lambda[1], f.lambda[2]);
    }
}

TEST(EigenDecompose, AgreesWithIndependentSymmetricSolver) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 5000; ++k) {
        const auto [a, b] = hyperbolic_sample(rng, 1e-4);
        const auto z = build_bezoutian(a, b);
        const auto f = eigen_decompose(z);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(to_eigen(z.S));
        for (int j = 0; j < 3; ++j) {
            EXPECT_NEAR(f.lambda[static_cast<std::size_t>(j)], es.eigenvalues()[j], 1e-12);
            if (j < 2 && es.eigenvalues()[j + 1] - es.eigenvalues()[j] < 1e-6) continue;
            if (j > 0 && es.eigenvalues()[j] - es.eigenvalues()[j - 1] < 1e-6) continue;
            const double overlap = std::abs(to_eigen(f.T).col(j).dot(es.eigenvectors().col(j)));
            EXPECT_NEAR(overlap, 1.0, 1e-9) << a << " " << b << " col " << j;
        }
    }
}

TEST(EigenDecompose, CofactorAndJacobiAgree) {
    std::mt19937_64 rng(3);
    int compared = 0;
    for (int k = 0; k < 10000; ++k) {
        const auto [a, b] = hyperbolic_sample(rng, 1e-4);
        const auto z = build_bezoutian(a, b);
        const auto f = eigen_decompose(z);
        if (f.fallback) continue;
        const auto g = jacobi_frame(z);
        ++compared;
        for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(f.lambda[j], g.lambda[j], 1e-8);
        Mat3d gt = g.T;
        align_columns(gt, f.T);
        EXPECT_LE(max_abs(gt - f.T), 1e-8) << a << " " << b;
    }
    EXPECT_GT(compared, 9000);
}

TEST(EigenDecompose, SmallAFallsBackToJacobi) {
    const auto f = eigen_decompose(build_bezoutian(1e-9, 0.0));
    EXPECT_TRUE(f.fallback);
    EXPECT_LE(max_abs(f.T.transpose() * f.T - Mat3d::identity()), 1e-12);
}

TEST(EigenDecompose, ColumnSignConvention) {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 1000; ++k) {
        const auto [a, b] = hyperbolic_sample(rng);
        const auto f = eigen_decompose(build_bezoutian(a, b));
        for (std::size_t j = 0; j < 3; ++j) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < 3; ++i)
                if (std::abs(f.T(i, j)) > std::abs(f.T(best, j))) best = i;
            EXPECT_GT(f.T(best, j), 0.0);
        }
    }
}

TEST(EigenDecompose, IndefiniteInputIsFlagged) {
    const auto f = eigen_decompose(build_bezoutian(-1.0, 0.0));
    EXPECT_TRUE(f.indefinite);
    EXPECT_LT(f.lambda[0], 0.0);
}

TEST(BezoutianProperties, AlgebraicIdentities) {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 20000; ++k) {
        const auto [a, b] = hyperbolic_sample(rng);
        const auto z = build_bezoutian(a, b);
        const double sn = norm(z.S), an = norm(z.A);
        EXPECT_LE(asymmetry(z.S * z.A), 1e-13 * sn * an);
        const double d = discriminant(a, b);
        EXPECT_LE(std::abs(det(z.S) - d), 1e-10 * (1.0 + std::abs(d)));
        EXPECT_EQ(z.S(0, 0) + z.S(1, 1) + z.S(2, 2), 3.0 + 2.0 * a + a * a);
        const auto l = bezoutian_eigenvalues(z);
        EXPECT_GE(l[0], -1e-12 * (1.0 + sn));
        const auto q = characteristic_cubic(z);
        EXPECT_NEAR(l[0] + l[1] + l[2], -q.c2, 1e-9 * std::abs(q.c2));
        EXPECT_NEAR(l[0] * l[1] * l[2], -q.c0, 1e-9 * (std::abs(q.c0) + 1e-300) + 1e-15);
    }
}

TEST(BezoutianProperties, CompanionEigenvaluesAreSymbolRoots) {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 2000; ++k) {
        const auto [a, b] = hyperbolic_sample(rng);
        const auto z = build_bezoutian(a, b);
        Eigen::EigenSolver<Eigen::Matrix3d> es(to_eigen(z.A));
        const auto roots = depressed_cubic_roots(a, b);
        for (int j = 0; j < 3; ++j) {
            const cplx ev = es.eigenvalues()[j];
            double best = 1e300;
            for (const auto& r : roots) best = std::min(best, std::abs(ev - r));
            // Near-multiple roots are only determined to about sqrt(eps) by any method.
            const double gap = std::min({std::abs(roots[0] - roots[1]), std::abs(roots[1] - roots[2]),
                                         std::abs(roots[0] - roots[2])});
            EXPECT_LE(best, gap > 1e-3 ? 1e-9 : 1e-5) << a << " " << b;
        }
    }
}

TEST(SkonBounds, TricomiSatisfiesAllSix) {
    const auto f = make_family(families::tricomi());
    const auto r = certify_skon_bounds(f, OpenGrid{0.0, 0.05, 0.0, 0.0, 200, 1}, 2.0);
    EXPECT_TRUE(r.all_hold);
    EXPECT_TRUE(r.pass());
    for (const auto& p : r.points) {
        EXPECT_GE(p.lambda[2], 3.0);
        const double d = 4.0 * p.t * p.t * p.t;
        EXPECT_GE(p.lambda[0], d / (6 * p.a + 2 * p.a * p.a + 2 * p.a * p.a * p.a));
    }
}

TEST(SkonBounds, RejectsNonPositiveA) {
    const auto f = make_family(families::polynomial("t-0.01"));
    EXPECT_THROW(certify_skon_bounds(f, OpenGrid{0.0, 0.05, 0.0, 0.0, 10, 1}), InputError);
}

TEST(SkonBounds, TooSmallKIsDetected) {
    const auto f = make_family(families::tricomi());
    const auto r = certify_skon_bounds(f, OpenGrid{0.0, 0.05, 0.0, 0.0, 50, 1}, 0.0);
    EXPECT_FALSE(r.all_hold);
    EXPECT_GT(r.failures[5], 0u);  // lambda3 <= 3 fails for K = 0
}

TEST(MatrixOrders, TricomiEntriesBounded) {
    const auto f = make_family(families::tricomi());
    const auto r = certify_matrix_orders(f, OpenGrid{0.0, 0.05, 0.0, 0.0, 100, 1});
    for (const auto& e : r.entries) EXPECT_TRUE(e.ratio.confirmed()) << e.ratio.name << " " << e.ratio.value << " -> " << e.ratio.value_refined;
    EXPECT_TRUE(r.pass());
}

TEST(MatrixOrders, ThetaFamilyEntriesBounded) {
    const auto f = make_family(families::theta(0.5, "t+y^2"));
    const auto r = certify_matrix_orders(f, OpenGrid{0.0, 0.05, -0.05, 0.05, 40, 11});
    for (const auto& e : r.entries) EXPECT_TRUE(e.ratio.confirmed()) << e.ratio.name << " " << e.ratio.value << " -> " << e.ratio.value_refined;
}
