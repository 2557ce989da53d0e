#pragma once

#include "triplesym/errors.hpp"
#include "triplesym/linalg.hpp"
#include "triplesym/measure.hpp"
#include "triplesym/symbols.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace triplesym {

/// Symmetrizer S of the companion matrix A of tau^3 - a tau - b.
struct Bezoutian {
    Mat3d S;
    Mat3d A;
    double a = 0.0, b = 0.0;
};

inline Bezoutian build_bezoutian(double a, double b) {
    Bezoutian z;
    z.a = a;
    z.b = b;
    z.S = Mat3d{{3.0, 0.0, -a, 0.0, 2.0 * a, 3.0 * b, -a, 3.0 * b, a * a}};
    z.A = Mat3d{{0.0, a, b, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0}};
    return z;
}

/// q(lambda) = lambda^3 + c2 lambda^2 + c1 lambda + c0 = det(lambda I - S).
struct CubicCoeffs {
    double c2 = 0.0, c1 = 0.0, c0 = 0.0;
};

inline CubicCoeffs characteristic_cubic(const Bezoutian& z) {
    const double a = z.a, b = z.b;
    return {-(3.0 + 2.0 * a + a * a), 6.0 * a + 2.0 * a * a + 2.0 * a * a * a - 9.0 * b * b, -discriminant(a, b)};
}

/// Eigen-data of S: ascending eigenvalues, orthogonal T with T^T S T = diag(lambda),
/// and A_T = T^{-1} A T.
struct SpectralFrame {
    std::array<double, 3> lambda{};
    Mat3d T;
    Mat3d Lambda;
    Mat3d A_T;
    std::array<double, 3> d{};  ///< norms of the cofactor columns
    bool degenerate = false;    ///< a = b = 0: exact permutation frame
    bool fallback = false;      ///< Jacobi path was used
    bool indefinite = false;    ///< discriminant below tolerance
};

inline std::array<double, 3> bezoutian_eigenvalues(const Bezoutian& z) {
    const CubicCoeffs q = characteristic_cubic(z);
    auto r = real_cubic_roots_trig(q.c2, q.c1, q.c0);
    for (auto& x : r) x = cubic_newton_polish(q.c2, q.c1, q.c0, x);
    std::sort(r.begin(), r.end());
    return r;
}

/// Cofactor columns (rows of adj(lambda_j I - S)) for the three eigenvalues.
inline Mat3d cofactor_columns(double a, double b, const std::array<double, 3>& l) {
    Mat3d c;
    c.set_col(0, {{a * (2.0 * a - l[0]), 3.0 * b * (l[0] - 3.0), (l[0] - 3.0) * (l[0] - 2.0 * a)}});
    c.set_col(1, {{-3.0 * a * b, (l[1] - 3.0) * (l[1] - a * a) - a * a, 3.0 * b * (l[1] - 3.0)}});
    c.set_col(2, {{(l[2] - 2.0 * a) * (l[2] - a * a) - 9.0 * b * b, -3.0 * a * b, -a * (l[2] - 2.0 * a)}});
    return c;
}

inline double degeneracy_threshold(double a) { return 1e-7 * (1.0 + std::abs(a)); }

namespace detail {
inline void finish_frame(SpectralFrame& f, const Bezoutian& z) {
    normalize_column_signs(f.T);
    f.Lambda = Mat3d::diag(f.lambda[0], f.lambda[1], f.lambda[2]);
    f.A_T = f.T.transpose() * z.A * f.T;
}
}  // namespace detail

/// Frame from the symmetric Jacobi solver alone.
inline SpectralFrame jacobi_frame(const Bezoutian& z) {
    SpectralFrame f;
    const SymEigen e = jacobi_eigen(z.S);
    f.lambda = e.values;
    f.T = e.vectors;
    f.fallback = true;
    f.indefinite = discriminant(z.a, z.b) < -delta_tolerance(z.a);
    const Mat3d c = cofactor_columns(z.a, z.b, f.lambda);
    for (std::size_t j = 0; j < 3; ++j) f.d[j] = norm(c.col(j));
    detail::finish_frame(f, z);
    return f;
}

/// Closed-form eigenvalues with cofactor eigenvectors; Jacobi when any cofactor column is too short.
inline SpectralFrame eigen_decompose(const Bezoutian& z) {
    SpectralFrame f;
    f.indefinite = discriminant(z.a, z.b) < -delta_tolerance(z.a);
    if (z.a == 0.0 && z.b == 0.0) {
        f.lambda = {0.0, 0.0, 3.0};
        f.T = Mat3d{{0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0}};
        f.degenerate = true;
        detail::finish_frame(f, z);
        return f;
    }
    f.lambda = bezoutian_eigenvalues(z);
    const Mat3d c = cofactor_columns(z.a, z.b, f.lambda);
    const double thr = degeneracy_threshold(z.a);
    bool ok = true;
    for (std::size_t j = 0; j < 3; ++j) {
        f.d[j] = norm(c.col(j));
        ok = ok && f.d[j] >= thr;
    }
    if (!ok) {
        const SymEigen e = jacobi_eigen(z.S);
        f.T = e.vectors;
        f.fallback = true;
        detail::finish_frame(f, z);
        return f;
    }
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t i = 0; i < 3; ++i) f.T(i, j) = c(i, j) / f.d[j];
    detail::finish_frame(f, z);
    return f;
}

inline SpectralFrame frame_at(const CoefficientField& fld, double t, double y) {
    return eigen_decompose(build_bezoutian(fld.a(t, y), fld.b(t, y)));
}

/// Frame derivatives: (d T^{-1}) T = (dT)^T T for orthogonal T, by central differences in t or y.
struct FrameDerivatives {
    Mat3d dt_TinvT;  ///< (d_t T^{-1}) T
    Mat3d dy_TinvT;  ///< (d_y T^{-1}) T
    std::array<double, 3> dt_lambda{};
    std::array<double, 3> dy_lambda{};
    Mat3d dt_LambdaAT;  ///< d_t (Lambda A_T)
    Mat3d dy_LambdaAT;  ///< d_y (Lambda A_T)
};

inline FrameDerivatives frame_derivatives(const CoefficientField& fld, double t, double y, const SpectralFrame& base) {
    FrameDerivatives out;
    auto diff = [&](double h, auto&& at) {
        SpectralFrame p = at(h), m = at(-h);
        align_columns(p.T, base.T);
        align_columns(m.T, base.T);
        Mat3d dT = (1.0 / (2.0 * h)) * (p.T - m.T);
        std::array<double, 3> dl{};
        for (std::size_t k = 0; k < 3; ++k) dl[k] = (p.lambda[k] - m.lambda[k]) / (2.0 * h);
        const Mat3d dLA = (1.0 / (2.0 * h)) * (p.Lambda * p.A_T - m.Lambda * m.A_T);
        return std::tuple{dT.transpose() * base.T, dl, dLA};
    };
    const double ht = fd_step(t, fld.fd_floor);
    std::tie(out.dt_TinvT, out.dt_lambda, out.dt_LambdaAT) =
        diff(ht, [&](double h) { return frame_at(fld, t + h, y); });
    if (fld.y_independent) return out;
    const double hy = fd_step(y, fld.fd_floor);
    std::tie(out.dy_TinvT, out.dy_lambda, out.dy_LambdaAT) =
        diff(hy, [&](double h) { return frame_at(fld, t, y + h); });
    return out;
}

// ---------------------------------------------------------------------------------------------
// Eigenvalue bounds with constant K near the triple point.

struct SkonPoint {
    double t = 0.0, y = 0.0, a = 0.0;
    std::array<double, 3> lambda{};
    std::array<bool, 6> holds{};  ///< l1 lower, l1 upper, l2 lower, l2 upper, l3 lower, l3 upper
};

struct SkonReport {
    double K = 2.0;
    std::vector<SkonPoint> points;         ///< coarse grid rows
    std::array<double, 6> k_needed{};      ///< minimal K per inequality (0 for the K-free ones)
    std::array<std::size_t, 6> failures{};  ///< coarse-grid failures per inequality at the given K
    MeasuredConstant k_min;                ///< minimal K for all four K-dependent bounds, with refinement
    bool all_hold = true;                  ///< every inequality at every coarse and refined point

    bool pass() const { return all_hold && k_min.refinement_stable(); }
};

inline const std::array<const char*, 6>& skon_names() {
    static const std::array<const char*, 6> n{"lambda1_lower", "lambda1_upper", "lambda2_lower",
                                              "lambda2_upper", "lambda3_lower", "lambda3_upper"};
    return n;
}

/// Evaluates the six bounds at one point. needed[k] is the least K for bound k (K-free bounds use 0).
inline SkonPoint skon_point(double t, double y, double a, double b, double K, std::array<double, 6>& needed) {
    const auto l = bezoutian_eigenvalues(build_bezoutian(a, b));
    const double d = discriminant(a, b);
    const double tol = 1e-12 * (1.0 + a * a);
    SkonPoint p{t, y, a, l, {}};
    const double lower1 = d / (6.0 * a + 2.0 * a * a + 2.0 * a * a * a);
    p.holds[0] = l[0] >= lower1 - 1e-12 * std::abs(lower1) - 1e-300;
    p.holds[4] = l[2] >= 3.0 - tol;
    needed = {0.0, (l[0] / (a * a) - 2.0 / 3.0) / a, (2.0 - l[1] / a) / a, (l[1] / a - 2.0) / a, 0.0,
              (l[2] - 3.0) / (a * a)};
    for (auto& x : needed) x = std::max(0.0, x);
    p.holds[1] = l[0] <= (2.0 / 3.0 + K * a) * a * a * (1.0 + 1e-12);
    p.holds[2] = l[1] >= (2.0 - K * a) * a * (1.0 - 1e-12);
    p.holds[3] = l[1] <= (2.0 + K * a) * a * (1.0 + 1e-12);
    p.holds[5] = l[2] <= 3.0 + K * a * a + tol;
    return p;
}

inline SkonReport certify_skon_bounds(const CoefficientField& fld, const OpenGrid& grid, double K = 2.0) {
    SkonReport r;
    r.K = K;
    auto sweep = [&](const OpenGrid& g, std::vector<SkonPoint>* keep, std::array<double, 6>& kneed, bool& hold) {
        const std::size_t n = g.size();
        std::vector<SkonPoint> pts(n);
        std::vector<std::array<double, 6>> needs(n);
        parallel_for(n, [&](std::size_t k) {
            const int i = static_cast<int>(k / static_cast<std::size_t>(g.ny));
            const int j = static_cast<int>(k % static_cast<std::size_t>(g.ny));
            const double t = g.t(i), y = g.y(j);
            const double a = fld.a(t, y);
            if (!(a > 0.0)) throw InputError("certify_skon_bounds: grid contains a point with a <= 0");
            pts[k] = skon_point(t, y, a, fld.b(t, y), K, needs[k]);
        });
        kneed = {};
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t q = 0; q < 6; ++q) {
                kneed[q] = std::max(kneed[q], needs[k][q]);
                hold = hold && pts[k].holds[q];
            }
        }
        if (keep) *keep = std::move(pts);
    };
    std::array<double, 6> coarse{}, fine{};
    bool hold = true;
    sweep(grid, &r.points, coarse, hold);
    for (const auto& p : r.points)
        for (std::size_t q = 0; q < 6; ++q)
            if (!p.holds[q]) ++r.failures[q];
    sweep(grid.refined(), nullptr, fine, hold);
    r.k_needed = fine;
    r.all_hold = hold;
    const double kc = *std::max_element(coarse.begin(), coarse.end());
    const double kf = *std::max_element(fine.begin(), fine.end());
    r.k_min.name = "minimal_K";
    r.k_min.value = kc;
    r.k_min.value_refined = kf;
    r.k_min.grid = describe(grid);
    r.k_min.refinement_ratio = refinement_ratio(kc, kf);
    r.k_min.total = grid.refined().size();
    return r;
}

// ---------------------------------------------------------------------------------------------
// Orders of magnitude of frame-derived matrices.

/// Claimed size of one entry: lambda1^{use_lambda1} * a^{power}. nullopt marks entries not estimated.
struct EntryOrder {
    double power = 0.0;
    bool times_lambda1 = false;
};

using OrderTable = std::array<std::optional<EntryOrder>, 9>;

inline OrderTable order_table(std::initializer_list<double> powers) {
    OrderTable t;
    std::size_t k = 0;
    for (double p : powers) {
        if (!std::isnan(p)) t[k] = EntryOrder{p, false};
        ++k;
    }
    return t;
}

struct MatrixOrderEntry {
    std::string matrix;
    int row = 0, col = 0;
    EntryOrder order;
    MeasuredConstant ratio;
};

struct MatrixOrderReport {
    std::vector<MatrixOrderEntry> entries;
    bool pass() const {
        for (const auto& e : entries)
            if (!e.ratio.confirmed()) return false;
        return true;
    }
};

enum class FrameMatrix { T, A_T, dt_TinvT, dy_TinvT, Lambda_A_T };

inline const char* frame_matrix_name(FrameMatrix m) {
    switch (m) {
        case FrameMatrix::T: return "T";
        case FrameMatrix::A_T: return "A_T";
        case FrameMatrix::dt_TinvT: return "dt_Tinv_T";
        case FrameMatrix::dy_TinvT: return "dy_Tinv_T";
        case FrameMatrix::Lambda_A_T: return "Lambda_A_T";
    }
    return "?";
}

/// Claimed orders near the triple point, as powers of a (row-major).
inline OrderTable claimed_orders(FrameMatrix m) {
    constexpr double n = std::numeric_limits<double>::quiet_NaN();
    switch (m) {
        case FrameMatrix::T: return order_table({1.0, 1.5, 0.0, 0.5, 0.0, 2.5, 0.0, 0.5, 1.0});
        case FrameMatrix::A_T: return order_table({0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 1.5, 1.0, 2.5});
        case FrameMatrix::dt_TinvT: return order_table({n, -0.5, 0.0, -0.5, n, 0.5, 0.0, 0.5, n});
        case FrameMatrix::dy_TinvT: return order_table({n, 0.0, 0.5, 0.0, n, 1.0, 0.5, 1.0, n});
        case FrameMatrix::Lambda_A_T: {
            OrderTable t = order_table({0.5, 0.0, 0.5, 2.0, 1.5, 1.0, 1.5, 1.0, 2.5});
            for (std::size_t k = 0; k < 3; ++k) t[k]->times_lambda1 = true;
            return t;
        }
    }
    return {};
}

inline MatrixOrderReport certify_matrix_orders(const CoefficientField& fld, const OpenGrid& grid, double band = 0.25) {
    MatrixOrderReport rep;
    const std::array<FrameMatrix, 5> mats{FrameMatrix::T, FrameMatrix::A_T, FrameMatrix::dt_TinvT, FrameMatrix::dy_TinvT,
                                          FrameMatrix::Lambda_A_T};
    struct Sample {
        std::array<Mat3d, 5> m;
        double a = 0.0, lambda1 = 0.0;
    };
    auto sample_grid = [&](const OpenGrid& g) {
        return parallel_map<Sample>(g.size(), [&](std::size_t k) {
            const int i = static_cast<int>(k / static_cast<std::size_t>(g.ny));
            const int j = static_cast<int>(k % static_cast<std::size_t>(g.ny));
            const double t = g.t(i), y = g.y(j);
            Sample s;
            s.a = fld.a(t, y);
            if (!(s.a > 0.0)) throw InputError("certify_matrix_orders: grid touches a <= 0");
            const SpectralFrame f = frame_at(fld, t, y);
            const FrameDerivatives dv = frame_derivatives(fld, t, y, f);
            s.lambda1 = f.lambda[0];
            s.m = {f.T, f.A_T, dv.dt_TinvT, dv.dy_TinvT, f.Lambda * f.A_T};
            return s;
        });
    };
    const OpenGrid fine = grid.refined();
    const auto sc = sample_grid(grid);
    const auto sf = sample_grid(fine);
    for (std::size_t mi = 0; mi < mats.size(); ++mi) {
        const OrderTable tab = claimed_orders(mats[mi]);
        for (std::size_t e = 0; e < 9; ++e) {
            if (!tab[e]) continue;
            const EntryOrder ord = *tab[e];
            auto sup_of = [&](const std::vector<Sample>& ss, const OpenGrid& g, GridPoint& at) {
                double s = 0.0;
                for (std::size_t k = 0; k < ss.size(); ++k) {
                    double bound = std::pow(ss[k].a, ord.power);
                    if (ord.times_lambda1) bound *= ss[k].lambda1;
                    if (bound <= 0.0) continue;
                    const double v = std::abs(ss[k].m[mi].m[e]) / bound;
                    if (v > s) {
                        s = v;
                        at = {g.t(static_cast<int>(k / static_cast<std::size_t>(g.ny))),
                              g.y(static_cast<int>(k % static_cast<std::size_t>(g.ny)))};
                    }
                }
                return s;
            };
            MatrixOrderEntry entry;
            entry.matrix = frame_matrix_name(mats[mi]);
            entry.row = static_cast<int>(e / 3) + 1;
            entry.col = static_cast<int>(e % 3) + 1;
            entry.order = ord;
            GridPoint at_c, at_f;
            entry.ratio.name = entry.matrix + "(" + std::to_string(entry.row) + "," + std::to_string(entry.col) + ")";
            entry.ratio.value = sup_of(sc, grid, at_c);
            entry.ratio.value_refined = sup_of(sf, fine, at_f);
            entry.ratio.witness = at_f;
            entry.ratio.grid = describe(grid);
            entry.ratio.total = fine.size();
            entry.ratio.finite = std::isfinite(entry.ratio.value) && std::isfinite(entry.ratio.value_refined);
            entry.ratio.refinement_ratio = refinement_ratio(entry.ratio.value, entry.ratio.value_refined);
            entry.ratio.band_lo = 1.0 - band;
            entry.ratio.band_hi = 1.0 + band;
            rep.entries.push_back(std::move(entry));
        }
    }
    return rep;
}

}  // namespace triplesym
