#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <type_traits>
#include <utility>

namespace triplesym {

using cplx = std::complex<double>;

/// Fixed-size 3-vector.
template <class T>
struct Vec3 {
    std::array<T, 3> v{};

    constexpr T& operator[](std::size_t i) { return v[i]; }
    constexpr const T& operator[](std::size_t i) const { return v[i]; }

    constexpr Vec3& operator+=(const Vec3& o) {
        for (std::size_t i = 0; i < 3; ++i) v[i] += o.v[i];
        return *this;
    }
    constexpr Vec3& operator-=(const Vec3& o) {
        for (std::size_t i = 0; i < 3; ++i) v[i] -= o.v[i];
        return *this;
    }
    template <class S>
        requires std::is_convertible_v<S, T>
    constexpr Vec3& operator*=(S s) {
        for (auto& x : v) x *= s;
        return *this;
    }
    friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    template <class S>
        requires std::is_convertible_v<S, T>
    friend constexpr Vec3 operator*(S s, Vec3 a) { return a *= s; }
};

using Vec3d = Vec3<double>;
using Vec3c = Vec3<cplx>;

/// Row-major 3x3 matrix.
template <class T>
struct Mat3 {
    std::array<T, 9> m{};

    static constexpr Mat3 identity() {
        Mat3 r;
        r(0, 0) = r(1, 1) = r(2, 2) = T(1);
        return r;
    }
    static constexpr Mat3 diag(T a, T b, T c) {
        Mat3 r;
        r(0, 0) = a;
        r(1, 1) = b;
        r(2, 2) = c;
        return r;
    }

    constexpr T& operator()(std::size_t i, std::size_t j) { return m[3 * i + j]; }
    constexpr const T& operator()(std::size_t i, std::size_t j) const { return m[3 * i + j]; }

    constexpr Mat3 transpose() const {
        Mat3 r;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    constexpr Vec3<T> col(std::size_t j) const { return {{(*this)(0, j), (*this)(1, j), (*this)(2, j)}}; }
    constexpr void set_col(std::size_t j, const Vec3<T>& c) {
        for (std::size_t i = 0; i < 3; ++i) (*this)(i, j) = c[i];
    }

    constexpr Mat3& operator+=(const Mat3& o) {
        for (std::size_t k = 0; k < 9; ++k) m[k] += o.m[k];
        return *this;
    }
    constexpr Mat3& operator-=(const Mat3& o) {
        for (std::size_t k = 0; k < 9; ++k) m[k] -= o.m[k];
        return *this;
    }
    constexpr Mat3& operator*=(T s) {
        for (auto& x : m) x *= s;
        return *this;
    }
    friend constexpr Mat3 operator+(Mat3 a, const Mat3& b) { return a += b; }
    friend constexpr Mat3 operator-(Mat3 a, const Mat3& b) { return a -= b; }
    friend constexpr Mat3 operator*(T s, Mat3 a) { return a *= s; }

    friend constexpr Mat3 operator*(const Mat3& a, const Mat3& b) {
        Mat3 r;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                T s{};
                for (std::size_t k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
                r(i, j) = s;
            }
        return r;
    }
};

using Mat3d = Mat3<double>;
using Mat3c = Mat3<cplx>;

template <class T, class U>
constexpr auto operator*(const Mat3<T>& a, const Vec3<U>& x) {
    using R = decltype(T{} * U{});
    Vec3<R> r;
    for (std::size_t i = 0; i < 3; ++i) {
        R s{};
        for (std::size_t j = 0; j < 3; ++j) s += a(i, j) * x[j];
        r[i] = s;
    }
    return r;
}

inline Mat3c to_complex(const Mat3d& a) {
    Mat3c r;
    for (std::size_t k = 0; k < 9; ++k) r.m[k] = a.m[k];
    return r;
}

template <class T>
double max_abs(const Mat3<T>& a) {
    double r = 0.0;
    for (const auto& x : a.m) r = std::max(r, std::abs(x));
    return r;
}

/// Frobenius norm.
template <class T>
double norm(const Mat3<T>& a) {
    double s = 0.0;
    for (const auto& x : a.m) s += std::norm(cplx(x));
    return std::sqrt(s);
}

template <class T>
double norm(const Vec3<T>& x) {
    double s = 0.0;
    for (const auto& c : x.v) s += std::norm(cplx(c));
    return std::sqrt(s);
}

inline double norm2(const Vec3c& x) { return std::norm(x[0]) + std::norm(x[1]) + std::norm(x[2]); }

inline double dot(const Vec3d& a, const Vec3d& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

/// Hermitian form <M x, x> for real M; real part only (M symmetric makes it real).
inline double quad_form(const Mat3d& M, const Vec3c& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) s += M(i, j) * std::real(x[j] * std::conj(x[i]));
    return s;
}

/// Re <M x, y> = Re sum_i (Mx)_i conj(y_i).
inline double re_inner(const Mat3c& M, const Vec3c& x, const Vec3c& y) {
    const Vec3c mx = M * x;
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += std::real(mx[i] * std::conj(y[i]));
    return s;
}

template <class T>
T det(const Mat3<T>& a) {
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

template <class T>
double asymmetry(const Mat3<T>& a) {
    return max_abs(a - a.transpose());
}

/// Real roots of x^3 + c2 x^2 + c1 x + c0 when all three are real (trigonometric form).
/// The acos argument is clamped to [-1, 1] so slightly negative discriminants from rounding
/// still yield the nearest real triple. Ascending order.
inline std::array<double, 3> real_cubic_roots_trig(double c2, double c1, double c0) {
    const double shift = -c2 / 3.0;
    const double p = c1 - c2 * c2 / 3.0;
    const double q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    std::array<double, 3> r{};
    if (p >= 0.0) {
        // Only reachable through rounding when roots coincide.
        const double y = std::cbrt(-q);
        r = {y + shift, y + shift, y + shift};
    } else {
        const double m = 2.0 * std::sqrt(-p / 3.0);
        const double arg = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
        const double theta = std::acos(arg) / 3.0;
        constexpr double two_pi_3 = 2.0 * std::numbers::pi / 3.0;
        for (int k = 0; k < 3; ++k) r[k] = m * std::cos(theta - two_pi_3 * k) + shift;
    }
    std::sort(r.begin(), r.end());
    return r;
}

/// One guarded Newton step for x^3 + c2 x^2 + c1 x + c0 at x; returns x unchanged if it does not reduce |f|.
inline double cubic_newton_polish(double c2, double c1, double c0, double x) {
    auto f = [&](double z) { return ((z + c2) * z + c1) * z + c0; };
    for (int it = 0; it < 3; ++it) {
        const double fx = f(x);
        const double dfx = (3.0 * x + 2.0 * c2) * x + c1;
        if (fx == 0.0 || dfx == 0.0) break;
        const double xn = x - fx / dfx;
        if (!(std::abs(f(xn)) < std::abs(fx))) break;
        x = xn;
    }
    return x;
}

/// All complex roots of tau^3 - a tau - b.
inline std::array<cplx, 3> depressed_cubic_roots(double a, double b) {
    const double disc = 4.0 * a * a * a - 27.0 * b * b;
    if (disc >= 0.0) {
        const auto r = real_cubic_roots_trig(0.0, -a, -b);
        return {cplx(r[0]), cplx(r[1]), cplx(r[2])};
    }
    // One real root (Cardano), the other two from deflation.
    const double h = std::sqrt(b * b / 4.0 - a * a * a / 27.0);
    const double u = std::cbrt(b / 2.0 + (b >= 0 ? h : -h));
    const double v = (u != 0.0) ? a / (3.0 * u) : 0.0;
    const double r0 = cubic_newton_polish(0.0, -a, -b, u + v);
    // tau^2 + r0 tau + (r0^2 - a)
    const cplx s = std::sqrt(cplx(r0 * r0 - 4.0 * (r0 * r0 - a)));
    return {cplx(r0), 0.5 * (-r0 + s), 0.5 * (-r0 - s)};
}

/// Result of a symmetric eigensolve: ascending eigenvalues, orthonormal eigenvector columns.
struct SymEigen {
    std::array<double, 3> values{};
    Mat3d vectors;
    int sweeps = 0;
};

/// Cyclic Jacobi rotations for a real symmetric 3x3 matrix.
inline SymEigen jacobi_eigen(Mat3d a, double tol = 1e-15, int max_sweeps = 60) {
    Mat3d v = Mat3d::identity();
    const double scale = std::max(max_abs(a), 1e-300);
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        const double off = std::abs(a(0, 1)) + std::abs(a(0, 2)) + std::abs(a(1, 2));
        if (off <= tol * scale) break;
        for (std::size_t p = 0; p < 2; ++p)
            for (std::size_t q = p + 1; q < 3; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < 3; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < 3; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < 3; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::array<std::size_t, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
    SymEigen out;
    out.sweeps = sweep;
    for (std::size_t k = 0; k < 3; ++k) {
        out.values[k] = a(idx[k], idx[k]);
        out.vectors.set_col(k, v.col(idx[k]));
    }
    return out;
}

/// Flip each column so its largest-magnitude entry is positive.
inline void normalize_column_signs(Mat3d& t) {
    for (std::size_t j = 0; j < 3; ++j) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i)
            if (std::abs(t(i, j)) > std::abs(t(best, j))) best = i;
        if (t(best, j) < 0)
            for (std::size_t i = 0; i < 3; ++i) t(i, j) = -t(i, j);
    }
}

/// Flip columns of `t` to point the same way as the matching columns of `ref`.
inline void align_columns(Mat3d& t, const Mat3d& ref) {
    for (std::size_t j = 0; j < 3; ++j)
        if (dot(t.col(j), ref.col(j)) < 0)
            for (std::size_t i = 0; i < 3; ++i) t(i, j) = -t(i, j);
}

/// Inverse of a complex 3x3 via adjugate; returns false when |det| <= tiny.
inline bool invert(const Mat3c& a, Mat3c& inv, double tiny = 1e-300) {
    const cplx d = det(a);
    if (std::abs(d) <= tiny) return false;
    inv(0, 0) = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
    inv(0, 1) = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
    inv(0, 2) = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
    inv(1, 0) = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
    inv(1, 1) = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
    inv(1, 2) = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
    inv(2, 0) = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
    inv(2, 1) = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
    inv(2, 2) = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    inv *= cplx(1.0) / d;
    return true;
}

}  // namespace triplesym
