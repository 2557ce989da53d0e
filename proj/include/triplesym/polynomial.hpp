#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace triplesym {

/// Univariate real polynomial, ascending coefficients.
struct Poly {
    std::vector<double> c;

    Poly() = default;
    explicit Poly(std::vector<double> coeffs) : c(std::move(coeffs)) { trim(); }

    void trim() {
        while (c.size() > 1 && c.back() == 0.0) c.pop_back();
    }
    int degree() const { return c.empty() ? -1 : static_cast<int>(c.size()) - 1; }

    template <class T>
    T operator()(T x) const {
        T r{};
        for (auto it = c.rbegin(); it != c.rend(); ++it) r = r * x + *it;
        return r;
    }

    Poly derivative() const {
        if (c.size() <= 1) return Poly({0.0});
        std::vector<double> d(c.size() - 1);
        for (std::size_t k = 1; k < c.size(); ++k) d[k - 1] = static_cast<double>(k) * c[k];
        return Poly(std::move(d));
    }

    friend Poly operator*(const Poly& p, const Poly& q) {
        if (p.c.empty() || q.c.empty()) return Poly();
        std::vector<double> r(p.c.size() + q.c.size() - 1, 0.0);
        for (std::size_t i = 0; i < p.c.size(); ++i)
            for (std::size_t j = 0; j < q.c.size(); ++j) r[i + j] += p.c[i] * q.c[j];
        return Poly(std::move(r));
    }
    friend Poly operator+(const Poly& p, const Poly& q) {
        std::vector<double> r(std::max(p.c.size(), q.c.size()), 0.0);
        for (std::size_t i = 0; i < p.c.size(); ++i) r[i] += p.c[i];
        for (std::size_t i = 0; i < q.c.size(); ++i) r[i] += q.c[i];
        return Poly(std::move(r));
    }
    friend Poly operator*(double s, Poly p) {
        for (auto& x : p.c) x *= s;
        p.trim();
        return p;
    }
    friend Poly operator-(const Poly& p, const Poly& q) { return p + (-1.0) * q; }
};

/// Monic polynomial with the given complex roots; imaginary parts of the coefficients are dropped.
inline Poly poly_from_roots(const std::vector<std::complex<double>>& roots) {
    std::vector<std::complex<double>> c{1.0};
    for (const auto& r : roots) {
        std::vector<std::complex<double>> n(c.size() + 1, 0.0);
        for (std::size_t k = 0; k < c.size(); ++k) {
            n[k + 1] += c[k];
            n[k] -= r * c[k];
        }
        c = std::move(n);
    }
    std::vector<double> out(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) out[k] = c[k].real();
    return Poly(std::move(out));
}

/// Complex roots from the eigenvalues of the companion matrix, each polished by Newton steps
/// that are kept only when they reduce the residual.
inline std::vector<std::complex<double>> poly_roots(const Poly& p) {
    using C = std::complex<double>;
    Poly q = p;
    q.trim();
    const int n = q.degree();
    if (n < 1) return {};
    std::vector<C> roots;
    // Exact zero roots are peeled first; they are common (t^l factors) and the companion
    // eigensolver would smear a multiple zero root into a small circle.
    std::size_t lead_zero = 0;
    while (lead_zero < q.c.size() - 1 && q.c[lead_zero] == 0.0) ++lead_zero;
    for (std::size_t k = 0; k < lead_zero; ++k) roots.emplace_back(0.0);
    std::vector<double> rest(q.c.begin() + static_cast<std::ptrdiff_t>(lead_zero), q.c.end());
    const int m = static_cast<int>(rest.size()) - 1;
    if (m >= 1) {
        Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(m, m);
        for (int i = 1; i < m; ++i) comp(i, i - 1) = 1.0;
        for (int i = 0; i < m; ++i) comp(i, m - 1) = -rest[static_cast<std::size_t>(i)] / rest.back();
        Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
        const Poly r(rest);
        const Poly dr = r.derivative();
        for (int i = 0; i < m; ++i) {
            C z = es.eigenvalues()[i];
            for (int it = 0; it < 4; ++it) {
                const C f = r(z);
                const C df = dr(z);
                if (std::abs(df) == 0.0) break;
                const C zn = z - f / df;
                if (!(std::abs(r(zn)) < std::abs(f))) break;
                z = zn;
            }
            roots.push_back(z);
        }
    }
    std::sort(roots.begin(), roots.end(), [](const C& x, const C& y) {
        return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag();
    });
    return roots;
}

/// Polynomial in two variables: sum c_{ij} t^i y^j.
struct BiPoly {
    std::map<std::pair<int, int>, double> terms;

    static BiPoly constant(double v) {
        BiPoly p;
        if (v != 0.0) p.terms[{0, 0}] = v;
        return p;
    }
    static BiPoly var_t() {
        BiPoly p;
        p.terms[{1, 0}] = 1.0;
        return p;
    }
    static BiPoly var_y() {
        BiPoly p;
        p.terms[{0, 1}] = 1.0;
        return p;
    }

    double operator()(double t, double y) const {
        double s = 0.0;
        for (const auto& [e, c] : terms) s += c * std::pow(t, e.first) * std::pow(y, e.second);
        return s;
    }

    BiPoly dt() const {
        BiPoly r;
        for (const auto& [e, c] : terms)
            if (e.first > 0) r.terms[{e.first - 1, e.second}] += c * e.first;
        return r;
    }
    BiPoly dy() const {
        BiPoly r;
        for (const auto& [e, c] : terms)
            if (e.second > 0) r.terms[{e.first, e.second - 1}] += c * e.second;
        return r;
    }

    /// Coefficients in t at fixed y.
    Poly in_t(double y) const {
        int deg = 0;
        for (const auto& [e, c] : terms) deg = std::max(deg, e.first);
        std::vector<double> out(static_cast<std::size_t>(deg) + 1, 0.0);
        for (const auto& [e, c] : terms) out[static_cast<std::size_t>(e.first)] += c * std::pow(y, e.second);
        return Poly(std::move(out));
    }

    bool is_zero() const {
        return std::all_of(terms.begin(), terms.end(), [](const auto& kv) { return kv.second == 0.0; });
    }
    bool depends_on_y() const {
        return std::any_of(terms.begin(), terms.end(), [](const auto& kv) { return kv.first.second > 0 && kv.second != 0.0; });
    }

    friend BiPoly operator+(BiPoly a, const BiPoly& b) {
        for (const auto& [e, c] : b.terms) a.terms[e] += c;
        return a;
    }
    friend BiPoly operator*(double s, BiPoly a) {
        for (auto& [e, c] : a.terms) c *= s;
        return a;
    }
    friend BiPoly operator-(const BiPoly& a, const BiPoly& b) { return a + (-1.0) * b; }
    friend BiPoly operator*(const BiPoly& a, const BiPoly& b) {
        BiPoly r;
        for (const auto& [ea, ca] : a.terms)
            for (const auto& [eb, cb] : b.terms) r.terms[{ea.first + eb.first, ea.second + eb.second}] += ca * cb;
        return r;
    }
    BiPoly pow(int n) const {
        BiPoly r = constant(1.0);
        for (int k = 0; k < n; ++k) r = r * (*this);
        return r;
    }
};

/// Parses expressions such as "t-x", "t^2 + 0.5*y^2", "-(t+0.1)*(t-x)" into a BiPoly.
/// Variables: t, and one of x, y, xi (all mapped to the second slot).
class BiPolyParser {
public:
    static BiPoly parse(std::string_view text) {
        BiPolyParser p(text);
        BiPoly r = p.expr();
        p.skip_ws();
        if (p.pos_ != p.s_.size()) p.fail("unexpected trailing input");
        return r;
    }

private:
    explicit BiPolyParser(std::string_view s) : s_(s) {}

    std::string_view s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("polynomial expression '" + std::string(s_) + "': " + what + " at offset " +
                                    std::to_string(pos_));
    }
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    BiPoly expr() {
        BiPoly r;
        bool neg = false;
        if (eat('-'))
            neg = true;
        else
            eat('+');
        r = term();
        if (neg) r = (-1.0) * r;
        for (;;) {
            if (eat('+'))
                r = r + term();
            else if (eat('-'))
                r = r - term();
            else
                return r;
        }
    }
    BiPoly term() {
        BiPoly r = power();
        for (;;) {
            if (eat('*')) {
                r = r * power();
            } else if (eat('/')) {
                const BiPoly d = power();
                if (d.terms.size() != 1 || d.terms.begin()->first != std::pair{0, 0}) fail("division only by constants");
                r = (1.0 / d.terms.begin()->second) * r;
            } else {
                return r;
            }
        }
    }
    BiPoly power() {
        BiPoly base = atom();
        if (eat('^')) {
            skip_ws();
            std::size_t used = 0;
            const int n = std::stoi(std::string(s_.substr(pos_)), &used);
            if (n < 0) fail("negative exponent");
            pos_ += used;
            return base.pow(n);
        }
        return base;
    }
    BiPoly atom() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            BiPoly r = expr();
            if (!eat(')')) fail("missing ')'");
            return r;
        }
        if (c == '-') {
            ++pos_;
            return (-1.0) * atom();
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            const double v = std::stod(std::string(s_.substr(pos_)), &used);
            pos_ += used;
            return BiPoly::constant(v);
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t end = pos_;
            while (end < s_.size() && std::isalpha(static_cast<unsigned char>(s_[end]))) ++end;
            const std::string_view name = s_.substr(pos_, end - pos_);
            pos_ = end;
            if (name == "t") return BiPoly::var_t();
            if (name == "x" || name == "y" || name == "xi") return BiPoly::var_y();
            fail("unknown variable '" + std::string(name) + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }
};

}  // namespace triplesym
