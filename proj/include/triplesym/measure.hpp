#pragma once

#include "triplesym/parallel.hpp"
#include "triplesym/symbols.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace triplesym {

/// A sup of |quantity| / bound over a grid, measured at spacing h and h/2.
struct MeasuredConstant {
    std::string name;
    double value = 0.0;          ///< sup on the coarse grid
    double value_refined = 0.0;  ///< sup on the refined grid
    double refinement_ratio = 1.0;
    std::string grid;
    std::size_t skipped = 0;  ///< refined-grid points with a negligible denominator
    std::size_t total = 0;
    GridPoint witness;  ///< arg-sup on the refined grid
    bool finite = true;

    double band_lo = 0.5, band_hi = 1.5;

    bool refinement_stable() const { return finite && refinement_ratio >= band_lo && refinement_ratio <= band_hi; }
    bool skip_ok() const { return total == 0 || static_cast<double>(skipped) < 0.01 * static_cast<double>(total); }
    bool confirmed() const { return refinement_stable() && skip_ok(); }
};

/// Values below this are treated as identically zero when forming the refinement ratio.
inline constexpr double kNegligibleSup = 1e-9;

struct SupResult {
    double sup = 0.0;
    GridPoint at;
    std::size_t skipped = 0;
    std::size_t total = 0;
    bool finite = true;
};

inline bool everywhere(double, double) { return true; }

/// Sup of fn over the grid points accepted by `inside`; fn returns nullopt for points to skip.
/// Points rejected by `inside` are not counted at all.
template <class Fn, class Inside = bool (*)(double, double)>
SupResult grid_sup(const OpenGrid& g, Fn&& fn, Inside&& inside = everywhere) {
    const std::size_t n = g.size();
    std::vector<char> in(n, 0);
    const auto vals = parallel_map<std::optional<double>>(n, [&](std::size_t k) -> std::optional<double> {
        const int i = static_cast<int>(k / static_cast<std::size_t>(g.ny));
        const int j = static_cast<int>(k % static_cast<std::size_t>(g.ny));
        if (!inside(g.t(i), g.y(j))) return std::nullopt;
        in[k] = 1;
        return fn(g.t(i), g.y(j));
    });
    SupResult r;
    for (std::size_t k = 0; k < n; ++k) {
        if (!in[k]) continue;
        ++r.total;
        if (!vals[k]) {
            ++r.skipped;
            continue;
        }
        const double v = std::abs(*vals[k]);
        if (!std::isfinite(v)) r.finite = false;
        if (v > r.sup || !std::isfinite(v)) {
            r.sup = v;
            const int i = static_cast<int>(k / static_cast<std::size_t>(g.ny));
            const int j = static_cast<int>(k % static_cast<std::size_t>(g.ny));
            r.at = {g.t(i), g.y(j)};
        }
    }
    return r;
}

inline std::string describe(const OpenGrid& g) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "t in (%.6g, %.6g] x %d, y in [%.6g, %.6g] x %d", g.t_lo, g.t_hi, g.nt, g.y_lo, g.y_hi,
                  g.ny);
    return buf;
}

inline double refinement_ratio(double coarse, double fine, double floor = kNegligibleSup) {
    if (coarse <= floor && fine <= floor) return 1.0;
    if (coarse <= 0.0) return std::numeric_limits<double>::infinity();
    return fine / coarse;
}

/// Measures fn on g and on g.refined(), restricted to points accepted by `inside`.
template <class Fn, class Inside>
MeasuredConstant measure_sup_within(std::string name, const OpenGrid& g, Inside&& inside, Fn&& fn, double band_lo = 0.5,
                                    double band_hi = 1.5) {
    const SupResult c = grid_sup(g, fn, inside);
    const SupResult f = grid_sup(g.refined(), fn, inside);
    MeasuredConstant m;
    m.name = std::move(name);
    m.value = c.sup;
    m.value_refined = f.sup;
    m.grid = describe(g);
    m.skipped = f.skipped;
    m.total = f.total;
    m.witness = f.at;
    m.finite = c.finite && f.finite;
    m.refinement_ratio = refinement_ratio(c.sup, f.sup);
    m.band_lo = band_lo;
    m.band_hi = band_hi;
    return m;
}

/// Measures fn on g and on g.refined().
template <class Fn>
MeasuredConstant measure_sup(std::string name, const OpenGrid& g, Fn&& fn, double band_lo = 0.5, double band_hi = 1.5) {
    return measure_sup_within(std::move(name), g, everywhere, std::forward<Fn>(fn), band_lo, band_hi);
}

inline bool all_confirmed(const std::vector<MeasuredConstant>& ms) {
    for (const auto& m : ms)
        if (!m.confirmed()) return false;
    return true;
}

}  // namespace triplesym
