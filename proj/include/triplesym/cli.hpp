#pragma once

// Run configuration and the four commands behind the `triplesym` executable. Commands write their
// reports under an output directory with a manifest and return a process exit code.

#include "triplesym/bezoutian.hpp"
#include "triplesym/calculus.hpp"
#include "triplesym/energy_t.hpp"
#include "triplesym/errors.hpp"
#include "triplesym/report.hpp"
#include "triplesym/solver_x.hpp"
#include "triplesym/weights.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace triplesym::cli {

enum ExitCode : int { kPass = 0, kCertificationFailure = 1, kConfigurationError = 2, kNumericalFailure = 3 };

struct CertifyConfig {
    std::vector<std::string> modules{"bezoutian", "calculus", "weights"};
    double K = 2.0;
    int hyperbolicity_nt = 201, hyperbolicity_ny = 21;
    OpenGrid local{0.0, 0.05, -0.05, 0.05, 200, 11};  ///< eigenvalue bounds, matrix orders, derivative ratios
    double delta = 0.0;                               ///< partition top; 0 picks the default above psi
    int key_nt = 60, key_ny = 9;
    int identity_samples = 10000;
    double delta_bar = 0.25, general_T = 0.2;  ///< general-variant cone
    int general_nt = 60, general_ny = 59;
};

struct SolveTConfig {
    double xi = 64.0;
    double y = 0.0;
    int N = 8;
    double gamma = 0.0;
    double delta = 0.0;  ///< 0 picks the default above psi
    int trace_points = 801;
    double delta_bar = 0.5, general_T = 0.2;
};

struct SweepConfig {
    std::vector<double> xi = geometric_xi(4, 14);
    double y = 0.0;
    double t_end = 0.5;
    int N_max = 40;
    double factor = 2.0;
    int N = 8;  ///< weighted-energy constants reported alongside N0
};

struct SolveXConfig {
    double delta = 1.5, T = 0.3;
    int cells = 256;
    double cfl = 0.9;
    std::string scheme = "upwind";
    int snapshots = 5;
    std::vector<int> Ns{4, 8, 16};
    double bump_fraction = 0.1;
    int boundary_samples = 20;
    double delta_bar = 0.25, general_T = 0.2;
    int general_nt = 60, general_ny = 59;
};

/// Everything a run depends on. The output directory is deliberately not part of it.
struct RunConfig {
    FamilySpec family = families::tricomi();
    CertifyConfig certify;
    SolveTConfig solve_t;
    SweepConfig sweep;
    SolveXConfig solve_x;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------------------------
// Config parsing

namespace detail {

/// A JSON object read key by key; keys never read are reported as unknown.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigurationError(where_ + ": expected an object");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigurationError(where_ + "." + key + ": " + e.what());
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    Section sub(const std::string& key) {
        seen_.insert(key);
        return Section(j_.at(key), where_ + "." + key);
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigurationError(where_ + ": unknown key '" + k + "'");
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

inline void read_grid(Section s, OpenGrid& g) {
    s.get("t_lo", g.t_lo);
    s.get("t_hi", g.t_hi);
    s.get("y_lo", g.y_lo);
    s.get("y_hi", g.y_hi);
    s.get("nt", g.nt);
    s.get("ny", g.ny);
    s.finish();
    if (!(g.t_hi > g.t_lo) || g.nt < 1 || g.ny < 1 || g.y_hi < g.y_lo)
        throw ConfigurationError("grid: need t_hi > t_lo, y_hi >= y_lo, nt >= 1, ny >= 1");
}

inline json grid_json(const OpenGrid& g) {
    return {{"t_lo", report::num(g.t_lo)}, {"t_hi", report::num(g.t_hi)}, {"y_lo", report::num(g.y_lo)},
            {"y_hi", report::num(g.y_hi)}, {"nt", g.nt},                  {"ny", g.ny}};
}

inline FamilySpec preset(const std::string& name) {
    if (name == "tricomi") return families::tricomi();
    if (name == "complex_nu" || name == "complex-nu") return families::complex_nu();
    if (name == "three_real" || name == "three-real") return families::three_real();
    if (name == "general_triple" || name == "general-triple") return families::general_triple();
    if (name == "theta") return families::theta(0.0);
    if (name == "polynomial") return families::polynomial("t");
    throw ConfigurationError("unknown family preset '" + name + "'");
}

inline std::vector<cplx> read_roots(const json& j) {
    if (!j.is_array()) throw ConfigurationError("family.roots: expected an array");
    std::vector<cplx> out;
    for (const auto& r : j) {
        if (r.is_number()) {
            out.emplace_back(r.get<double>(), 0.0);
        } else if (r.is_array() && r.size() == 2 && r[0].is_number() && r[1].is_number()) {
            out.emplace_back(r[0].get<double>(), r[1].get<double>());
        } else {
            throw ConfigurationError("family.roots: each root is a number or [re, im]");
        }
    }
    return out;
}

inline FamilySpec read_family(Section s) {
    FamilySpec f;
    if (s.has("preset")) {
        std::string p;
        s.get("preset", p);
        f = preset(p);
    }
    s.get("kind", f.kind);
    s.get("label", f.label);
    s.get("l", f.l);
    s.get("c", f.c);
    s.get("a", f.a_expr);
    s.get("b", f.b_expr);
    if (s.has("roots")) f.roots = read_roots(s.raw("roots"));
    s.get("kappa", f.kappa);
    s.get("kappa_fraction", f.kappa_fraction);
    s.get("root_y_coupling", f.root_y_coupling);
    s.get("theta", f.theta);
    s.get("alpha", f.alpha_expr);
    if (s.has("domain")) {
        Section d = s.sub("domain");
        d.get("t_lo", f.domain.t_lo);
        d.get("t_hi", f.domain.t_hi);
        d.get("y_lo", f.domain.y_lo);
        d.get("y_hi", f.domain.y_hi);
        d.finish();
    }
    s.finish();
    return f;
}

inline json family_json(const FamilySpec& f) {
    json roots = json::array();
    for (const auto& r : f.roots) roots.push_back(json::array({report::num(r.real()), report::num(r.imag())}));
    return {{"kind", f.kind},
            {"label", f.label},
            {"l", f.l},
            {"c", report::num(f.c)},
            {"a", f.a_expr},
            {"b", f.b_expr},
            {"roots", roots},
            {"kappa", report::num(f.kappa)},
            {"kappa_fraction", report::num(f.kappa_fraction)},
            {"root_y_coupling", report::num(f.root_y_coupling)},
            {"theta", report::num(f.theta)},
            {"alpha", f.alpha_expr},
            {"domain",
             {{"t_lo", report::num(f.domain.t_lo)},
              {"t_hi", report::num(f.domain.t_hi)},
              {"y_lo", report::num(f.domain.y_lo)},
              {"y_hi", report::num(f.domain.y_hi)}}}};
}

}  // namespace detail

/// Frequencies from "lo..hi" (doubling from lo up to hi), "a,b,c", or a single value.
inline std::vector<double> parse_xi_list(const std::string& s) {
    auto number = [&](const std::string& v) {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != v.size() || v.empty() || !(x >= 1.0) || !std::isfinite(x))
            throw ConfigurationError("frequency '" + v + "' is not a number >= 1");
        return x;
    };
    std::vector<double> out;
    if (const auto p = s.find(".."); p != std::string::npos) {
        const double lo = number(s.substr(0, p)), hi = number(s.substr(p + 2));
        if (hi < lo) throw ConfigurationError("frequency range '" + s + "' is empty");
        for (double x = lo; x <= hi * (1.0 + 1e-12); x *= 2.0) out.push_back(x);
        return out;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(number(item));
    if (out.empty()) throw ConfigurationError("empty frequency list");
    return out;
}

inline RunConfig parse_config(const json& j) {
    RunConfig c;
    detail::Section root(j, "config");
    if (root.has("family")) c.family = detail::read_family(root.sub("family"));
    root.get("seed", c.seed);
    if (root.has("certify")) {
        auto s = root.sub("certify");
        auto& q = c.certify;
        s.get("modules", q.modules);
        for (const auto& m : q.modules)
            if (m != "bezoutian" && m != "calculus" && m != "weights")
                throw ConfigurationError("certify.modules: unknown module '" + m + "'");
        s.get("K", q.K);
        s.get("hyperbolicity_nt", q.hyperbolicity_nt);
        s.get("hyperbolicity_ny", q.hyperbolicity_ny);
        if (s.has("local_grid")) detail::read_grid(s.sub("local_grid"), q.local);
        s.get("delta", q.delta);
        s.get("key_nt", q.key_nt);
        s.get("key_ny", q.key_ny);
        s.get("identity_samples", q.identity_samples);
        s.get("delta_bar", q.delta_bar);
        s.get("general_T", q.general_T);
        s.get("general_nt", q.general_nt);
        s.get("general_ny", q.general_ny);
        s.finish();
        if (q.hyperbolicity_nt < 2 || q.hyperbolicity_ny < 1 || q.identity_samples < 0)
            throw ConfigurationError("certify: grid sizes must be positive");
    }
    if (root.has("solve_t")) {
        auto s = root.sub("solve_t");
        auto& q = c.solve_t;
        s.get("xi", q.xi);
        s.get("y", q.y);
        s.get("N", q.N);
        s.get("gamma", q.gamma);
        s.get("delta", q.delta);
        s.get("trace_points", q.trace_points);
        s.get("delta_bar", q.delta_bar);
        s.get("general_T", q.general_T);
        s.finish();
    }
    if (root.has("sweep")) {
        auto s = root.sub("sweep");
        auto& q = c.sweep;
        if (s.has("xi")) {
            const json& x = s.raw("xi");
            if (x.is_string())
                q.xi = parse_xi_list(x.get<std::string>());
            else
                s.get("xi", q.xi);
        }
        s.get("y", q.y);
        s.get("t_end", q.t_end);
        s.get("N_max", q.N_max);
        s.get("factor", q.factor);
        s.get("N", q.N);
        s.finish();
    }
    if (root.has("solve_x")) {
        auto s = root.sub("solve_x");
        auto& q = c.solve_x;
        s.get("delta", q.delta);
        s.get("T", q.T);
        s.get("cells", q.cells);
        s.get("cfl", q.cfl);
        s.get("scheme", q.scheme);
        s.get("snapshots", q.snapshots);
        s.get("N", q.Ns);
        s.get("bump_fraction", q.bump_fraction);
        s.get("boundary_samples", q.boundary_samples);
        s.get("delta_bar", q.delta_bar);
        s.get("general_T", q.general_T);
        s.get("general_nt", q.general_nt);
        s.get("general_ny", q.general_ny);
        s.finish();
        if (q.scheme != "upwind" && q.scheme != "lax_friedrichs")
            throw ConfigurationError("solve_x.scheme: expected upwind or lax_friedrichs");
        if (q.snapshots < 1) throw ConfigurationError("solve_x.snapshots must be >= 1");
    }
    root.finish();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot read config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigurationError("config file " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

/// Fully resolved config; parse_config(to_json(c)) reproduces c.
inline json to_json(const RunConfig& c) {
    const auto& ce = c.certify;
    const auto& st = c.solve_t;
    const auto& sw = c.sweep;
    const auto& sx = c.solve_x;
    return {{"family", detail::family_json(c.family)},
            {"seed", c.seed},
            {"certify",
             {{"modules", ce.modules},
              {"K", report::num(ce.K)},
              {"hyperbolicity_nt", ce.hyperbolicity_nt},
              {"hyperbolicity_ny", ce.hyperbolicity_ny},
              {"local_grid", detail::grid_json(ce.local)},
              {"delta", report::num(ce.delta)},
              {"key_nt", ce.key_nt},
              {"key_ny", ce.key_ny},
              {"identity_samples", ce.identity_samples},
              {"delta_bar", report::num(ce.delta_bar)},
              {"general_T", report::num(ce.general_T)},
              {"general_nt", ce.general_nt},
              {"general_ny", ce.general_ny}}},
            {"solve_t",
             {{"xi", report::num(st.xi)},
              {"y", report::num(st.y)},
              {"N", st.N},
              {"gamma", report::num(st.gamma)},
              {"delta", report::num(st.delta)},
              {"trace_points", st.trace_points},
              {"delta_bar", report::num(st.delta_bar)},
              {"general_T", report::num(st.general_T)}}},
            {"sweep",
             {{"xi", report::nums(sw.xi)},
              {"y", report::num(sw.y)},
              {"t_end", report::num(sw.t_end)},
              {"N_max", sw.N_max},
              {"factor", report::num(sw.factor)},
              {"N", sw.N}}},
            {"solve_x",
             {{"delta", report::num(sx.delta)},
              {"T", report::num(sx.T)},
              {"cells", sx.cells},
              {"cfl", report::num(sx.cfl)},
              {"scheme", sx.scheme},
              {"snapshots", sx.snapshots},
              {"N", sx.Ns},
              {"bump_fraction", report::num(sx.bump_fraction)},
              {"boundary_samples", sx.boundary_samples},
              {"delta_bar", report::num(sx.delta_bar)},
              {"general_T", report::num(sx.general_T)},
              {"general_nt", sx.general_nt},
              {"general_ny", sx.general_ny}}}};
}

/// Family named on the command line. Unset optionals keep the builder defaults.
struct FamilyFlags {
    std::string name;
    std::optional<int> l;
    std::optional<double> c, theta, y_coupling;
    std::optional<std::string> a, b, alpha;
};

inline FamilySpec family_from_flags(const FamilyFlags& fl) {
    const std::string& n = fl.name;
    if (n.rfind("a=", 0) == 0 || n == "polynomial") {
        std::string a = n == "polynomial" ? fl.a.value_or("t") : n.substr(2);
        if (a.empty()) throw ConfigurationError("--family a=<expr>: empty expression");
        return families::polynomial(a, fl.b.value_or("0"));
    }
    if (n == "tricomi") return families::tricomi(fl.l.value_or(1), fl.c.value_or(0.0));
    if (n == "complex-nu" || n == "complex_nu") return families::complex_nu(fl.y_coupling.value_or(0.0));
    if (n == "three-real" || n == "three_real") return families::three_real();
    if (n == "theta") return families::theta(fl.theta.value_or(0.0), fl.a.value_or("t"));
    if (n == "general-triple" || n == "general_triple") {
        FamilySpec s = families::general_triple(fl.alpha.value_or("t-x"));
        if (fl.theta) s.theta = *fl.theta;
        return s;
    }
    throw ConfigurationError("unknown family '" + n + "'");
}

// ---------------------------------------------------------------------------------------------
// Commands

namespace detail {

inline bool is_general(const FamilySpec& s) { return s.kind == "general_triple"; }

struct Check {
    Check(std::string n, std::string m) : name(std::move(n)), module(std::move(m)) {}

    std::string name;
    std::string module;
    bool pass = true;
    std::string message;
    std::vector<GridPoint> witness;
    json details = json::object();
};

inline void to_json(json& j, const Check& c) {
    j = {{"name", c.name}, {"module", c.module}, {"pass", c.pass}, {"message", c.message}, {"witness", c.witness},
         {"details", c.details}};
}

inline std::string witness_text(const std::vector<GridPoint>& w) {
    if (w.empty()) return "";
    return " at t=" + report::fmt(w.front().t) + " y=" + report::fmt(w.front().y) +
           (w.size() > 1 ? " (+" + std::to_string(w.size() - 1) + " more)" : "");
}

inline std::vector<GridPoint> first_points(const std::vector<GridPoint>& p, std::size_t n = 10) {
    return {p.begin(), p.begin() + static_cast<std::ptrdiff_t>(std::min(n, p.size()))};
}

/// Runs `body`; analysis and input failures become a failed check instead of aborting the run.
template <class Fn>
Check guarded(std::string name, std::string module, Fn&& body) {
    Check c{std::move(name), std::move(module)};
    try {
        body(c);
    } catch (const AnalysisError& e) {
        c.pass = false;
        c.message = e.what();
    } catch (const InputError& e) {
        c.pass = false;
        c.message = e.what();
    }
    return c;
}

inline Check constants_check(std::string name, std::string module, const std::vector<MeasuredConstant>& ms,
                             std::vector<MeasuredConstant>& sink) {
    Check c{std::move(name), std::move(module)};
    c.details = ms;
    for (const auto& m : ms) {
        sink.push_back(m);
        if (!m.confirmed() && c.pass) {
            c.pass = false;
            c.message = "constant '" + m.name + "' not confirmed: " + report::fmt(m.value) + " -> " +
                        report::fmt(m.value_refined);
            c.witness.push_back(m.witness);
        }
    }
    return c;
}

/// Bezoutian identities at seeded random points of the domain where the discriminant is nonnegative.
inline Check identity_check(const CoefficientField& f, int samples, std::uint64_t seed) {
    Check c{"algebraic_identities", "bezoutian"};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ut(f.domain.t_lo, f.domain.t_hi), uy(f.domain.y_lo, f.domain.y_hi);
    double worst_sym = 0.0, worst_det = 0.0, worst_eig = 0.0, worst_vieta = 0.0;
    int used = 0;
    for (int k = 0; k < samples; ++k) {
        const double t = ut(rng), y = uy(rng);
        const double a = f.a(t, y), b = f.b(t, y);
        const double d = discriminant(a, b);
        if (d < 0.0) continue;
        ++used;
        const Bezoutian z = build_bezoutian(a, b);
        const double sn = norm(z.S), an = norm(z.A);
        const double sym = asymmetry(z.S * z.A) / std::max(sn * an, 1e-300);
        const double dd = std::abs(det(z.S) - d) / (1.0 + std::abs(d));
        const auto l = bezoutian_eigenvalues(z);
        const double eig = std::max(0.0, -l[0]) / (1.0 + sn);
        const auto q = characteristic_cubic(z);
        const double vieta = std::max(std::abs(l[0] + l[1] + l[2] + q.c2) / std::abs(q.c2),
                                      std::abs(l[0] * l[1] * l[2] + q.c0) / (std::abs(q.c0) + 1e-300) *
                                          (std::abs(q.c0) > 1e-6 ? 1.0 : 0.0));
        auto bump = [&](double& w, double v, double tol) {
            w = std::max(w, v);
            if (v > tol && c.pass) {
                c.pass = false;
                c.witness.push_back({t, y});
            }
        };
        bump(worst_sym, sym, 1e-13);
        bump(worst_det, dd, 1e-10);
        bump(worst_eig, eig, 1e-12);
        bump(worst_vieta, vieta, 1e-9);
    }
    if (!c.pass) c.message = "algebraic identity violated";
    c.details = {{"samples", used},
                 {"max_asymmetry_rel", report::num(worst_sym)},
                 {"max_det_minus_discriminant_rel", report::num(worst_det)},
                 {"max_negative_eigenvalue_rel", report::num(worst_eig)},
                 {"max_vieta_rel", report::num(worst_vieta)}};
    return c;
}

inline std::vector<double> profile_slices(const Domain& d) {
    std::vector<double> ys{d.y_lo};
    if (d.y_lo < 0.0 && d.y_hi > 0.0) ys.push_back(0.0);
    if (d.y_hi > d.y_lo) ys.push_back(d.y_hi);
    return ys;
}

inline void log_check(std::ostream& log, const Check& c) {
    log << (c.pass ? "PASS " : "FAIL ") << c.module << "/" << c.name;
    if (!c.pass) log << ": " << c.message << witness_text(c.witness);
    log << '\n';
}

}  // namespace detail

inline int cmd_certify(const RunConfig& cfg, report::Manifest& out, std::ostream& log) {
    const CoefficientField f = make_family(cfg.family);
    const auto& q = cfg.certify;
    const bool general = detail::is_general(cfg.family);
    auto want = [&](const char* m) { return std::find(q.modules.begin(), q.modules.end(), m) != q.modules.end(); };
    std::vector<detail::Check> checks;
    std::vector<MeasuredConstant> constants;

    const Domain& dom = f.domain;
    const GridSpec hg{dom.t_lo, dom.t_hi, dom.y_lo, dom.y_hi, q.hyperbolicity_nt,
                      dom.y_hi > dom.y_lo ? q.hyperbolicity_ny : 1};
    const HyperbolicityReport hr = check_hyperbolicity(f, hg);
    {
        detail::Check c{"hyperbolicity", "bezoutian"};
        c.pass = hr.hyperbolic();
        if (!c.pass) c.message = "hyperbolicity violated: discriminant < 0";
        c.witness = detail::first_points(hr.violation_points);
        c.details = {{"delta_min", report::num(hr.delta_min)},
                     {"violations", hr.violation_points.size()},
                     {"triple_points", hr.triple_points.size()}};
        checks.push_back(c);
    }
    if (!general) {
        detail::Check c{"effective_hyperbolicity", "bezoutian"};
        std::vector<GridPoint> bad;
        for (std::size_t k = 0; k < hr.triple_points.size(); ++k)
            if (!hr.effective[k]) bad.push_back(hr.triple_points[k]);
        c.pass = bad.empty();
        if (!c.pass) c.message = "not effectively hyperbolic: d_t a vanishes at a triple point";
        c.witness = detail::first_points(bad);
        c.details = {{"triple_points", hr.triple_points.size()}, {"non_effective", bad.size()}};
        checks.push_back(c);
    }
    {
        report::CsvWriter csv(out.path("certify_points.csv"),
                              {"t", "y", "a", "b", "discriminant", "lambda1", "lambda2", "lambda3"});
        for (int i = 0; i < hg.nt; ++i)
            for (int j = 0; j < hg.ny; ++j) {
                const double t = hg.t(i), y = hg.y(j), a = f.a(t, y), b = f.b(t, y);
                const auto l = bezoutian_eigenvalues(build_bezoutian(a, b));
                csv.row(std::vector<double>{t, y, a, b, discriminant(a, b), l[0], l[1], l[2]});
            }
        out.add("certify_points.csv", "certification_points_csv");
    }

    const bool gate = std::all_of(checks.begin(), checks.end(), [](const detail::Check& c) { return c.pass; });
    std::string skipped;
    if (!gate) {
        skipped = "downstream certifications skipped: the symbol is not (effectively) hyperbolic on the domain";
    } else if (general) {
        const OpenGrid g{-q.general_T, q.general_T, -2.0 * q.delta_bar * q.general_T, 2.0 * q.delta_bar * q.general_T,
                         q.general_nt, q.general_ny};
        if (want("bezoutian")) checks.push_back(detail::identity_check(f, q.identity_samples, cfg.seed));
        if (want("weights")) {
            const auto gt = certify_general_triple_conditions(f, g);
            auto c = detail::constants_check("general_triple_conditions", "weights", {gt.a_cubed, gt.b_t}, constants);
            checks.push_back(c);
            checks.push_back(detail::guarded("general_weight_conditions", "weights", [&](detail::Check& c) {
                const WeightPartition w = build_alpha_partition(f, q.delta_bar, q.general_T);
                const auto r = certify_general_weight_conditions(f, w, g);
                constants.push_back(r.phi_dt_a);
                constants.push_back(r.phi_rel);
                c.details = r;
                c.pass = r.pass();
                if (!c.pass) c.message = "general weight conditions not confirmed";
                report::write_json(out.path("partition.json"), w);
                out.add("partition.json", "partition_json");
            }));
        }
    } else {
        if (want("bezoutian")) {
            checks.push_back(detail::identity_check(f, q.identity_samples, cfg.seed));
            checks.push_back(detail::guarded("eigenvalue_bounds", "bezoutian", [&](detail::Check& c) {
                const SkonReport r = certify_skon_bounds(f, q.local, q.K);
                constants.push_back(r.k_min);
                c.pass = r.pass();
                json fails = json::object();
                for (std::size_t k = 0; k < 6; ++k) fails[skon_names()[k]] = r.failures[k];
                c.details = {{"K", report::num(r.K)}, {"minimal_K", r.k_min}, {"failures", fails}};
                if (!c.pass) {
                    c.message = "eigenvalue bounds fail for K=" + report::fmt(r.K);
                    for (const auto& p : r.points)
                        if (std::find(p.holds.begin(), p.holds.end(), false) != p.holds.end() && c.witness.size() < 10)
                            c.witness.push_back({p.t, p.y});
                }
                report::CsvWriter csv(out.path("eigenvalue_bounds.csv"),
                                      {"t", "y", "a", "lambda1", "lambda2", "lambda3", "lambda1_lower", "lambda1_upper",
                                       "lambda2_lower", "lambda2_upper", "lambda3_lower", "lambda3_upper"});
                for (const auto& p : r.points) {
                    std::vector<std::string> row{report::fmt(p.t), report::fmt(p.y), report::fmt(p.a),
                                                 report::fmt(p.lambda[0]), report::fmt(p.lambda[1]), report::fmt(p.lambda[2])};
                    for (bool h : p.holds) row.push_back(h ? "1" : "0");
                    csv.row(row);
                }
                out.add("eigenvalue_bounds.csv", "certification_points_csv");
            }));
            checks.push_back(detail::guarded("matrix_orders", "bezoutian", [&](detail::Check& c) {
                const MatrixOrderReport r = certify_matrix_orders(f, q.local);
                std::vector<MeasuredConstant> ms;
                for (const auto& e : r.entries) ms.push_back(e.ratio);
                c = detail::constants_check("matrix_orders", "bezoutian", ms, constants);
            }));
        }
        std::optional<WeightPartition> w;
        if (want("calculus") || want("weights")) {
            checks.push_back(detail::guarded("root_profile", "weights", [&](detail::Check& c) {
                const auto ys = detail::profile_slices(dom);
                json profiles = json::array();
                double psi_max = 0.0;
                for (double y : ys) {
                    const RootProfile p = extract_root_profile(f, y);
                    profiles.push_back(p);
                    psi_max = std::max(psi_max, p.psi);
                    if (!p.dichotomy_holds() && c.pass) {
                        c.pass = false;
                        c.message = "root sign dichotomy fails";
                        c.witness.push_back({0.0, y});
                    }
                }
                c.details = {{"profiles", profiles}};
                const double delta = q.delta > 0.0 ? q.delta : default_delta(psi_max, dom);
                w = build_partition(f, ys, delta);
                report::write_json(out.path("partition.json"), *w);
                out.add("partition.json", "partition_json");
            }));
        }
        if (want("calculus")) {
            checks.push_back(detail::guarded("coefficient_derivatives", "calculus", [&](detail::Check& c) {
                c = detail::constants_check("coefficient_derivatives", "calculus",
                                            certify_coefficient_derivatives(f, q.local), constants);
            }));
            checks.push_back(detail::guarded("eigenvalue_derivatives", "calculus", [&](detail::Check& c) {
                c = detail::constants_check("eigenvalue_derivatives", "calculus",
                                            certify_eigenvalue_derivatives(f, q.local), constants);
            }));
            checks.push_back(detail::guarded("lambda1_log_derivative", "calculus", [&](detail::Check& c) {
                WeightFn phi = [](double t, double) { return t; };
                if (w)
                    phi = [&w](double t, double y) {
                        const auto s = w->locate(t, y);
                        return s ? s->phi : t;
                    };
                c = detail::constants_check("lambda1_log_derivative", "calculus",
                                            {certify_lambda1_log_derivative(f, q.local, phi)}, constants);
            }));
        }
        if (want("weights") && w) {
            checks.push_back(detail::guarded("key_proposition", "weights", [&](detail::Check& c) {
                const OpenGrid g{0.0, w->delta, dom.y_lo, dom.y_hi, q.key_nt, dom.y_hi > dom.y_lo ? q.key_ny : 1};
                const KeyPropositionReport r = certify_key_proposition(f, *w, g);
                c = detail::constants_check("key_proposition", "weights", r.all(), constants);
                if (!r.degenerate.empty()) {
                    c.pass = false;
                    c.message = "discriminant vanishes where the weight does not";
                    c.witness = detail::first_points(r.degenerate);
                }
            }));
        }
    }

    report::write_constants_csv(out.path("constants.csv"), constants);
    out.add("constants.csv", "measured_constants_csv");
    const bool pass = std::all_of(checks.begin(), checks.end(), [](const detail::Check& c) { return c.pass; });
    json summary = {{"family", f.name},
                    {"variant", general ? "general" : "triple"},
                    {"checks", checks},
                    {"pass", pass},
                    {"seed", cfg.seed}};
    if (!skipped.empty()) summary["note"] = skipped;
    report::write_json(out.path("certify.json"), summary);
    out.add("certify.json", "certification_summary_json");
    for (const auto& c : checks) detail::log_check(log, c);
    if (!skipped.empty()) log << skipped << '\n';
    return pass ? kPass : kCertificationFailure;
}

namespace detail {

inline WeightPartition interval_or_alpha_partition(const CoefficientField& f, const FamilySpec& s, double y, double delta,
                                                   double delta_bar, double T) {
    if (is_general(s)) return build_alpha_partition(f, delta_bar, T);
    const RootProfile p = extract_root_profile(f, y);
    return build_partition(f, {y}, delta > 0.0 ? delta : default_delta(p.psi, f.domain));
}

}  // namespace detail

inline int cmd_solve_t(const RunConfig& cfg, report::Manifest& out, std::ostream& log) {
    const CoefficientField f = make_family(cfg.family);
    const auto& q = cfg.solve_t;
    if (q.N < 1) throw ConfigurationError("solve_t.N must be >= 1");
    const WeightPartition w = detail::interval_or_alpha_partition(f, cfg.family, q.y, q.delta, q.delta_bar, q.general_T);
    MonitorOptions opt;
    opt.trace_points = q.trace_points;
    const EnergyTrace tr = monitor_weighted_energy(make_frequency_system(f, q.y, q.xi), w, q.N, q.gamma, opt);
    report::write_trace_csv(out.path("trace.csv"), tr);
    out.add("trace.csv", "trace_csv");
    report::write_json(out.path("partition.json"), w);
    out.add("partition.json", "partition_json");
    const json summary = {{"family", f.name}, {"y", report::num(q.y)}, {"trace", tr}};
    report::write_json(out.path("solve_t.json"), summary);
    out.add("solve_t.json", "trace_summary_json");
    for (const auto& v : tr.verdicts)
        log << (v.pass() ? "PASS" : "FAIL") << " region " << v.region << " C=" << report::fmt(v.C) << '\n';
    for (const auto& wmsg : tr.warnings) log << "warning: " << wmsg << '\n';
    return tr.pass() ? kPass : kCertificationFailure;
}

inline int cmd_sweep(const RunConfig& cfg, report::Manifest& out, std::ostream& log) {
    const CoefficientField f = make_family(cfg.family);
    const auto& q = cfg.sweep;
    LossSpec spec;
    spec.xi_list = q.xi;
    spec.y = q.y;
    spec.t_end = q.t_end;
    spec.N_max = q.N_max;
    spec.factor = q.factor;
    const LossReport rep = measure_derivative_loss(f, spec);

    // Weighted-energy constants per frequency; a family outside the partition's regime only loses this part.
    json constants = json::array();
    std::string constants_error;
    std::vector<std::vector<double>> region_C(q.xi.size());
    try {
        const WeightPartition w = detail::interval_or_alpha_partition(f, cfg.family, q.y, 0.0, 0.5, 0.2);
        const auto traces = parallel_map<EnergyTrace>(q.xi.size(), [&](std::size_t k) {
            return monitor_weighted_energy(make_frequency_system(f, q.y, q.xi[k]), w, q.N);
        });
        for (std::size_t k = 0; k < q.xi.size(); ++k) {
            for (const auto& v : traces[k].verdicts) region_C[k].push_back(v.C);
            constants.push_back({{"xi", report::num(q.xi[k])}, {"verdicts", traces[k].verdicts}, {"pass", traces[k].pass()}});
        }
    } catch (const AnalysisError& e) {
        constants_error = e.what();
    } catch (const InputError& e) {
        constants_error = e.what();
    }

    report::CsvWriter csv(out.path("sweep.csv"), {"xi", "log_ratio", "scaled_log_ratio", "C_by_region"});
    for (std::size_t k = 0; k < rep.xi.size(); ++k) {
        const double scaled = rep.N0 ? rep.log_ratio[k] - *rep.N0 * std::log1p(rep.xi[k] * rep.xi[k])
                                     : std::numeric_limits<double>::quiet_NaN();
        std::string cs;
        for (double c : region_C[k]) cs += (cs.empty() ? "" : ";") + report::fmt(c);
        csv.row(std::vector<std::string>{report::fmt(rep.xi[k]), report::fmt(rep.log_ratio[k]), report::fmt(scaled), cs});
    }
    out.add("sweep.csv", "sweep_csv");
    json summary = {{"family", f.name}, {"N0", rep.N0 ? json(*rep.N0) : json(nullptr)}, {"loss", rep},
                    {"N", q.N},         {"constants", constants}};
    if (!constants_error.empty()) summary["constants_error"] = constants_error;
    report::write_json(out.path("sweep.json"), summary);
    out.add("sweep.json", "sweep_summary_json");
    if (rep.failed) {
        log << "FAIL loss of derivatives: " << rep.reason << '\n';
        return kCertificationFailure;
    }
    log << "PASS N0=" << *rep.N0 << '\n';
    return kPass;
}

inline int cmd_solve_x(const RunConfig& cfg, report::Manifest& out, std::ostream& log) {
    const CoefficientField f = make_family(cfg.family);
    const auto& q = cfg.solve_x;
    const ConeDomain cone{q.delta, q.T};
    SchemeSpec spec;
    spec.cells = q.cells;
    spec.cfl = q.cfl;
    spec.scheme = q.scheme == "upwind" ? Scheme::upwind : Scheme::lax_friedrichs;
    const double width = 0.25 * cone.half_width();
    const InitialData U0 = [width](double x) {
        const double s = x / width;
        return std::exp(-s * s) * Vec3c{{cplx(1.0), cplx(0.3), cplx(-0.2)}};
    };
    const GridSolveResult r = solve_cone(make_cone_system(f), cone, U0, spec);

    json snaps = json::array();
    for (int k = 0; k < q.snapshots; ++k) {
        const int level = q.snapshots == 1 ? r.nt : static_cast<int>(std::llround(static_cast<double>(r.nt) * k / (q.snapshots - 1)));
        const std::string stem = "snapshot_" + std::to_string(k);
        report::write_snapshot(out.dir(), stem, r, level);
        out.add(stem + ".bin", "snapshot_binary");
        out.add(stem + ".json", "snapshot_sidecar_json");
        snaps.push_back({{"stem", stem}, {"level", level}, {"t", report::num(r.t(level))}});
    }
    report::write_level_energy_csv(out.path("level_energy.csv"), r);
    out.add("level_energy.csv", "energy_csv");

    const StokesReport stokes = stokes_identity(r, nullptr, 1, 0);
    {
        report::CsvWriter csv(out.path("residual.csv"), {"cells", "dx", "dt", "lhs", "rhs", "residual", "relative_residual"});
        csv.row(std::vector<double>{static_cast<double>(q.cells), r.dx, r.dt, stokes.lhs, stokes.rhs, stokes.residual(),
                                    stokes.scale > 0.0 ? stokes.residual() / stokes.scale : 0.0});
        out.add("residual.csv", "residual_csv");
    }

    // Boundary form on both cone sides for seeded random frame fields.
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> nd;
    int nonnegative = 0;
    double min_pointwise = std::numeric_limits<double>::infinity();
    for (int k = 0; k < q.boundary_samples; ++k) {
        std::array<Vec3c, 4> c;
        for (auto& v : c)
            for (std::size_t j = 0; j < 3; ++j) v[j] = cplx(nd(rng), nd(rng));
        const FrameField V = [c](double x) {
            Vec3c s{};
            for (std::size_t m = 0; m < c.size(); ++m) s += std::cos(7.0 * static_cast<double>(m) * x + static_cast<double>(m)) * c[m];
            return s;
        };
        bool ok = true;
        for (const auto& side : {cone.left_side(), cone.right_side()}) {
            const auto b = verify_boundary_positivity(f, side, cone, [](double, double) { return 1.0; }, V);
            ok = ok && b.nonnegative;
            min_pointwise = std::min(min_pointwise, b.min_pointwise);
        }
        nonnegative += ok;
    }
    const bool boundary_ok = nonnegative == q.boundary_samples;

    json summary = {{"family", f.name},
                    {"cone", {{"delta", report::num(cone.delta)}, {"T", report::num(cone.T)}}},
                    {"scheme", q.scheme},
                    {"grid",
                     {{"dt", report::num(r.dt)},
                      {"dx", report::num(r.dx)},
                      {"x0", report::num(r.x0)},
                      {"nt", r.nt},
                      {"nx", r.nx},
                      {"tau_max", report::num(r.tau_max)},
                      {"fallback_nodes", r.fallback_nodes}}},
                    {"snapshots", snaps},
                    {"stokes", stokes},
                    {"boundary_positivity",
                     {{"samples", q.boundary_samples},
                      {"nonnegative", nonnegative},
                      {"min_pointwise", report::num(min_pointwise)},
                      {"pass", boundary_ok}}}};
    bool pass = boundary_ok;
    if (detail::is_general(cfg.family)) {
        const OpenGrid g{-q.general_T, q.general_T, -2.0 * q.delta_bar * q.general_T, 2.0 * q.delta_bar * q.general_T,
                         q.general_nt, q.general_ny};
        const WeightPartition w = build_alpha_partition(f, q.delta_bar, q.general_T);
        const auto conditions = certify_general_triple_conditions(f, g);
        const auto weights = certify_general_weight_conditions(f, w, g);
        report::write_json(out.path("partition.json"), w);
        out.add("partition.json", "partition_json");
        summary["general_triple_conditions"] = conditions;
        summary["general_weight_conditions"] = weights;
        pass = pass && conditions.pass() && weights.pass();
        log << (conditions.pass() ? "PASS" : "FAIL") << " general triple conditions\n";
        log << (weights.pass() ? "PASS" : "FAIL") << " general weight conditions\n";
    } else {
        const WeightPartition w = build_cone_partition(f, cone.delta, cone.T);
        ConeEnergyOptions opt;
        opt.scheme = spec;
        opt.Ns = q.Ns;
        opt.bump_fraction = q.bump_fraction;
        const auto verdicts = cone_energy_verdicts(f, cone, w, opt);
        report::write_json(out.path("partition.json"), w);
        out.add("partition.json", "partition_json");
        summary["energy_verdicts"] = verdicts;
        for (const auto& v : verdicts) {
            pass = pass && v.pass();
            log << (v.pass() ? "PASS" : "FAIL") << " region " << v.region << " N=" << v.N << " C=" << report::fmt(v.C) << '\n';
        }
    }
    log << (boundary_ok ? "PASS" : "FAIL") << " boundary form nonnegative on " << nonnegative << "/" << q.boundary_samples
        << " fields\n";
    summary["pass"] = pass;
    report::write_json(out.path("solve_x.json"), summary);
    out.add("solve_x.json", "solve_summary_json");
    return pass ? kPass : kCertificationFailure;
}

/// Creates the output directory, runs one command and writes the manifest. Errors map to exit codes:
/// configuration and input problems 2, analysis failures 1, numerical breakdown 3.
inline int run_command(const std::string& command, const RunConfig& cfg, const std::filesystem::path& dir,
                       std::ostream& log, std::ostream& err) {
    report::Manifest out(dir);
    int code = kPass;
    std::string error;
    try {
        std::filesystem::create_directories(dir);
        if (command == "certify")
            code = cmd_certify(cfg, out, log);
        else if (command == "solve-t")
            code = cmd_solve_t(cfg, out, log);
        else if (command == "sweep")
            code = cmd_sweep(cfg, out, log);
        else if (command == "solve-x")
            code = cmd_solve_x(cfg, out, log);
        else
            throw ConfigurationError("unknown command '" + command + "'");
    } catch (const ConfigurationError& e) {
        code = kConfigurationError;
        error = e.what();
    } catch (const InputError& e) {
        code = kConfigurationError;
        error = e.what();
    } catch (const AnalysisError& e) {
        code = kCertificationFailure;
        error = e.what();
    } catch (const NumericalError& e) {
        code = kNumericalFailure;
        error = e.what();
    } catch (const std::filesystem::filesystem_error& e) {
        code = kConfigurationError;
        error = e.what();
    } catch (const std::exception& e) {
        code = kNumericalFailure;
        error = e.what();
    }
    if (!error.empty()) err << "error: " << error << '\n';
    try {
        if (std::filesystem::is_directory(dir)) {
            json m = out.to_json(command, to_json(cfg), code);
            if (!error.empty()) m["error"] = error;
            report::write_json(dir / "manifest.json", m);
        }
    } catch (const std::exception& e) {
        err << "error: manifest not written: " << e.what() << '\n';
    }
    return code;
}

}  // namespace triplesym::cli
