#pragma once

// Serialization of certification reports, traces, partitions and cone snapshots.
// CSV floats use 17 significant digits; JSON goes through nlohmann with sorted keys so
// identical inputs give identical bytes.

#include "triplesym/energy_t.hpp"
#include "triplesym/errors.hpp"
#include "triplesym/measure.hpp"
#include "triplesym/solver_x.hpp"
#include "triplesym/weights.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace triplesym {

using json = nlohmann::json;

namespace report {

/// %.17g, with nan / inf / -inf spelled out.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// JSON number, or a string for values JSON cannot carry.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(fmt(v)); }

inline json nums(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw ConfigurationError("cannot open " + path.string() + " for writing");
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k) out_ << ',';
            out_ << quote(cells[k]);
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& cells) {
        std::vector<std::string> s;
        s.reserve(cells.size());
        for (double v : cells) s.push_back(fmt(v));
        row(s);
    }

private:
    static std::string quote(const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    }
    std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw ConfigurationError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

/// Files produced by one command, listed relative to the output directory.
class Manifest {
public:
    explicit Manifest(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path path(const std::string& name) const { return dir_ / name; }

    void add(const std::string& name, const std::string& kind) { files_.push_back({{"path", name}, {"kind", kind}}); }

    json to_json(const std::string& command, const json& config, int exit_code) const {
        return {{"command", command}, {"config", config}, {"exit_code", exit_code}, {"files", files_}};
    }

private:
    std::filesystem::path dir_;
    json files_ = json::array();
};

}  // namespace report

inline void to_json(json& j, const GridPoint& p) { j = json::array({report::num(p.t), report::num(p.y)}); }

inline void to_json(json& j, const MeasuredConstant& m) {
    j = {{"name", m.name},
         {"value", report::num(m.value)},
         {"value_refined", report::num(m.value_refined)},
         {"refinement_ratio", report::num(m.refinement_ratio)},
         {"grid", m.grid},
         {"skipped", m.skipped},
         {"total", m.total},
         {"witness", m.witness},
         {"finite", m.finite},
         {"refinement_stable", m.refinement_stable()},
         {"confirmed", m.confirmed()}};
}

inline void to_json(json& j, const Region& r) {
    j = {{"index", r.index},
         {"lo", report::num(r.lo)},
         {"hi", report::num(r.hi)},
         {"kind", to_string(r.kind)},
         {"exponent_sign", r.exponent_sign}};
}

inline void to_json(json& j, const PartitionSlice& s) {
    j = {{"y", report::num(s.y)},
         {"psi", report::num(s.psi)},
         {"breakpoints", report::nums(s.breakpoints)},
         {"regions", s.regions}};
    if (!s.sigma.empty() || s.t_star != 0.0) {
        j["sigma"] = report::nums(s.sigma);
        j["t_star"] = report::num(s.t_star);
    }
}

inline void to_json(json& j, const WeightPartition& w) {
    j = {{"variant", to_string(w.variant)},
         {"geometry", to_string(w.geometry)},
         {"delta", report::num(w.delta)},
         {"T", report::num(w.T)},
         {"t_bottom", report::num(w.t_bottom)},
         {"slices", w.slices},
         {"crossings", report::nums(w.crossings)}};
    if (w.variant == PartitionVariant::general) j["x_divides_alpha"] = w.x_divides_alpha;
}

inline void to_json(json& j, const RootProfile& p) {
    json nu = json::array();
    for (const auto& z : p.nu) nu.push_back(json::array({report::num(z.real()), report::num(z.imag())}));
    j = {{"y", report::num(p.y)},
         {"e1", report::num(p.e1)},
         {"e2", report::num(p.e2)},
         {"coeffs", json::array({report::num(p.coeffs[0]), report::num(p.coeffs[1]), report::num(p.coeffs[2])})},
         {"nu", nu},
         {"case", to_string(p.case_tag)},
         {"psi", report::num(p.psi)},
         {"alpha", report::num(p.alpha)},
         {"fit_residual", report::num(p.fit_residual)},
         {"fitted", p.fitted},
         {"dichotomy_holds", p.dichotomy_holds()}};
}

inline void to_json(json& j, const RegionVerdict& v) {
    j = {{"region", v.region},
         {"lo", report::num(v.lo)},
         {"hi", report::num(v.hi)},
         {"kind", to_string(v.kind)},
         {"exponent_sign", v.exponent_sign},
         {"continuation", v.continuation},
         {"C", report::num(v.C)},
         {"C_dlambda", report::num(v.C_dlambda)},
         {"C_b", report::num(v.C_b)},
         {"C_source", report::num(v.C_source)},
         {"nonincreasing", v.nonincreasing},
         {"pass", v.pass()}};
}

/// Trace summary without the per-sample arrays (those go to CSV).
inline void to_json(json& j, const EnergyTrace& tr) {
    j = {{"xi", report::num(tr.xi)},
         {"N", tr.N},
         {"gamma", report::num(tr.gamma)},
         {"samples", tr.times.size()},
         {"verdicts", tr.verdicts},
         {"warnings", tr.warnings},
         {"pass", tr.pass()}};
    if (tr.gamma0) {
        j["gamma0"] = report::num(*tr.gamma0);
        j["rate_sup"] = report::num(tr.rate_sup);
    }
}

inline void to_json(json& j, const LossReport& r) {
    j = {{"xi", report::nums(r.xi)}, {"log_ratio", report::nums(r.log_ratio)}, {"failed", r.failed}, {"reason", r.reason}};
    j["N0"] = r.N0 ? json(*r.N0) : json(nullptr);
}

inline void to_json(json& j, const ConeRegionVerdict& v) {
    j = {{"region", v.region},
         {"N", v.N},
         {"boundary", report::num(v.boundary)},
         {"dissipation", report::num(v.dissipation)},
         {"source", report::num(v.source)},
         {"C", report::num(v.C)},
         {"cells", v.cells},
         {"pass", v.pass()}};
}

inline void to_json(json& j, const StokesReport& s) {
    j = {{"lhs", report::num(s.lhs)},
         {"rhs", report::num(s.rhs)},
         {"boundary", report::num(s.boundary)},
         {"scale", report::num(s.scale)},
         {"cells", s.cells},
         {"residual", report::num(s.residual())}};
}

inline void to_json(json& j, const GeneralTripleConditions& r) {
    j = {{"a_cubed_over_delta", r.a_cubed}, {"dt_b", r.b_t}, {"pass", r.pass()}};
}

inline void to_json(json& j, const GeneralWeightReport& r) {
    j = {{"phi_dt_a", r.phi_dt_a},
         {"phi_over_dt_phi", r.phi_rel},
         {"shrink_scale", json::array({r.shrink_scale[0], r.shrink_scale[1], r.shrink_scale[2]})},
         {"shrink_sup", json::array({report::num(r.shrink_sup[0]), report::num(r.shrink_sup[1]), report::num(r.shrink_sup[2])})},
         {"shrink_decreasing", r.shrink_decreasing},
         {"alpha_checked", r.alpha_checked},
         {"alpha_violations", r.alpha_violations},
         {"pass", r.pass()}};
}

namespace report {

/// One row per trace sample: time, region, the three frame components, the symmetrized form,
/// the weighted energy and the three diagnostic ratios.
inline void write_trace_csv(const std::filesystem::path& path, const EnergyTrace& tr) {
    CsvWriter csv(path, {"t", "region", "E1", "E2", "E3", "form", "weighted_energy", "diag_dt_lambda",
                         "diag_lower_order", "diag_source"});
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        const auto& c = tr.components[k];
        const auto& d = tr.diagnostics[k];
        csv.row(std::vector<std::string>{fmt(tr.times[k]), std::to_string(tr.region[k]), fmt(c[0]), fmt(c[1]), fmt(c[2]),
                                         fmt(tr.form[k]), fmt(tr.energy[k]), fmt(d[0]), fmt(d[1]), fmt(d[2])});
    }
}

inline const char* endianness() { return std::endian::native == std::endian::little ? "little" : "big"; }

/// One time level as flat float64: per node (in increasing x) the real and imaginary parts of U1, U2, U3.
/// Nodes outside the clipped cone are written as NaN. The sidecar carries the grid metadata.
inline void write_snapshot(const std::filesystem::path& dir, const std::string& stem, const GridSolveResult& r, int level) {
    if (level < 0 || level > r.nt) throw InputError("write_snapshot: level out of range");
    std::vector<double> buf;
    buf.reserve(static_cast<std::size_t>(r.nx + 1) * 6);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i <= r.nx; ++i) {
        const bool ok = r.valid(level, i);
        for (std::size_t c = 0; c < 3; ++c) {
            buf.push_back(ok ? r.at(level, i)[c].real() : nan);
            buf.push_back(ok ? r.at(level, i)[c].imag() : nan);
        }
    }
    const auto bin = dir / (stem + ".bin");
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw ConfigurationError("cannot open " + bin.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(double)));
    const json side = {{"data", stem + ".bin"},
                       {"dtype", "float64"},
                       {"endianness", endianness()},
                       {"layout", "row-major in x; per node Re U1, Im U1, Re U2, Im U2, Re U3, Im U3"},
                       {"invalid_nodes", "NaN"},
                       {"level", level},
                       {"t", num(r.t(level))},
                       {"nx", r.nx + 1},
                       {"x0", num(r.x0)},
                       {"dx", num(r.dx)},
                       {"dt", num(r.dt)},
                       {"cone", {{"delta", num(r.cone.delta)}, {"T", num(r.cone.T)}}},
                       {"system", r.system.name}};
    write_json(dir / (stem + ".json"), side);
}

/// Per time level: t, the sum of <S U, U> dx over valid nodes, and the valid node count.
inline void write_level_energy_csv(const std::filesystem::path& path, const GridSolveResult& r) {
    CsvWriter csv(path, {"level", "t", "energy", "valid_nodes"});
    for (int n = 0; n <= r.nt; ++n) {
        int valid = 0;
        for (int i = 0; i <= r.nx; ++i) valid += r.valid(n, i);
        const double e = static_cast<std::size_t>(n) < r.level_energy.size() ? r.level_energy[static_cast<std::size_t>(n)]
                                                                              : std::numeric_limits<double>::quiet_NaN();
        csv.row(std::vector<std::string>{std::to_string(n), fmt(r.t(n)), fmt(e), std::to_string(valid)});
    }
}

inline void write_constants_csv(const std::filesystem::path& path, const std::vector<MeasuredConstant>& ms) {
    CsvWriter csv(path, {"name", "value", "value_refined", "refinement_ratio", "skipped", "total", "witness_t",
                         "witness_y", "confirmed"});
    for (const auto& m : ms)
        csv.row(std::vector<std::string>{m.name, fmt(m.value), fmt(m.value_refined), fmt(m.refinement_ratio),
                                         std::to_string(m.skipped), std::to_string(m.total), fmt(m.witness.t),
                                         fmt(m.witness.y), m.confirmed() ? "1" : "0"});
}

}  // namespace report

}  // namespace triplesym
