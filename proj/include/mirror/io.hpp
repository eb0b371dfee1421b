#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mirror/csv.hpp"
#include "mirror/errors.hpp"
#include "mirror/experiments.hpp"

namespace mirror::io {

using json = nlohmann::json;

/// Collects non-fatal notes (unknown fields and the like) while reading.
using Warnings = std::vector<std::string>;

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) throw SchemaViolation(path, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw SchemaViolation(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw SchemaViolation(path, "expected a number");
    return v.get<double>();
}

inline double number(const json& j, const std::string& key, const std::string& path) {
    return as_number(require(j, key, path), join(path, key));
}

inline double number_or(const json& j, const std::string& key, const std::string& path, double fallback) {
    return j.contains(key) ? number(j, key, path) : fallback;
}

inline std::vector<double> numbers(const json& v, const std::string& path) {
    if (!v.is_array()) throw SchemaViolation(path, "expected an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

inline void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& path,
                       Warnings* warnings) {
    if (!warnings || !j.is_object()) return;
    std::set<std::string> k(known.begin(), known.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!k.count(it.key())) warnings->push_back("ignoring unknown field " + join(path, it.key()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configuration

inline json to_json(const SynthOptions& o) {
    return {{"seed", o.seed},           {"duration", o.duration}, {"rate", o.rate}, {"n_components", o.n_components},
            {"f_lo", o.f_lo},           {"f_hi", o.f_hi},         {"amp_scale", o.amp_scale}};
}

inline json to_json(const SignatureSource& src) {
    if (const auto* s = std::get_if<SynthOptions>(&src)) return {{"synth", to_json(*s)}};
    if (const auto* p = std::get_if<std::string>(&src)) return {{"csv", *p}};
    const auto& sig = std::get<Signature>(src);
    return {{"t", sig.t}, {"v", sig.v}, {"label", sig.label}};
}

inline json to_json(const DyadConfig& c) {
    json players = json::array();
    for (const auto& p : c.players) {
        json sigs = json::array();
        for (const auto& s : p.signatures) sigs.push_back(to_json(s));
        json pj = {
            {"hkb", {{"alpha", p.hkb.alpha}, {"beta", p.hkb.beta}, {"gamma", p.hkb.gamma}, {"omega", p.hkb.omega}}},
            {"weights",
             {{"theta_p", p.weights.theta_p},
              {"theta_sigma", p.weights.theta_sigma},
              {"theta_v", p.weights.theta_v},
              {"eta", p.weights.eta}}},
            {"initial", {{"x", p.initial.x}, {"v", p.initial.v}}},
            {"signatures", sigs}};
        if (!p.preset.empty()) pj["preset"] = p.preset;
        players.push_back(pj);
    }
    return {{"players", players},
            {"T", c.T},
            {"duration", c.duration},
            {"seed", c.seed},
            {"range_length", c.range_length},
            {"n_sub", c.n_sub},
            {"solver",
             {{"residual_tol", c.solver.residual_tol},
              {"max_iter", c.solver.max_iter},
              {"max_backtracks", c.solver.max_backtracks}}}};
}

inline SignatureSource signature_source_from_json(const json& j, const std::string& path, Warnings* w) {
    if (!j.is_object()) throw SchemaViolation(path, "expected an object");
    if (j.contains("synth")) {
        const json& s = j["synth"];
        const std::string sp = path + ".synth";
        detail::check_keys(s, {"seed", "duration", "rate", "n_components", "f_lo", "f_hi", "amp_scale"}, sp, w);
        SynthOptions o;
        const json& seed = detail::require(s, "seed", sp);
        if (!seed.is_number_unsigned()) throw SchemaViolation(sp + ".seed", "expected a non-negative integer");
        o.seed = seed.get<std::uint64_t>();
        o.duration = detail::number_or(s, "duration", sp, o.duration);
        o.rate = detail::number_or(s, "rate", sp, o.rate);
        o.n_components = static_cast<int>(detail::number_or(s, "n_components", sp, o.n_components));
        o.f_lo = detail::number_or(s, "f_lo", sp, o.f_lo);
        o.f_hi = detail::number_or(s, "f_hi", sp, o.f_hi);
        o.amp_scale = detail::number_or(s, "amp_scale", sp, o.amp_scale);
        return o;
    }
    if (j.contains("csv")) {
        if (!j["csv"].is_string()) throw SchemaViolation(path + ".csv", "expected a path string");
        return j["csv"].get<std::string>();
    }
    if (j.contains("t") || j.contains("v")) {
        detail::check_keys(j, {"t", "v", "label"}, path, w);
        Signature s;
        s.t = detail::numbers(detail::require(j, "t", path), path + ".t");
        s.v = detail::numbers(detail::require(j, "v", path), path + ".v");
        if (j.contains("label") && j["label"].is_string()) s.label = j["label"].get<std::string>();
        try {
            s.validate();
        } catch (const Error& e) {
            throw SchemaViolation(path, e.what());
        }
        return s;
    }
    throw SchemaViolation(path, "expected one of 'synth', 'csv' or inline 't'/'v'");
}

inline DyadConfig dyad_config_from_json(const json& j, Warnings* w = nullptr) {
    if (!j.is_object()) throw SchemaViolation("", "config must be a JSON object");
    detail::check_keys(j, {"players", "T", "duration", "seed", "range_length", "n_sub", "solver"}, "", w);
    DyadConfig c;
    c.T = detail::number_or(j, "T", "", c.T);
    c.duration = detail::number_or(j, "duration", "", c.duration);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw SchemaViolation("seed", "expected a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    c.range_length = detail::number_or(j, "range_length", "", c.range_length);
    c.n_sub = static_cast<int>(detail::number_or(j, "n_sub", "", c.n_sub));
    if (j.contains("solver")) {
        const json& s = j["solver"];
        detail::check_keys(s, {"residual_tol", "max_iter", "max_backtracks"}, "solver", w);
        c.solver.residual_tol = detail::number_or(s, "residual_tol", "solver", c.solver.residual_tol);
        c.solver.max_iter = static_cast<int>(detail::number_or(s, "max_iter", "solver", c.solver.max_iter));
        c.solver.max_backtracks =
            static_cast<int>(detail::number_or(s, "max_backtracks", "solver", c.solver.max_backtracks));
    }

    const json& players = detail::require(j, "players", "");
    if (!players.is_array() || players.size() != 2) throw SchemaViolation("players", "expected an array of two players");
    for (std::size_t i = 0; i < 2; ++i) {
        const std::string path = "players[" + std::to_string(i) + "]";
        const json& pj = players[i];
        if (!pj.is_object()) throw SchemaViolation(path, "expected an object");
        detail::check_keys(pj, {"hkb", "weights", "preset", "initial", "signatures"}, path, w);
        PlayerConfig& p = c.players[i];
        if (pj.contains("preset")) {
            if (!pj["preset"].is_string()) throw SchemaViolation(path + ".preset", "expected a string");
            p.preset = pj["preset"].get<std::string>();
        }
        if (pj.contains("weights")) {
            const json& wj = pj["weights"];
            const std::string wp = path + ".weights";
            detail::check_keys(wj, {"theta_p", "theta_sigma", "theta_v", "eta"}, wp, w);
            p.weights.theta_p = detail::number(wj, "theta_p", wp);
            p.weights.theta_sigma = detail::number(wj, "theta_sigma", wp);
            p.weights.theta_v = detail::number(wj, "theta_v", wp);
            p.weights.eta = detail::number_or(wj, "eta", wp, kDefaultEta);
        } else if (!p.preset.empty()) {
            const auto found = find_preset(p.preset);
            if (!found) throw SchemaViolation(path + ".preset", "unknown preset '" + p.preset + "'");
            p.weights = *found;
        } else {
            throw SchemaViolation(path + ".weights", "missing required field (or give 'preset')");
        }
        if (!p.weights.valid())
            throw SchemaViolation(path + ".weights", "weights must be positive and theta_* must sum to 1");
        if (pj.contains("hkb")) {
            const json& hj = pj["hkb"];
            const std::string hp = path + ".hkb";
            detail::check_keys(hj, {"alpha", "beta", "gamma", "omega"}, hp, w);
            p.hkb.alpha = detail::number_or(hj, "alpha", hp, 1.0);
            p.hkb.beta = detail::number_or(hj, "beta", hp, 1.0);
            p.hkb.gamma = detail::number_or(hj, "gamma", hp, 1.0);
            p.hkb.omega = detail::number_or(hj, "omega", hp, 1.0);
            if (!p.hkb.valid()) throw SchemaViolation(hp, "require finite parameters, omega > 0, alpha, beta >= 0");
        }
        if (pj.contains("initial")) {
            const json& ij = pj["initial"];
            detail::check_keys(ij, {"x", "v"}, path + ".initial", w);
            p.initial.x = detail::number_or(ij, "x", path + ".initial", 0.0);
            p.initial.v = detail::number_or(ij, "v", path + ".initial", 0.0);
        }
        if (pj.contains("signatures")) {
            const json& sj = pj["signatures"];
            if (!sj.is_array() || sj.size() != 3)
                throw SchemaViolation(path + ".signatures", "expected an array of three signatures");
            for (std::size_t s = 0; s < 3; ++s)
                p.signatures[s] =
                    signature_source_from_json(sj[s], path + ".signatures[" + std::to_string(s) + "]", w);
        } else {
            for (int s = 0; s < 3; ++s)
                p.signatures[static_cast<std::size_t>(s)] = default_signature_options(c.seed, static_cast<int>(i), s);
        }
    }
    if (!(c.T > 0.0)) throw SchemaViolation("T", "must be positive");
    if (!(c.duration >= c.T)) throw SchemaViolation("duration", "must be at least T");
    if (!(c.range_length > 0.0)) throw SchemaViolation("range_length", "must be positive");
    if (c.n_sub < 2) throw SchemaViolation("n_sub", "must be at least 2");
    return c;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaViolation(path, "cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaViolation(path, std::string("invalid JSON: ") + e.what());
    }
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline DyadConfig read_dyad_config(const std::string& path, Warnings* w = nullptr) {
    return dyad_config_from_json(read_json_file(path), w);
}

// ---------------------------------------------------------------------------
// Trial records: `<prefix>.csv` (t,x1,x2,u1,u2) plus `<prefix>.json` sidecar.

inline json trial_sidecar(const TrialRecord& r) {
    return {{"h", r.h},
            {"k", r.k},
            {"samples", r.t.size()},
            {"converged_fraction", r.converged_fraction},
            {"failed_windows", r.failed_windows},
            {"config", to_json(r.config)}};
}

inline void write_trial(const std::string& prefix, const TrialRecord& r) {
    csv::write_file(prefix + ".csv", {"t", "x1", "x2", "u1", "u2"}, {&r.t, &r.x1, &r.x2, &r.u1, &r.u2});
    write_json_file(prefix + ".json", trial_sidecar(r));
}

inline TrialRecord read_trial(const std::string& prefix, Warnings* w = nullptr) {
    TrialRecord r;
    auto table = csv::read_file(prefix + ".csv", {"t", "x1", "x2", "u1", "u2"});
    r.t = std::move(table.columns[0]);
    r.x1 = std::move(table.columns[1]);
    r.x2 = std::move(table.columns[2]);
    r.u1 = std::move(table.columns[3]);
    r.u2 = std::move(table.columns[4]);

    const json j = read_json_file(prefix + ".json");
    detail::check_keys(j, {"h", "k", "samples", "converged_fraction", "failed_windows", "config"}, "", w);
    r.h = static_cast<int>(detail::number(j, "h", ""));
    r.k = static_cast<int>(detail::number(j, "k", ""));
    r.converged_fraction = detail::number(j, "converged_fraction", "");
    if (j.contains("failed_windows")) {
        for (double v : detail::numbers(j["failed_windows"], "failed_windows")) r.failed_windows.push_back(static_cast<int>(v));
    }
    r.config = dyad_config_from_json(detail::require(j, "config", ""), w);
    if (j.contains("samples") && detail::number(j, "samples", "") != static_cast<double>(r.t.size()))
        throw SchemaViolation("samples", "sidecar sample count does not match the CSV");
    if (r.h < 1 || r.h > 3) throw SchemaViolation("h", "must be in 1..3");
    if (r.k < 1 || r.k > 3) throw SchemaViolation("k", "must be in 1..3");
    return r;
}

// ---------------------------------------------------------------------------
// Analysis

inline json to_json(const TrialAnalysis& a) {
    json j = {{"e_p", a.e_p},
              {"emd_sigma1_nu1", a.emd_sigma1_nu1},
              {"emd_nu1_nu2", a.emd_nu1_nu2},
              {"phase_pdf", {{"grid", a.phase_pdf.grid}, {"density", a.phase_pdf.density}}},
              {"phase_circular_mean", a.phase_circular_mean},
              {"mds_labels", a.mds_labels},
              {"mds", a.mds}};
    j["emd_sigma2_nu2"] = a.emd_sigma2_nu2 ? json(*a.emd_sigma2_nu2) : json(nullptr);
    if (a.emd_sigma1_sigma2) j["emd_sigma1_sigma2"] = *a.emd_sigma1_sigma2;
    if (a.emd_phase_reference) j["emd_phase_reference"] = *a.emd_phase_reference;
    return j;
}

inline TrialAnalysis trial_analysis_from_json(const json& j, Warnings* w = nullptr) {
    detail::check_keys(j,
                       {"e_p", "emd_sigma1_nu1", "emd_sigma2_nu2", "emd_nu1_nu2", "emd_sigma1_sigma2", "phase_pdf",
                        "phase_circular_mean", "emd_phase_reference", "mds_labels", "mds", "type"},
                       "", w);
    TrialAnalysis a;
    a.e_p = detail::number(j, "e_p", "");
    a.emd_sigma1_nu1 = detail::number(j, "emd_sigma1_nu1", "");
    const json& s2 = detail::require(j, "emd_sigma2_nu2", "");
    if (!s2.is_null()) a.emd_sigma2_nu2 = detail::as_number(s2, "emd_sigma2_nu2");
    a.emd_nu1_nu2 = detail::number(j, "emd_nu1_nu2", "");
    if (j.contains("emd_sigma1_sigma2")) a.emd_sigma1_sigma2 = detail::number(j, "emd_sigma1_sigma2", "");
    if (j.contains("emd_phase_reference")) a.emd_phase_reference = detail::number(j, "emd_phase_reference", "");
    a.phase_circular_mean = detail::number_or(j, "phase_circular_mean", "", 0.0);
    const json& pp = detail::require(j, "phase_pdf", "");
    a.phase_pdf.grid = detail::numbers(detail::require(pp, "grid", "phase_pdf"), "phase_pdf.grid");
    a.phase_pdf.density = detail::numbers(detail::require(pp, "density", "phase_pdf"), "phase_pdf.density");
    if (a.phase_pdf.grid.size() != a.phase_pdf.density.size())
        throw SchemaViolation("phase_pdf", "grid and density lengths differ");
    const json& mds = detail::require(j, "mds", "");
    if (!mds.is_array()) throw SchemaViolation("mds", "expected an array of [x, y] pairs");
    for (std::size_t i = 0; i < mds.size(); ++i) {
        const auto row = detail::numbers(mds[i], "mds[" + std::to_string(i) + "]");
        if (row.size() != 2) throw SchemaViolation("mds[" + std::to_string(i) + "]", "expected two coordinates");
        a.mds.push_back({row[0], row[1]});
    }
    if (j.contains("mds_labels")) {
        for (const auto& l : j["mds_labels"]) a.mds_labels.push_back(l.is_string() ? l.get<std::string>() : l.dump());
    }
    return a;
}

inline void write_analysis(const std::string& path, const TrialAnalysis& a) { write_json_file(path, to_json(a)); }

inline TrialAnalysis read_analysis(const std::string& path, Warnings* w = nullptr) {
    return trial_analysis_from_json(read_json_file(path), w);
}

}  // namespace mirror::io
