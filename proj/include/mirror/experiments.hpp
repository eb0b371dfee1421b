#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mirror/control.hpp"
#include "mirror/metrics.hpp"
#include "mirror/presets.hpp"
#include "mirror/signature.hpp"
#include "mirror/virtual_player.hpp"

namespace mirror {

// ---------------------------------------------------------------------------
// Configuration

/// Where a signature comes from: synthesized, a `t,v` CSV file, or inline data.
using SignatureSource = std::variant<SynthOptions, std::string, Signature>;

inline bool operator==(const SynthOptions& a, const SynthOptions& b) {
    return a.seed == b.seed && a.duration == b.duration && a.rate == b.rate && a.n_components == b.n_components &&
           a.f_lo == b.f_lo && a.f_hi == b.f_hi && a.amp_scale == b.amp_scale;
}

inline Signature resolve_signature(const SignatureSource& src) {
    if (const auto* s = std::get_if<SynthOptions>(&src)) return synth_signature(*s);
    if (const auto* p = std::get_if<std::string>(&src)) return read_signature_csv(*p);
    const auto& sig = std::get<Signature>(src);
    sig.validate();
    return sig;
}

struct PlayerConfig {
    HkbParams hkb{};
    CouplingWeights weights{};
    std::string preset;  ///< informational; empty when weights were given explicitly
    std::array<SignatureSource, 3> signatures{};
    PlayerState initial{};

    bool operator==(const PlayerConfig&) const = default;
};

struct DyadConfig {
    std::array<PlayerConfig, 2> players{};
    double T = 0.016;
    double duration = 60.0;
    std::uint64_t seed = 1;
    double range_length = 1.0;  ///< L in the RMS position error
    int n_sub = 10;
    SolverOptions solver{};

    std::size_t windows() const { return static_cast<std::size_t>(std::llround(duration / T)); }

    void validate() const {
        for (const auto& p : players) {
            p.weights.validate();
            if (!p.hkb.valid()) throw InvalidArgument("invalid HKB parameters");
        }
        if (!(T > 0.0) || !(duration >= T)) throw InvalidArgument("require T > 0 and duration >= T");
        if (!(range_length > 0.0)) throw InvalidArgument("range_length must be positive");
        if (n_sub < 2) throw InvalidArgument("n_sub must be at least 2");
    }

    bool operator==(const DyadConfig& o) const {
        return players == o.players && T == o.T && duration == o.duration && seed == o.seed &&
               range_length == o.range_length && n_sub == o.n_sub && solver.residual_tol == o.solver.residual_tol &&
               solver.max_iter == o.solver.max_iter && solver.max_backtracks == o.solver.max_backtracks;
    }
};

/// Synthetic signature options for slot `index` (0..2) of `player` (0..1).
inline SynthOptions default_signature_options(std::uint64_t seed, int player, int index) {
    SynthOptions o;
    o.seed = seed * 1000 + static_cast<std::uint64_t>(10 * (player + 1) + index + 1);
    return o;
}

/// A dyad with the given weight presets and seeded synthetic signatures.
inline DyadConfig make_dyad_config(const std::string& preset1, const std::string& preset2, std::uint64_t seed = 1) {
    DyadConfig cfg;
    cfg.seed = seed;
    const std::array<std::string, 2> names{preset1, preset2};
    for (int i = 0; i < 2; ++i) {
        auto& p = cfg.players[static_cast<std::size_t>(i)];
        const auto w = find_preset(names[static_cast<std::size_t>(i)]);
        if (!w) throw InvalidArgument("unknown preset " + names[static_cast<std::size_t>(i)]);
        p.weights = *w;
        p.preset = names[static_cast<std::size_t>(i)];
        for (int j = 0; j < 3; ++j) p.signatures[static_cast<std::size_t>(j)] = default_signature_options(seed, i, j);
    }
    return cfg;
}

inline DyadConfig make_dyad_config(int dyad, std::uint64_t seed = 1) {
    const std::string d = "dyad" + std::to_string(dyad);
    return make_dyad_config(d + ".vp1", d + ".vp2", seed);
}

using SignatureSet = std::array<std::array<Signature, 3>, 2>;

inline SignatureSet resolve_signatures(const DyadConfig& cfg) {
    SignatureSet out;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) out[i][j] = resolve_signature(cfg.players[i].signatures[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Trials

struct TrialRecord {
    std::vector<double> t;
    std::vector<double> x1;
    std::vector<double> x2;
    std::vector<double> u1;
    std::vector<double> u2;
    int h = 1;  ///< signature index of player 1 (1..3)
    int k = 1;  ///< signature index of player 2 (1..3)
    double converged_fraction = 1.0;
    std::vector<int> failed_windows;
    DyadConfig config;

    bool operator==(const TrialRecord&) const = default;
};

/// Receding-horizon VP-VP trial: one joint window solve per sampling period,
/// states recorded at window boundaries. Player 1 replays its signature `h`,
/// player 2 its signature `k` (both 1-based).
inline TrialRecord run_vp_vp_trial(const DyadConfig& cfg, int h, int k, const SignatureSet& sigs) {
    cfg.validate();
    if (h < 1 || h > 3 || k < 1 || k > 3) throw InvalidArgument("signature indices must be in 1..3");
    const Signature& s1 = sigs[0][static_cast<std::size_t>(h - 1)];
    const Signature& s2 = sigs[1][static_cast<std::size_t>(k - 1)];
    const std::size_t n_win = cfg.windows();

    TrialRecord rec;
    rec.h = h;
    rec.k = k;
    rec.config = cfg;
    rec.t.resize(n_win + 1);
    rec.x1.resize(n_win + 1);
    rec.x2.resize(n_win + 1);
    rec.u1.resize(n_win + 1);
    rec.u2.resize(n_win + 1);

    WindowProblem p1, p2;
    for (auto [p, i] : {std::pair{&p1, 0}, std::pair{&p2, 1}}) {
        const auto& pc = cfg.players[static_cast<std::size_t>(i)];
        p->T = cfg.T;
        p->dynamics = pc.hkb;
        p->weights = pc.weights;
        p->n_sub = cfg.n_sub;
        p->initial = pc.initial;
    }
    p1.signature = [&s1](double t) { return signature_at(s1, t); };
    p2.signature = [&s2](double t) { return signature_at(s2, t); };

    // Previous converged costates; a plain pair plus flag keeps GCC's
    // maybe-uninitialized analysis quiet.
    std::pair<Costate, Costate> warm{};
    bool have_warm = false;
    std::size_t converged = 0;
    for (std::size_t w = 0; w < n_win; ++w) {
        const double t_k = static_cast<double>(w) * cfg.T;
        p1.t_k = p2.t_k = t_k;
        std::pair<WindowSolution, WindowSolution> sol;
        try {
            sol = solve_window_coupled(p1, p2, have_warm ? std::optional(warm) : std::nullopt, cfg.solver);
        } catch (const NonFiniteState& e) {
            throw NonFiniteState("window " + std::to_string(w) + ": " + e.what());
        }
        auto& [a, b] = sol;
        rec.t[w] = t_k;
        rec.x1[w] = p1.initial.x;
        rec.x2[w] = p2.initial.x;
        rec.u1[w] = a.u.front();
        rec.u2[w] = b.u.front();
        if (a.converged) {
            ++converged;
            warm = {a.initial_costate, b.initial_costate};
            have_warm = true;
        } else {
            rec.failed_windows.push_back(static_cast<int>(w));
            have_warm = false;
        }
        p1.initial = a.final_state();
        p2.initial = b.final_state();
        if (w + 1 == n_win) {
            rec.u1[n_win] = a.u.back();
            rec.u2[n_win] = b.u.back();
        }
    }
    rec.t[n_win] = static_cast<double>(n_win) * cfg.T;
    rec.x1[n_win] = p1.initial.x;
    rec.x2[n_win] = p2.initial.x;
    rec.converged_fraction = n_win ? static_cast<double>(converged) / static_cast<double>(n_win) : 1.0;
    return rec;
}

inline TrialRecord run_vp_vp_trial(const DyadConfig& cfg, int h, int k) {
    return run_vp_vp_trial(cfg, h, k, resolve_signatures(cfg));
}

struct TrialOutcome {
    int h = 1;
    int k = 1;
    std::optional<TrialRecord> record;
    std::string error;  ///< empty on success
};

/// All nine signature combinations (h, k) in row-major order (1,1), (1,2), ...,
/// (3,3). Trials are independent; failures are collected per trial.
inline std::vector<TrialOutcome> run_dyad_batch(const DyadConfig& cfg, unsigned workers = 1) {
    cfg.validate();
    const SignatureSet sigs = resolve_signatures(cfg);
    std::vector<TrialOutcome> out(9);
    for (int i = 0; i < 9; ++i) {
        out[static_cast<std::size_t>(i)].h = i / 3 + 1;
        out[static_cast<std::size_t>(i)].k = i % 3 + 1;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < 9; i = next++) {
            auto& o = out[static_cast<std::size_t>(i)];
            try {
                o.record = run_vp_vp_trial(cfg, o.h, o.k, sigs);
            } catch (const std::exception& e) {
                o.error = e.what();
            }
        }
    };
    workers = std::clamp(workers, 1u, 9u);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    return out;
}

// ---------------------------------------------------------------------------
// VP facing a scripted partner

/// Drives a single virtual player against partner positions sampled at the
/// window boundaries; returns a record with the VP as player 1 and the
/// partner as player 2 (u2 is zero).
inline TrialRecord run_vp_hp_trial(const VirtualPlayer::Options& opt, const Signature& sigma,
                                   std::span<const double> partner_x) {
    VirtualPlayer vp(opt, [&sigma](double t) { return signature_at(sigma, t); });
    TrialRecord rec;
    std::size_t converged = 0;
    for (std::size_t w = 0; w < partner_x.size(); ++w) {
        rec.t.push_back(vp.time());
        rec.x1.push_back(vp.state().x);
        rec.x2.push_back(partner_x[w]);
        const WindowSolution& sol = vp.step(partner_x[w]);
        rec.u1.push_back(sol.u.front());
        rec.u2.push_back(0.0);
        if (sol.converged)
            ++converged;
        else
            rec.failed_windows.push_back(static_cast<int>(w));
    }
    rec.converged_fraction =
        partner_x.empty() ? 1.0 : static_cast<double>(converged) / static_cast<double>(partner_x.size());
    return rec;
}

// ---------------------------------------------------------------------------
// Analysis

struct TrialAnalysis {
    double e_p = 0.0;
    double emd_sigma1_nu1 = 0.0;
    std::optional<double> emd_sigma2_nu2;  ///< absent when player 2 has no signature
    double emd_nu1_nu2 = 0.0;
    std::optional<double> emd_sigma1_sigma2;
    PhasePDF phase_pdf;
    double phase_circular_mean = 0.0;
    std::optional<double> emd_phase_reference;
    std::vector<std::string> mds_labels;
    std::vector<std::array<double, 2>> mds;

    bool operator==(const TrialAnalysis& o) const {
        return e_p == o.e_p && emd_sigma1_nu1 == o.emd_sigma1_nu1 && emd_sigma2_nu2 == o.emd_sigma2_nu2 &&
               emd_nu1_nu2 == o.emd_nu1_nu2 && emd_sigma1_sigma2 == o.emd_sigma1_sigma2 &&
               phase_pdf.grid == o.phase_pdf.grid && phase_pdf.density == o.phase_pdf.density &&
               phase_circular_mean == o.phase_circular_mean && emd_phase_reference == o.emd_phase_reference &&
               mds_labels == o.mds_labels && mds == o.mds;
    }
};

struct AnalysisOptions {
    double range_length = 1.0;
    std::optional<PhasePDF> phase_reference;
    std::array<std::string, 4> labels{"sigma1", "sigma2", "nu1", "nu2"};
};

/// Bandwidth used when a velocity series has zero spread (e.g. a player at rest).
inline constexpr double kDegenerateBandwidth = 1e-3;

inline VelocityPDF velocity_density(std::span<const double> v) {
    try {
        return kde_pdf(v);
    } catch (const DegenerateSamples&) {
        return kde_pdf(v, 512, kDegenerateBandwidth);
    }
}

/// Metrics of two position traces sampled uniformly at rate 1/dt, with the
/// players' signatures (player 2's may be absent, e.g. a human partner).
inline TrialAnalysis analyze_traces(std::span<const double> t, std::span<const double> x1, std::span<const double> x2,
                                    double dt, const Signature& sigma1, const Signature* sigma2,
                                    const AnalysisOptions& opt = {}) {
    if (x1.size() != t.size() || x2.size() != t.size()) throw LengthMismatch("analyze: trace lengths differ");
    TrialAnalysis a;
    a.e_p = rms_position_error(x1, x2, opt.range_length);

    const double rate = 1.0 / dt;
    const Signature v1 = velocity_from_positions(t, x1, rate);
    const Signature v2 = velocity_from_positions(t, x2, rate);
    const VelocityPDF nu1 = velocity_density(v1.v), nu2 = velocity_density(v2.v);
    const VelocityPDF sg1 = velocity_density(sigma1.v);
    std::optional<VelocityPDF> sg2;
    if (sigma2) sg2 = velocity_density(sigma2->v);

    a.emd_sigma1_nu1 = emd(sg1, nu1);
    a.emd_nu1_nu2 = emd(nu1, nu2);
    if (sg2) {
        a.emd_sigma2_nu2 = emd(*sg2, nu2);
        a.emd_sigma1_sigma2 = emd(sg1, *sg2);
    }

    const PhaseSeries ps = wavelet_relative_phase(x1, x2, rate);
    a.phase_pdf = phase_pdf(ps);
    a.phase_circular_mean = circular_mean(ps.phi);
    if (opt.phase_reference) a.emd_phase_reference = emd(as_density(a.phase_pdf), as_density(*opt.phase_reference));

    // Embedding of {sigma1, sigma2, nu1, nu2}, or {sigma1, nu1, nu2} without sigma2.
    std::vector<const VelocityPDF*> pts{&sg1};
    std::vector<std::string> labels{opt.labels[0]};
    if (sg2) {
        pts.push_back(&*sg2);
        labels.push_back(opt.labels[1]);
    }
    pts.push_back(&nu1);
    labels.push_back(opt.labels[2]);
    pts.push_back(&nu2);
    labels.push_back(opt.labels[3]);
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            d(i, j) = d(j, i) = emd(*pts[static_cast<std::size_t>(i)], *pts[static_cast<std::size_t>(j)]);
    const Eigen::MatrixXd coords = classical_mds(DistanceMatrix(d), 2);
    for (Eigen::Index i = 0; i < n; ++i) a.mds.push_back({coords(i, 0), coords(i, 1)});
    a.mds_labels = std::move(labels);
    return a;
}

inline TrialAnalysis analyze_trial(const TrialRecord& rec, const SignatureSet& sigs, const AnalysisOptions& opt = {}) {
    if (rec.h < 1 || rec.h > 3 || rec.k < 1 || rec.k > 3) throw InvalidArgument("signature indices must be in 1..3");
    return analyze_traces(rec.t, rec.x1, rec.x2, rec.config.T, sigs[0][static_cast<std::size_t>(rec.h - 1)],
                          &sigs[1][static_cast<std::size_t>(rec.k - 1)], opt);
}

inline TrialAnalysis analyze_trial(const TrialRecord& rec) {
    AnalysisOptions opt;
    opt.range_length = rec.config.range_length;
    return analyze_trial(rec, resolve_signatures(rec.config), opt);
}

}  // namespace mirror
