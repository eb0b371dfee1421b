// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [criterion...]    run all criteria, or only the listed numbers

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mirror/control.hpp"
#include "mirror/experiments.hpp"
#include "mirror/liveplay.hpp"
#include "mirror/metrics.hpp"
#include "mirror/presets.hpp"

using namespace mirror;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double median(std::vector<double> v) { return summary_stats(v).median; }

// 1 ---------------------------------------------------------------------------------------

// Independent Hamiltonian; the costate must equal minus its state gradient.
double hamiltonian(const HkbParams& p, const CouplingWeights& w, double x, double v, double l1, double l2, double u,
                   double sigma, double pv) {
    const double xdd = u - (p.alpha * v * v + p.beta * x * x - p.gamma) * v - p.omega * p.omega * x;
    return 0.5 * w.theta_sigma * (v - sigma) * (v - sigma) + 0.5 * w.theta_v * (v - pv) * (v - pv) +
           0.5 * w.eta * u * u + l1 * v + l2 * xdd;
}

Outcome costate_correctness() {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const HkbParams p{1.0 + U(rng), 1.0 + U(rng), U(rng), 1.0 + 0.5 * U(rng)};
        const double a = 1.0 + U(rng), b = 1.0 + U(rng), c = 1.0 + U(rng);
        const CouplingWeights w{a / (a + b + c), b / (a + b + c), c / (a + b + c), 1e-4};
        const double x = U(rng), v = U(rng), l1 = U(rng), l2 = U(rng), u = U(rng), sg = U(rng), pv = U(rng);
        const double h = 1e-5;
        const double gx = (hamiltonian(p, w, x + h, v, l1, l2, u, sg, pv) - hamiltonian(p, w, x - h, v, l1, l2, u, sg, pv)) / (2 * h);
        const double gv = (hamiltonian(p, w, x, v + h, l1, l2, u, sg, pv) - hamiltonian(p, w, x, v - h, l1, l2, u, sg, pv)) / (2 * h);
        const Costate d = costate_rhs({x, v}, {l1, l2}, p, w, sg, pv);
        const double err = std::hypot(d.l1 + gx, d.l2 + gv) / std::max(std::hypot(gx, gv), 1e-12);
        worst = std::max(worst, err);
    }
    return {worst < 1e-6, fmt("worst relative error %.2e over 100 points", worst)};
}

// 2 ---------------------------------------------------------------------------------------

WindowProblem random_linear_window(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    WindowProblem p;
    p.T = 0.04;
    p.dynamics = LinearParams{U(rng), 1.0 + U(rng)};
    const double a = 0.2 + 0.5 * (U(rng) + 1.0), b = 0.2 + 0.5 * (U(rng) + 1.0), c = 0.2 + 0.5 * (U(rng) + 1.0);
    p.weights = {a / (a + b + c), b / (a + b + c), c / (a + b + c), 1e-4};
    p.initial = {0.3 * U(rng), 0.5 * U(rng)};
    const double s0 = 0.5 * U(rng), s1 = U(rng), s2 = 3.0 * U(rng);
    p.signature = [s0, s1, s2](double t) { return s0 + s1 * std::sin(s2 + 20.0 * t); };
    p.partner = PartnerEstimate{0.0, 0.3 * U(rng), 0.5 * U(rng)};
    return p;
}

Outcome corollary_optimality() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    double worst = std::numeric_limits<double>::infinity();
    int unconverged = 0;
    for (int win = 0; win < 20; ++win) {
        const WindowProblem p = random_linear_window(rng);
        const WindowSolution sol = solve_window_single(p);
        if (!sol.converged) {
            ++unconverged;
            continue;
        }
        std::vector<std::function<double(double)>> du;
        for (int k = 0; k < 200; ++k) {
            // Bounded perturbations: smooth sinusoids and piecewise-linear shapes, |du| <= 1.
            const double scale = std::pow(10.0, -3.0 * (U(rng) + 1.0) / 2.0);
            if (k % 2 == 0) {
                const double f = 1.0 + 100.0 * (U(rng) + 1.0), ph = kPi * U(rng);
                du.emplace_back([=](double t) { return scale * std::sin(f * t + ph); });
            } else {
                std::array<double, 6> knots{};
                for (double& v : knots) v = scale * U(rng);
                du.emplace_back([knots, T = p.T](double t) {
                    const double s = std::clamp(t / T * 5.0, 0.0, 5.0);
                    const auto i = static_cast<std::size_t>(std::min(s, 4.0));
                    return knots[i] + (s - static_cast<double>(i)) * (knots[i + 1] - knots[i]);
                });
            }
        }
        worst = std::min(worst, verify_second_variation(p, sol, du));
    }
    return {unconverged == 0 && worst >= -1e-9,
            fmt("min J(u*+du) - J(u*) = %.3e over 20x200 perturbations, %d unconverged windows", worst, unconverged)};
}

// 3 ---------------------------------------------------------------------------------------

struct Bounds {
    double min_converged = 1.0;
    double max_abs_x = 0.0;
    double max_gap = 0.0;
};

void accumulate(Bounds& b, const TrialRecord& r) {
    b.min_converged = std::min(b.min_converged, r.converged_fraction);
    for (std::size_t i = 0; i < r.t.size(); ++i) {
        const double ax = std::max(std::abs(r.x1[i]), std::abs(r.x2[i]));
        b.max_abs_x = std::isfinite(ax) ? std::max(b.max_abs_x, ax) : INFINITY;
        const double g = std::abs(r.x1[i] - r.x2[i]);
        b.max_gap = std::isfinite(g) ? std::max(b.max_gap, g) : INFINITY;
    }
}

Outcome boundedness() {
    Bounds b;
    int failures = 0;
    int trials = 0;
    auto run = [&](const std::string& p1, const std::string& p2) {
        ++trials;
        try {
            accumulate(b, run_vp_vp_trial(make_dyad_config(p1, p2, 3), 1, 2));
        } catch (const std::exception&) {
            ++failures;
        }
    };
    // The eight dyads as tabulated, then every preset facing itself.
    for (int d = 1; d <= 8; ++d) run("dyad" + std::to_string(d) + ".vp1", "dyad" + std::to_string(d) + ".vp2");
    for (const auto& preset : dyad_presets()) run(std::string(preset.name), std::string(preset.name));
    const bool ok = failures == 0 && b.min_converged >= 0.99 && b.max_abs_x < 5.0 && b.max_gap < 5.0;
    return {ok, fmt("%d trials: min converged %.4f, max|x| %.3f, max|x1-x2| %.3f, %d trial errors", trials,
                    b.min_converged, b.max_abs_x, b.max_gap, failures)};
}

// 4 ---------------------------------------------------------------------------------------

Outcome convergence_toward_each_other() {
    // Distinct signatures: player 2 moves with twice player 1's velocity amplitude.
    DyadConfig cfg = make_dyad_config(1, 4);
    for (auto& src : cfg.players[1].signatures) std::get<SynthOptions>(src).amp_scale *= 2.0;
    const auto sigs = resolve_signatures(cfg);
    std::vector<double> nu, sigma;
    double min_self = INFINITY;
    for (const auto& o : run_dyad_batch(cfg)) {
        if (!o.record) return {false, "trial failed: " + o.error};
        const auto a = analyze_trial(*o.record, sigs);
        nu.push_back(a.emd_nu1_nu2);
        sigma.push_back(*a.emd_sigma1_sigma2);
        min_self = std::min({min_self, a.emd_sigma1_nu1, *a.emd_sigma2_nu2});
    }
    const double m_nu = median(nu), m_sigma = median(sigma);
    return {m_nu < m_sigma && min_self > 0.0,
            fmt("median eta(nu1,nu2) %.4f vs eta(sigma1,sigma2) %.4f; min eta(sigma_i,nu_i) %.2e", m_nu, m_sigma,
                min_self)};
}

// 5 ---------------------------------------------------------------------------------------

Outcome weight_monotonicity() {
    // Same signatures and seed; only the weights differ.
    auto median_ep = [](const std::string& d) {
        DyadConfig cfg = make_dyad_config(1, 5);
        for (std::size_t i = 0; i < 2; ++i) {
            const std::string name = d + ".vp" + std::to_string(i + 1);
            cfg.players[i].weights = *find_preset(name);
            cfg.players[i].preset = name;
        }
        std::vector<double> ep;
        for (const auto& o : run_dyad_batch(cfg)) {
            if (!o.record) throw std::runtime_error(o.error);
            ep.push_back(rms_position_error(o.record->x1, o.record->x2, cfg.range_length));
        }
        return median(ep);
    };
    const double strong = median_ep("dyad5"), weak = median_ep("dyad1");
    return {strong < weak, fmt("median e_p theta_p=0.72: %.4f, theta_p=0.10: %.4f", strong, weak)};
}

// 6 ---------------------------------------------------------------------------------------

Outcome no_leader() {
    const DyadConfig cfg = make_dyad_config(4, 6);
    const auto sigs = resolve_signatures(cfg);
    const auto a = analyze_trial(run_vp_vp_trial(cfg, 1, 1, sigs), sigs);
    return {std::abs(a.phase_circular_mean) <= kPi / 8,
            fmt("circular mean %.4f rad (limit %.4f)", a.phase_circular_mean, kPi / 8)};
}

// 7 ---------------------------------------------------------------------------------------

Outcome emd_axioms() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    // Random Gaussian mixtures sampled on one shared grid.
    std::vector<double> grid(512);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = -2.0 + 4.0 * static_cast<double>(i) / 511.0;
    auto random_pdf = [&] {
        VelocityPDF p{grid, std::vector<double>(grid.size(), 0.0)};
        for (int k = 0; k < 3; ++k) {
            const double c = U(rng), w = 0.05 + 0.3 * (U(rng) + 1.0), a = U(rng) + 1.0;
            for (std::size_t i = 0; i < grid.size(); ++i) p.p[i] += a * std::exp(-0.5 * std::pow((grid[i] - c) / w, 2));
        }
        return p;
    };
    int violations = 0;
    double worst_triangle = -INFINITY;
    for (int i = 0; i < 50; ++i) {
        const auto a = random_pdf(), b = random_pdf(), c = random_pdf();
        const double ab = emd(a, b), ba = emd(b, a), bc = emd(b, c), ac = emd(a, c);
        if (emd(a, a) != 0.0 || ab != ba) ++violations;
        for (double d : {ab, bc, ac})
            if (!(d >= 0.0 && d <= 1.0)) ++violations;
        worst_triangle = std::max(worst_triangle, ac - ab - bc);
    }
    return {violations == 0 && worst_triangle <= 1e-10,
            fmt("50 triples: %d identity/symmetry/range violations, worst triangle excess %.2e", violations,
                worst_triangle)};
}

// 8 ---------------------------------------------------------------------------------------

Outcome wavelet_ground_truth() {
    const double fs = 100.0, f = 0.25;
    std::vector<double> a(6000), b(6000);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = static_cast<double>(i) / fs;
        a[i] = std::sin(2 * kPi * f * t);
        b[i] = std::sin(2 * kPi * f * t - kPi / 2);
    }
    const double lag = phase_pdf(wavelet_relative_phase(a, b, fs)).mode();
    const double same = phase_pdf(wavelet_relative_phase(a, a, fs)).mode();
    return {std::abs(lag - kPi / 2) < 0.1 && std::abs(same) < 0.05,
            fmt("quarter-lag mode %.4f (target %.4f), identical mode %.4f", lag, kPi / 2, same)};
}

// 9 ---------------------------------------------------------------------------------------

Outcome mds_exactness() {
    std::mt19937_64 rng(909);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Eigen::MatrixXd pts(10, 2);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = U(rng);
    const auto d = DistanceMatrix::from_points(pts);
    const Eigen::MatrixXd x = classical_mds(d);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < 10; ++i)
        for (Eigen::Index j = 0; j < 10; ++j) worst = std::max(worst, std::abs((x.row(i) - x.row(j)).norm() - d(i, j)));
    return {worst < 1e-6, fmt("max pairwise distance error %.2e", worst)};
}

// 10 --------------------------------------------------------------------------------------

Outcome realtime_feasibility() {
    live::SessionConfig cfg;
    SynthOptions o;
    o.seed = 1010;
    cfg.vp_signature = synth_signature(o, "vp");
    const auto s = live::run_headless(cfg, [](double t) -> std::optional<double> {
        if (t >= 60.0 - 1e-9) return std::nullopt;
        return 0.4 * std::sin(2 * kPi * 0.3 * t);
    });
    const auto st = live::tick_stats(s);
    double max_x = 0.0, max_gap = 0.0;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        max_x = std::max(max_x, std::abs(s.vp_x[i]));
        max_gap = std::max(max_gap, std::abs(s.vp_x[i] - s.hp[i]));
    }
    const double converged = 1.0 - static_cast<double>(s.faults()) / static_cast<double>(s.t.size());
    const bool ok = s.t.size() == 1500 && st.mean < 0.04 && st.p99 < 0.08 && converged >= 0.99 && max_x < 5.0 &&
                    max_gap < 5.0 && std::isfinite(max_x) && std::isfinite(max_gap);
    return {ok, fmt("%zu ticks: mean %.2e s, p99 %.2e s, max %.2e s; converged %.4f, max|x| %.3f, max gap %.3f",
                    s.t.size(), st.mean, st.p99, st.max, converged, max_x, max_gap)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "costate correctness", 1.0, costate_correctness},
        {2, "linear-window optimality", 30.0, corollary_optimality},
        {3, "boundedness under all presets", 300.0, boundedness},
        {4, "players move towards each other", 300.0, convergence_toward_each_other},
        {5, "synchronization increases with position weight", 120.0, weight_monotonicity},
        {6, "no leader under symmetric weights", 60.0, no_leader},
        {7, "EMD metric axioms", 5.0, emd_axioms},
        {8, "wavelet phase ground truth", 10.0, wavelet_ground_truth},
        {9, "MDS exactness", 1.0, mds_exactness},
        {10, "real-time feasibility", 600.0, realtime_feasibility},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > c.budget_seconds) {
            out.pass = false;
            out.detail += fmt("; over time budget %.0f s", c.budget_seconds);
        }
        if (!out.pass) ++failed;
        std::printf("%s criterion %2d  %-48s %8.3f s  %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    out.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
