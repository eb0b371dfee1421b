#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mirror/errors.hpp"
#include "mirror/oscillator.hpp"

namespace mirror {

/// Weights of the per-window cost: terminal position mismatch, signature
/// tracking, velocity mismatch and control effort.
struct CouplingWeights {
    double theta_p = 0.2;
    double theta_sigma = 0.4;
    double theta_v = 0.4;
    double eta = 1e-4;

    bool valid() const {
        return theta_p > 0.0 && theta_sigma > 0.0 && theta_v > 0.0 && std::isfinite(eta) && eta > 0.0 &&
               std::abs(theta_p + theta_sigma + theta_v - 1.0) <= 1e-9;
    }
    void validate() const {
        if (!valid()) throw InvalidArgument("coupling weights must be positive with theta_p + theta_sigma + theta_v = 1");
    }
    bool operator==(const CouplingWeights&) const = default;
};

struct Costate {
    double l1 = 0.0;
    double l2 = 0.0;

    bool operator==(const Costate&) const = default;
};

/// Constant-velocity extrapolation of a partner observed at two consecutive
/// window boundaries.
struct PartnerEstimate {
    double t_k = 0.0;
    double x_k = 0.0;
    double r_hat_v = 0.0;

    double position(double t) const { return x_k + r_hat_v * (t - t_k); }
};

inline PartnerEstimate estimate_partner(double x_prev, double x_now, double T, double t_k = 0.0) {
    if (!(T > 0.0)) throw InvalidArgument("estimate_partner: T must be positive");
    return {t_k, x_now, (x_now - x_prev) / T};
}

using Dynamics = std::variant<HkbParams, LinearParams>;

inline double accel(const Dynamics& d, const PlayerState& s, double u) {
    return std::visit(
        [&](const auto& p) {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, HkbParams>)
                return hkb_accel(p, s, u);
            else
                return linear_accel(p, s, u);
        },
        d);
}

/// Costate derivative -dH/dX for the HKB model, with
/// H = th_s/2 (v - sigma)^2 + th_v/2 (v - partner_v)^2 + eta/2 u^2 + l1 v + l2 accel.
inline Costate costate_rhs(const PlayerState& s, const Costate& c, const HkbParams& p, const CouplingWeights& w,
                           double sigma_t, double partner_v) {
    return {c.l2 * (2.0 * p.beta * s.x * s.v + p.omega * p.omega),
            c.l2 * (3.0 * p.alpha * s.v * s.v + p.beta * s.x * s.x - p.gamma) - c.l1 -
                w.theta_sigma * (s.v - sigma_t) - w.theta_v * (s.v - partner_v)};
}

inline Costate costate_rhs(const PlayerState& s, const Costate& c, const LinearParams& p, const CouplingWeights& w,
                           double sigma_t, double partner_v) {
    return {c.l2 * p.b, c.l2 * p.a - c.l1 - w.theta_sigma * (s.v - sigma_t) - w.theta_v * (s.v - partner_v)};
}

inline Costate costate_rhs(const PlayerState& s, const Costate& c, const Dynamics& d, const CouplingWeights& w,
                           double sigma_t, double partner_v) {
    return std::visit([&](const auto& p) { return costate_rhs(s, c, p, w, sigma_t, partner_v); }, d);
}

inline double optimal_control(const Costate& c, double eta) { return -c.l2 / eta; }

// ---------------------------------------------------------------------------
// Window cost

struct StateTrajectory {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> v;
};

/// Reference signals sampled on the same grid as the state trajectory.
struct ReferenceTrajectory {
    std::vector<double> sigma;
    std::vector<double> partner_x;
    std::vector<double> partner_v;
};

namespace detail {

inline double trapezoid(std::span<const double> t, std::span<const double> f) {
    double acc = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
    return acc;
}

}  // namespace detail

inline double window_cost(const StateTrajectory& s, std::span<const double> u, const ReferenceTrajectory& r,
                          const CouplingWeights& w) {
    const std::size_t n = s.t.size();
    if (n < 2 || s.x.size() != n || s.v.size() != n || u.size() != n || r.sigma.size() != n ||
        r.partner_x.size() != n || r.partner_v.size() != n) {
        throw GridMismatch("window_cost: all trajectories must share one grid of at least two nodes");
    }
    std::vector<double> sig2(n), vel2(n), eff2(n);
    for (std::size_t i = 0; i < n; ++i) {
        sig2[i] = (s.v[i] - r.sigma[i]) * (s.v[i] - r.sigma[i]);
        vel2[i] = (s.v[i] - r.partner_v[i]) * (s.v[i] - r.partner_v[i]);
        eff2[i] = u[i] * u[i];
    }
    const double d = s.x.back() - r.partner_x.back();
    return 0.5 * w.theta_p * d * d + 0.5 * w.theta_sigma * detail::trapezoid(s.t, sig2) +
           0.5 * w.theta_v * detail::trapezoid(s.t, vel2) + 0.5 * w.eta * detail::trapezoid(s.t, eff2);
}

// ---------------------------------------------------------------------------
// Window problems and solutions

using VelocityReference = std::function<double(double)>;

/// One receding-horizon subproblem over [t_k, t_k + T]. In single-player mode
/// `partner` holds the estimate of the other player; in coupled mode it is
/// unused and the partner is the other problem of the pair.
struct WindowProblem {
    double t_k = 0.0;
    double T = 0.04;
    PlayerState initial{};
    Dynamics dynamics = HkbParams{};
    CouplingWeights weights{};
    VelocityReference signature;
    std::optional<PartnerEstimate> partner;
    int n_sub = 10;

    double sigma(double t) const { return signature ? signature(t) : 0.0; }
    double step() const { return T / n_sub; }
    double node_time(int i) const { return i == n_sub ? t_k + T : t_k + i * step(); }

    void validate() const {
        if (!(T > 0.0) || !std::isfinite(T)) throw InvalidArgument("window length T must be positive");
        if (n_sub < 2) throw InvalidArgument("n_sub must be at least 2");
        weights.validate();
        if (!std::isfinite(initial.x) || !std::isfinite(initial.v)) throw InvalidArgument("initial state not finite");
    }
};

struct SolverOptions {
    double residual_tol = 1e-8;
    int max_iter = 50;
    int max_backtracks = 20;
};

struct WindowSolution {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> v;
    std::vector<double> u;
    std::vector<double> l1;
    std::vector<double> l2;
    Costate initial_costate{};
    double residual_norm = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
    double cost = 0.0;

    PlayerState final_state() const { return {x.back(), v.back()}; }
    StateTrajectory states() const { return {t, x, v}; }
};

/// Control of a solved window at an arbitrary time, linear between nodes.
inline double control_at(const WindowSolution& sol, double t) {
    if (t <= sol.t.front()) return sol.u.front();
    if (t >= sol.t.back()) return sol.u.back();
    const auto it = std::upper_bound(sol.t.begin(), sol.t.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - sol.t.begin());
    const double a = (t - sol.t[i - 1]) / (sol.t[i] - sol.t[i - 1]);
    return (1.0 - a) * sol.u[i - 1] + a * sol.u[i];
}

namespace detail {

template <std::size_t M>
struct NewtonResult {
    StateVector<M> z{};
    double residual_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

template <std::size_t M>
double norm(const StateVector<M>& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return std::sqrt(s);
}

/// Damped Newton on residual(z) = 0 with a forward-difference Jacobian.
/// `residual` returns nullopt when the trial point makes the integration blow up.
/// `scale[j]` sets the magnitude floor for the finite-difference step of unknown j.
template <std::size_t M, class Residual>
NewtonResult<M> newton_shoot(Residual&& residual, StateVector<M> z, const StateVector<M>& scale,
                             const SolverOptions& opt) {
    using Vec = Eigen::Matrix<double, static_cast<int>(M), 1>;
    using Mat = Eigen::Matrix<double, static_cast<int>(M), static_cast<int>(M)>;

    NewtonResult<M> out;
    std::optional<StateVector<M>> r = residual(z);
    if (!r) {
        z.fill(0.0);
        r = residual(z);
        if (!r) return out;
    }
    double rn = norm<M>(*r);
    out.z = z;
    out.residual_norm = rn;
    for (int it = 0; it < opt.max_iter; ++it) {
        if (rn < opt.residual_tol) {
            out.converged = true;
            return out;
        }
        Mat jac;
        for (std::size_t j = 0; j < M; ++j) {
            StateVector<M> zj = z;
            const double h = 1e-6 * std::max(std::abs(z[j]), scale[j]);
            zj[j] += h;
            const auto rj = residual(zj);
            if (!rj) return out;
            for (std::size_t i = 0; i < M; ++i) jac(static_cast<int>(i), static_cast<int>(j)) = ((*rj)[i] - (*r)[i]) / h;
        }
        Vec rv;
        for (std::size_t i = 0; i < M; ++i) rv(static_cast<int>(i)) = (*r)[i];
        const Vec step = jac.fullPivLu().solve(-rv);
        if (!step.allFinite()) return out;

        double alpha = 1.0;
        bool accepted = false;
        for (int bt = 0; bt <= opt.max_backtracks; ++bt, alpha *= 0.5) {
            StateVector<M> trial = z;
            for (std::size_t i = 0; i < M; ++i) trial[i] += alpha * step(static_cast<int>(i));
            const auto rt = residual(trial);
            if (rt) {
                const double tn = norm<M>(*rt);
                if (tn < rn) {
                    z = trial;
                    r = rt;
                    rn = tn;
                    accepted = true;
                    break;
                }
            }
        }
        out.iterations = it + 1;
        out.z = z;
        out.residual_norm = rn;
        if (!accepted) return out;
    }
    out.converged = rn < opt.residual_tol;
    return out;
}

// Augmented single-player state: (x, v, l1, l2).
inline StateVector<4> single_field(const WindowProblem& p, double t, const StateVector<4>& y) {
    const PlayerState s{y[0], y[1]};
    const Costate c{y[2], y[3]};
    const double u = optimal_control(c, p.weights.eta);
    const Costate dc = costate_rhs(s, c, p.dynamics, p.weights, p.sigma(t), p.partner->r_hat_v);
    return {s.v, accel(p.dynamics, s, u), dc.l1, dc.l2};
}

template <class Visit>
StateVector<4> integrate_single(const WindowProblem& p, const Costate& c0, Visit&& visit) {
    StateVector<4> y{p.initial.x, p.initial.v, c0.l1, c0.l2};
    visit(0, y);
    const double h = p.step();
    auto f = [&p](double t, const StateVector<4>& s) { return single_field(p, t, s); };
    for (int i = 0; i < p.n_sub; ++i) {
        y = rk4_step<4>(f, y, p.node_time(i), h);
        visit(i + 1, y);
    }
    return y;
}

// Coupled state: (x1, v1, l11, l12, x2, v2, l21, l22).
inline StateVector<8> coupled_field(const WindowProblem& p1, const WindowProblem& p2, double t,
                                    const StateVector<8>& y) {
    const PlayerState s1{y[0], y[1]}, s2{y[4], y[5]};
    const Costate c1{y[2], y[3]}, c2{y[6], y[7]};
    const double u1 = optimal_control(c1, p1.weights.eta);
    const double u2 = optimal_control(c2, p2.weights.eta);
    const Costate d1 = costate_rhs(s1, c1, p1.dynamics, p1.weights, p1.sigma(t), s2.v);
    const Costate d2 = costate_rhs(s2, c2, p2.dynamics, p2.weights, p2.sigma(t), s1.v);
    return {s1.v, accel(p1.dynamics, s1, u1), d1.l1, d1.l2, s2.v, accel(p2.dynamics, s2, u2), d2.l1, d2.l2};
}

template <class Visit>
StateVector<8> integrate_coupled(const WindowProblem& p1, const WindowProblem& p2, const StateVector<4>& c0,
                                 Visit&& visit) {
    StateVector<8> y{p1.initial.x, p1.initial.v, c0[0], c0[1], p2.initial.x, p2.initial.v, c0[2], c0[3]};
    visit(0, y);
    const double h = p1.step();
    auto f = [&p1, &p2](double t, const StateVector<8>& s) { return coupled_field(p1, p2, t, s); };
    for (int i = 0; i < p1.n_sub; ++i) {
        y = rk4_step<8>(f, y, p1.node_time(i), h);
        visit(i + 1, y);
    }
    return y;
}

inline void resize_solution(WindowSolution& s, std::size_t n) {
    s.t.assign(n, 0.0);
    s.x.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.u.assign(n, 0.0);
    s.l1.assign(n, 0.0);
    s.l2.assign(n, 0.0);
}

/// State trajectory under a prescribed control u(t), on the problem's substep grid.
inline WindowSolution open_loop(const WindowProblem& p, const std::function<double(double)>& control) {
    WindowSolution s;
    resize_solution(s, static_cast<std::size_t>(p.n_sub) + 1);
    auto f = [&](double t, const StateVector<2>& y) {
        return StateVector<2>{y[1], accel(p.dynamics, {y[0], y[1]}, control(t))};
    };
    StateVector<2> y{p.initial.x, p.initial.v};
    for (int i = 0; i <= p.n_sub; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (i > 0) y = rk4_step<2>(f, y, p.node_time(i - 1), p.step());
        s.t[k] = p.node_time(i);
        s.x[k] = y[0];
        s.v[k] = y[1];
        s.u[k] = control(s.t[k]);
    }
    return s;
}

inline ReferenceTrajectory single_references(const WindowProblem& p, std::span<const double> t) {
    ReferenceTrajectory r;
    for (double ti : t) {
        r.sigma.push_back(p.sigma(ti));
        r.partner_x.push_back(p.partner->position(ti));
        r.partner_v.push_back(p.partner->r_hat_v);
    }
    return r;
}

}  // namespace detail

/// Re-integrates the state of a single-player window under control u(t) and
/// evaluates its cost against the window's references.
inline double evaluate_single_cost(const WindowProblem& p, const std::function<double(double)>& control) {
    const WindowSolution s = detail::open_loop(p, control);
    return window_cost(s.states(), s.u, detail::single_references(p, s.t), p.weights);
}

/// Solves a single-player window by Newton shooting on the initial costate.
/// On failure returns converged=false with zero control applied over the window.
inline WindowSolution solve_window_single(const WindowProblem& prob, std::optional<Costate> warm_start = std::nullopt,
                                         const SolverOptions& opt = {}) {
    prob.validate();
    if (!prob.partner) throw InvalidArgument("solve_window_single: partner estimate required");

    const double t_end = prob.t_k + prob.T;
    const double r_end = prob.partner->position(t_end);
    const double theta_p = prob.weights.theta_p;
    auto residual = [&](const StateVector<2>& z) -> std::optional<StateVector<2>> {
        try {
            const auto y = detail::integrate_single(prob, {z[0], z[1]}, [](int, const StateVector<4>&) {});
            return StateVector<2>{y[2] - theta_p * (y[0] - r_end), y[3]};
        } catch (const NonFiniteState&) {
            return std::nullopt;
        }
    };
    const Costate start = warm_start.value_or(Costate{});
    const double eta = prob.weights.eta;
    const auto nr = detail::newton_shoot<2>(residual, {start.l1, start.l2}, {eta, eta}, opt);

    WindowSolution sol;
    const auto n = static_cast<std::size_t>(prob.n_sub) + 1;
    sol.iterations = nr.iterations;
    sol.residual_norm = nr.residual_norm;
    sol.converged = nr.converged;
    if (sol.converged) {
        detail::resize_solution(sol, n);
        sol.initial_costate = {nr.z[0], nr.z[1]};
        detail::integrate_single(prob, sol.initial_costate, [&](int i, const StateVector<4>& y) {
            const auto k = static_cast<std::size_t>(i);
            sol.t[k] = prob.node_time(i);
            sol.x[k] = y[0];
            sol.v[k] = y[1];
            sol.l1[k] = y[2];
            sol.l2[k] = y[3];
            sol.u[k] = optimal_control({y[2], y[3]}, eta);
        });
    } else {
        const WindowSolution free = detail::open_loop(prob, [](double) { return 0.0; });
        detail::resize_solution(sol, n);
        sol.t = free.t;
        sol.x = free.x;
        sol.v = free.v;
    }
    sol.cost = window_cost(sol.states(), sol.u, detail::single_references(prob, sol.t), prob.weights);
    return sol;
}

/// Solves the joint two-player window: four unknown initial costates, four
/// terminal conditions. Both problems must share t_k, T and n_sub.
inline std::pair<WindowSolution, WindowSolution> solve_window_coupled(
    const WindowProblem& p1, const WindowProblem& p2,
    std::optional<std::pair<Costate, Costate>> warm_start = std::nullopt, const SolverOptions& opt = {}) {
    p1.validate();
    p2.validate();
    if (p1.t_k != p2.t_k || p1.T != p2.T || p1.n_sub != p2.n_sub)
        throw InvalidArgument("solve_window_coupled: problems must share t_k, T and n_sub");

    const double tp1 = p1.weights.theta_p, tp2 = p2.weights.theta_p;
    auto residual = [&](const StateVector<4>& z) -> std::optional<StateVector<4>> {
        try {
            const auto y = detail::integrate_coupled(p1, p2, z, [](int, const StateVector<8>&) {});
            return StateVector<4>{y[2] - tp1 * (y[0] - y[4]), y[3], y[6] - tp2 * (y[4] - y[0]), y[7]};
        } catch (const NonFiniteState&) {
            return std::nullopt;
        }
    };
    StateVector<4> start{};
    if (warm_start) start = {warm_start->first.l1, warm_start->first.l2, warm_start->second.l1, warm_start->second.l2};
    const double e1 = p1.weights.eta, e2 = p2.weights.eta;
    const auto nr = detail::newton_shoot<4>(residual, start, {e1, e1, e2, e2}, opt);

    const auto n = static_cast<std::size_t>(p1.n_sub) + 1;
    WindowSolution s1, s2;
    detail::resize_solution(s1, n);
    detail::resize_solution(s2, n);
    for (WindowSolution* s : {&s1, &s2}) {
        s->iterations = nr.iterations;
        s->residual_norm = nr.residual_norm;
        s->converged = nr.converged;
    }
    const StateVector<4> z = nr.converged ? nr.z : StateVector<4>{};
    auto record = [&](int i, const StateVector<8>& y) {
        const auto k = static_cast<std::size_t>(i);
        s1.t[k] = s2.t[k] = p1.node_time(i);
        s1.x[k] = y[0];
        s1.v[k] = y[1];
        s2.x[k] = y[4];
        s2.v[k] = y[5];
        if (nr.converged) {
            s1.l1[k] = y[2];
            s1.l2[k] = y[3];
            s2.l1[k] = y[6];
            s2.l2[k] = y[7];
            s1.u[k] = optimal_control({y[2], y[3]}, e1);
            s2.u[k] = optimal_control({y[6], y[7]}, e2);
        }
    };
    if (nr.converged) {
        s1.initial_costate = {z[0], z[1]};
        s2.initial_costate = {z[2], z[3]};
        detail::integrate_coupled(p1, p2, z, record);
    } else {
        // Zero control: integrate both oscillators freely.
        const WindowSolution f1 = detail::open_loop(p1, [](double) { return 0.0; });
        const WindowSolution f2 = detail::open_loop(p2, [](double) { return 0.0; });
        s1.t = f1.t;
        s1.x = f1.x;
        s1.v = f1.v;
        s2.t = f2.t;
        s2.x = f2.x;
        s2.v = f2.v;
    }
    auto refs = [&](const WindowProblem& p, const WindowSolution& other) {
        ReferenceTrajectory r;
        for (std::size_t k = 0; k < n; ++k) r.sigma.push_back(p.sigma(other.t[k]));
        r.partner_x = other.x;
        r.partner_v = other.v;
        return r;
    };
    s1.cost = window_cost(s1.states(), s1.u, refs(p1, s2), p1.weights);
    s2.cost = window_cost(s2.states(), s2.u, refs(p2, s1), p2.weights);
    return {std::move(s1), std::move(s2)};
}

/// The optimal control of a solved single-player window at any time in the
/// window: the augmented state/costate system is advanced from the nearest
/// earlier node by one RK4 step, and u = -l2 / eta.
inline std::function<double(double)> dense_control(const WindowProblem& prob, const WindowSolution& sol) {
    if (!sol.converged) throw InvalidArgument("dense_control: solution did not converge");
    if (!prob.partner) throw InvalidArgument("dense_control: partner estimate required");
    return [&prob, &sol](double t) {
        const auto it = std::upper_bound(sol.t.begin(), sol.t.end(), t);
        const std::size_t i = it == sol.t.begin() ? 0 : std::min<std::size_t>(it - sol.t.begin() - 1, sol.t.size() - 1);
        const StateVector<4> y{sol.x[i], sol.v[i], sol.l1[i], sol.l2[i]};
        const double dt = t - sol.t[i];
        if (dt == 0.0) return optimal_control({y[2], y[3]}, prob.weights.eta);
        auto f = [&prob](double s, const StateVector<4>& z) { return detail::single_field(prob, s, z); };
        const StateVector<4> z = rk4_step<4>(f, y, sol.t[i], dt);
        return optimal_control({z[2], z[3]}, prob.weights.eta);
    };
}

/// Smallest cost increase J(u* + du) - J(u*) over a set of control
/// perturbations. Every evaluation re-integrates the state from the window's
/// initial condition on a grid `refine` times finer than the solver's, with
/// u* taken from `dense_control`.
inline double verify_second_variation(const WindowProblem& prob, const WindowSolution& sol,
                                      std::span<const std::function<double(double)>> perturbations, int refine = 16) {
    if (!std::holds_alternative<LinearParams>(prob.dynamics))
        throw InvalidArgument("verify_second_variation: linear dynamics required");
    if (!sol.converged) throw InvalidArgument("verify_second_variation: solution did not converge");
    if (refine < 1) throw InvalidArgument("verify_second_variation: refine must be at least 1");
    WindowProblem fine = prob;
    fine.n_sub = prob.n_sub * refine;
    const auto u_star = dense_control(prob, sol);
    const double base = evaluate_single_cost(fine, u_star);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& du : perturbations) {
        const double j = evaluate_single_cost(fine, [&](double t) { return u_star(t) + du(t); });
        worst = std::min(worst, j - base);
    }
    return perturbations.empty() ? 0.0 : worst;
}

}  // namespace mirror
