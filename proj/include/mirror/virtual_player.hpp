#pragma once

#include <optional>
#include <utility>

#include "mirror/control.hpp"

namespace mirror {

/// Receding-horizon virtual player facing an externally driven partner.
///
/// Each call to `step` consumes the partner position observed at the current
/// window boundary, solves the window against a constant-velocity estimate of
/// the partner, applies the whole window's control and returns the solution.
/// Non-converged windows fall back to zero control and count as faults.
class VirtualPlayer {
public:
    struct Options {
        Dynamics dynamics = HkbParams{};
        CouplingWeights weights{};
        double T = 0.04;
        int n_sub = 10;
        SolverOptions solver{};
        PlayerState initial{};
    };

    VirtualPlayer(Options opt, VelocityReference signature)
        : opt_(std::move(opt)), signature_(std::move(signature)), state_(opt_.initial) {
        opt_.weights.validate();
        if (!(opt_.T > 0.0)) throw InvalidArgument("VirtualPlayer: T must be positive");
    }

    const WindowSolution& step(double partner_x) {
        const double t_k = static_cast<double>(tick_) * opt_.T;
        const double prev = last_partner_.value_or(partner_x);
        WindowProblem p;
        p.t_k = t_k;
        p.T = opt_.T;
        p.initial = state_;
        p.dynamics = opt_.dynamics;
        p.weights = opt_.weights;
        p.signature = signature_;
        p.partner = estimate_partner(prev, partner_x, opt_.T, t_k);
        p.n_sub = opt_.n_sub;

        last_ = solve_window_single(p, warm_, opt_.solver);
        if (last_.converged) {
            warm_ = last_.initial_costate;
        } else {
            ++faults_;
            warm_.reset();
        }
        state_ = last_.final_state();
        last_partner_ = partner_x;
        ++tick_;
        return last_;
    }

    PlayerState state() const { return state_; }
    double time() const { return static_cast<double>(tick_) * opt_.T; }
    long tick() const { return tick_; }
    int faults() const { return faults_; }
    const Options& options() const { return opt_; }

private:
    Options opt_;
    VelocityReference signature_;
    PlayerState state_;
    std::optional<double> last_partner_;
    std::optional<Costate> warm_;
    WindowSolution last_;
    long tick_ = 0;
    int faults_ = 0;
};

}  // namespace mirror
