#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "mirror/errors.hpp"

namespace mirror {

/// Intrinsic coefficients of the HKB end-effector model
///   x'' + (alpha v^2 + beta x^2 - gamma) v + omega^2 x = u.
struct HkbParams {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double omega = 1.0;

    bool valid() const {
        return std::isfinite(alpha) && std::isfinite(beta) && std::isfinite(gamma) &&
               std::isfinite(omega) && omega > 0.0 && alpha >= 0.0 && beta >= 0.0;
    }
    bool operator==(const HkbParams&) const = default;
};

/// Linear end-effector x'' + a v + b x = u.
struct LinearParams {
    double a = 0.0;
    double b = 0.0;

    bool valid() const { return std::isfinite(a) && std::isfinite(b); }
    bool operator==(const LinearParams&) const = default;
};

struct PlayerState {
    double x = 0.0;
    double v = 0.0;

    bool operator==(const PlayerState&) const = default;
};

inline double hkb_accel(const HkbParams& p, const PlayerState& s, double u) {
    return u - (p.alpha * s.v * s.v + p.beta * s.x * s.x - p.gamma) * s.v - p.omega * p.omega * s.x;
}

inline double linear_accel(const LinearParams& p, const PlayerState& s, double u) {
    return u - p.a * s.v - p.b * s.x;
}

template <std::size_t N>
using StateVector = std::array<double, N>;

namespace detail {

template <std::size_t N>
inline StateVector<N> axpy(const StateVector<N>& y, double h, const StateVector<N>& k) {
    StateVector<N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = y[i] + h * k[i];
    return out;
}

}  // namespace detail

/// One classical fourth-order Runge-Kutta step of y' = f(t, y).
/// Throws NonFiniteState if the advanced state has a non-finite component.
template <std::size_t N, class Field>
StateVector<N> rk4_step(Field&& f, const StateVector<N>& y, double t, double dt) {
    const double half = 0.5 * dt;
    const StateVector<N> k1 = f(t, y);
    const StateVector<N> k2 = f(t + half, detail::axpy(y, half, k1));
    const StateVector<N> k3 = f(t + half, detail::axpy(y, half, k2));
    const StateVector<N> k4 = f(t + dt, detail::axpy(y, dt, k3));
    StateVector<N> out;
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!std::isfinite(out[i])) {
            throw NonFiniteState("rk4_step: component " + std::to_string(i) +
                                 " became non-finite at t=" + std::to_string(t + dt));
        }
    }
    return out;
}

/// Integrates the uncontrolled (u = 0) HKB oscillator for `steps` RK4 steps.
inline PlayerState integrate_free_hkb(const HkbParams& p, PlayerState s, double dt, std::size_t steps) {
    auto field = [&p](double, const StateVector<2>& y) {
        return StateVector<2>{y[1], hkb_accel(p, {y[0], y[1]}, 0.0)};
    };
    StateVector<2> y{s.x, s.v};
    double t = 0.0;
    for (std::size_t i = 0; i < steps; ++i, t += dt) y = rk4_step<2>(field, y, t, dt);
    return {y[0], y[1]};
}

}  // namespace mirror
