#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mirror/csv.hpp"
#include "mirror/errors.hpp"

namespace mirror {

/// Individual motor signature: a player's solo velocity time series.
struct Signature {
    std::vector<double> t;
    std::vector<double> v;
    std::string label;

    void validate() const {
        if (t.size() != v.size() || t.size() < 2) throw InvalidArgument("signature needs at least two (t, v) samples");
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!std::isfinite(t[i]) || !std::isfinite(v[i])) throw InvalidArgument("signature values must be finite");
            if (i > 0 && !(t[i] > t[i - 1])) throw NonMonotonicTime("signature timestamps must strictly increase");
        }
    }

    /// Replay period: recorded span plus one trailing sample interval, so the
    /// looped signal closes from the last sample back to the first.
    double duration() const { return t.back() - t.front() + (t.back() - t[t.size() - 2]); }

    bool operator==(const Signature&) const = default;
};

/// Density sampled on a uniform grid.
struct VelocityPDF {
    std::vector<double> z;
    std::vector<double> p;

    double step() const { return z.size() > 1 ? (z.back() - z.front()) / static_cast<double>(z.size() - 1) : 0.0; }
};

struct SynthOptions {
    std::uint64_t seed = 1;
    double duration = 60.0;
    double rate = 100.0;
    int n_components = 5;
    double f_lo = 0.1;
    double f_hi = 1.5;
    double amp_scale = 0.5;
};

/// Sum of seeded random sinusoids. Amplitudes are positive and add up to
/// `amp_scale`, which therefore bounds |v|.
inline Signature synth_signature(const SynthOptions& o, std::string label = {}) {
    if (!(o.duration > 0.0) || !(o.rate > 0.0) || o.n_components < 1 || !(o.f_lo > 0.0) || !(o.f_lo < o.f_hi))
        throw InvalidArgument("synth_signature: invalid options");
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto m = static_cast<std::size_t>(o.n_components);
    std::vector<double> amp(m), freq(m), phase(m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        amp[j] = 0.2 + 0.8 * unit(rng);
        freq[j] = o.f_lo + (o.f_hi - o.f_lo) * unit(rng);
        phase[j] = 2.0 * std::numbers::pi * unit(rng);
        total += amp[j];
    }
    for (double& a : amp) a *= o.amp_scale / total;

    const auto n = static_cast<std::size_t>(std::llround(o.duration * o.rate));
    Signature s;
    s.label = label.empty() ? "synth-" + std::to_string(o.seed) : std::move(label);
    s.t.resize(n);
    s.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / o.rate;
        double v = 0.0;
        for (std::size_t j = 0; j < m; ++j) v += amp[j] * std::sin(2.0 * std::numbers::pi * freq[j] * t + phase[j]);
        s.t[i] = t;
        s.v[i] = v;
    }
    return s;
}

/// Velocity at time t, linear between samples and looped with period
/// `sig.duration()` outside the recording.
inline double signature_at(const Signature& sig, double t) {
    const double t0 = sig.t.front();
    const double period = sig.duration();
    double tau = std::fmod(t - t0, period);
    if (tau < 0.0) tau += period;
    tau += t0;
    if (tau >= sig.t.back()) {
        const double a = (tau - sig.t.back()) / (t0 + period - sig.t.back());
        return (1.0 - a) * sig.v.back() + a * sig.v.front();
    }
    const auto it = std::upper_bound(sig.t.begin(), sig.t.end(), tau);
    const auto i = static_cast<std::size_t>(it - sig.t.begin());
    if (i == 0) return sig.v.front();
    const double a = (tau - sig.t[i - 1]) / (sig.t[i] - sig.t[i - 1]);
    return (1.0 - a) * sig.v[i - 1] + a * sig.v[i];
}

namespace detail {

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch-Carlson
/// slopes with the three-point end conditions).
class Pchip {
public:
    Pchip(std::span<const double> x, std::span<const double> y) : x_(x.begin(), x.end()), y_(y.begin(), y.end()) {
        const std::size_t n = x_.size();
        d_.assign(n, 0.0);
        std::vector<double> h(n - 1), del(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            h[k] = x_[k + 1] - x_[k];
            del[k] = (y_[k + 1] - y_[k]) / h[k];
        }
        if (n == 2) {
            d_[0] = d_[1] = del[0];
            return;
        }
        for (std::size_t k = 1; k + 1 < n; ++k) {
            if (del[k - 1] * del[k] > 0.0) {
                const double w1 = 2.0 * h[k] + h[k - 1];
                const double w2 = h[k] + 2.0 * h[k - 1];
                d_[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        d_[0] = end_slope(h[0], h[1], del[0], del[1]);
        d_[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    }

    double operator()(double t) const {
        const auto it = std::upper_bound(x_.begin(), x_.end(), t);
        std::size_t k = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        k = std::min(k, x_.size() - 2);
        const double h = x_[k + 1] - x_[k];
        const double s = (t - x_[k]) / h;
        const double s2 = s * s, s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * y_[k] + (s3 - 2 * s2 + s) * h * d_[k] + (-2 * s3 + 3 * s2) * y_[k + 1] +
               (s3 - s2) * h * d_[k + 1];
    }

private:
    static double end_slope(double h0, double h1, double del0, double del1) {
        double d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
        if (std::signbit(d) != std::signbit(del0) || del0 == 0.0)
            d = 0.0;
        else if (std::signbit(del0) != std::signbit(del1) && std::abs(d) > std::abs(3.0 * del0))
            d = 3.0 * del0;
        return d;
    }

    std::vector<double> x_, y_, d_;
};

}  // namespace detail

/// Converts a position recording into a uniformly sampled velocity series:
/// shape-preserving cubic resampling, then central differences (one-sided at
/// the ends).
inline Signature velocity_from_positions(std::span<const double> t, std::span<const double> x, double target_rate,
                                         std::string label = {}) {
    if (t.size() != x.size() || t.size() < 3) throw InvalidArgument("velocity_from_positions: need >= 3 (t, x) pairs");
    if (!(target_rate > 0.0)) throw InvalidArgument("velocity_from_positions: target_rate must be positive");
    for (std::size_t i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw NonMonotonicTime("velocity_from_positions: timestamps must strictly increase");

    const double dt = 1.0 / target_rate;
    const auto n = static_cast<std::size_t>(std::floor((t.back() - t.front()) * target_rate + 1e-9)) + 1;
    if (n < 2) throw InvalidArgument("velocity_from_positions: recording shorter than one target sample interval");
    const detail::Pchip interp(t, x);
    std::vector<double> grid(n), pos(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid[i] = t.front() + static_cast<double>(i) * dt;
        pos[i] = interp(grid[i]);
    }
    Signature s;
    s.label = std::move(label);
    s.t = grid;
    s.v.resize(n);
    s.v[0] = (pos[1] - pos[0]) / dt;
    s.v[n - 1] = (pos[n - 1] - pos[n - 2]) / dt;
    for (std::size_t i = 1; i + 1 < n; ++i) s.v[i] = (pos[i + 1] - pos[i - 1]) / (2.0 * dt);
    return s;
}

inline double silverman_bandwidth(std::span<const double> samples) {
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= (n - 1.0);
    return 1.06 * std::sqrt(var) * std::pow(n, -0.2);
}

/// Gaussian kernel density on `grid_n` uniform points spanning
/// [min - 3h, max + 3h], renormalized to unit trapezoid mass.
inline VelocityPDF kde_pdf(std::span<const double> samples, int grid_n = 512,
                           std::optional<double> bandwidth = std::nullopt) {
    if (samples.size() < 2) throw InvalidArgument("kde_pdf: need at least two samples");
    if (grid_n < 2) throw InvalidArgument("kde_pdf: grid_n must be at least 2");
    for (double s : samples)
        if (!std::isfinite(s)) throw InvalidArgument("kde_pdf: samples must be finite");
    const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    double h = 0.0;
    if (bandwidth) {
        if (!(*bandwidth > 0.0)) throw InvalidArgument("kde_pdf: bandwidth must be positive");
        h = *bandwidth;
    } else {
        if (*lo_it == *hi_it) throw DegenerateSamples("kde_pdf: zero-variance samples; supply a bandwidth");
        h = silverman_bandwidth(samples);
    }
    const double lo = *lo_it - 3.0 * h, hi = *hi_it + 3.0 * h;
    const auto m = static_cast<std::size_t>(grid_n);
    VelocityPDF pdf;
    pdf.z.resize(m);
    pdf.p.assign(m, 0.0);
    const double dz = (hi - lo) / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i) pdf.z[i] = i + 1 == m ? hi : lo + static_cast<double>(i) * dz;

    // Kernel sum truncated at 8h; contributions beyond are below double precision.
    const double cutoff = 8.0 * h;
    for (double s : samples) {
        const auto first = static_cast<std::size_t>(std::max(0.0, std::floor((s - cutoff - lo) / dz)));
        const auto last = std::min(m - 1, static_cast<std::size_t>(std::max(0.0, std::ceil((s + cutoff - lo) / dz))));
        for (std::size_t i = first; i <= last; ++i) {
            const double r = (pdf.z[i] - s) / h;
            pdf.p[i] += std::exp(-0.5 * r * r);
        }
    }
    double mass = 0.0;
    for (std::size_t i = 1; i < m; ++i) mass += 0.5 * dz * (pdf.p[i] + pdf.p[i - 1]);
    for (double& p : pdf.p) p /= mass;
    return pdf;
}

inline VelocityPDF kde_pdf(const Signature& sig, int grid_n = 512, std::optional<double> bandwidth = std::nullopt) {
    return kde_pdf(std::span<const double>(sig.v), grid_n, bandwidth);
}

// ---------------------------------------------------------------------------
// Files

inline Signature read_signature_csv(const std::string& path) {
    auto table = csv::read_file(path, {"t", "v"});
    Signature s;
    s.t = std::move(table.columns[0]);
    s.v = std::move(table.columns[1]);
    s.label = path;
    try {
        s.validate();
    } catch (const Error& e) {
        throw SchemaViolation(path, e.what());
    }
    return s;
}

inline void write_signature_csv(const std::string& path, const Signature& s) {
    csv::write_file(path, {"t", "v"}, {&s.t, &s.v});
}

struct PositionRecording {
    std::vector<double> t;
    std::vector<double> x;
};

inline PositionRecording read_positions_csv(const std::string& path) {
    auto table = csv::read_file(path, {"t", "x"});
    return {std::move(table.columns[0]), std::move(table.columns[1])};
}

inline void write_positions_csv(const std::string& path, const PositionRecording& r) {
    csv::write_file(path, {"t", "x"}, {&r.t, &r.x});
}

}  // namespace mirror
