#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "mirror/errors.hpp"
#include "mirror/signature.hpp"

namespace mirror {

// ---------------------------------------------------------------------------
// Temporal correspondence

inline double rms_position_error(std::span<const double> x1, std::span<const double> x2, double range_length) {
    if (x1.size() != x2.size() || x1.empty()) throw LengthMismatch("rms_position_error: series must have equal nonzero length");
    if (!(range_length > 0.0)) throw InvalidArgument("rms_position_error: range length must be positive");
    double acc = 0.0;
    for (std::size_t k = 0; k < x1.size(); ++k) acc += (x1[k] - x2[k]) * (x1[k] - x2[k]);
    return std::sqrt(acc / static_cast<double>(x1.size())) / range_length;
}

// ---------------------------------------------------------------------------
// Earth mover's distance

namespace detail {

inline double interp_or_zero(const VelocityPDF& p, double z) {
    if (z < p.z.front() || z > p.z.back()) return 0.0;
    const auto it = std::upper_bound(p.z.begin(), p.z.end(), z);
    if (it == p.z.end()) return p.p.back();
    const auto i = static_cast<std::size_t>(it - p.z.begin());
    if (i == 0) return p.p.front();
    const double a = (z - p.z[i - 1]) / (p.z[i] - p.z[i - 1]);
    return (1.0 - a) * p.p[i - 1] + a * p.p[i];
}

inline std::vector<double> resample_cdf(const VelocityPDF& p, std::span<const double> grid) {
    const std::size_t n = grid.size();
    std::vector<double> dens(n);
    for (std::size_t i = 0; i < n; ++i) dens[i] = std::max(0.0, interp_or_zero(p, grid[i]));
    std::vector<double> cdf(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) cdf[i] = cdf[i - 1] + 0.5 * (grid[i] - grid[i - 1]) * (dens[i] + dens[i - 1]);
    const double mass = cdf.back();
    if (!(mass > 0.0)) throw EmptyGrid("emd: density has no mass on the common grid");
    for (double& c : cdf) c /= mass;
    return cdf;
}

}  // namespace detail

/// Normalized 1-D earth mover's distance: the integral of |CDF1 - CDF2| over
/// the union of both supports, divided by the length of that domain.
/// Both densities are linearly resampled onto a shared uniform grid.
inline double emd(const VelocityPDF& p1, const VelocityPDF& p2, int grid_n = 1024) {
    if (p1.z.size() < 2 || p2.z.size() < 2 || p1.z.size() != p1.p.size() || p2.z.size() != p2.p.size())
        throw EmptyGrid("emd: each density needs a grid of at least two points");
    const double lo = std::min(p1.z.front(), p2.z.front());
    const double hi = std::max(p1.z.back(), p2.z.back());
    if (!(hi > lo) || grid_n < 2) throw EmptyGrid("emd: common domain is empty");
    const auto n = static_cast<std::size_t>(grid_n);
    std::vector<double> grid(n);
    const double dz = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) grid[i] = i + 1 == n ? hi : lo + static_cast<double>(i) * dz;
    const auto c1 = detail::resample_cdf(p1, grid);
    const auto c2 = detail::resample_cdf(p2, grid);
    double acc = 0.0;
    for (std::size_t i = 1; i < n; ++i)
        acc += 0.5 * (grid[i] - grid[i - 1]) * (std::abs(c1[i] - c2[i]) + std::abs(c1[i - 1] - c2[i - 1]));
    return std::clamp(acc / (hi - lo), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Relative phase

struct PhaseSeries {
    std::vector<double> t;
    std::vector<double> phi;
};

struct WaveletOptions {
    double cutoff = 1.0;        ///< highest analysed frequency (Hz)
    double omega0 = 6.0;        ///< Morlet centre frequency
    int voices_per_octave = 12;
    double scale_smoothing_octaves = 0.6;
};

namespace detail {

using cplx = std::complex<double>;

inline std::size_t next_pow2(std::size_t n) {
    std::size_t m = 1;
    while (m < n) m <<= 1;
    return m;
}

inline std::vector<double> standardized(std::span<const double> x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(x.size()));
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sd > 0.0 ? (x[i] - mean) / sd : 0.0;
    return out;
}

/// Angular frequencies of an m-point FFT with sample spacing dt.
inline std::vector<double> fft_omegas(std::size_t m, double dt) {
    std::vector<double> w(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double kk = k <= m / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(m);
        w[k] = 2.0 * std::numbers::pi * kk / (static_cast<double>(m) * dt);
    }
    return w;
}

}  // namespace detail

/// Relative phase of x1 with respect to x2 from smoothed Morlet cross-spectra.
///
/// Scales cover [4/duration, cutoff] Hz. The cross-spectrum W1 conj(W2) and
/// both auto-spectra are smoothed in time (Gaussian, width = scale) and in
/// scale (boxcar), giving the squared coherence R^2. At each instant the
/// phase is the argument of the R^2-weighted sum of smoothed cross-spectra
/// over the scales outside the cone of influence; instants with no such scale
/// are dropped. Positive phase means x1 leads x2.
inline PhaseSeries wavelet_relative_phase(std::span<const double> x1, std::span<const double> x2, double fs,
                                          const WaveletOptions& opt = {}) {
    using detail::cplx;
    if (x1.size() != x2.size()) throw LengthMismatch("wavelet_relative_phase: series lengths differ");
    if (!(fs > 0.0) || !(opt.cutoff > 0.0)) throw InvalidArgument("wavelet_relative_phase: fs and cutoff must be positive");
    const std::size_t n = x1.size();
    const double dt = 1.0 / fs;
    const double duration = static_cast<double>(n) * dt;
    if (n < 4 || duration < 4.0 / opt.cutoff)
        throw TooShort("wavelet_relative_phase: need at least 4/cutoff seconds of data");

    const double fourier_factor = 4.0 * std::numbers::pi / (opt.omega0 + std::sqrt(2.0 + opt.omega0 * opt.omega0));
    const double s_min = 1.0 / (opt.cutoff * fourier_factor);
    const double s_max = 1.0 / ((4.0 / duration) * fourier_factor);
    const double dj = 1.0 / opt.voices_per_octave;
    const int n_scales = static_cast<int>(std::floor(std::log2(s_max / s_min) / dj + 1e-9)) + 1;
    std::vector<double> scales(static_cast<std::size_t>(n_scales));
    for (int j = 0; j < n_scales; ++j) scales[static_cast<std::size_t>(j)] = s_min * std::pow(2.0, j * dj);

    const std::size_t m = detail::next_pow2(2 * n);
    const auto omegas = detail::fft_omegas(m, dt);
    Eigen::FFT<double> fft;

    auto spectrum = [&](std::span<const double> x) {
        const auto z = detail::standardized(x);
        std::vector<cplx> in(m, cplx{0.0, 0.0}), out;
        for (std::size_t i = 0; i < n; ++i) in[i] = z[i];
        fft.fwd(out, in);
        return out;
    };
    const auto X1 = spectrum(x1);
    const auto X2 = spectrum(x2);

    const double norm = std::pow(std::numbers::pi, -0.25);
    auto transform = [&](const std::vector<cplx>& X, double s) {
        std::vector<cplx> prod(m, cplx{0.0, 0.0}), out;
        const double amp = norm * std::sqrt(2.0 * std::numbers::pi * s / dt);
        for (std::size_t k = 0; k < m; ++k) {
            if (omegas[k] <= 0.0) continue;
            const double a = s * omegas[k] - opt.omega0;
            prod[k] = X[k] * (amp * std::exp(-0.5 * a * a));
        }
        fft.inv(out, prod);
        out.resize(n);
        return out;
    };
    auto smooth_time = [&](const std::vector<cplx>& q, double s) {
        std::vector<cplx> in(m, cplx{0.0, 0.0}), spec, out;
        for (std::size_t i = 0; i < n; ++i) in[i] = q[i];
        fft.fwd(spec, in);
        for (std::size_t k = 0; k < m; ++k) spec[k] *= std::exp(-0.5 * s * s * omegas[k] * omegas[k]);
        fft.inv(out, spec);
        out.resize(n);
        return out;
    };

    const auto ns = static_cast<std::size_t>(n_scales);
    std::vector<std::vector<cplx>> s12(ns), s11(ns), s22(ns);
    for (std::size_t j = 0; j < ns; ++j) {
        const double s = scales[j];
        const auto w1 = transform(X1, s);
        const auto w2 = transform(X2, s);
        std::vector<cplx> c12(n), a1(n), a2(n);
        for (std::size_t i = 0; i < n; ++i) {
            c12[i] = w1[i] * std::conj(w2[i]) / s;
            a1[i] = std::norm(w1[i]) / s;
            a2[i] = std::norm(w2[i]) / s;
        }
        s12[j] = smooth_time(c12, s);
        s11[j] = smooth_time(a1, s);
        s22[j] = smooth_time(a2, s);
    }

    // Boxcar over scale: full weight inside, fractional weight on the outermost voices.
    const double width = opt.scale_smoothing_octaves * opt.voices_per_octave;
    const int half = static_cast<int>(std::floor(width / 2.0));
    const double edge = (width - (2 * half + 1)) / 2.0;
    auto boxcar = [&](const std::vector<std::vector<cplx>>& q, std::size_t j, std::size_t i) {
        cplx acc{0.0, 0.0};
        double wsum = 0.0;
        for (int d = -half - 1; d <= half + 1; ++d) {
            const double w = std::abs(d) <= half ? 1.0 : edge;
            const int jj = static_cast<int>(j) + d;
            if (w <= 0.0 || jj < 0 || jj >= n_scales) continue;
            acc += w * q[static_cast<std::size_t>(jj)][i];
            wsum += w;
        }
        return acc / wsum;
    };

    PhaseSeries out;
    for (std::size_t i = 0; i < n; ++i) {
        const double edge_dist = static_cast<double>(std::min(i, n - 1 - i)) * dt;
        cplx acc{0.0, 0.0};
        bool any = false;
        for (std::size_t j = 0; j < ns; ++j) {
            if (std::sqrt(2.0) * scales[j] > edge_dist) continue;
            const cplx c = boxcar(s12, j, i);
            const double p1 = boxcar(s11, j, i).real();
            const double p2 = boxcar(s22, j, i).real();
            const double r2 = p1 > 0.0 && p2 > 0.0 ? std::norm(c) / (p1 * p2) : 0.0;
            acc += r2 * c;
            any = true;
        }
        if (!any) continue;
        out.t.push_back(static_cast<double>(i) * dt);
        out.phi.push_back(std::arg(acc));
    }
    return out;
}

inline double circular_mean(std::span<const double> phi) {
    double s = 0.0, c = 0.0;
    for (double p : phi) {
        s += std::sin(p);
        c += std::cos(p);
    }
    return std::atan2(s, c);
}

/// sqrt(-2 ln R) with R the mean resultant length.
inline double circular_std(std::span<const double> phi) {
    if (phi.empty()) return 0.0;
    double s = 0.0, c = 0.0;
    for (double p : phi) {
        s += std::sin(p);
        c += std::cos(p);
    }
    const double r = std::min(1.0, std::hypot(s, c) / static_cast<double>(phi.size()));
    return r > 0.0 ? std::sqrt(-2.0 * std::log(r)) : std::numeric_limits<double>::infinity();
}

/// Density on a uniform angular grid over [-pi, pi] (both ends included).
struct PhasePDF {
    std::vector<double> grid;
    std::vector<double> density;

    double mode() const {
        const auto it = std::max_element(density.begin(), density.end());
        return grid[static_cast<std::size_t>(it - density.begin())];
    }
};

/// Wrapped-Gaussian kernel density of a phase series. The default bandwidth
/// is Silverman's rule on the circular standard deviation, floored at 0.05 rad.
inline PhasePDF phase_pdf(const PhaseSeries& ps, int grid_n = 360, std::optional<double> bandwidth = std::nullopt) {
    if (ps.phi.empty()) throw InvalidArgument("phase_pdf: empty phase series");
    if (grid_n < 3) throw InvalidArgument("phase_pdf: grid_n must be at least 3");
    const double two_pi = 2.0 * std::numbers::pi;
    double h = 0.0;
    if (bandwidth) {
        h = *bandwidth;
    } else {
        const double sd = circular_std(ps.phi);
        h = std::isfinite(sd) ? 1.06 * sd * std::pow(static_cast<double>(ps.phi.size()), -0.2) : 1.0;
        h = std::max(h, 0.05);
    }
    if (!(h > 0.0)) throw InvalidArgument("phase_pdf: bandwidth must be positive");

    const auto m = static_cast<std::size_t>(grid_n);
    PhasePDF pdf;
    pdf.grid.resize(m);
    pdf.density.assign(m, 0.0);
    const double dz = two_pi / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i)
        pdf.grid[i] = i + 1 == m ? std::numbers::pi : -std::numbers::pi + static_cast<double>(i) * dz;

    // Bin the phases on the grid cells first; the kernel sum then runs over cells.
    std::vector<double> counts(m - 1, 0.0);
    std::vector<double> centers(m - 1, 0.0), sums(m - 1, 0.0);
    for (double p : ps.phi) {
        double w = std::remainder(p, two_pi);
        auto cell = static_cast<std::size_t>(std::floor((w + std::numbers::pi) / dz));
        cell = std::min(cell, m - 2);
        counts[cell] += 1.0;
        sums[cell] += w;
    }
    for (std::size_t c = 0; c + 1 < m; ++c) {
        if (counts[c] == 0.0) continue;
        const double mu = sums[c] / counts[c];
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int k = -3; k <= 3; ++k) {
                const double r = (pdf.grid[i] - mu + k * two_pi) / h;
                acc += std::exp(-0.5 * r * r);
            }
            pdf.density[i] += counts[c] * acc;
        }
    }
    // Endpoints are the same angle.
    const double ends = 0.5 * (pdf.density.front() + pdf.density.back());
    pdf.density.front() = pdf.density.back() = ends;
    double mass = 0.0;
    for (std::size_t i = 1; i < m; ++i) mass += 0.5 * dz * (pdf.density[i] + pdf.density[i - 1]);
    for (double& d : pdf.density) d /= mass;
    return pdf;
}

/// Phase density as a VelocityPDF-shaped object so that `emd` applies.
inline VelocityPDF as_density(const PhasePDF& p) { return {p.grid, p.density}; }

// ---------------------------------------------------------------------------
// Multidimensional scaling

/// Symmetric, zero-diagonal, non-negative dissimilarity matrix.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(Eigen::MatrixXd d) : d_(std::move(d)) { validate(); }

    static DistanceMatrix from_points(const Eigen::MatrixXd& points) {
        const auto n = points.rows();
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (points.row(i) - points.row(j)).norm();
        return DistanceMatrix(std::move(d));
    }

    Eigen::Index size() const { return d_.rows(); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return d_(i, j); }
    const Eigen::MatrixXd& matrix() const { return d_; }

private:
    void validate() const {
        if (d_.rows() != d_.cols()) throw InvalidArgument("distance matrix must be square");
        for (Eigen::Index i = 0; i < d_.rows(); ++i) {
            if (d_(i, i) != 0.0) throw InvalidArgument("distance matrix must have a zero diagonal");
            for (Eigen::Index j = 0; j < d_.cols(); ++j) {
                if (!std::isfinite(d_(i, j)) || d_(i, j) < 0.0)
                    throw InvalidArgument("distance matrix entries must be finite and non-negative");
                if (std::abs(d_(i, j) - d_(j, i)) > 1e-12) throw InvalidArgument("distance matrix must be symmetric");
            }
        }
    }

    Eigen::MatrixXd d_;
};

/// Torgerson scaling. Negative eigenvalues are clipped to zero; each axis is
/// oriented so that its largest-magnitude coordinate is positive.
inline Eigen::MatrixXd classical_mds(const DistanceMatrix& dm, int dim = 2) {
    const Eigen::Index n = dm.size();
    if (dim < 1 || n < dim) throw InvalidArgument("classical_mds: need at least `dim` points");
    const Eigen::MatrixXd d2 = dm.matrix().array().square().matrix();
    const Eigen::MatrixXd j = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    Eigen::MatrixXd b = -0.5 * j * d2 * j;
    b = 0.5 * (b + b.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
    Eigen::MatrixXd coords(n, dim);
    for (int a = 0; a < dim; ++a) {
        const Eigen::Index col = n - 1 - a;  // eigenvalues ascend
        const double lambda = std::max(0.0, eig.eigenvalues()(col));
        Eigen::VectorXd axis = eig.eigenvectors().col(col) * std::sqrt(lambda);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0.0) axis = -axis;
        coords.col(a) = axis;
    }
    return coords;
}

// ---------------------------------------------------------------------------
// Box-plot summaries

struct BoxStats {
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    double whisker_lo = 0.0;
    double whisker_hi = 0.0;
    std::vector<double> outliers;
};

/// Type-7 (linear interpolation) quantile of already sorted values.
inline double sorted_quantile(std::span<const double> v, double q) {
    if (v.empty()) throw InvalidArgument("sorted_quantile: no values");
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline BoxStats summary_stats(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("summary_stats: no values");
    std::vector<double> v(values.begin(), values.end());
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidArgument("summary_stats: values must be finite");
    std::sort(v.begin(), v.end());
    auto quantile = [&v](double q) { return sorted_quantile(v, q); };
    BoxStats b;
    b.median = quantile(0.5);
    b.q25 = quantile(0.25);
    b.q75 = quantile(0.75);
    const double iqr = b.q75 - b.q25;
    const double lo_fence = b.q25 - 1.5 * iqr, hi_fence = b.q75 + 1.5 * iqr;
    b.whisker_lo = b.q25;
    b.whisker_hi = b.q75;
    for (double x : v) {
        if (x < lo_fence || x > hi_fence) {
            b.outliers.push_back(x);
            continue;
        }
        b.whisker_lo = std::min(b.whisker_lo, x);
        b.whisker_hi = std::max(b.whisker_hi, x);
    }
    return b;
}

}  // namespace mirror
