#pragma once

/// @file radon.hpp
/// Parallel-beam Radon operators (exact ray/pixel intersection lengths) and
/// noisy sinogram simulation.
///
/// Geometry: unit pixels centred on the origin. Pixel (i, j) has centre
/// u = j + 0.5 - n_y/2 (horizontal) and v = i + 0.5 - n_x/2 (vertical).
/// Ray k at angle θ is the line {p : p · (cos θ, sin θ) = t_k}, with
/// detector positions t_k spaced by 1 and aligned so that θ = 0 passes
/// through column centres.

#include "dyntomo/core.hpp"
#include "dyntomo/linops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace dyntomo {

struct ScanGeometry {
    GridShape grid;
    /// One list of angles (radians, in [0, π)) per frame.
    std::vector<std::vector<double>> angles_per_frame;
    Index detector_count = 0;

    Index frame_count() const { return static_cast<Index>(angles_per_frame.size()); }
    Index rows(Index t) const {
        return static_cast<Index>(angles_per_frame.at(static_cast<std::size_t>(t)).size()) * detector_count;
    }
};

/// ceil(sqrt(n_x² + n_y²)), enough detectors to cover the image diagonal.
inline Index default_detector_count(GridShape grid) {
    const double diag = std::sqrt(static_cast<double>(grid.rows * grid.rows + grid.cols * grid.cols));
    Index d = static_cast<Index>(std::ceil(diag - 1e-12));
    return std::max<Index>(d, 1);
}

/// `n_angles` equispaced angles in [0, π) per frame, frame t rotated by
/// t · rotation_offset (mod π). detector_count = 0 selects the default.
inline ScanGeometry equispaced_geometry(GridShape grid, Index frames, Index n_angles,
                                        double rotation_offset = 0.0, Index detector_count = 0) {
    if (grid.rows <= 0 || grid.cols <= 0) throw ConfigError("geometry.grid", "must be positive");
    if (frames <= 0) throw ConfigError("geometry.frames", "must be positive");
    if (n_angles <= 0) throw ConfigError("geometry.n_angles", "must be positive");
    if (detector_count < 0) throw ConfigError("geometry.detector_count", "must be nonnegative");
    ScanGeometry g;
    g.grid = grid;
    g.detector_count = detector_count == 0 ? default_detector_count(grid) : detector_count;
    const double pi = std::numbers::pi;
    for (Index t = 0; t < frames; ++t) {
        std::vector<double> a;
        for (Index k = 0; k < n_angles; ++k) {
            double th = std::fmod(pi * static_cast<double>(k) / static_cast<double>(n_angles) +
                                      static_cast<double>(t) * rotation_offset,
                                  pi);
            if (th < 0.0) th += pi;
            a.push_back(th);
        }
        g.angles_per_frame.push_back(std::move(a));
    }
    return g;
}

/// Detector offset t_k for detector k.
inline double detector_position(Index k, Index detector_count, Index n_y) {
    const double shift = ((detector_count - n_y) % 2 != 0) ? 0.5 : 0.0;
    return static_cast<double>(k) - 0.5 * static_cast<double>(detector_count - 1) + shift;
}

namespace detail {

/// Appends (row, pixel, length) triplets for one ray.
inline void trace_ray(GridShape grid, double theta, double t, Index row, std::vector<Triplet>& out) {
    constexpr double kAxisEps = 1e-12;
    constexpr double kMinSegment = 1e-14;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double p0u = t * c;
    const double p0v = t * s;
    double du = -s;
    double dv = c;
    if (std::abs(du) < kAxisEps) du = 0.0;
    if (std::abs(dv) < kAxisEps) dv = 0.0;
    const double hu = 0.5 * static_cast<double>(grid.cols);
    const double hv = 0.5 * static_cast<double>(grid.rows);

    double smin = -std::numeric_limits<double>::infinity();
    double smax = std::numeric_limits<double>::infinity();
    auto clip = [&](double p0, double d, double half) {
        if (d == 0.0) {
            if (p0 < -half || p0 > half) {
                smin = 1.0;
                smax = 0.0;
            }
            return;
        }
        double a = (-half - p0) / d;
        double b = (half - p0) / d;
        if (a > b) std::swap(a, b);
        smin = std::max(smin, a);
        smax = std::min(smax, b);
    };
    clip(p0u, du, hu);
    clip(p0v, dv, hv);
    if (!(smax - smin > kMinSegment)) return;

    std::vector<double> params;
    params.reserve(static_cast<std::size_t>(grid.rows + grid.cols + 2));
    params.push_back(smin);
    params.push_back(smax);
    if (du != 0.0) {
        for (Index k = 0; k <= grid.cols; ++k) {
            const double sk = (static_cast<double>(k) - hu - p0u) / du;
            if (sk > smin && sk < smax) params.push_back(sk);
        }
    }
    if (dv != 0.0) {
        for (Index k = 0; k <= grid.rows; ++k) {
            const double sk = (static_cast<double>(k) - hv - p0v) / dv;
            if (sk > smin && sk < smax) params.push_back(sk);
        }
    }
    std::sort(params.begin(), params.end());
    for (std::size_t k = 0; k + 1 < params.size(); ++k) {
        const double len = params[k + 1] - params[k];
        if (len < kMinSegment) continue;
        const double mid = 0.5 * (params[k] + params[k + 1]);
        const double u = p0u + mid * du;
        const double v = p0v + mid * dv;
        const Index j = std::clamp<Index>(static_cast<Index>(std::floor(u + hu)), 0, grid.cols - 1);
        const Index i = std::clamp<Index>(static_cast<Index>(std::floor(v + hv)), 0, grid.rows - 1);
        out.push_back({row, grid.index(i, j), len});
    }
}

}  // namespace detail

/// H_t: rows indexed angle_index * detector_count + detector, columns are pixels.
inline LinearOperator build_operator(const ScanGeometry& geom, Index t) {
    if (t < 0 || t >= geom.frame_count()) throw ConfigError("geometry.frame", "timestep out of range");
    const auto& angles = geom.angles_per_frame[static_cast<std::size_t>(t)];
    if (angles.empty()) throw ConfigError("geometry.angles", "empty angle list at frame " + std::to_string(t));
    if (geom.detector_count < 1) throw ConfigError("geometry.detector_count", "must be at least 1");
    const double pi = std::numbers::pi;
    std::vector<Triplet> trip;
    for (std::size_t a = 0; a < angles.size(); ++a) {
        const double th = angles[a];
        if (!(th >= 0.0 && th < pi)) throw ConfigError("geometry.angles", "angle outside [0, pi)");
        for (Index k = 0; k < geom.detector_count; ++k) {
            const Index row = static_cast<Index>(a) * geom.detector_count + k;
            detail::trace_ray(geom.grid, th, detector_position(k, geom.detector_count, geom.grid.cols), row, trip);
        }
    }
    return LinearOperator::sparse(
        SparseMatrix::from_triplets(geom.rows(t), geom.grid.size(), std::move(trip)));
}

inline std::vector<LinearOperator> build_operators(const ScanGeometry& geom) {
    std::vector<LinearOperator> ops;
    for (Index t = 0; t < geom.frame_count(); ++t) ops.push_back(build_operator(geom, t));
    return ops;
}

struct SinogramSet {
    std::vector<Vector> y;
    double noise_level = 0.0;
};

/// y_t = H_t x_t + ε_t. One Gaussian draw over all frames is rescaled so the
/// realized ‖y - Hx‖ / ‖Hx‖ over the concatenated data equals σ_NL.
inline SinogramSet simulate_sinograms(const ImageSequence& x, const std::vector<LinearOperator>& ops,
                                      double sigma_nl, std::uint64_t seed) {
    if (!(sigma_nl >= 0.0)) throw ConfigError("noise.sigma_nl", "must be nonnegative");
    require_shape(ops.size() == x.frames.size(), "simulate_sinograms: one operator per frame required");
    SinogramSet out;
    out.noise_level = sigma_nl;
    double signal_sq = 0.0;
    for (std::size_t t = 0; t < ops.size(); ++t) {
        out.y.push_back(ops[t].apply(x.frames[t]));
        signal_sq += out.y.back().squaredNorm();
    }
    if (sigma_nl == 0.0 || signal_sq == 0.0) return out;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> eps;
    double eps_sq = 0.0;
    for (const auto& yt : out.y) {
        Vector e(yt.size());
        for (Index k = 0; k < e.size(); ++k) e(k) = normal(rng);
        eps_sq += e.squaredNorm();
        eps.push_back(std::move(e));
    }
    if (eps_sq == 0.0) return out;
    const double scale = sigma_nl * std::sqrt(signal_sq) / std::sqrt(eps_sq);
    for (std::size_t t = 0; t < out.y.size(); ++t) out.y[t] += scale * eps[t];
    return out;
}

/// Convenience overload building the operators from geometry.
inline SinogramSet simulate_sinograms(const ImageSequence& x, const ScanGeometry& geom, double sigma_nl,
                                      std::uint64_t seed) {
    require_shape(x.grid == geom.grid, "simulate_sinograms: image grid does not match geometry");
    require_shape(x.frame_count() == geom.frame_count(), "simulate_sinograms: frame count does not match geometry");
    return simulate_sinograms(x, build_operators(geom), sigma_nl, seed);
}

}  // namespace dyntomo
