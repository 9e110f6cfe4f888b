#pragma once

/// @file motion.hpp
/// Motion operators M_i built from consecutive frame estimates:
/// optical flow with bilinear warping (M1), regularized rank-1 DMD (M2) and
/// patchwise rank-1 DMD (M3).

#include "dyntomo/core.hpp"
#include "dyntomo/linops.hpp"
#include "dyntomo/mmgks.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace dyntomo {

/// Per-pixel displacement in pixels per frame. `sx` is horizontal (along
/// columns), `sy` vertical (along rows).
struct VelocityField {
    Vector sx;
    Vector sy;

    /// [sx; sy]
    Vector stacked() const {
        Vector s(sx.size() + sy.size());
        s << sx, sy;
        return s;
    }
};

enum class MotionModel { Identity, M1, M2, M3 };

struct MotionConfig {
    MotionModel model = MotionModel::Identity;
    double zeta = 0.0;  ///< DMD Tikhonov weight
    Index z_x = 4;      ///< patch height (M3)
    Index z_y = 4;      ///< patch width (M3)
    MMGKSOptions of;    ///< velocity solver settings (M1)
};

/// Spatial derivative system of the optical-flow constraint
/// V s = -T with V = [diag(∂_j x_prev), diag(∂_i x_prev)] and T = x_next - x_prev.
struct OFCSystem {
    LinearOperator V;
    Vector T;
};

namespace detail {

/// Central differences in the interior, one-sided at the ends.
inline double derivative(const Vector& x, GridShape g, Index i, Index j, bool along_cols) {
    const Index n = along_cols ? g.cols : g.rows;
    const Index k = along_cols ? j : i;
    if (n < 2) return 0.0;
    auto at = [&](Index kk) { return along_cols ? x(g.index(i, kk)) : x(g.index(kk, j)); };
    if (k == 0) return at(1) - at(0);
    if (k == n - 1) return at(n - 1) - at(n - 2);
    return 0.5 * (at(k + 1) - at(k - 1));
}

}  // namespace detail

inline OFCSystem ofc_system(GridShape grid, const Vector& x_prev, const Vector& x_next) {
    require_shape(x_prev.size() == grid.size() && x_next.size() == grid.size(), "ofc_system: image size mismatch");
    const Index n = grid.size();
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(2 * n));
    for (Index i = 0; i < grid.rows; ++i) {
        for (Index j = 0; j < grid.cols; ++j) {
            const Index p = grid.index(i, j);
            trip.push_back({p, p, detail::derivative(x_prev, grid, i, j, true)});
            trip.push_back({p, n + p, detail::derivative(x_prev, grid, i, j, false)});
        }
    }
    return {LinearOperator::sparse(SparseMatrix::from_triplets(n, 2 * n, std::move(trip))), x_next - x_prev};
}

/// Θ = blockdiag(L2, L2) with L2 = [I ⊗ L_y; L_x ⊗ I], L forward differences
/// whose last row is zero.
inline LinearOperator gradient_regularizer(GridShape grid) {
    const Index n = grid.size();
    std::vector<Triplet> trip;
    for (Index comp = 0; comp < 2; ++comp) {
        const Index row0 = comp * 2 * n;
        const Index col0 = comp * n;
        for (Index i = 0; i < grid.rows; ++i) {
            for (Index j = 0; j < grid.cols; ++j) {
                const Index p = grid.index(i, j);
                if (j + 1 < grid.cols) {
                    trip.push_back({row0 + p, col0 + p, -1.0});
                    trip.push_back({row0 + p, col0 + grid.index(i, j + 1), 1.0});
                }
                if (i + 1 < grid.rows) {
                    trip.push_back({row0 + n + p, col0 + p, -1.0});
                    trip.push_back({row0 + n + p, col0 + grid.index(i + 1, j), 1.0});
                }
            }
        }
    }
    return LinearOperator::sparse(SparseMatrix::from_triplets(4 * n, 2 * n, std::move(trip)));
}

/// min ‖V s + T‖² + λ‖Θ s‖₁ through MMGKS.
inline VelocityField estimate_velocity(GridShape grid, const Vector& x_prev, const Vector& x_next,
                                       const MMGKSOptions& opts = {}) {
    const auto sys = ofc_system(grid, x_prev, x_next);
    const Index n = grid.size();
    VelocityField v{Vector::Zero(n), Vector::Zero(n)};
    if (sys.T.norm() == 0.0) return v;
    const auto sol = mmgks_solve({sys.V, gradient_regularizer(grid), -sys.T, opts});
    if (!sol.s.allFinite()) throw NumericError("estimate_velocity: solver produced non-finite velocities");
    v.sx = sol.s.head(n);
    v.sy = sol.s.tail(n);
    return v;
}

/// Backward bilinear warp: row p samples the source image at
/// (i - sy_p, j - sx_p), clamped to the image rectangle.
inline LinearOperator build_warp(GridShape grid, const VelocityField& s) {
    const Index n = grid.size();
    require_shape(s.sx.size() == n && s.sy.size() == n, "build_warp: velocity field size mismatch");
    if (!s.sx.allFinite() || !s.sy.allFinite()) throw NumericError("build_warp: non-finite velocities");
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(4 * n));
    const double imax = static_cast<double>(grid.rows - 1);
    const double jmax = static_cast<double>(grid.cols - 1);
    for (Index i = 0; i < grid.rows; ++i) {
        for (Index j = 0; j < grid.cols; ++j) {
            const Index p = grid.index(i, j);
            const double ci = std::clamp(static_cast<double>(i) - s.sy(p), 0.0, imax);
            const double cj = std::clamp(static_cast<double>(j) - s.sx(p), 0.0, jmax);
            const Index i0 = std::min(static_cast<Index>(std::floor(ci)), grid.rows - 1);
            const Index j0 = std::min(static_cast<Index>(std::floor(cj)), grid.cols - 1);
            const Index i1 = std::min(i0 + 1, grid.rows - 1);
            const Index j1 = std::min(j0 + 1, grid.cols - 1);
            const double fi = ci - static_cast<double>(i0);
            const double fj = cj - static_cast<double>(j0);
            trip.push_back({p, grid.index(i0, j0), (1.0 - fi) * (1.0 - fj)});
            trip.push_back({p, grid.index(i0, j1), (1.0 - fi) * fj});
            trip.push_back({p, grid.index(i1, j0), fi * (1.0 - fj)});
            trip.push_back({p, grid.index(i1, j1), fi * fj});
        }
    }
    return LinearOperator::warp(SparseMatrix::from_triplets(n, n, std::move(trip)));
}

/// x_next x_prevᵀ / (‖x_prev‖² + ζ).
inline LinearOperator dmd_rank1(const Vector& x_prev, const Vector& x_next, double zeta) {
    require_shape(x_prev.size() == x_next.size(), "dmd_rank1: size mismatch");
    if (zeta < 0.0) throw ConfigError("zeta", "must be nonnegative");
    const double denom = x_prev.squaredNorm() + zeta;
    if (!(denom > 0.0)) throw NumericError("dmd_rank1: degenerate input, x_prev is zero and zeta is 0");
    return LinearOperator::rank1(x_next, x_prev, denom);
}

/// Σ_j S_j x_next (S_j x_prev)ᵀ / (‖S_j x_prev‖² + ζ) over z_x × z_y patches.
inline LinearOperator dmd_patchwise(GridShape grid, const Vector& x_prev, const Vector& x_next, double zeta,
                                    Index z_x, Index z_y) {
    return LinearOperator::patch_rank1(grid, z_x, z_y, x_next, x_prev, zeta);
}

inline void validate(const MotionConfig& cfg, GridShape grid) {
    if (cfg.zeta < 0.0) throw ConfigError("zeta", "must be nonnegative");
    if (cfg.model == MotionModel::M3) {
        if (cfg.z_x <= 0 || grid.rows % cfg.z_x != 0) throw ConfigError("z_x", "patch height must divide n_x");
        if (cfg.z_y <= 0 || grid.cols % cfg.z_y != 0) throw ConfigError("z_y", "patch width must divide n_y");
    }
}

/// M for one transition x_prev → x_next.
inline LinearOperator build_motion(GridShape grid, const Vector& x_prev, const Vector& x_next,
                                   const MotionConfig& cfg) {
    switch (cfg.model) {
        case MotionModel::Identity:
            return LinearOperator::identity(grid.size());
        case MotionModel::M1:
            return build_warp(grid, estimate_velocity(grid, x_prev, x_next, cfg.of));
        case MotionModel::M2:
            return dmd_rank1(x_prev, x_next, cfg.zeta);
        case MotionModel::M3:
            return dmd_patchwise(grid, x_prev, x_next, cfg.zeta, cfg.z_x, cfg.z_y);
    }
    throw ConfigError("motion.model", "unknown model");
}

/// M_1..M_T from a trajectory x_0..x_T.
inline std::vector<LinearOperator> update_motions(GridShape grid, const std::vector<Vector>& x,
                                                  const MotionConfig& cfg) {
    validate(cfg, grid);
    require_shape(!x.empty(), "update_motions: empty trajectory");
    std::vector<LinearOperator> ms;
    for (std::size_t i = 1; i < x.size(); ++i) ms.push_back(build_motion(grid, x[i - 1], x[i], cfg));
    return ms;
}

}  // namespace dyntomo
