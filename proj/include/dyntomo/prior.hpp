#pragma once

/// @file prior.hpp
/// Squared-exponential prior covariance and its leading-mode projection basis.
///
/// On a regular grid the SE kernel factors over the two axes,
/// Σ = α² K_x ⊗ K_y, so the eigenpairs of Σ are products of the eigenpairs
/// of two small one-dimensional matrices.

#include "dyntomo/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace dyntomo {

struct PriorConfig {
    double alpha = 1.0;  ///< marginal standard deviation
    double ell = 1.0;    ///< correlation length, pixels
    Index r = 1;         ///< reduced dimension
};

/// P_r = U_r S_r^{1/2}; columns ordered by descending eigenvalue.
struct ProjectionBasis {
    GridShape grid;
    Matrix P;
    Vector eigenvalues;
    double alpha = 1.0;
    double ell = 1.0;

    Index rank() const { return P.cols(); }
    Index state_size() const { return P.rows(); }
};

inline void validate(const PriorConfig& cfg, GridShape grid) {
    if (!(cfg.alpha > 0.0)) throw ConfigError("prior.alpha", "must be positive");
    if (!(cfg.ell > 0.0)) throw ConfigError("prior.ell", "must be positive");
    if (cfg.r < 1 || cfg.r > grid.size())
        throw ConfigError("prior.r", "must lie in [1, " + std::to_string(grid.size()) + "]");
}

/// α² exp(-d² / (2ℓ²)) with d the Euclidean distance between pixel centres.
inline double se_covariance_entry(GridShape grid, Index p, Index q, double alpha, double ell) {
    const double di = static_cast<double>(p / grid.cols - q / grid.cols);
    const double dj = static_cast<double>(p % grid.cols - q % grid.cols);
    return alpha * alpha * std::exp(-(di * di + dj * dj) / (2.0 * ell * ell));
}

/// n × n one-dimensional SE correlation matrix (unit variance).
inline Matrix se_kernel_1d(Index n, double ell) {
    Matrix k(n, n);
    for (Index a = 0; a < n; ++a) {
        for (Index b = 0; b < n; ++b) {
            const double d = static_cast<double>(a - b);
            k(a, b) = std::exp(-d * d / (2.0 * ell * ell));
        }
    }
    return k;
}

namespace detail {

/// Eigenpairs sorted descending, negatives clipped to zero, first nonzero
/// entry of every eigenvector made positive.
inline void sorted_eigen(const Matrix& k, Vector& values, Matrix& vectors) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(k);
    if (es.info() != Eigen::Success) throw NumericError("prior: 1-D eigendecomposition failed");
    const Index n = k.rows();
    values.resize(n);
    vectors.resize(n, n);
    for (Index a = 0; a < n; ++a) {
        const Index src = n - 1 - a;
        values(a) = std::max(es.eigenvalues()(src), 0.0);
        Vector v = es.eigenvectors().col(src);
        const double thresh = 1e-12 * v.cwiseAbs().maxCoeff();
        for (Index p = 0; p < n; ++p) {
            if (std::abs(v(p)) > thresh) {
                if (v(p) < 0.0) v = -v;
                break;
            }
        }
        vectors.col(a) = v;
    }
}

}  // namespace detail

inline ProjectionBasis build_projection(GridShape grid, const PriorConfig& cfg) {
    validate(cfg, grid);
    Vector lx, ly;
    Matrix ux, uy;
    detail::sorted_eigen(se_kernel_1d(grid.rows, cfg.ell), lx, ux);
    detail::sorted_eigen(se_kernel_1d(grid.cols, cfg.ell), ly, uy);

    struct Pair {
        double value;
        Index a;
        Index b;
    };
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(grid.size()));
    const double a2 = cfg.alpha * cfg.alpha;
    for (Index a = 0; a < grid.rows; ++a)
        for (Index b = 0; b < grid.cols; ++b) pairs.push_back({a2 * lx(a) * ly(b), a, b});
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& p, const Pair& q) { return p.value > q.value; });

    ProjectionBasis basis;
    basis.grid = grid;
    basis.alpha = cfg.alpha;
    basis.ell = cfg.ell;
    basis.P.resize(grid.size(), cfg.r);
    basis.eigenvalues.resize(cfg.r);
    for (Index c = 0; c < cfg.r; ++c) {
        const auto& pr = pairs[static_cast<std::size_t>(c)];
        if (pr.value < 1e-300)
            throw NumericError("prior: retained eigenvalue " + std::to_string(c) +
                               " underflows; reduce r or increase ell");
        basis.eigenvalues(c) = pr.value;
        const double s = std::sqrt(pr.value);
        for (Index i = 0; i < grid.rows; ++i)
            for (Index j = 0; j < grid.cols; ++j) basis.P(grid.index(i, j), c) = ux(i, pr.a) * uy(j, pr.b) * s;
    }
    return basis;
}

namespace oracle {

/// Dense Σ for small grids.
inline Matrix dense_se_covariance(GridShape grid, double alpha, double ell) {
    require_shape(grid.size() <= 4096, "dense_se_covariance: grid too large");
    Matrix s(grid.size(), grid.size());
    for (Index p = 0; p < grid.size(); ++p)
        for (Index q = 0; q < grid.size(); ++q) s(p, q) = se_covariance_entry(grid, p, q, alpha, ell);
    return s;
}

}  // namespace oracle

}  // namespace dyntomo
