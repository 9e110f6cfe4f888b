#pragma once

/// @file mmgks.hpp
/// Majorization–minimization in a generalized Krylov subspace for
///
///   min_s ‖A s - b‖² + λ Σ_j φ_ε((L s)_j),   φ_ε(z) = √(z² + ε²).
///
/// Each outer iteration freezes the weights w = φ_ε(L s)^{-1/2}, solves the
/// quadratic majorant ‖A s - b‖² + λ‖w ⊙ L s‖² over span(W) and enlarges W
/// by the normalized full-space residual of that majorant.

#include "dyntomo/core.hpp"
#include "dyntomo/linops.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace dyntomo {

struct MMGKSOptions {
    double lambda = 1.0;   ///< negative selects the automatic rule
    double epsilon = 0.0;  ///< nonpositive selects 1e-2 · max|L s⁰|
    Index l0 = 5;
    Index k_max = 30;
    double tol = 1e-4;
};

struct MMGKSProblem {
    LinearOperator A;
    LinearOperator L;
    Vector b;
    MMGKSOptions options;
};

struct MMGKSResult {
    Vector s;
    Index iterations = 0;
    double lambda = 0.0;
    double epsilon = 0.0;
    /// Majorant of each outer iteration evaluated at the previous iterate and
    /// at the new one (same weights): pairs (before, after).
    std::vector<std::pair<double, double>> majorant;
    /// Basis dimension used at each outer iteration.
    std::vector<Index> basis_sizes;
};

struct GKBResult {
    Matrix W;  ///< n × k, orthonormal columns
    Matrix U;  ///< m × (k + 1), or m × k when the last step is exhausted
    Matrix B;  ///< lower bidiagonal with A W = U B
    bool breakdown = false;  ///< fewer than the requested columns were produced
};

namespace detail {

/// Orthogonalizes v against the columns of Q twice; returns the final norm.
inline double reorthogonalize(const Matrix& Q, Index cols, Vector& v) {
    for (int pass = 0; pass < 2; ++pass) {
        if (cols > 0) v.noalias() -= Q.leftCols(cols) * (Q.leftCols(cols).transpose() * v);
    }
    return v.norm();
}

}  // namespace detail

/// Golub–Kahan bidiagonalization started from b with full reorthogonalization.
inline GKBResult gkb_seed(const LinearOperator& A, const Vector& b, Index l0) {
    require_shape(b.size() == A.rows(), "gkb_seed: b length mismatch");
    if (l0 < 1) throw ConfigError("mmgks.l0", "must be at least 1");
    const double bnorm = b.norm();
    if (!(bnorm > 0.0)) throw ConfigError("mmgks.b", "right-hand side must be nonzero");
    const Index m = A.rows();
    const Index n = A.cols();
    const Index kmax = std::min({l0, n, m});
    Matrix U(m, kmax + 1);
    Matrix W(n, kmax);
    Matrix B = Matrix::Zero(kmax + 1, kmax);
    U.col(0) = b / bnorm;
    const double scale = bnorm;
    Index k = 0;
    Index ucols = 1;
    bool breakdown = kmax < l0;
    const double tiny = 1e-12;
    for (; k < kmax; ++k) {
        Vector w = A.apply_transpose(U.col(k));
        const double wn0 = w.norm();
        const double alpha = detail::reorthogonalize(W, k, w);
        if (alpha <= tiny * std::max(wn0, scale) || alpha == 0.0) {
            breakdown = true;
            break;
        }
        W.col(k) = w / alpha;
        B(k, k) = alpha;
        Vector u = A.apply(W.col(k));
        const double un0 = u.norm();
        const double beta = detail::reorthogonalize(U, k + 1, u);
        if (beta <= tiny * std::max(un0, scale) || beta == 0.0) {
            ++k;
            if (k < l0) breakdown = true;
            GKBResult res;
            res.W = W.leftCols(k);
            res.U = U.leftCols(k);
            res.B = B.topLeftCorner(k, k);
            res.breakdown = breakdown;
            return res;
        }
        U.col(k + 1) = u / beta;
        B(k + 1, k) = beta;
        ucols = k + 2;
    }
    GKBResult res;
    res.W = W.leftCols(k);
    res.U = U.leftCols(std::max<Index>(ucols, 1));
    res.B = B.topLeftCorner(res.U.cols(), k);
    res.breakdown = breakdown;
    return res;
}

/// w_j = φ_ε(z_j)^{-1/2} = (z_j² + ε²)^{-1/4}.
inline Vector mm_weights(const Vector& z, double eps) {
    if (!(eps > 0.0)) throw ConfigError("mmgks.epsilon", "must be positive");
    return (z.array().square() + eps * eps).pow(-0.25).matrix();
}

namespace detail {

/// Solves (R_Aᵀ R_A + λ R_Lᵀ R_L) z = R_Aᵀ Q_Aᵀ b; empty vector when singular.
inline Vector projected_solve(const Matrix& AW, const Matrix& wLW, const Vector& b, double lambda) {
    Eigen::HouseholderQR<Matrix> qa(AW);
    Eigen::HouseholderQR<Matrix> ql(wLW);
    const Index l = AW.cols();
    const Matrix Ra = qa.matrixQR().topRows(std::min(AW.rows(), l)).triangularView<Eigen::Upper>();
    const Matrix Rl = ql.matrixQR().topRows(std::min(wLW.rows(), l)).triangularView<Eigen::Upper>();
    const Vector qtb = (qa.householderQ().transpose() * b).head(Ra.rows());
    Matrix N = Ra.transpose() * Ra + lambda * (Rl.transpose() * Rl);
    symmetrize(N);
    const Vector rhs = Ra.transpose() * qtb;
    Eigen::LLT<Matrix> llt(N);
    if (llt.info() != Eigen::Success) return {};
    const Vector z = llt.solve(rhs);
    if (!z.allFinite()) return {};
    const double dmax = N.diagonal().maxCoeff();
    const double dmin = llt.matrixLLT().diagonal().array().square().minCoeff();
    if (!(dmin > 1e-14 * dmax)) return {};
    return z;
}

inline double majorant(const Matrix& AW, const Matrix& wLW, const Vector& b, double lambda, const Vector& z) {
    return (AW * z - b).squaredNorm() + lambda * (wLW * z).squaredNorm();
}

}  // namespace detail

inline MMGKSResult mmgks_solve(const MMGKSProblem& prob) {
    const auto& A = prob.A;
    const auto& L = prob.L;
    const auto& opt = prob.options;
    require_shape(prob.b.size() == A.rows(), "mmgks_solve: b length mismatch");
    require_shape(L.cols() == A.cols(), "mmgks_solve: A and L column counts differ");
    if (opt.l0 < 1) throw ConfigError("mmgks.l0", "must be at least 1");
    if (opt.k_max < 1) throw ConfigError("mmgks.k_max", "must be at least 1");
    if (!(opt.tol > 0.0)) throw ConfigError("mmgks.tol", "must be positive");
    const Index n = A.cols();
    MMGKSResult res;
    if (prob.b.norm() == 0.0) {
        res.s = Vector::Zero(n);
        return res;
    }

    auto seed = gkb_seed(A, prob.b, opt.l0);
    Matrix W = std::move(seed.W);
    if (W.cols() == 0) {
        // Aᵀ b = 0: the zero vector is already stationary.
        res.s = Vector::Zero(n);
        return res;
    }
    Matrix AW = A.apply_block(W);
    Matrix LW = L.apply_block(W);

    // Projected least-squares start.
    Vector z = Eigen::HouseholderQR<Matrix>(AW).solve(prob.b);
    Vector s = W * z;
    Vector Ls = L.apply(s);

    double eps = opt.epsilon;
    if (!(eps > 0.0)) {
        const double zmax = Ls.size() > 0 ? Ls.cwiseAbs().maxCoeff() : 0.0;
        eps = zmax > 0.0 ? 1e-2 * zmax : 1e-2;
    }
    double lambda = opt.lambda;
    if (lambda < 0.0) {
        const Vector w0 = mm_weights(Ls, eps);
        const double reg = w0.cwiseProduct(Ls).squaredNorm();
        lambda = reg > 0.0 ? prob.b.squaredNorm() / reg : 1.0;
    }
    res.epsilon = eps;

    bool bumped = false;
    for (Index k = 0; k < opt.k_max; ++k) {
        const Vector w = mm_weights(Ls, eps);
        const Matrix wLW = w.asDiagonal() * LW;
        Vector z_prev = Vector::Zero(W.cols());
        z_prev.head(z.size()) = z;
        Vector z_new = detail::projected_solve(AW, wLW, prob.b, lambda);
        if (z_new.size() == 0) {
            if (bumped || lambda == 0.0)
                throw NumericError("mmgks_solve: projected system singular at iteration " + std::to_string(k));
            lambda *= 10.0;
            bumped = true;
            z_new = detail::projected_solve(AW, wLW, prob.b, lambda);
            if (z_new.size() == 0)
                throw NumericError("mmgks_solve: projected system singular after increasing lambda");
        }
        res.majorant.emplace_back(detail::majorant(AW, wLW, prob.b, lambda, z_prev),
                                  detail::majorant(AW, wLW, prob.b, lambda, z_new));
        res.basis_sizes.push_back(W.cols());
        const Vector s_new = W * z_new;
        const double snorm = s.norm();
        const double change = snorm > 0.0 ? (s_new - s).norm() / snorm : (s_new.norm() > 0.0 ? 1.0 : 0.0);
        z = z_new;
        s = s_new;
        Ls = L.apply(s);
        res.iterations = k + 1;
        if (change <= opt.tol) break;

        // Residual of the majorant's normal equations in the full space.
        Vector resid = A.apply_transpose(A.apply(s) - prob.b) +
                       lambda * L.apply_transpose(w.array().square().matrix().cwiseProduct(Ls));
        const double rn0 = resid.norm();
        if (rn0 == 0.0 || W.cols() >= n) continue;
        const double rn = detail::reorthogonalize(W, W.cols(), resid);
        if (!(rn > 1e-12 * rn0)) continue;
        resid /= rn;
        W.conservativeResize(Eigen::NoChange, W.cols() + 1);
        W.col(W.cols() - 1) = resid;
        AW.conservativeResize(Eigen::NoChange, AW.cols() + 1);
        AW.col(AW.cols() - 1) = A.apply(resid);
        LW.conservativeResize(Eigen::NoChange, LW.cols() + 1);
        LW.col(LW.cols() - 1) = L.apply(resid);
    }
    res.lambda = lambda;
    res.s = std::move(s);
    return res;
}

}  // namespace dyntomo
