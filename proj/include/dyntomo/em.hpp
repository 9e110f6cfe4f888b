#pragma once

/// @file em.hpp
/// Expectation–maximization updates of the diagonal noise covariances, plus
/// dense diagnostics (expected complete-data log-likelihood, dense smoother,
/// full-matrix M-step) for small problems.

#include "dyntomo/core.hpp"
#include "dyntomo/filter.hpp"
#include "dyntomo/linops.hpp"
#include "dyntomo/memory.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace dyntomo {

struct FloorOptions {
    double absolute = 1e-12;
    double relative = 1e-8;  ///< times the mean of the unfloored diagonal
};

inline double variance_floor(const Vector& diag, const FloorOptions& f) {
    const double mean = diag.size() > 0 ? diag.mean() : 0.0;
    return std::max(f.absolute, f.relative * mean);
}

/// diag[(y - H x)(y - H x)ᵀ + H P Ψ Pᵀ Hᵀ], floored. HP is formed in row panels.
inline Vector em_update_R(const Vector& y, const LinearOperator& H, const Vector& x_sm, const Matrix& psi_sm,
                          const Matrix& P, const FloorOptions& floor = {}, MemoryMeter* meter = nullptr,
                          Index panel_rows = 128) {
    require_shape(H.rows() == y.size() && H.cols() == x_sm.size() && P.rows() == x_sm.size(),
                  "em_update_R: shape mismatch");
    require_shape(psi_sm.rows() == P.cols() && psi_sm.cols() == P.cols(), "em_update_R: Ψ has wrong size");
    require_shape(panel_rows > 0, "em_update_R: panel height must be positive");
    Vector out = (y - H.apply(x_sm)).array().square().matrix();
    auto out_hold = hold(meter, bytes_of(out));
    const double psi_scale = psi_sm.cwiseAbs().maxCoeff();
    for (Index b = 0; b < H.rows(); b += panel_rows) {
        const Index e = std::min(H.rows(), b + panel_rows);
        const Matrix hp = H.apply_rows(P, b, e);
        auto hp_hold = hold(meter, 2 * bytes_of(hp));
        const Vector quad = (hp * psi_sm).cwiseProduct(hp).rowwise().sum();
        for (Index k = 0; k < quad.size(); ++k) {
            const double scale = psi_scale * hp.row(k).cwiseAbs().sum() * hp.row(k).cwiseAbs().sum();
            if (quad(k) < -1e-8 * scale)
                throw NumericError("em_update_R: reduced covariance is not positive semidefinite");
            out(b + k) += std::max(quad(k), 0.0);
        }
    }
    const double fl = variance_floor(out, floor);
    return out.cwiseMax(fl);
}

/// Diagonal of
///   (C_i + x_i x_iᵀ) - (C_{i,i-1} + x_i x_{i-1}ᵀ) Mᵀ - M (·)ᵀ + M (C_{i-1} + x_{i-1} x_{i-1}ᵀ) Mᵀ
/// with C_i = P Ψ_cur Pᵀ, C_{i-1} = P Ψ_prev Pᵀ, C_{i,i-1} = P X Pᵀ, floored.
inline Vector em_update_Q(const Vector& x_prev, const Vector& x_cur, const Matrix& psi_prev, const Matrix& psi_cur,
                          const Matrix& cross, const LinearOperator& M, const Matrix& P,
                          const FloorOptions& floor = {}, Index panel_rows = 128, MemoryMeter* meter = nullptr) {
    const Index n = P.rows();
    const Index r = P.cols();
    require_shape(x_prev.size() == n && x_cur.size() == n && M.rows() == n && M.cols() == n,
                  "em_update_Q: shape mismatch");
    require_shape(psi_prev.rows() == r && psi_cur.rows() == r && cross.rows() == r && cross.cols() == r,
                  "em_update_Q: reduced matrices have wrong size");
    const Vector mean_res = x_cur - M.apply(x_prev);
    Vector out(n);
    auto out_hold = hold(meter, bytes_of(out) + bytes_of(mean_res));
    const bool identity = M.kind() == LinearOperator::Kind::Identity;
    for (Index b = 0; b < n; b += panel_rows) {
        const Index e = std::min(n, b + panel_rows);
        const Index rows = e - b;
        const auto pp = P.middleRows(b, rows);
        auto panel_hold = hold(meter, bytes_of_doubles(4 * rows * r));
        const Matrix mp = identity ? Matrix(pp) : M.apply_rows(P, b, e);
        const Matrix p_cur = pp * psi_cur;
        const Matrix p_cross = pp * cross;
        const Matrix mp_prev = mp * psi_prev;
        for (Index k = 0; k < rows; ++k) {
            const double t_cur = p_cur.row(k).dot(pp.row(k));
            const double t_cross = p_cross.row(k).dot(mp.row(k));
            const double t_prev = mp_prev.row(k).dot(mp.row(k));
            const double res2 = mean_res(b + k) * mean_res(b + k);
            const double v = res2 + t_cur - 2.0 * t_cross + t_prev;
            const double scale = res2 + std::abs(t_cur) + std::abs(t_prev) + 2.0 * std::abs(t_cross);
            if (v < -1e-8 * scale)
                throw NumericError("em_update_Q: diagonal entry " + std::to_string(b + k) +
                                   " is negative beyond roundoff");
            out(b + k) = std::max(v, 0.0);
        }
    }
    const double fl = variance_floor(out, floor);
    return out.cwiseMax(fl);
}

// Dense diagnostics --------------------------------------------------------

constexpr Index kDenseDiagnosticLimit = 4096;

/// Linear-Gaussian state-space model with explicit matrices; entries of
/// M, H, Q, R and y are indexed i - 1 for transitions i = 1..T.
struct DenseModel {
    Vector mu0;
    Matrix Sigma0;
    std::vector<Matrix> M;
    std::vector<Matrix> H;
    std::vector<Matrix> Q;
    std::vector<Matrix> R;
    std::vector<Vector> y;

    Index transitions() const { return static_cast<Index>(M.size()); }
};

/// Smoothed moments of a DenseModel.
struct DenseMoments {
    std::vector<Vector> x_sm;     ///< 0..T
    std::vector<Matrix> C_sm;     ///< 0..T
    std::vector<Matrix> C_cross;  ///< C_cross[i - 1] = cov(x_i, x_{i-1} | y_{1:T})
    double loglik = 0.0;          ///< observed-data log-likelihood (with 2π constants)
};

namespace detail {

inline void guard_dense(Index n, const char* who) {
    if (n > kDenseDiagnosticLimit)
        throw ShapeError(std::string(who) + ": refused, state dimension exceeds the dense diagnostic limit");
}

inline double logdet_spd(const Matrix& a, const char* who) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw NumericError(std::string(who) + ": matrix not positive definite");
    const Matrix& l = llt.matrixLLT();
    return 2.0 * l.diagonal().array().log().sum();
}

inline Matrix spd_inverse(const Matrix& a, const char* who) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw NumericError(std::string(who) + ": matrix not positive definite");
    Matrix inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
    symmetrize(inv);
    return inv;
}

}  // namespace detail

/// Textbook Kalman filter and RTS smoother on explicit matrices.
inline DenseMoments dense_kalman_smoother(const DenseModel& m) {
    const Index n = m.mu0.size();
    detail::guard_dense(n, "dense_kalman_smoother");
    const Index T = m.transitions();
    std::vector<Vector> xf{m.mu0}, xp(static_cast<std::size_t>(T) + 1);
    std::vector<Matrix> cf{m.Sigma0}, cp(static_cast<std::size_t>(T) + 1);
    DenseMoments out;
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (Index i = 1; i <= T; ++i) {
        const auto k = static_cast<std::size_t>(i - 1);
        const auto& M = m.M[k];
        const auto& H = m.H[k];
        xp[k + 1] = M * xf.back();
        Matrix Pp = M * cf.back() * M.transpose() + m.Q[k];
        symmetrize(Pp);
        cp[k + 1] = Pp;
        Matrix S = H * Pp * H.transpose() + m.R[k];
        symmetrize(S);
        Eigen::LLT<Matrix> llt(S);
        if (llt.info() != Eigen::Success) throw NumericError("dense_kalman_smoother: innovation covariance not PD");
        const Vector e = m.y[k] - H * xp[k + 1];
        const Matrix& L = llt.matrixLLT();
        out.loglik += -0.5 * (2.0 * L.diagonal().array().log().sum() + e.dot(llt.solve(e)) +
                              static_cast<double>(e.size()) * log2pi);
        const Matrix K = llt.solve(H * Pp).transpose();
        xf.push_back(xp[k + 1] + K * e);
        const Matrix ikh = Matrix::Identity(n, n) - K * H;
        Matrix C = ikh * Pp * ikh.transpose() + K * m.R[k] * K.transpose();
        symmetrize(C);
        cf.push_back(std::move(C));
    }
    out.x_sm.resize(static_cast<std::size_t>(T) + 1);
    out.C_sm.resize(static_cast<std::size_t>(T) + 1);
    out.C_cross.resize(static_cast<std::size_t>(T));
    out.x_sm.back() = xf.back();
    out.C_sm.back() = cf.back();
    for (Index i = T; i >= 1; --i) {
        const auto k = static_cast<std::size_t>(i);
        Eigen::LLT<Matrix> llt(cp[k]);
        if (llt.info() != Eigen::Success) throw NumericError("dense_kalman_smoother: prediction covariance not PD");
        const Matrix J = llt.solve(m.M[k - 1] * cf[k - 1]).transpose();
        out.x_sm[k - 1] = xf[k - 1] + J * (out.x_sm[k] - xp[k]);
        Matrix C = cf[k - 1] + J * (out.C_sm[k] - cp[k]) * J.transpose();
        symmetrize(C);
        out.C_sm[k - 1] = std::move(C);
        out.C_cross[k - 1] = out.C_sm[k] * J.transpose();
    }
    return out;
}

/// Expected complete-data log-likelihood G (without 2π constants).
inline double expected_loglik(const DenseModel& m, const DenseMoments& e) {
    const Index n = m.mu0.size();
    detail::guard_dense(n, "expected_loglik");
    const Index T = m.transitions();
    require_shape(static_cast<Index>(e.x_sm.size()) == T + 1, "expected_loglik: moment length mismatch");
    const Vector d0 = e.x_sm[0] - m.mu0;
    const Matrix sig_inv = detail::spd_inverse(m.Sigma0, "expected_loglik(Sigma)");
    double g = -0.5 * detail::logdet_spd(m.Sigma0, "expected_loglik(Sigma)") -
               0.5 * (sig_inv * (e.C_sm[0] + d0 * d0.transpose())).trace();
    for (Index i = 1; i <= T; ++i) {
        const auto k = static_cast<std::size_t>(i - 1);
        const auto& H = m.H[k];
        const auto& M = m.M[k];
        const Vector res = m.y[k] - H * e.x_sm[k + 1];
        const Matrix r_term = res * res.transpose() + H * e.C_sm[k + 1] * H.transpose();
        g += -0.5 * detail::logdet_spd(m.R[k], "expected_loglik(R)") -
             0.5 * (detail::spd_inverse(m.R[k], "expected_loglik(R)") * r_term).trace();
        const Matrix s11 = e.C_sm[k + 1] + e.x_sm[k + 1] * e.x_sm[k + 1].transpose();
        const Matrix s10 = e.C_cross[k] + e.x_sm[k + 1] * e.x_sm[k].transpose();
        const Matrix s00 = e.C_sm[k] + e.x_sm[k] * e.x_sm[k].transpose();
        const Matrix q_term = s11 - s10 * M.transpose() - M * s10.transpose() + M * s00 * M.transpose();
        g += -0.5 * detail::logdet_spd(m.Q[k], "expected_loglik(Q)") -
             0.5 * (detail::spd_inverse(m.Q[k], "expected_loglik(Q)") * q_term).trace();
    }
    return g;
}

/// Full-matrix M-step: replaces every Q_i and R_i by its maximizer of G.
inline void dense_em_mstep(DenseModel& m, const DenseMoments& e) {
    detail::guard_dense(m.mu0.size(), "dense_em_mstep");
    for (Index i = 1; i <= m.transitions(); ++i) {
        const auto k = static_cast<std::size_t>(i - 1);
        const auto& H = m.H[k];
        const auto& M = m.M[k];
        const Vector res = m.y[k] - H * e.x_sm[k + 1];
        Matrix R = res * res.transpose() + H * e.C_sm[k + 1] * H.transpose();
        symmetrize(R);
        const Matrix s11 = e.C_sm[k + 1] + e.x_sm[k + 1] * e.x_sm[k + 1].transpose();
        const Matrix s10 = e.C_cross[k] + e.x_sm[k + 1] * e.x_sm[k].transpose();
        const Matrix s00 = e.C_sm[k] + e.x_sm[k] * e.x_sm[k].transpose();
        Matrix Q = s11 - s10 * M.transpose() - M * s10.transpose() + M * s00 * M.transpose();
        symmetrize(Q);
        m.R[k] = std::move(R);
        m.Q[k] = std::move(Q);
    }
}

}  // namespace dyntomo
