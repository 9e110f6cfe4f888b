#pragma once

/// @file filter.hpp
/// Dimension-reduced Kalman filter.
///
/// The prediction covariance C_i^p = B_i B_iᵀ + Q_i with B_i = M_i P_r A_i is
/// never formed. Every product with (C_i^p)⁻¹ goes through the
/// Sherman–Morrison–Woodbury identity, reduced to r × r Gram matrices that
/// are accumulated over row panels of M_i P_r:
///
///   W0 = P_rᵀ Q⁻¹ P_r,  W1 = (M P_r)ᵀ Q⁻¹ (M P_r),  W2 = P_rᵀ Q⁻¹ (M P_r),
///   K  = A W1 A + I,
///   P_rᵀ (C^p)⁻¹ P_r = W0 - W2 A K⁻¹ A W2ᵀ.
///
/// Only one n_s × r panel block is alive at a time.

#include "dyntomo/core.hpp"
#include "dyntomo/linops.hpp"
#include "dyntomo/memory.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dyntomo {

/// Diagonal process and observation covariances, one entry per transition:
/// Q_diag[i - 1] = diag(Q_i), R_diag[i - 1] = diag(R_i) for i = 1..T.
struct NoiseModel {
    std::vector<Vector> Q_diag;
    std::vector<Vector> R_diag;

    static NoiseModel isotropic(Index n_s, const std::vector<Index>& obs_sizes, double q, double r) {
        NoiseModel nm;
        for (Index m : obs_sizes) {
            nm.Q_diag.push_back(Vector::Constant(n_s, q));
            nm.R_diag.push_back(Vector::Constant(m, r));
        }
        return nm;
    }
};

/// Everything one filter/smoother pass reads. P_r is referenced, not copied.
struct ReducedModel {
    const Matrix* P = nullptr;
    std::vector<LinearOperator> H;  ///< T + 1 operators; H[0] feeds the static initial solve
    std::vector<Vector> y;          ///< T + 1 observations
    std::vector<LinearOperator> M;  ///< T operators; M[i - 1] is M_i
    NoiseModel noise;

    Index transitions() const { return static_cast<Index>(M.size()); }
    Index state_size() const { return P->rows(); }
    Index rank() const { return P->cols(); }

    void validate() const {
        require_shape(P != nullptr, "ReducedModel: projection basis missing");
        const auto T = static_cast<std::size_t>(transitions());
        require_shape(H.size() == T + 1 && y.size() == T + 1,
                      "ReducedModel: need T + 1 forward operators and observations");
        require_shape(noise.Q_diag.size() == T && noise.R_diag.size() == T,
                      "ReducedModel: need T process and observation covariances");
        const Index n = state_size();
        for (std::size_t t = 0; t <= T; ++t) {
            require_shape(H[t].cols() == n, "ReducedModel: H_" + std::to_string(t) + " has wrong column count");
            require_shape(H[t].rows() == y[t].size(), "ReducedModel: y_" + std::to_string(t) + " length mismatch");
        }
        for (std::size_t i = 0; i < T; ++i) {
            require_shape(M[i].rows() == n && M[i].cols() == n,
                          "ReducedModel: M_" + std::to_string(i + 1) + " is not n_s x n_s");
            require_shape(noise.Q_diag[i].size() == n, "ReducedModel: Q diagonal length mismatch");
            require_shape(noise.R_diag[i].size() == y[i + 1].size(), "ReducedModel: R diagonal length mismatch");
            if (!(noise.Q_diag[i].minCoeff() > 0.0))
                throw NumericError("ReducedModel: Q_" + std::to_string(i + 1) + " must be strictly positive");
            if (!(noise.R_diag[i].minCoeff() > 0.0))
                throw NumericError("ReducedModel: R_" + std::to_string(i + 1) + " must be strictly positive");
        }
    }
};

struct FilterOptions {
    Index panel_rows = 128;
    MemoryMeter* meter = nullptr;
};

struct FilterResult {
    std::vector<Vector> x_est;             ///< 0..T
    std::vector<PackedSymmetric> psi_est;  ///< 0..T
};

/// Symmetric square root V diag(√max(λ, 0)) Vᵀ.
inline Matrix symmetric_sqrt(const Matrix& psi) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(psi);
    if (es.info() != Eigen::Success) throw NumericError("symmetric_sqrt: eigendecomposition failed");
    const Vector s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

/// (B Bᵀ + Q)⁻¹ P for diagonal Q given by its inverse diagonal.
inline Matrix smw_apply(const Vector& q_inv_diag, const Matrix& B, const Matrix& P) {
    require_shape(B.rows() == q_inv_diag.size() && P.rows() == q_inv_diag.size(), "smw_apply: row mismatch");
    if (!(q_inv_diag.minCoeff() > 0.0)) throw NumericError("smw_apply: Q must be strictly positive");
    const Matrix qb = q_inv_diag.asDiagonal() * B;
    const Matrix qp = q_inv_diag.asDiagonal() * P;
    Matrix inner = B.transpose() * qb;
    inner.diagonal().array() += 1.0;
    symmetrize(inner);
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) throw NumericError("smw_apply: inner matrix not positive definite");
    return qp - qb * llt.solve(qb.transpose() * P);
}

namespace detail {

/// Reduced Gram quantities of one transition.
struct TransitionGram {
    Matrix W0;  ///< empty unless requested
    Matrix W1;
    Matrix W2;
    Vector h;   ///< (M P)ᵀ Q⁻¹ d, empty unless d was supplied
};

inline TransitionGram transition_gram(const Matrix& P, const LinearOperator& M, const Vector& q_inv, bool want_w0,
                                      const Vector* d, Index panel_rows, MemoryMeter* meter) {
    const Index n = P.rows();
    const Index r = P.cols();
    TransitionGram g;
    const bool identity = M.kind() == LinearOperator::Kind::Identity;
    g.W1 = Matrix::Zero(r, r);
    g.W2 = Matrix::Zero(r, r);
    if (want_w0) g.W0 = Matrix::Zero(r, r);
    if (d) g.h = Vector::Zero(r);
    for (Index b = 0; b < n; b += panel_rows) {
        const Index e = std::min(n, b + panel_rows);
        const auto rows = e - b;
        const auto pp = P.middleRows(b, rows);
        Matrix mp;
        auto mp_hold = hold(meter, bytes_of_doubles(identity ? 0 : rows * r));
        if (!identity) mp = M.apply_rows(P, b, e);
        Matrix qmp(rows, r);
        auto qmp_hold = hold(meter, bytes_of(qmp));
        if (identity) {
            qmp.noalias() = q_inv.segment(b, rows).asDiagonal() * pp;
            g.W1.noalias() += pp.transpose() * qmp;
        } else {
            qmp.noalias() = q_inv.segment(b, rows).asDiagonal() * mp;
            g.W1.noalias() += mp.transpose() * qmp;
            g.W2.noalias() += pp.transpose() * qmp;
            if (want_w0) g.W0.noalias() += pp.transpose() * (q_inv.segment(b, rows).asDiagonal() * pp);
        }
        if (d) g.h.noalias() += qmp.transpose() * d->segment(b, rows);
    }
    if (identity) {
        symmetrize(g.W1);
        g.W2 = g.W1;
        if (want_w0) g.W0 = g.W1;
    } else {
        symmetrize(g.W1);
        if (want_w0) symmetrize(g.W0);
    }
    return g;
}

/// A K⁻¹ A with K = A W1 A + I.
inline Matrix a_kinv_a(const Matrix& A, const Matrix& W1, Index step, const char* who) {
    Matrix k = A * W1 * A;
    k.diagonal().array() += 1.0;
    symmetrize(k);
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success)
        throw NumericError(std::string(who) + ": SMW inner matrix not positive definite at timestep " +
                           std::to_string(step));
    Matrix out = A * llt.solve(A);
    symmetrize(out);
    return out;
}

}  // namespace detail

struct StaticSolveResult {
    Vector x;
    Matrix psi;
};

/// x_0 = P_r (Gᵀ G + P_rᵀ P_r / α²)⁻¹ Gᵀ y_0 with G = H_0 P_r; Ψ_0 = I_r.
inline StaticSolveResult static_reduced_solve(const LinearOperator& H0, const Matrix& P, const Vector& y0,
                                              double alpha, MemoryMeter* meter = nullptr) {
    require_shape(H0.cols() == P.rows(), "static_reduced_solve: H_0 and P_r disagree");
    require_shape(H0.rows() == y0.size(), "static_reduced_solve: y_0 length mismatch");
    if (!(alpha > 0.0)) throw ConfigError("prior.alpha", "must be positive");
    const Index r = P.cols();
    Vector alpha_red;
    {
        const Matrix G = H0.apply_block(P);
        auto g_hold = hold(meter, bytes_of(G));
        Matrix N = G.transpose() * G;
        auto n_hold = hold(meter, 2 * bytes_of(N));
        N.noalias() += (P.transpose() * P) / (alpha * alpha);
        symmetrize(N);
        Eigen::LLT<Matrix> llt(N);
        if (llt.info() != Eigen::Success) {
            Eigen::JacobiSVD<Matrix> svd(N);
            const auto& sv = svd.singularValues();
            const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                        : std::numeric_limits<double>::infinity();
            throw NumericError("static_reduced_solve: reduced normal matrix is singular (condition estimate " +
                               std::to_string(cond) + ")");
        }
        alpha_red = llt.solve(G.transpose() * y0);
    }
    return {P * alpha_red, Matrix::Identity(r, r)};
}

struct FilterStepResult {
    Vector x_pred;
    Vector x_est;
    Matrix psi_est;
};

/// One predict/update step of the reduced filter.
inline FilterStepResult filter_step(const Matrix& P, const LinearOperator& M, const LinearOperator& H,
                                    const Vector& q_diag, const Vector& r_diag, const Vector& y,
                                    const Vector& x_prev, const Matrix& psi_prev, Index step,
                                    const FilterOptions& opts = {}) {
    MemoryMeter* meter = opts.meter;
    const Index r = P.cols();
    require_shape(psi_prev.rows() == r && psi_prev.cols() == r, "filter_step: Ψ has wrong size");
    FilterStepResult out;
    out.x_pred = M.apply(x_prev);
    auto xp_hold = hold(meter, bytes_of(out.x_pred));

    const Vector q_inv = q_diag.cwiseInverse();
    const Vector r_inv = r_diag.cwiseInverse();
    auto inv_hold = hold(meter, bytes_of(q_inv) + bytes_of(r_inv));

    // Data term S = (HP)ᵀ R⁻¹ (HP) and g = (HP)ᵀ R⁻¹ (y - H x^p), over row panels of HP.
    Matrix S = Matrix::Zero(r, r);
    auto s_hold = hold(meter, bytes_of(S));
    Vector g = Vector::Zero(r);
    {
        Vector w = y - H.apply(out.x_pred);
        auto w_hold = hold(meter, bytes_of(w));
        w.array() *= r_inv.array();
        for (Index b = 0; b < H.rows(); b += opts.panel_rows) {
            const Index e = std::min(H.rows(), b + opts.panel_rows);
            const Matrix hp = H.apply_rows(P, b, e);
            auto hp_hold = hold(meter, 2 * bytes_of(hp));
            g.noalias() += hp.transpose() * w.segment(b, e - b);
            S.noalias() += hp.transpose() * (r_inv.segment(b, e - b).asDiagonal() * hp);
        }
    }

    {
        auto gram = detail::transition_gram(P, M, q_inv, true, nullptr, opts.panel_rows, meter);
        auto gram_hold = hold(meter, 3 * bytes_of(gram.W1));
        Matrix aka;
        {
            const Matrix A = symmetric_sqrt(psi_prev);
            auto a_hold = hold(meter, 2 * bytes_of(A));
            aka = detail::a_kinv_a(A, gram.W1, step, "filter");
        }
        auto aka_hold = hold(meter, 2 * bytes_of(aka));
        S += gram.W0;
        S.noalias() -= gram.W2 * aka * gram.W2.transpose();
    }
    symmetrize(S);

    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success)
        throw NumericError("filter: posterior precision not positive definite at timestep " + std::to_string(step));
    auto llt_hold = hold(meter, bytes_of(S));
    out.psi_est = llt.solve(Matrix::Identity(r, r));
    symmetrize(out.psi_est);
    out.x_est = out.x_pred + P * (out.psi_est * g);
    return out;
}

/// Runs steps 1..T from the supplied initial mean and reduced covariance.
inline FilterResult run_filter(const ReducedModel& model, const Vector& x0, const Matrix& psi0,
                               const FilterOptions& opts = {}) {
    model.validate();
    const Matrix& P = *model.P;
    require_shape(x0.size() == P.rows(), "run_filter: x_0 length mismatch");
    const Index T = model.transitions();
    FilterResult res;
    res.x_est.reserve(static_cast<std::size_t>(T) + 1);
    res.psi_est.reserve(static_cast<std::size_t>(T) + 1);
    res.x_est.push_back(x0);
    res.psi_est.emplace_back(psi0);
    Matrix psi = psi0;
    auto psi_hold = hold(opts.meter, bytes_of(psi));
    for (Index i = 1; i <= T; ++i) {
        const auto k = static_cast<std::size_t>(i - 1);
        auto step = filter_step(P, model.M[k], model.H[static_cast<std::size_t>(i)], model.noise.Q_diag[k],
                                model.noise.R_diag[k], model.y[static_cast<std::size_t>(i)], res.x_est.back(), psi,
                                i, opts);
        psi = std::move(step.psi_est);
        res.x_est.push_back(std::move(step.x_est));
        res.psi_est.emplace_back(psi);
    }
    return res;
}

/// Bytes a stored filter trajectory occupies.
inline std::size_t bytes_of(const FilterResult& f) {
    std::size_t b = bytes_of(f.x_est);
    for (const auto& p : f.psi_est) b += bytes_of_doubles(static_cast<Index>(p.stored_doubles()));
    return b;
}

}  // namespace dyntomo
