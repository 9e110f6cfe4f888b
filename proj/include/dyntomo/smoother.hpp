#pragma once

/// @file smoother.hpp
/// Dimension-reduced Rauch–Tung–Striebel smoother.
///
/// With W1, W2, A, K as in filter.hpp and
///   Z1 = (M P)ᵀ (C^p)⁻¹ (M P) = W1 - W1 A K⁻¹ A W1,
///   Z2 = P ᵀ (C^p)⁻¹ (M P)    = W2 - W2 A K⁻¹ A W1,
/// the backward recursion reads
///   x^sm_{i-1} = x^est_{i-1} + P Ψ^est_{i-1} (M P)ᵀ (C^p)⁻¹ (x^sm_i - x^p_i),
///   Ψ^sm_{i-1} = Ψ^est_{i-1} + Ψ^est_{i-1} (Z2ᵀ Ψ^sm_i Z2 - Z1) Ψ^est_{i-1},
/// and the lag-one smoothed cross-covariance is C_{i,i-1} = P X Pᵀ with
/// X = Ψ^sm_i Z2 Ψ^est_{i-1}.

#include "dyntomo/core.hpp"
#include "dyntomo/filter.hpp"
#include "dyntomo/linops.hpp"
#include "dyntomo/memory.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dyntomo {

struct SmootherOptions {
    /// Also propagate Ψ^sm and the cross-covariance cores.
    bool covariances = true;
    Index panel_rows = 128;
    MemoryMeter* meter = nullptr;
};

struct SmoothStepResult {
    Vector x_sm_prev;
    Matrix psi_sm_prev;  ///< empty when covariances are off
    Matrix cross;        ///< X with C_{i,i-1} = P X Pᵀ; empty when covariances are off
};

/// One backward step for transition i (x_sm_i, Ψ_sm_i known, produce i - 1).
/// `psi_sm_cur` may be null to skip the covariance recursion.
inline SmoothStepResult smooth_step(const Matrix& P, const LinearOperator& M, const Vector& q_diag,
                                    const Vector& x_est_prev, const Matrix& psi_est_prev, const Vector& x_sm_cur,
                                    const Matrix* psi_sm_cur, Index step, const SmootherOptions& opts = {}) {
    MemoryMeter* meter = opts.meter;
    SmoothStepResult out;
    const Vector q_inv = q_diag.cwiseInverse();
    auto q_hold = hold(meter, bytes_of(q_inv));
    Vector d = x_sm_cur - M.apply(x_est_prev);
    auto d_hold = hold(meter, bytes_of(d));

    auto gram = detail::transition_gram(P, M, q_inv, false, &d, opts.panel_rows, meter);
    auto gram_hold = hold(meter, 2 * bytes_of(gram.W1));
    Matrix aka;
    {
        const Matrix A = symmetric_sqrt(psi_est_prev);
        auto a_hold = hold(meter, 2 * bytes_of(A));
        aka = detail::a_kinv_a(A, gram.W1, step, "smoother");
    }
    auto aka_hold = hold(meter, 2 * bytes_of(aka));

    const Vector u = gram.h - gram.W1 * (aka * gram.h);
    out.x_sm_prev = x_est_prev + P * (psi_est_prev * u);

    if (psi_sm_cur) {
        const Index r = P.cols();
        require_shape(psi_sm_cur->rows() == r && psi_sm_cur->cols() == r, "smooth_step: Ψ^sm has wrong size");
        auto z_hold = hold(meter, 3 * bytes_of(gram.W1));
        Matrix tmp = aka * gram.W1;
        Matrix Z1 = gram.W1;
        Z1.noalias() -= gram.W1 * tmp;
        symmetrize(Z1);
        Matrix Z2 = gram.W2;
        Z2.noalias() -= gram.W2 * tmp;
        tmp.noalias() = Z2.transpose() * (*psi_sm_cur) * Z2;
        tmp -= Z1;
        out.psi_sm_prev = psi_est_prev;
        out.psi_sm_prev.noalias() += psi_est_prev * tmp * psi_est_prev;
        symmetrize(out.psi_sm_prev);
        out.cross.noalias() = (*psi_sm_cur) * Z2 * psi_est_prev;
    }
    return out;
}

/// Factor pair (L, R) with C_{i,i-1} = L Rᵀ, L = P Ψ^sm_i, R = P Ψ^est_{i-1} Z2ᵀ.
/// Both factors are n_s × r; the pipeline itself only keeps the r × r core X.
struct CrossFactors {
    Matrix L;
    Matrix R;
};

inline CrossFactors cross_covariance_factors(const Matrix& P, const Matrix& psi_sm_cur, const Matrix& Z2,
                                             const Matrix& psi_est_prev) {
    return {P * psi_sm_cur, P * (psi_est_prev * Z2.transpose())};
}

/// Z2 = Pᵀ (C^p)⁻¹ M P for transition i, recomputed from scratch.
inline Matrix cross_gain(const Matrix& P, const LinearOperator& M, const Vector& q_diag, const Matrix& psi_est_prev,
                         Index panel_rows = 128) {
    const Vector q_inv = q_diag.cwiseInverse();
    const Matrix A = symmetric_sqrt(psi_est_prev);
    auto gram = detail::transition_gram(P, M, q_inv, false, nullptr, panel_rows, nullptr);
    const Matrix aka = detail::a_kinv_a(A, gram.W1, 0, "cross_gain");
    return gram.W2 - gram.W2 * aka * gram.W1;
}

/// What the streaming smoother reports for transition i.
struct SmoothStepView {
    Index i;
    const Vector& x_sm_prev;  ///< x^sm_{i-1}
    const Vector& x_sm_cur;   ///< x^sm_i
    const Matrix* psi_sm_prev;
    const Matrix* psi_sm_cur;
    const Matrix* cross;
};

/// Backward pass i = T..1 calling on_step(view) after each step. Ψ^sm is
/// only kept for two consecutive steps. Returns x^sm_0..x^sm_T.
template <class OnStep>
std::vector<Vector> run_smoother_streaming(const ReducedModel& model, const FilterResult& filt,
                                           const SmootherOptions& opts, OnStep&& on_step) {
    const Index T = model.transitions();
    require_shape(static_cast<Index>(filt.x_est.size()) == T + 1, "run_smoother: filter trajectory length");
    const Matrix& P = *model.P;
    std::vector<Vector> x_sm(static_cast<std::size_t>(T) + 1);
    auto xs_hold = hold(opts.meter, bytes_of_doubles((T + 1) * P.rows()));
    x_sm[static_cast<std::size_t>(T)] = filt.x_est.back();

    Matrix psi_cur;
    auto cur_hold = hold(opts.meter, opts.covariances ? bytes_of_doubles(P.cols() * P.cols()) : 0);
    if (opts.covariances) psi_cur = filt.psi_est.back().unpack();

    for (Index i = T; i >= 1; --i) {
        const auto k = static_cast<std::size_t>(i);
        const Matrix psi_est_prev = filt.psi_est[k - 1].unpack();
        auto pe_hold = hold(opts.meter, bytes_of(psi_est_prev));
        auto step = smooth_step(P, model.M[k - 1], model.noise.Q_diag[k - 1], filt.x_est[k - 1], psi_est_prev,
                                x_sm[k], opts.covariances ? &psi_cur : nullptr, i, opts);
        auto step_hold = hold(opts.meter, bytes_of(step.psi_sm_prev) + bytes_of(step.cross));
        x_sm[k - 1] = std::move(step.x_sm_prev);
        if (opts.covariances) {
            on_step(SmoothStepView{i, x_sm[k - 1], x_sm[k], &step.psi_sm_prev, &psi_cur, &step.cross});
            psi_cur = std::move(step.psi_sm_prev);
        } else {
            on_step(SmoothStepView{i, x_sm[k - 1], x_sm[k], nullptr, nullptr, nullptr});
        }
    }
    return x_sm;
}

/// Full smoothed trajectory kept in memory; for tests and small problems.
struct SmootherResult {
    std::vector<Vector> x_sm;     ///< 0..T
    std::vector<Matrix> psi_sm;   ///< 0..T, empty when covariances are off
    std::vector<Matrix> cross;    ///< cross[i - 1] = X_i, empty when covariances are off
};

inline SmootherResult run_smoother(const ReducedModel& model, const FilterResult& filt, bool covariances = true,
                                   Index panel_rows = 128) {
    const Index T = model.transitions();
    SmootherResult res;
    if (covariances) {
        res.psi_sm.resize(static_cast<std::size_t>(T) + 1);
        res.cross.resize(static_cast<std::size_t>(T));
        res.psi_sm[static_cast<std::size_t>(T)] = filt.psi_est.back().unpack();
    }
    SmootherOptions opts;
    opts.covariances = covariances;
    opts.panel_rows = panel_rows;
    res.x_sm = run_smoother_streaming(model, filt, opts, [&](const SmoothStepView& v) {
        if (!covariances) return;
        res.psi_sm[static_cast<std::size_t>(v.i) - 1] = *v.psi_sm_prev;
        res.cross[static_cast<std::size_t>(v.i) - 1] = *v.cross;
    });
    return res;
}

}  // namespace dyntomo
