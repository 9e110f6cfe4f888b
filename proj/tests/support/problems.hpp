#pragma once

// Fixed test problems shared by unit tests and the acceptance binary.

#include "dyntomo/dyntomo.hpp"
#include "support/oracles.hpp"

#include <numbers>
#include <random>
#include <vector>

namespace problems {

using namespace dyntomo;

// 12×12, T = 4, full-rank basis (r = n_s = 144), five random angles per
// frame, identity motion, random positive diagonal Q and R.
struct SmallKalman {
    GridShape grid{12, 12};
    Index T = 4;
    ProjectionBasis prior;
    ReducedModel model;
    std::vector<LinearOperator> H;
    std::vector<Vector> y;
    Vector x0;
    Matrix psi0;
};

inline SmallKalman make_small_kalman(std::uint64_t seed = 11) {
    SmallKalman p;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::uniform_real_distribution<double> qd(0.02, 0.1);
    std::uniform_real_distribution<double> rd(0.005, 0.02);

    p.prior = build_projection(p.grid, {0.5, 0.8, p.grid.size()});
    ScanGeometry geom;
    geom.grid = p.grid;
    geom.detector_count = default_detector_count(p.grid);
    for (Index t = 0; t <= p.T; ++t) {
        std::vector<double> a(5);
        for (auto& v : a) v = angle(rng);
        geom.angles_per_frame.push_back(a);
    }
    p.H = build_operators(geom);

    BlocksPhantomConfig pc;
    pc.n_x = 12;
    pc.n_y = 12;
    pc.T = p.T;
    pc.blocks = {{3, 1, 2, 1, 0, 1.0}, {4, 7, 6, 0, -1, 0.6}};
    const auto truth = generate_blocks(pc);
    p.y = simulate_sinograms(truth, p.H, 0.02, seed + 1).y;

    p.model.P = &p.prior.P;
    p.model.H = p.H;
    p.model.y = p.y;
    p.model.M.assign(static_cast<std::size_t>(p.T), LinearOperator::identity(p.grid.size()));
    for (Index i = 1; i <= p.T; ++i) {
        Vector q(p.grid.size());
        for (Index k = 0; k < q.size(); ++k) q(k) = qd(rng);
        Vector r(p.H[static_cast<std::size_t>(i)].rows());
        for (Index k = 0; k < r.size(); ++k) r(k) = rd(rng);
        p.model.noise.Q_diag.push_back(q);
        p.model.noise.R_diag.push_back(r);
    }
    p.x0 = 0.1 * oracle_ref::random_vector(p.grid.size(), rng);
    p.psi0 = Matrix::Identity(p.grid.size(), p.grid.size());
    return p;
}

// Dense textbook run of the same model with C_0 = P Ψ_0 Pᵀ.
inline oracle_ref::KalmanRun dense_reference(const SmallKalman& p) {
    std::vector<Matrix> M, H, Q, R;
    std::vector<Vector> y;
    for (Index i = 1; i <= p.T; ++i) {
        const auto k = static_cast<std::size_t>(i - 1);
        M.push_back(oracle::to_dense(p.model.M[k]));
        H.push_back(oracle::to_dense(p.H[k + 1]));
        Q.push_back(p.model.noise.Q_diag[k].asDiagonal());
        R.push_back(p.model.noise.R_diag[k].asDiagonal());
        y.push_back(p.y[k + 1]);
    }
    const Matrix C0 = p.prior.P * p.psi0 * p.prior.P.transpose();
    return oracle_ref::textbook_kf_rts(p.x0, C0, M, H, Q, R, y);
}

// Desk-scale moving-blocks experiment: 64×64, T = 10, five angles, σ_NL = 0.01.
struct DeskData {
    ImageSequence truth;
    ScanGeometry geometry;
    std::vector<LinearOperator> H;
    SinogramSet data;
    ProjectionBasis prior;
};

struct DeskSettings {
    Index n = 64;
    Index T = 10;
    Index n_angles = 5;
    double sigma_nl = 0.01;
    std::uint64_t phantom_seed = 1;
    std::uint64_t noise_seed = 2;
    PriorConfig prior{0.28, 2.0, 300};
};

inline DeskData make_desk_data(const DeskSettings& s = {}) {
    DeskData d;
    BlocksPhantomConfig pc;
    pc.n_x = s.n;
    pc.n_y = s.n;
    pc.T = s.T;
    pc.seed = s.phantom_seed;
    d.truth = generate_blocks(pc);
    d.geometry = equispaced_geometry(d.truth.grid, s.T + 1, s.n_angles);
    d.H = build_operators(d.geometry);
    d.data = simulate_sinograms(d.truth, d.H, s.sigma_nl, s.noise_seed);
    d.prior = build_projection(d.truth.grid, s.prior);
    return d;
}

// Method settings used for the desk ordering experiment.
inline MethodSpec desk_method(const std::string& name, Index n_iter = 2) {
    MethodSpec m = MethodSpec::from_name(name);
    m.n_iter = n_iter;
    m.q_scale = 1.0;
    m.r_scale = 1.0;
    m.motion.zeta = 1.0;
    m.motion.z_x = 4;
    m.motion.z_y = 4;
    return m;
}

}  // namespace problems
