#pragma once

/// @file pipeline.hpp
/// Iterated reduced filtering and smoothing with optional motion-model and
/// EM noise updates between passes, and the named method variants
/// IRKFS, IRKFS-M1/M2/M3, EMIRKFS, EMIRKFS-M1/M2/M3.

#include "dyntomo/core.hpp"
#include "dyntomo/em.hpp"
#include "dyntomo/filter.hpp"
#include "dyntomo/linops.hpp"
#include "dyntomo/memory.hpp"
#include "dyntomo/metrics.hpp"
#include "dyntomo/motion.hpp"
#include "dyntomo/prior.hpp"
#include "dyntomo/radon.hpp"
#include "dyntomo/smoother.hpp"

#include <map>
#include <string>
#include <vector>

namespace dyntomo {

struct MethodSpec {
    std::string name = "IRKFS";
    MotionConfig motion;
    bool em = false;
    Index n_iter = 2;
    double q_scale = 1.0;  ///< Q⁽⁰⁾ = q_scale · α² I
    double r_scale = 1.0;  ///< R⁽⁰⁾ = r_scale · α² I
    FloorOptions floor;
    Index panel_rows = 128;

    static std::string motion_suffix(MotionModel m) {
        switch (m) {
            case MotionModel::Identity: return "";
            case MotionModel::M1: return "-M1";
            case MotionModel::M2: return "-M2";
            case MotionModel::M3: return "-M3";
        }
        return "";
    }

    /// Parses a method name; motion parameters keep their defaults.
    static MethodSpec from_name(const std::string& name) {
        MethodSpec s;
        std::string rest = name;
        if (rest.rfind("EMIRKFS", 0) == 0) {
            s.em = true;
            rest = rest.substr(7);
        } else if (rest.rfind("IRKFS", 0) == 0) {
            rest = rest.substr(5);
        } else {
            throw ConfigError("method.name", "unknown method '" + name + "'");
        }
        if (rest.empty()) s.motion.model = MotionModel::Identity;
        else if (rest == "-M1") s.motion.model = MotionModel::M1;
        else if (rest == "-M2") s.motion.model = MotionModel::M2;
        else if (rest == "-M3") s.motion.model = MotionModel::M3;
        else throw ConfigError("method.name", "unknown method '" + name + "'");
        s.name = name;
        return s;
    }

    std::string canonical_name() const { return (em ? "EMIRKFS" : "IRKFS") + motion_suffix(motion.model); }
};

inline void validate(const MethodSpec& s, GridShape grid) {
    if (s.n_iter < 1) throw ConfigError("method.n_iter", "must be at least 1");
    if (!(s.q_scale > 0.0)) throw ConfigError("method.q_scale", "must be positive");
    if (!(s.r_scale > 0.0)) throw ConfigError("method.r_scale", "must be positive");
    if (s.panel_rows < 1) throw ConfigError("method.panel_rows", "must be positive");
    validate(s.motion, grid);
}

struct IterationRecord {
    Index iteration = 0;               ///< 1-based
    std::vector<Vector> x_sm;          ///< 0..T
    std::vector<double> rre;           ///< per frame; empty without ground truth
    std::map<std::string, double> seconds;  ///< phase -> wall time

    double mean_rre() const {
        if (rre.empty()) return 0.0;
        double s = 0.0;
        for (double v : rre) s += v;
        return s / static_cast<double>(rre.size());
    }
};

struct RunRecord {
    std::string method;
    GridShape grid;
    std::vector<IterationRecord> iterations;
    std::size_t peak_bytes = 0;  ///< peak tracked dense working storage
};

/// Runs `spec.n_iter` passes of filter + smoother. After each pass the motion
/// operators and/or noise covariances are re-estimated from the smoothed
/// states and used by the next pass.
///
/// Initial state: x_0 from the static reduced solve on y_0, Ψ_0 = I,
/// M_i = I, Q_i = q_scale α² I, R_i = r_scale α² I. When both motion and EM updates
/// are on, Q_i is re-estimated with the freshly built M_i.
inline RunRecord run_emirkfs(const SinogramSet& data, const std::vector<LinearOperator>& H,
                             const ProjectionBasis& prior, const MethodSpec& spec,
                             const ImageSequence* truth = nullptr, MemoryMeter* meter = nullptr) {
    const GridShape grid = prior.grid;
    validate(spec, grid);
    const Index n = grid.size();
    const Index T = static_cast<Index>(H.size()) - 1;
    require_shape(T >= 0, "run_emirkfs: no forward operators");
    require_shape(data.y.size() == H.size(), "run_emirkfs: one observation per forward operator required");
    if (truth) require_shape(truth->frame_count() == T + 1 && truth->grid == grid, "run_emirkfs: truth mismatch");
    MemoryMeter local_meter;
    if (!meter) meter = &local_meter;

    RunRecord rec;
    rec.method = spec.canonical_name();
    rec.grid = grid;
    const double a2 = prior.alpha * prior.alpha;

    ReducedModel model;
    model.P = &prior.P;
    model.H = H;
    model.y = data.y;
    std::vector<Index> obs;
    for (Index i = 1; i <= T; ++i) obs.push_back(H[static_cast<std::size_t>(i)].rows());
    model.M.assign(static_cast<std::size_t>(T), LinearOperator::identity(n));
    model.noise = NoiseModel::isotropic(n, obs, spec.q_scale * a2, spec.r_scale * a2);
    model.validate();

    auto params_bytes = [&]() {
        std::size_t b = bytes_of(model.noise.Q_diag) + bytes_of(model.noise.R_diag);
        for (const auto& m : model.M) b += m.stored_doubles() * sizeof(double);
        return b;
    };
    auto params_hold = hold(meter, params_bytes());
    auto record_hold = hold(meter, 0);

    Stopwatch init_clock;
    const auto init = static_reduced_solve(H.front(), prior.P, data.y.front(), prior.alpha, meter);
    auto init_hold = hold(meter, bytes_of(init.x) + bytes_of(init.psi));
    const double init_seconds = init_clock.seconds();

    const bool motion_on = spec.motion.model != MotionModel::Identity;
    for (Index j = 1; j <= spec.n_iter; ++j) {
        IterationRecord it;
        it.iteration = j;
        const std::string where = " (iteration " + std::to_string(j) + ")";
        try {
            Stopwatch fclock;
            FilterOptions fopts{spec.panel_rows, meter};
            const auto filt = run_filter(model, init.x, init.psi, fopts);
            auto filt_hold = hold(meter, bytes_of(filt));
            it.seconds["filter"] = fclock.seconds();

            std::vector<LinearOperator> next_m;
            NoiseModel next_noise;
            if (motion_on) next_m.resize(static_cast<std::size_t>(T));
            if (spec.em) {
                next_noise.Q_diag.resize(static_cast<std::size_t>(T));
                next_noise.R_diag.resize(static_cast<std::size_t>(T));
            }
            std::vector<MemoryMeter::Hold> next_holds;
            double motion_seconds = 0.0;
            double em_seconds = 0.0;

            Stopwatch sclock;
            SmootherOptions sopts;
            sopts.covariances = spec.em;
            sopts.panel_rows = spec.panel_rows;
            sopts.meter = meter;
            it.x_sm = run_smoother_streaming(model, filt, sopts, [&](const SmoothStepView& v) {
                const auto k = static_cast<std::size_t>(v.i - 1);
                if (motion_on) {
                    Stopwatch mclock;
                    next_m[k] = build_motion(grid, v.x_sm_prev, v.x_sm_cur, spec.motion);
                    next_holds.push_back(hold(meter, next_m[k].stored_doubles() * sizeof(double)));
                    motion_seconds += mclock.seconds();
                }
                if (spec.em) {
                    Stopwatch eclock;
                    const auto& hi = model.H[k + 1];
                    next_noise.R_diag[k] =
                        em_update_R(model.y[k + 1], hi, v.x_sm_cur, *v.psi_sm_cur, prior.P, spec.floor, meter,
                                    spec.panel_rows);
                    const LinearOperator& mi = motion_on ? next_m[k] : model.M[k];
                    next_noise.Q_diag[k] = em_update_Q(v.x_sm_prev, v.x_sm_cur, *v.psi_sm_prev, *v.psi_sm_cur,
                                                       *v.cross, mi, prior.P, spec.floor, spec.panel_rows, meter);
                    next_holds.push_back(
                        hold(meter, bytes_of(next_noise.R_diag[k]) + bytes_of(next_noise.Q_diag[k])));
                    em_seconds += eclock.seconds();
                }
            });
            record_hold.release();
            record_hold = hold(meter, bytes_of_doubles(static_cast<Index>(rec.iterations.size() + 1) * (T + 1) * n));
            it.seconds["smoother"] = sclock.seconds() - motion_seconds - em_seconds;
            if (motion_on) it.seconds["motion"] = motion_seconds;
            if (spec.em) it.seconds["em"] = em_seconds;
            if (j == 1) it.seconds["init"] = init_seconds;

            if (truth) {
                for (Index t = 0; t <= T; ++t)
                    it.rre.push_back(rre(it.x_sm[static_cast<std::size_t>(t)],
                                         truth->frames[static_cast<std::size_t>(t)]));
            }
            if (motion_on) model.M = std::move(next_m);
            if (spec.em) model.noise = std::move(next_noise);
            next_holds.clear();
            params_hold.release();
            params_hold = hold(meter, params_bytes());
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + where);
        }
        rec.iterations.push_back(std::move(it));
    }
    rec.peak_bytes = meter->peak();
    return rec;
}

/// n_s (r + T) + T m_t doubles: the reference storage scale of one run.
inline double reference_storage_doubles(Index n_s, Index r, Index T, Index m_t) {
    return static_cast<double>(n_s) * static_cast<double>(r + T) + static_cast<double>(T) * static_cast<double>(m_t);
}

}  // namespace dyntomo
