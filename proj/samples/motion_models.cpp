// Fit each motion model to one pair of consecutive ground-truth frames and
// report how well it predicts the second frame and the one after it.

#include "dyntomo/dyntomo.hpp"

#include <cstdio>

int main() {
    using namespace dyntomo;

    BlocksPhantomConfig pc;
    pc.n_x = 32;
    pc.n_y = 32;
    pc.T = 2;
    pc.blocks = {{6, 4, 4, 1, 2, 1.0}, {8, 18, 20, -1, 0, 0.5}};
    const auto truth = generate_blocks(pc);
    const auto& f0 = truth.frames[0];
    const auto& f1 = truth.frames[1];
    const auto& f2 = truth.frames[2];

    MotionConfig cfg;
    cfg.zeta = 1e-3;
    cfg.of.lambda = 1e-2;
    const std::pair<const char*, MotionModel> models[] = {{"identity", MotionModel::Identity},
                                                          {"M1 optical flow", MotionModel::M1},
                                                          {"M2 rank-1 DMD", MotionModel::M2},
                                                          {"M3 patch DMD", MotionModel::M3}};
    std::printf("%-16s %12s %12s %14s\n", "model", "fit RRE", "next RRE", "stored doubles");
    for (const auto& [label, model] : models) {
        cfg.model = model;
        const LinearOperator M = build_motion(truth.grid, f0, f1, cfg);
        std::printf("%-16s %12.4f %12.4f %14zu\n", label, rre(M.apply(f0), f1), rre(M.apply(f1), f2),
                    M.stored_doubles());
    }
    return 0;
}
