#pragma once

/// @file phantom.hpp
/// Moving-blocks ground-truth sequences.

#include "dyntomo/core.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace dyntomo {

/// A square block moving at constant integer velocity, reflecting elastically
/// off the image boundary.
struct Block {
    Index size = 1;
    Index start_row = 0;
    Index start_col = 0;
    Index velocity_row = 0;  ///< pixels per frame
    Index velocity_col = 0;  ///< pixels per frame
    double intensity = 1.0;
};

struct BlocksPhantomConfig {
    Index n_x = 64;
    Index n_y = 64;
    Index T = 10;
    /// Empty means: draw the default four blocks from `seed`.
    std::vector<Block> blocks;
    std::uint64_t seed = 0;
};

/// Four blocks of sizes {6, 6, 10, 10}; the two small ones move 2 px/frame,
/// the large ones 1 px/frame. Start positions and directions come from `seed`.
inline std::vector<Block> default_blocks(Index n_x, Index n_y, std::uint64_t seed) {
    const Index sizes[4] = {6, 6, 10, 10};
    const Index speeds[4] = {2, 2, 1, 1};
    const double intensities[4] = {1.0, 0.7, 0.85, 0.5};
    std::mt19937_64 rng(seed);
    std::vector<Block> out;
    for (int k = 0; k < 4; ++k) {
        const Index s = std::min({sizes[k], n_x, n_y});
        std::uniform_int_distribution<Index> row(0, n_x - s);
        std::uniform_int_distribution<Index> col(0, n_y - s);
        std::uniform_int_distribution<int> dir(0, 7);
        static constexpr int kDirs[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
        Block b;
        b.size = s;
        b.start_row = row(rng);
        b.start_col = col(rng);
        const int d = dir(rng);
        b.velocity_row = kDirs[d][0] * speeds[k];
        b.velocity_col = kDirs[d][1] * speeds[k];
        b.intensity = intensities[k];
        out.push_back(b);
    }
    return out;
}

namespace detail {

/// Position on [0, span] after travelling `start + v t` with mirror reflection.
inline Index reflect_position(Index start, Index velocity, Index t, Index span) {
    if (span == 0) return 0;
    const Index period = 2 * span;
    Index q = (start + velocity * t) % period;
    if (q < 0) q += period;
    return q <= span ? q : period - q;
}

}  // namespace detail

/// Block position (row, col) at frame t.
inline std::pair<Index, Index> block_position(const Block& b, Index n_x, Index n_y, Index t) {
    return {detail::reflect_position(b.start_row, b.velocity_row, t, n_x - b.size),
            detail::reflect_position(b.start_col, b.velocity_col, t, n_y - b.size)};
}

inline void validate(const BlocksPhantomConfig& cfg) {
    if (cfg.n_x <= 0) throw ConfigError("n_x", "must be positive");
    if (cfg.n_y <= 0) throw ConfigError("n_y", "must be positive");
    if (cfg.T < 0) throw ConfigError("T", "must be nonnegative");
    for (const auto& b : cfg.blocks) {
        if (b.size <= 0 || b.size > cfg.n_x || b.size > cfg.n_y)
            throw ConfigError("blocks.size", "block of size " + std::to_string(b.size) + " does not fit the image");
        if (b.start_row < 0 || b.start_row > cfg.n_x - b.size || b.start_col < 0 || b.start_col > cfg.n_y - b.size)
            throw ConfigError("blocks.start", "block start lies outside the image");
        if (!(b.intensity > 0.0 && b.intensity <= 1.0))
            throw ConfigError("blocks.intensity", "must lie in (0, 1]");
    }
}

/// T + 1 frames; overlapping blocks combine by maximum, background is 0.
inline ImageSequence generate_blocks(const BlocksPhantomConfig& cfg) {
    validate(cfg);
    const auto blocks = cfg.blocks.empty() ? default_blocks(cfg.n_x, cfg.n_y, cfg.seed) : cfg.blocks;
    ImageSequence seq;
    seq.grid = {cfg.n_x, cfg.n_y};
    seq.frames.reserve(static_cast<std::size_t>(cfg.T) + 1);
    for (Index t = 0; t <= cfg.T; ++t) {
        Vector x = Vector::Zero(seq.grid.size());
        for (const auto& b : blocks) {
            const auto [r0, c0] = block_position(b, cfg.n_x, cfg.n_y, t);
            for (Index i = r0; i < r0 + b.size; ++i) {
                for (Index j = c0; j < c0 + b.size; ++j) {
                    double& px = x(seq.grid.index(i, j));
                    px = std::max(px, b.intensity);
                }
            }
        }
        seq.frames.push_back(std::move(x));
    }
    return seq;
}

}  // namespace dyntomo
