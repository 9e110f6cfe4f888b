#include "dyntomo/phantom.hpp"

#include <gtest/gtest.h>

using namespace dyntomo;

TEST(Phantom, ShapeAndFrameCount) {
    BlocksPhantomConfig cfg;
    cfg.n_x = 20;
    cfg.n_y = 30;
    cfg.T = 4;
    const auto seq = generate_blocks(cfg);
    EXPECT_EQ(seq.frame_count(), 5);
    EXPECT_EQ(seq.transitions(), 4);
    EXPECT_EQ(seq.grid, (GridShape{20, 30}));
    for (const auto& f : seq.frames) EXPECT_EQ(f.size(), 600);
}

TEST(Phantom, DefaultBlocksHaveDocumentedSizesSpeedsAndIntensities) {
    const auto blocks = default_blocks(64, 64, 3);
    ASSERT_EQ(blocks.size(), 4u);
    const Index sizes[4] = {6, 6, 10, 10};
    const Index speeds[4] = {2, 2, 1, 1};
    for (int k = 0; k < 4; ++k) {
        EXPECT_EQ(blocks[k].size, sizes[k]);
        EXPECT_EQ(std::max(std::abs(blocks[k].velocity_row), std::abs(blocks[k].velocity_col)), speeds[k]);
        EXPECT_GT(blocks[k].intensity, 0.0);
        EXPECT_LE(blocks[k].intensity, 1.0);
    }
}

TEST(Phantom, SameSeedSameFramesDifferentSeedDifferentFrames) {
    BlocksPhantomConfig a;
    a.seed = 9;
    BlocksPhantomConfig b = a;
    const auto s1 = generate_blocks(a);
    const auto s2 = generate_blocks(b);
    for (std::size_t t = 0; t < s1.frames.size(); ++t) EXPECT_EQ(s1.frames[t], s2.frames[t]);
    b.seed = 10;
    const auto s3 = generate_blocks(b);
    bool differ = false;
    for (std::size_t t = 0; t < s1.frames.size(); ++t) differ = differ || s1.frames[t] != s3.frames[t];
    EXPECT_TRUE(differ);
}

TEST(Phantom, ReflectionKeepsBlocksInside) {
    // span 5: 0 2 4 4 2 0 2 ...
    const Index want[] = {0, 2, 4, 4, 2, 0, 2, 4};
    for (Index t = 0; t < 8; ++t) EXPECT_EQ(detail::reflect_position(0, 2, t, 5), want[t]) << t;
    EXPECT_EQ(detail::reflect_position(3, -1, 4, 5), 1);
    EXPECT_EQ(detail::reflect_position(0, 3, 7, 0), 0);
}

TEST(Phantom, MovingBlockPixelsAndMass) {
    BlocksPhantomConfig cfg;
    cfg.n_x = 10;
    cfg.n_y = 10;
    cfg.T = 3;
    cfg.blocks = {{2, 0, 0, 1, 2, 0.5}};
    const auto seq = generate_blocks(cfg);
    const GridShape g = seq.grid;
    for (Index t = 0; t <= 3; ++t) {
        const auto& f = seq.frames[static_cast<std::size_t>(t)];
        EXPECT_DOUBLE_EQ(f.sum(), 4 * 0.5);
        EXPECT_EQ(f(g.index(t, 2 * t)), 0.5);
        EXPECT_EQ(f(g.index(t + 1, 2 * t + 1)), 0.5);
    }
}

TEST(Phantom, OverlapTakesMaximum) {
    BlocksPhantomConfig cfg;
    cfg.n_x = 6;
    cfg.n_y = 6;
    cfg.T = 0;
    cfg.blocks = {{3, 0, 0, 0, 0, 0.4}, {3, 1, 1, 0, 0, 0.9}};
    const auto f = generate_blocks(cfg).frames[0];
    const GridShape g{6, 6};
    EXPECT_EQ(f(g.index(0, 0)), 0.4);
    EXPECT_EQ(f(g.index(1, 1)), 0.9);
    EXPECT_EQ(f(g.index(3, 3)), 0.9);
    EXPECT_EQ(f(g.index(5, 5)), 0.0);
}

TEST(Phantom, ValidationNamesTheField) {
    auto field_of = [](BlocksPhantomConfig c) {
        try {
            generate_blocks(c);
        } catch (const ConfigError& e) {
            return e.field();
        }
        return std::string("none");
    };
    BlocksPhantomConfig c;
    c.n_x = 0;
    EXPECT_EQ(field_of(c), "n_x");
    c = {};
    c.T = -1;
    EXPECT_EQ(field_of(c), "T");
    c = {};
    c.blocks = {{70, 0, 0, 0, 0, 1.0}};
    EXPECT_EQ(field_of(c), "blocks.size");
    c.blocks = {{4, 62, 0, 0, 0, 1.0}};
    EXPECT_EQ(field_of(c), "blocks.start");
    c.blocks = {{4, 0, 0, 0, 0, 1.5}};
    EXPECT_EQ(field_of(c), "blocks.intensity");
}
