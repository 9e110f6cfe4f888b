#include "dyntomo/config.hpp"
#include "dyntomo/io.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

using namespace dyntomo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("dyntomo_io_" + std::to_string(::getpid()) + "_" +
               ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }
    std::string read_text(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    fs::path dir;
};

std::string config_field(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "none";
}

}  // namespace

using ArrayIo = TempDir;
using TextIo = TempDir;
using ConfigIo = TempDir;

TEST_F(ArrayIo, RoundTripIsBitExact) {
    std::mt19937_64 rng(1);
    std::vector<Vector> frames;
    for (int t = 0; t < 3; ++t) frames.push_back(oracle_ref::random_vector(12, rng));
    frames[1](0) = -0.0;
    frames[2](5) = 1e-310;
    const fs::path base = dir / "nested" / "arr";
    write_array(base, 3, 4, frames);
    EXPECT_TRUE(fs::exists(base.string() + ".f64"));
    EXPECT_EQ(fs::file_size(base.string() + ".f64"), 3u * 12u * 8u);
    const auto a = read_array(base);
    EXPECT_EQ(a.rows, 3);
    EXPECT_EQ(a.cols, 4);
    ASSERT_EQ(a.frames.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t)
        EXPECT_EQ(std::memcmp(a.frames[t].data(), frames[t].data(), 12 * sizeof(double)), 0);
    EXPECT_TRUE(std::signbit(a.frames[1](0)));
}

TEST_F(ArrayIo, LittleEndianLayoutAndHeader) {
    write_array(dir / "one", 1, 1, {Vector::Constant(1, 1.0)});
    const std::string bytes = read_text(dir / "one.f64");
    // 1.0 = 0x3ff0000000000000
    const std::string want{'\0', '\0', '\0', '\0', '\0', '\0', '\xf0', '\x3f'};
    EXPECT_EQ(bytes, want);
    EXPECT_EQ(read_text(dir / "one.hdr"), "dyntomo-array 1\ndtype f64\norder row-major\nrows 1\ncols 1\nframes 1\n");
}

TEST_F(ArrayIo, MalformedFilesAreIoErrors) {
    write_array(dir / "a", 2, 2, {Vector::Ones(4)});
    fs::resize_file(dir / "a.f64", 24);
    EXPECT_THROW(read_array(dir / "a"), IoError);
    write_array(dir / "b", 2, 2, {Vector::Ones(4)});
    fs::resize_file(dir / "b.f64", 40);
    EXPECT_THROW(read_array(dir / "b"), IoError);
    write_text(dir / "c.hdr", "dyntomo-array 1\ndtype f32\norder row-major\nrows 1\ncols 1\nframes 0\n");
    EXPECT_THROW(read_array(dir / "c"), IoError);
    write_text(dir / "d.hdr", "dyntomo-array 1\ncolour blue\n");
    EXPECT_THROW(read_array(dir / "d"), IoError);
    EXPECT_THROW(read_array(dir / "missing"), IoError);
    EXPECT_THROW(write_array(dir / "e", 2, 2, {Vector::Ones(3)}), ShapeError);
}

TEST_F(TextIo, FnvKnownVectors) {
    write_text(dir / "empty", "");
    write_text(dir / "a", "a");
    write_text(dir / "foobar", "foobar");
    EXPECT_EQ(fnv1a_file(dir / "empty"), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_file(dir / "a"), "af63dc4c8601ec8c");
    EXPECT_EQ(fnv1a_file(dir / "foobar"), "85944171f73967e8");
    EXPECT_THROW(fnv1a_file(dir / "nope"), IoError);
}

TEST_F(TextIo, PgmClipsAndScales) {
    Vector img(6);
    img << -1.0, 0.0, 0.5, 1.0, 2.0, 0.2;
    write_pgm(dir / "x.pgm", {2, 3}, img);
    const std::string s = read_text(dir / "x.pgm");
    const std::string head = "P5\n3 2\n255\n";
    ASSERT_EQ(s.size(), head.size() + 6);
    EXPECT_EQ(s.substr(0, head.size()), head);
    const unsigned char want[6] = {0, 0, 128, 255, 255, 51};
    for (int k = 0; k < 6; ++k) EXPECT_EQ(static_cast<unsigned char>(s[head.size() + k]), want[k]) << k;
}

TEST_F(TextIo, MetricsCsvRoundTrip) {
    const std::vector<MetricsRow> rows{{"EMIRKFS-M3", 1, 0, 0.1 + 0.2, "frame", 0.0, 0},
                                       {"EMIRKFS-M3", 2, -1, 0.0, "filter", 1.0 / 3.0, 0},
                                       {"EMIRKFS-M3", 0, -1, 0.0, "total", 12.5, 14328696}};
    write_metrics_csv(dir / "m.csv", rows);
    const auto back = read_metrics_csv(dir / "m.csv");
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(back[k].method, rows[k].method);
        EXPECT_EQ(back[k].iteration, rows[k].iteration);
        EXPECT_EQ(back[k].timestep, rows[k].timestep);
        EXPECT_EQ(back[k].rre, rows[k].rre);
        EXPECT_EQ(back[k].phase, rows[k].phase);
        EXPECT_EQ(back[k].seconds, rows[k].seconds);
        EXPECT_EQ(back[k].bytes, rows[k].bytes);
    }
    write_text(dir / "bad.csv", "method,iteration\n");
    EXPECT_THROW(read_metrics_csv(dir / "bad.csv"), IoError);
    write_text(dir / "bad2.csv", std::string(metrics_header()) + "\nx,1,2\n");
    EXPECT_THROW(read_metrics_csv(dir / "bad2.csv"), IoError);
}

TEST(Config, EmptyDocumentGivesDefaults) {
    const auto c = parse_config(json::object());
    EXPECT_EQ(c.grid(), (GridShape{64, 64}));
    EXPECT_EQ(c.phantom.T, 10);
    EXPECT_EQ(c.geometry.n_angles, 5);
    EXPECT_EQ(c.prior.alpha, 0.28);
    EXPECT_EQ(c.prior.ell, 2.0);
    EXPECT_EQ(c.prior.r, 300);
    EXPECT_EQ(c.method.canonical_name(), "EMIRKFS-M3");
    EXPECT_EQ(c.method.n_iter, 2);
    EXPECT_EQ(c.method.panel_rows, 128);
    EXPECT_EQ(c.noise.sigma_nl, 0.01);
    EXPECT_EQ(c.method.motion.z_x, 4);
    EXPECT_EQ(c.method.motion.z_y, 4);
    EXPECT_EQ(c.output.dir, "out");
    EXPECT_FALSE(c.output.pgm);
}

TEST(Config, ParsesEverySection) {
    const json j = json::parse(R"({
        "phantom": {"n_x": 16, "n_y": 24, "T": 3, "seed": 5,
                    "blocks": [{"size": 4, "start": [1, 2], "velocity": [1, -1], "intensity": 0.7}]},
        "geometry": {"n_angles": 7, "rotation_offset": 0.1, "detector_count": 31},
        "prior": {"alpha": 0.5, "ell": 1.5, "r": 40},
        "method": {"name": "IRKFS-M1", "n_iter": 3, "q_scale": 2, "r_scale": 0.5, "panel_rows": 16,
                   "floor_absolute": 1e-10, "floor_relative": 1e-6},
        "motion": {"zeta": 0.25, "patch": [8, 6], "mmgks": {"lambda": -1, "epsilon": 0.01, "l0": 4, "k_max": 9, "tol": 1e-3}},
        "noise": {"sigma_nl": 0.05, "seed": 9},
        "output": {"dir": "runs/a", "pgm": true}
    })");
    const auto c = parse_config(j);
    EXPECT_EQ(c.grid(), (GridShape{16, 24}));
    ASSERT_EQ(c.phantom.blocks.size(), 1u);
    EXPECT_EQ(c.phantom.blocks[0].start_col, 2);
    EXPECT_EQ(c.phantom.blocks[0].velocity_col, -1);
    EXPECT_EQ(c.geometry.detector_count, 31);
    EXPECT_EQ(c.scan_geometry().detector_count, 31);
    EXPECT_EQ(c.scan_geometry().frame_count(), 4);
    EXPECT_EQ(c.prior.r, 40);
    EXPECT_EQ(c.method.canonical_name(), "IRKFS-M1");
    EXPECT_EQ(c.method.r_scale, 0.5);
    EXPECT_EQ(c.method.floor.relative, 1e-6);
    EXPECT_EQ(c.method.motion.z_y, 6);
    EXPECT_EQ(c.method.motion.of.lambda, -1.0);
    EXPECT_EQ(c.method.motion.of.k_max, 9);
    EXPECT_EQ(c.noise.seed, 9u);
    EXPECT_TRUE(c.output.pgm);

    // Resolved form parses back to the same thing.
    EXPECT_EQ(to_json(parse_config(to_json(c))), to_json(c));
}

TEST(Config, ErrorsNameTheOffendingField) {
    EXPECT_EQ(config_field(json::parse(R"({"prior": {"alpha": 1, "beta": 2}})")), "prior.beta");
    EXPECT_EQ(config_field(json::parse(R"({"extra": {}})")), "extra");
    EXPECT_EQ(config_field(json::parse(R"({"prior": {"r": "many"}})")), "prior.r");
    EXPECT_EQ(config_field(json::parse(R"({"prior": {"r": 5000}})")), "prior.r");
    EXPECT_EQ(config_field(json::parse(R"({"method": {"name": "KF"}})")), "method.name");
    EXPECT_EQ(config_field(json::parse(R"({"motion": {"patch": [3, 4]}})")), "z_x");
    EXPECT_EQ(config_field(json::parse(R"({"motion": {"patch": "4x4"}})")), "z_x");
    EXPECT_EQ(config_field(json::parse(R"({"noise": {"sigma_nl": -0.1}})")), "noise.sigma_nl");
    EXPECT_EQ(config_field(json::parse(R"({"motion": {"mmgks": {"k_max": 0}}})")), "motion.mmgks.k_max");
    EXPECT_EQ(config_field(json::parse(R"({"phantom": {"blocks": [{"size": 4, "shape": 1}]}})")),
              "phantom.blocks[0].shape");
}

TEST_F(ConfigIo, ManifestIsAcceptedAsConfig) {
    RunConfig c;
    c.phantom.n_x = 8;
    c.phantom.n_y = 8;
    c.prior.r = 10;
    const json manifest{{"format", "dyntomo-manifest 1"}, {"config", to_json(c)}, {"files", json::object()}};
    write_json_file(dir / "manifest.json", manifest);
    const auto back = load_config(dir / "manifest.json");
    EXPECT_EQ(to_json(back), to_json(c));
    write_text(dir / "broken.json", "{\"prior\": ");
    EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
    EXPECT_THROW(load_config(dir / "absent.json"), IoError);
}
