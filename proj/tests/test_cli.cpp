#include "dyntomo/config.hpp"
#include "dyntomo/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kCli = DYNTOMO_CLI_PATH;
const fs::path kSamples = DYNTOMO_SAMPLES_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const fs::path& p) {
    std::vector<std::string> out;
    std::istringstream in(slurp(p));
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(l);
    return out;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("dyntomo_cli_" + std::to_string(::getpid()) + "_" +
                                           ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override {
        if (!HasFailure()) fs::remove_all(dir);
    }

    // Runs the CLI; stdout and stderr go to dir/last.out and dir/last.err.
    int run(const std::string& args) {
        const std::string cmd = "'" + kCli.string() + "' " + args + " > '" + (dir / "last.out").string() + "' 2> '" +
                                (dir / "last.err").string() + "'";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string q(const fs::path& p) const { return "'" + p.string() + "'"; }

    fs::path write_config(const std::string& name, const json& j) {
        const fs::path p = dir / name;
        dyntomo::write_json_file(p, j);
        return p;
    }

    json tiny() const { return dyntomo::read_json_file(kSamples / "configs" / "tiny.json"); }

    fs::path dir;
};

}  // namespace

TEST_F(Cli, SimulateWritesDeterministicOutputs) {
    const auto cfg = write_config("tiny.json", tiny());
    ASSERT_EQ(run("simulate " + q(cfg) + " --out " + q(dir / "a")), 0) << slurp(dir / "last.err");
    ASSERT_EQ(run("simulate " + q(cfg) + " --out " + q(dir / "b")), 0);
    for (const char* f : {"truth.f64", "truth.hdr", "sinogram.f64", "sinogram.hdr"}) {
        EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    }
    // Manifests agree apart from the output directory they record.
    json m = dyntomo::read_json_file(dir / "a" / "manifest.json");
    json mb = dyntomo::read_json_file(dir / "b" / "manifest.json");
    EXPECT_EQ(m["config"]["output"]["dir"], (dir / "a").string());
    m["config"].erase("output");
    mb["config"].erase("output");
    EXPECT_EQ(m, mb);
    EXPECT_EQ(m.at("files").at("sinogram.f64"), dyntomo::fnv1a_file(dir / "a" / "sinogram.f64"));
    const auto truth = dyntomo::read_array(dir / "a" / "truth");
    EXPECT_EQ(truth.rows, 16);
    EXPECT_EQ(truth.frames.size(), 4u);
    const auto sino = dyntomo::read_array(dir / "a" / "sinogram");
    EXPECT_EQ(sino.frames.size(), 4u);
}

TEST_F(Cli, NoiseLevelDefaultsAndIsRecorded) {
    json j = tiny();
    j.erase("noise");
    const auto cfg = write_config("no_noise.json", j);
    ASSERT_EQ(run("simulate " + q(cfg) + " --out " + q(dir / "s")), 0) << slurp(dir / "last.err");
    const json m = dyntomo::read_json_file(dir / "s" / "manifest.json");
    EXPECT_EQ(m.at("config").at("noise").at("sigma_nl").get<double>(), 0.01);
    EXPECT_NEAR(m.at("realized_noise_level").get<double>(), 0.01, 1e-12);
}

TEST_F(Cli, ManifestReproducesOutputsBitwise) {
    const auto cfg = write_config("tiny.json", tiny());
    ASSERT_EQ(run("simulate " + q(cfg) + " --out " + q(dir / "first")), 0);
    ASSERT_EQ(run("simulate " + q(dir / "first" / "manifest.json") + " --out " + q(dir / "second")), 0)
        << slurp(dir / "last.err");
    const json a = dyntomo::read_json_file(dir / "first" / "manifest.json");
    const json b = dyntomo::read_json_file(dir / "second" / "manifest.json");
    EXPECT_EQ(a.at("files"), b.at("files"));
    EXPECT_EQ(slurp(dir / "first" / "sinogram.f64"), slurp(dir / "second" / "sinogram.f64"));
}

TEST_F(Cli, BadPatchIsAConfigError) {
    json j = tiny();
    j["motion"]["patch"] = {3, 4};
    const auto cfg = write_config("bad.json", j);
    EXPECT_EQ(run("simulate " + q(cfg) + " --out " + q(dir / "x")), 2);
    EXPECT_NE(slurp(dir / "last.err").find("z_x"), std::string::npos);
    j = tiny();
    j["prior"]["colour"] = 1;
    EXPECT_EQ(run("simulate " + q(write_config("bad2.json", j))), 2);
    EXPECT_NE(slurp(dir / "last.err").find("prior.colour"), std::string::npos);
}

TEST_F(Cli, ReconstructWithoutUpdatesRepeatsItself) {
    json j = tiny();
    j["method"] = {{"name", "IRKFS"}, {"n_iter", 2}};
    const auto cfg = write_config("irkfs.json", j);
    ASSERT_EQ(run("simulate " + q(cfg) + " --out " + q(dir / "data")), 0);
    ASSERT_EQ(run("reconstruct " + q(cfg) + " " + q(dir / "data") + " --out " + q(dir / "run")), 0)
        << slurp(dir / "last.err");
    for (int t = 0; t <= 3; ++t) {
        const std::string f = "frame00" + std::to_string(t) + ".f64";
        const std::string one = slurp(dir / "run" / "recon" / "iter1" / f);
        ASSERT_EQ(one.size(), 16u * 16u * 8u);
        EXPECT_EQ(one, slurp(dir / "run" / "recon" / "iter2" / f)) << f;
    }
    const auto rows = dyntomo::read_metrics_csv(dir / "run" / "metrics.csv");
    int frames = 0;
    for (const auto& r : rows) frames += r.phase == "frame";
    EXPECT_EQ(frames, 8);
    const json run_json = dyntomo::read_json_file(dir / "run" / "run.json");
    EXPECT_EQ(run_json.at("method"), "IRKFS");
}

TEST_F(Cli, ReconstructErrors) {
    const auto cfg = write_config("tiny.json", tiny());
    EXPECT_EQ(run("reconstruct " + q(cfg) + " " + q(dir / "nowhere")), 3);
    ASSERT_EQ(run("simulate " + q(cfg) + " --out " + q(dir / "data")), 0);
    json j = tiny();
    j["phantom"]["n_x"] = 20;
    j["phantom"]["blocks"] = json::array();
    EXPECT_EQ(run("reconstruct " + q(write_config("wide.json", j)) + " " + q(dir / "data")), 2);
    j = tiny();
    j["phantom"]["T"] = 5;
    EXPECT_EQ(run("reconstruct " + q(write_config("long.json", j)) + " " + q(dir / "data")), 2);
}

TEST_F(Cli, DeskReconstructionReportsEveryFrame) {
    const fs::path cfg = kSamples / "configs" / "desk.json";
    ASSERT_EQ(run("simulate " + q(cfg) + " --out " + q(dir / "data")), 0) << slurp(dir / "last.err");
    ASSERT_EQ(run("reconstruct " + q(cfg) + " " + q(dir / "data") + " --out " + q(dir / "run")), 0)
        << slurp(dir / "last.err");
    std::map<dyntomo::Index, int> per_iter;
    for (const auto& r : dyntomo::read_metrics_csv(dir / "run" / "metrics.csv"))
        if (r.phase == "frame") ++per_iter[r.iteration];
    ASSERT_EQ(per_iter.size(), 2u);
    EXPECT_EQ(per_iter[1], 11);
    EXPECT_EQ(per_iter[2], 11);
}

TEST_F(Cli, EvaluateTablesAndErrors) {
    json base = tiny();
    const auto em = write_config("em.json", base);
    base["method"] = {{"name", "IRKFS"}, {"n_iter", 1}};
    const auto plain = write_config("plain.json", base);
    ASSERT_EQ(run("simulate " + q(em) + " --out " + q(dir / "data")), 0);
    ASSERT_EQ(run("reconstruct " + q(em) + " " + q(dir / "data") + " --out " + q(dir / "r_em")), 0);
    ASSERT_EQ(run("reconstruct " + q(plain) + " " + q(dir / "data") + " --out " + q(dir / "r_plain")), 0);

    ASSERT_EQ(run("evaluate " + q(dir / "r_em")), 0) << slurp(dir / "last.err");
    auto table = lines(dir / "last.out");
    ASSERT_EQ(table.size(), 3u);
    EXPECT_EQ(table[0], "method,iteration,mean_rre,seconds,peak_bytes,run");

    ASSERT_EQ(run("evaluate " + q(dir / "r_em") + " " + q(dir / "r_plain") + " --out " + q(dir / "table.csv") +
                  " --plot-dir " + q(dir / "plots")),
              0);
    table = lines(dir / "table.csv");
    ASSERT_EQ(table.size(), 4u);
    double prev = -1.0;
    for (std::size_t k = 1; k < table.size(); ++k) {
        std::istringstream row(table[k]);
        std::string method, iter, rre;
        std::getline(row, method, ',');
        std::getline(row, iter, ',');
        std::getline(row, rre, ',');
        EXPECT_GE(std::stod(rre), prev);
        prev = std::stod(rre);
    }
    EXPECT_EQ(lines(dir / "plots" / "rre_curves.csv").size(), 1u + 4u * 3u);

    json other = tiny();
    other["phantom"]["T"] = 2;
    const auto short_cfg = write_config("short.json", other);
    ASSERT_EQ(run("simulate " + q(short_cfg) + " --out " + q(dir / "data_short")), 0);
    ASSERT_EQ(run("reconstruct " + q(short_cfg) + " " + q(dir / "data_short") + " --out " + q(dir / "r_short")), 0);
    EXPECT_EQ(run("evaluate " + q(dir / "r_em") + " " + q(dir / "r_short")), 2);
    EXPECT_EQ(run("evaluate " + q(dir / "missing_run")), 3);
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("simulate"), 2);
    EXPECT_EQ(run("--help"), 0);
}
