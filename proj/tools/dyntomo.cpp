// dyntomo: simulate / reconstruct / evaluate.
//
// Exit codes: 0 ok, 2 configuration or shape problem, 3 file system, 4 numeric.
// DYNTOMO_THREADS sets the Eigen thread count.

#include "dyntomo/config.hpp"
#include "dyntomo/dyntomo.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dyntomo;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 2;
constexpr int kIo = 3;
constexpr int kNumeric = 4;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string frame_name(Index t) {
    std::ostringstream os;
    os << "frame" << std::setw(3) << std::setfill('0') << t;
    return os.str();
}

int cmd_simulate(const fs::path& config_path, const std::string& out_override) {
    RunConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.output.dir = out_override;
    const fs::path out = cfg.output.dir;
    ensure_dir(out);

    const auto truth = generate_blocks(cfg.phantom);
    const auto geom = cfg.scan_geometry();
    const auto ops = build_operators(geom);
    const auto sino = simulate_sinograms(truth, ops, cfg.noise.sigma_nl, cfg.noise.seed);

    write_array(out / "truth", cfg.phantom.n_x, cfg.phantom.n_y, truth.frames);
    const Index m_t = ops.front().rows();
    for (const auto& h : ops)
        if (h.rows() != m_t) throw ShapeError("simulate: frames with different ray counts are not supported");
    write_array(out / "sinogram", m_t, 1, sino.y);
    if (cfg.output.pgm) {
        for (Index t = 0; t <= cfg.phantom.T; ++t)
            write_pgm(out / ("truth_" + frame_name(t) + ".pgm"), truth.grid, truth.frames[static_cast<std::size_t>(t)]);
    }

    json manifest;
    manifest["format"] = "dyntomo-manifest 1";
    manifest["config"] = to_json(cfg);
    manifest["realized_noise_level"] = noise_level(sino.y, ops, truth.frames);
    manifest["files"] = {{"truth.f64", fnv1a_file(array_data_path(out / "truth"))},
                         {"truth.hdr", fnv1a_file(array_header_path(out / "truth"))},
                         {"sinogram.f64", fnv1a_file(array_data_path(out / "sinogram"))},
                         {"sinogram.hdr", fnv1a_file(array_header_path(out / "sinogram"))}};
    write_json_file(out / "manifest.json", manifest);
    std::cout << "wrote " << (cfg.phantom.T + 1) << " frames and sinograms to " << out.string() << "\n";
    return kOk;
}

int cmd_reconstruct(const fs::path& config_path, const fs::path& data_dir, const std::string& out_override) {
    RunConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.output.dir = out_override;
    if (!fs::is_directory(data_dir)) throw IoError("data directory " + data_dir.string() + " does not exist");

    const ArrayFile truth_file = read_array(data_dir / "truth");
    const ArrayFile sino_file = read_array(data_dir / "sinogram");
    const GridShape grid = cfg.grid();
    const Index frames = cfg.phantom.T + 1;
    if (truth_file.rows != grid.rows || truth_file.cols != grid.cols)
        throw ConfigError("phantom.n_x", "data grid " + std::to_string(truth_file.rows) + "x" +
                                             std::to_string(truth_file.cols) + " does not match config");
    if (static_cast<Index>(truth_file.frames.size()) != frames || static_cast<Index>(sino_file.frames.size()) != frames)
        throw ConfigError("phantom.T", "data frame count does not match config");
    const auto geom = cfg.scan_geometry();
    const auto ops = build_operators(geom);
    for (Index t = 0; t < frames; ++t) {
        if (sino_file.rows * sino_file.cols != ops[static_cast<std::size_t>(t)].rows())
            throw ConfigError("geometry", "sinogram length does not match the configured geometry");
    }

    ImageSequence truth{grid, truth_file.frames};
    SinogramSet data{sino_file.frames, cfg.noise.sigma_nl};
    const auto prior = build_projection(grid, cfg.prior);
    MemoryMeter meter;
    const auto rec = run_emirkfs(data, ops, prior, cfg.method, &truth, &meter);

    const fs::path out = cfg.output.dir;
    ensure_dir(out);
    std::vector<MetricsRow> rows;
    for (const auto& it : rec.iterations) {
        const fs::path dir = out / "recon" / ("iter" + std::to_string(it.iteration));
        for (Index t = 0; t < frames; ++t) {
            const auto& x = it.x_sm[static_cast<std::size_t>(t)];
            write_array(dir / frame_name(t), grid.rows, grid.cols, {x});
            if (cfg.output.pgm) write_pgm(dir / (frame_name(t) + ".pgm"), grid, x);
            rows.push_back({rec.method, it.iteration, t, it.rre[static_cast<std::size_t>(t)], "frame", 0.0, 0});
        }
        double total = 0.0;
        for (const auto& [phase, sec] : it.seconds) {
            rows.push_back({rec.method, it.iteration, -1, it.mean_rre(), phase, sec, 0});
            total += sec;
        }
        rows.push_back({rec.method, it.iteration, -1, it.mean_rre(), "total", total, rec.peak_bytes});
    }
    write_metrics_csv(out / "metrics.csv", rows);

    json run;
    run["format"] = "dyntomo-run 1";
    run["method"] = rec.method;
    run["grid"] = {grid.rows, grid.cols};
    run["T"] = cfg.phantom.T;
    run["peak_bytes"] = rec.peak_bytes;
    run["config"] = to_json(cfg);
    run["data_dir"] = fs::absolute(data_dir).string();
    write_json_file(out / "run.json", run);

    for (const auto& it : rec.iterations)
        std::cout << rec.method << " iteration " << it.iteration << ": mean RRE " << it.mean_rre() << "\n";
    return kOk;
}

struct TableRow {
    std::string run;
    std::string method;
    Index iteration = 0;
    double mean_rre = 0.0;
    double seconds = 0.0;
    std::size_t peak_bytes = 0;
};

int cmd_evaluate(const std::vector<std::string>& runs, const std::string& out_path, const std::string& plot_dir) {
    std::vector<TableRow> table;
    std::vector<std::string> curves;
    std::optional<std::pair<std::vector<Index>, Index>> shape;  // grid, T
    for (const auto& r : runs) {
        const fs::path dir = r;
        const json run = read_json_file(dir / "run.json");
        std::vector<Index> grid;
        Index T = 0;
        try {
            grid = run.at("grid").get<std::vector<Index>>();
            T = run.at("T").get<Index>();
        } catch (const json::exception& e) {
            throw IoError((dir / "run.json").string() + ": " + e.what());
        }
        if (!shape) {
            shape = {grid, T};
        } else if (shape->first != grid || shape->second != T) {
            throw ConfigError("runs", "run " + r + " has a different grid or frame count");
        }
        std::map<Index, TableRow> by_iter;
        for (const auto& m : read_metrics_csv(dir / "metrics.csv")) {
            if (m.phase == "frame") {
                std::ostringstream c;
                c << std::setprecision(10) << r << "," << m.method << "," << m.iteration << "," << m.timestep << ","
                  << m.rre;
                curves.push_back(c.str());
            } else if (m.phase == "total") {
                by_iter[m.iteration] = {r, m.method, m.iteration, m.rre, m.seconds, m.bytes};
            }
        }
        for (auto& [k, row] : by_iter) table.push_back(row);
    }
    std::stable_sort(table.begin(), table.end(),
                     [](const TableRow& a, const TableRow& b) { return a.mean_rre < b.mean_rre; });

    std::ostringstream os;
    os << std::setprecision(10) << "method,iteration,mean_rre,seconds,peak_bytes,run\n";
    for (const auto& t : table)
        os << t.method << "," << t.iteration << "," << t.mean_rre << "," << t.seconds << "," << t.peak_bytes << ","
           << t.run << "\n";
    if (out_path.empty()) {
        std::cout << os.str();
    } else {
        std::ofstream f(out_path);
        if (!f) throw IoError("cannot open " + out_path + " for writing");
        f << os.str();
    }
    if (!plot_dir.empty()) {
        ensure_dir(plot_dir);
        std::ofstream f(fs::path(plot_dir) / "rre_curves.csv");
        if (!f) throw IoError("cannot write plot data in " + plot_dir);
        f << "run,method,iteration,timestep,rre\n";
        for (const auto& c : curves) f << c << "\n";
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("DYNTOMO_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) Eigen::setNbThreads(n);
    }

    CLI::App app{"Dynamic tomography with reduced Kalman filtering and smoothing"};
    app.require_subcommand(1);

    std::string config, data, out, eval_out, plot_dir;
    std::vector<std::string> runs;

    auto* sim = app.add_subcommand("simulate", "Generate phantom frames and noisy sinograms");
    sim->add_option("config", config, "JSON config")->required();
    sim->add_option("--out", out, "Output directory (overrides output.dir)");

    auto* rec = app.add_subcommand("reconstruct", "Reconstruct from simulated data");
    rec->add_option("config", config, "JSON config or manifest")->required();
    rec->add_option("data", data, "Directory written by simulate")->required();
    rec->add_option("--out", out, "Output directory (overrides output.dir)");

    auto* ev = app.add_subcommand("evaluate", "Compare reconstruction runs");
    ev->add_option("runs", runs, "Run directories written by reconstruct")->required();
    ev->add_option("--out", eval_out, "Write the table here instead of stdout");
    ev->add_option("--plot-dir", plot_dir, "Write per-frame RRE curves here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*sim) return cmd_simulate(config, out);
        if (*rec) return cmd_reconstruct(config, data, out);
        if (*ev) return cmd_evaluate(runs, eval_out, plot_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const DomainError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    }
    return kConfig;
}
