#pragma once

/// @file config.hpp
/// Run configuration: JSON schema, validation and the resolved form written
/// to manifests. Requires nlohmann_json.
///
/// Sections and keys (all optional, defaults in brackets):
///
///     phantom:  n_x [64], n_y [64], T [10], seed [0],
///               blocks [default moving blocks]: list of
///               {size, start: [row, col], velocity: [row, col], intensity}
///     geometry: n_angles [5], rotation_offset [0], detector_count [0 = auto]
///     prior:    alpha [0.28], ell [2], r [300]
///     method:   name [EMIRKFS-M3], n_iter [2], q_scale [1], r_scale [1],
///               panel_rows [128],
///               floor_absolute [1e-12], floor_relative [1e-8]
///     motion:   zeta [0], patch: [z_x, z_y] [[4, 4]],
///               mmgks: {lambda [1], epsilon [0], l0 [5], k_max [30], tol [1e-4]}
///     noise:    sigma_nl [0.01], seed [2]
///     output:   dir ["out"], pgm [false]
///
/// Unknown keys anywhere raise ConfigError.

#include "dyntomo/core.hpp"
#include "dyntomo/phantom.hpp"
#include "dyntomo/pipeline.hpp"
#include "dyntomo/prior.hpp"
#include "dyntomo/radon.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

namespace dyntomo {

struct GeometryConfig {
    Index n_angles = 5;
    double rotation_offset = 0.0;
    Index detector_count = 0;
};

struct NoiseConfig {
    double sigma_nl = 0.01;
    std::uint64_t seed = 2;
};

struct OutputConfig {
    std::string dir = "out";
    bool pgm = false;
};

struct RunConfig {
    BlocksPhantomConfig phantom;
    GeometryConfig geometry;
    PriorConfig prior{0.28, 2.0, 300};
    MethodSpec method = MethodSpec::from_name("EMIRKFS-M3");
    NoiseConfig noise;
    OutputConfig output;

    GridShape grid() const { return {phantom.n_x, phantom.n_y}; }
    ScanGeometry scan_geometry() const {
        return equispaced_geometry(grid(), phantom.T + 1, geometry.n_angles, geometry.rotation_offset,
                                   geometry.detector_count);
    }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError(section, "must be an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError(section.empty() ? it.key() : section + "." + it.key(), "unknown key");
    }
}

template <class T>
void read_key(const json& obj, const std::string& section, const char* key, T& out) {
    if (!obj.contains(key)) return;
    const std::string field = section + "." + key;
    const json& v = obj.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(field, "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(field, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned() == false && v.get<std::int64_t>() < 0)
                    throw ConfigError(field, "expected a nonnegative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(field, "expected a number");
        } else {
            if (!v.is_string()) throw ConfigError(field, "expected a string");
        }
        out = v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(field, e.what());
    }
}

inline std::pair<Index, Index> read_pair(const json& v, const std::string& field) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        throw ConfigError(field, "expected a pair of integers");
    return {v[0].get<Index>(), v[1].get<Index>()};
}

}  // namespace detail

inline void validate(const RunConfig& c);

/// Parses and validates. Accepts either a config document or a manifest
/// (whose "config" member is used).
inline RunConfig parse_config(const nlohmann::json& doc_in) {
    using detail::json;
    const json& doc = (doc_in.is_object() && doc_in.contains("config") && doc_in.contains("files"))
                          ? doc_in.at("config")
                          : doc_in;
    detail::reject_unknown(doc, "", {"phantom", "geometry", "prior", "method", "motion", "noise", "output"});
    RunConfig c;
    const json empty = json::object();
    auto section = [&](const char* name) -> const json& { return doc.contains(name) ? doc.at(name) : empty; };

    {
        const json& s = section("phantom");
        detail::reject_unknown(s, "phantom", {"n_x", "n_y", "T", "seed", "blocks"});
        detail::read_key(s, "phantom", "n_x", c.phantom.n_x);
        detail::read_key(s, "phantom", "n_y", c.phantom.n_y);
        detail::read_key(s, "phantom", "T", c.phantom.T);
        detail::read_key(s, "phantom", "seed", c.phantom.seed);
        if (s.contains("blocks")) {
            const json& bl = s.at("blocks");
            if (!bl.is_array()) throw ConfigError("phantom.blocks", "expected a list");
            c.phantom.blocks.clear();
            for (std::size_t k = 0; k < bl.size(); ++k) {
                const std::string f = "phantom.blocks[" + std::to_string(k) + "]";
                detail::reject_unknown(bl[k], f, {"size", "start", "velocity", "intensity"});
                Block b;
                detail::read_key(bl[k], f, "size", b.size);
                detail::read_key(bl[k], f, "intensity", b.intensity);
                if (bl[k].contains("start")) std::tie(b.start_row, b.start_col) = detail::read_pair(bl[k]["start"], f + ".start");
                if (bl[k].contains("velocity"))
                    std::tie(b.velocity_row, b.velocity_col) = detail::read_pair(bl[k]["velocity"], f + ".velocity");
                c.phantom.blocks.push_back(b);
            }
        }
    }
    {
        const json& s = section("geometry");
        detail::reject_unknown(s, "geometry", {"n_angles", "rotation_offset", "detector_count"});
        detail::read_key(s, "geometry", "n_angles", c.geometry.n_angles);
        detail::read_key(s, "geometry", "rotation_offset", c.geometry.rotation_offset);
        detail::read_key(s, "geometry", "detector_count", c.geometry.detector_count);
    }
    {
        const json& s = section("prior");
        detail::reject_unknown(s, "prior", {"alpha", "ell", "r"});
        detail::read_key(s, "prior", "alpha", c.prior.alpha);
        detail::read_key(s, "prior", "ell", c.prior.ell);
        detail::read_key(s, "prior", "r", c.prior.r);
    }
    {
        const json& s = section("method");
        detail::reject_unknown(s, "method",
                               {"name", "n_iter", "q_scale", "r_scale", "panel_rows", "floor_absolute",
                                "floor_relative"});
        std::string name = c.method.name;
        detail::read_key(s, "method", "name", name);
        c.method = MethodSpec::from_name(name);
        detail::read_key(s, "method", "n_iter", c.method.n_iter);
        detail::read_key(s, "method", "q_scale", c.method.q_scale);
        detail::read_key(s, "method", "r_scale", c.method.r_scale);
        detail::read_key(s, "method", "panel_rows", c.method.panel_rows);
        detail::read_key(s, "method", "floor_absolute", c.method.floor.absolute);
        detail::read_key(s, "method", "floor_relative", c.method.floor.relative);
    }
    {
        const json& s = section("motion");
        detail::reject_unknown(s, "motion", {"zeta", "patch", "mmgks"});
        detail::read_key(s, "motion", "zeta", c.method.motion.zeta);
        if (s.contains("patch")) {
            const json& p = s.at("patch");
            if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
                throw ConfigError("z_x", "motion.patch must be a pair of integers [z_x, z_y]");
            c.method.motion.z_x = p[0].get<Index>();
            c.method.motion.z_y = p[1].get<Index>();
        }
        if (s.contains("mmgks")) {
            const json& m = s.at("mmgks");
            detail::reject_unknown(m, "motion.mmgks", {"lambda", "epsilon", "l0", "k_max", "tol"});
            auto& o = c.method.motion.of;
            detail::read_key(m, "motion.mmgks", "lambda", o.lambda);
            detail::read_key(m, "motion.mmgks", "epsilon", o.epsilon);
            detail::read_key(m, "motion.mmgks", "l0", o.l0);
            detail::read_key(m, "motion.mmgks", "k_max", o.k_max);
            detail::read_key(m, "motion.mmgks", "tol", o.tol);
        }
    }
    {
        const json& s = section("noise");
        detail::reject_unknown(s, "noise", {"sigma_nl", "seed"});
        detail::read_key(s, "noise", "sigma_nl", c.noise.sigma_nl);
        detail::read_key(s, "noise", "seed", c.noise.seed);
    }
    {
        const json& s = section("output");
        detail::reject_unknown(s, "output", {"dir", "pgm"});
        detail::read_key(s, "output", "dir", c.output.dir);
        detail::read_key(s, "output", "pgm", c.output.pgm);
    }
    validate(c);
    return c;
}

inline void validate(const RunConfig& c) {
    validate(c.phantom);
    const GridShape g = c.grid();
    if (c.geometry.n_angles < 1) throw ConfigError("geometry.n_angles", "must be at least 1");
    if (c.geometry.detector_count < 0) throw ConfigError("geometry.detector_count", "must be nonnegative");
    validate(c.prior, g);
    validate(c.method, g);
    if (c.method.motion.of.l0 < 1) throw ConfigError("motion.mmgks.l0", "must be at least 1");
    if (c.method.motion.of.k_max < 1) throw ConfigError("motion.mmgks.k_max", "must be at least 1");
    if (!(c.method.motion.of.tol > 0.0)) throw ConfigError("motion.mmgks.tol", "must be positive");
    if (!(c.noise.sigma_nl >= 0.0)) throw ConfigError("noise.sigma_nl", "must be nonnegative");
    if (c.output.dir.empty()) throw ConfigError("output.dir", "must not be empty");
}

/// Fully resolved config; every numerics-relevant parameter is present.
inline nlohmann::json to_json(const RunConfig& c) {
    using nlohmann::json;
    json blocks = json::array();
    for (const auto& b : c.phantom.blocks)
        blocks.push_back({{"size", b.size},
                          {"start", {b.start_row, b.start_col}},
                          {"velocity", {b.velocity_row, b.velocity_col}},
                          {"intensity", b.intensity}});
    const auto& o = c.method.motion.of;
    return json{
        {"phantom", {{"n_x", c.phantom.n_x}, {"n_y", c.phantom.n_y}, {"T", c.phantom.T}, {"seed", c.phantom.seed},
                     {"blocks", blocks}}},
        {"geometry", {{"n_angles", c.geometry.n_angles},
                      {"rotation_offset", c.geometry.rotation_offset},
                      {"detector_count", c.geometry.detector_count}}},
        {"prior", {{"alpha", c.prior.alpha}, {"ell", c.prior.ell}, {"r", c.prior.r}}},
        {"method", {{"name", c.method.canonical_name()},
                    {"n_iter", c.method.n_iter},
                    {"q_scale", c.method.q_scale},
                    {"r_scale", c.method.r_scale},
                    {"panel_rows", c.method.panel_rows},
                    {"floor_absolute", c.method.floor.absolute},
                    {"floor_relative", c.method.floor.relative}}},
        {"motion", {{"zeta", c.method.motion.zeta},
                    {"patch", {c.method.motion.z_x, c.method.motion.z_y}},
                    {"mmgks", {{"lambda", o.lambda}, {"epsilon", o.epsilon}, {"l0", o.l0}, {"k_max", o.k_max},
                               {"tol", o.tol}}}}},
        {"noise", {{"sigma_nl", c.noise.sigma_nl}, {"seed", c.noise.seed}}},
        {"output", {{"dir", c.output.dir}, {"pgm", c.output.pgm}}},
    };
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config", path.string() + ": " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path.string());
}

inline RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_json_file(path)); }

}  // namespace dyntomo
