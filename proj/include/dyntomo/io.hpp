#pragma once

/// @file io.hpp
/// On-disk formats.
///
/// Arrays are stored as `<base>.f64` (flat little-endian float64, frame-major,
/// each frame row-major) next to a text header `<base>.hdr`:
///
///     dyntomo-array 1
///     dtype f64
///     order row-major
///     rows <n>
///     cols <n>
///     frames <n>

#include "dyntomo/core.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace dyntomo {

struct ArrayFile {
    Index rows = 0;
    Index cols = 0;
    std::vector<Vector> frames;
};

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t out = 0;
        for (int k = 0; k < 8; ++k) out |= ((v >> (8 * k)) & 0xffu) << (8 * (7 - k));
        return out;
    }
}

}  // namespace detail

inline std::string array_data_path(const std::filesystem::path& base) { return base.string() + ".f64"; }
inline std::string array_header_path(const std::filesystem::path& base) { return base.string() + ".hdr"; }

inline void write_array(const std::filesystem::path& base, Index rows, Index cols, const std::vector<Vector>& frames) {
    for (const auto& f : frames)
        require_shape(f.size() == rows * cols, "write_array: frame size does not match rows x cols");
    if (base.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(base.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + base.parent_path().string() + ": " + ec.message());
    }
    {
        std::ofstream hdr(array_header_path(base));
        if (!hdr) throw IoError("cannot open " + array_header_path(base) + " for writing");
        hdr << "dyntomo-array 1\n"
            << "dtype f64\n"
            << "order row-major\n"
            << "rows " << rows << "\n"
            << "cols " << cols << "\n"
            << "frames " << frames.size() << "\n";
        if (!hdr) throw IoError("write failed: " + array_header_path(base));
    }
    std::ofstream out(array_data_path(base), std::ios::binary);
    if (!out) throw IoError("cannot open " + array_data_path(base) + " for writing");
    std::vector<char> buf;
    for (const auto& f : frames) {
        buf.resize(static_cast<std::size_t>(f.size()) * 8);
        for (Index k = 0; k < f.size(); ++k) {
            const std::uint64_t bits = detail::to_little(std::bit_cast<std::uint64_t>(f(k)));
            std::memcpy(buf.data() + 8 * k, &bits, 8);
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw IoError("write failed: " + array_data_path(base));
}

inline ArrayFile read_array(const std::filesystem::path& base) {
    std::ifstream hdr(array_header_path(base));
    if (!hdr) throw IoError("cannot open " + array_header_path(base));
    std::string magic, version;
    hdr >> magic >> version;
    if (magic != "dyntomo-array" || version != "1") throw IoError(array_header_path(base) + ": not an array header");
    ArrayFile a;
    Index frames = -1;
    std::string key, value;
    bool dtype_ok = false, order_ok = false;
    while (hdr >> key >> value) {
        if (key == "dtype") dtype_ok = value == "f64";
        else if (key == "order") order_ok = value == "row-major";
        else if (key == "rows") a.rows = std::stoll(value);
        else if (key == "cols") a.cols = std::stoll(value);
        else if (key == "frames") frames = std::stoll(value);
        else throw IoError(array_header_path(base) + ": unknown header key '" + key + "'");
    }
    if (!dtype_ok || !order_ok || a.rows < 0 || a.cols < 0 || frames < 0)
        throw IoError(array_header_path(base) + ": incomplete or unsupported header");

    std::ifstream in(array_data_path(base), std::ios::binary);
    if (!in) throw IoError("cannot open " + array_data_path(base));
    const Index per = a.rows * a.cols;
    std::vector<char> buf(static_cast<std::size_t>(per) * 8);
    for (Index t = 0; t < frames; ++t) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() != static_cast<std::streamsize>(buf.size()))
            throw IoError(array_data_path(base) + ": file shorter than header declares");
        Vector f(per);
        for (Index k = 0; k < per; ++k) {
            std::uint64_t bits;
            std::memcpy(&bits, buf.data() + 8 * k, 8);
            f(k) = std::bit_cast<double>(detail::to_little(bits));
        }
        a.frames.push_back(std::move(f));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw IoError(array_data_path(base) + ": file longer than header declares");
    return a;
}

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
inline std::string fnv1a_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 15];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize k = 0; k < in.gcount(); ++k) {
            h ^= static_cast<unsigned char>(buf[k]);
            h *= 1099511628211ull;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

/// 8-bit binary PGM, intensities clipped to [0, 1].
inline void write_pgm(const std::filesystem::path& path, GridShape grid, const Vector& image) {
    require_shape(image.size() == grid.size(), "write_pgm: image size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P5\n" << grid.cols << " " << grid.rows << "\n255\n";
    for (Index k = 0; k < image.size(); ++k) {
        const double v = std::clamp(image(k), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

/// One row of the metrics table.
struct MetricsRow {
    std::string method;
    Index iteration = 0;
    Index timestep = -1;  ///< -1 for run-level rows
    double rre = 0.0;
    std::string phase;
    double seconds = 0.0;
    std::size_t bytes = 0;
};

inline const char* metrics_header() { return "method,iteration,timestep,rre,phase,seconds,bytes"; }

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << metrics_header() << "\n" << std::setprecision(17);
    for (const auto& r : rows) {
        out << r.method << "," << r.iteration << "," << r.timestep << "," << r.rre << "," << r.phase << ","
            << r.seconds << "," << r.bytes << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != metrics_header()) throw IoError(path.string() + ": unexpected header");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw IoError(path.string() + ": malformed row '" + line + "'");
        try {
            rows.push_back({cells[0], std::stoll(cells[1]), std::stoll(cells[2]), std::stod(cells[3]), cells[4],
                            std::stod(cells[5]), static_cast<std::size_t>(std::stoull(cells[6]))});
        } catch (const std::exception&) {
            throw IoError(path.string() + ": malformed row '" + line + "'");
        }
    }
    return rows;
}

}  // namespace dyntomo
