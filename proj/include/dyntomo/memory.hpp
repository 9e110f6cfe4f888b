#pragma once

/// @file memory.hpp
/// Explicit accounting of dense working storage.
///
/// Algorithms register every dense block they keep alive (n_s × r panels,
/// r × r matrices, stored trajectories, diagonals) through RAII holds. The
/// meter reports the high-water mark. Inputs owned by the caller (P_r, H_i,
/// y_i) are not registered.

#include "dyntomo/core.hpp"

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

namespace dyntomo {

class MemoryMeter {
public:
    /// Keeps `bytes` registered until destroyed or released.
    class Hold {
    public:
        Hold() = default;
        Hold(MemoryMeter* meter, std::size_t bytes) : meter_(meter), bytes_(bytes) {
            if (meter_) meter_->add(bytes_);
        }
        Hold(const Hold&) = delete;
        Hold& operator=(const Hold&) = delete;
        Hold(Hold&& other) noexcept : meter_(std::exchange(other.meter_, nullptr)), bytes_(other.bytes_) {}
        Hold& operator=(Hold&& other) noexcept {
            if (this != &other) {
                release();
                meter_ = std::exchange(other.meter_, nullptr);
                bytes_ = other.bytes_;
            }
            return *this;
        }
        ~Hold() { release(); }

        void release() {
            if (meter_) meter_->sub(bytes_);
            meter_ = nullptr;
        }

        std::size_t bytes() const { return bytes_; }

    private:
        MemoryMeter* meter_ = nullptr;
        std::size_t bytes_ = 0;
    };

    Hold hold(std::size_t bytes) { return Hold(this, bytes); }

    std::size_t current() const { return current_; }
    std::size_t peak() const { return peak_; }
    void reset_peak() { peak_ = current_; }

private:
    void add(std::size_t b) {
        current_ += b;
        peak_ = std::max(peak_, current_);
    }
    void sub(std::size_t b) { current_ -= std::min(b, current_); }

    std::size_t current_ = 0;
    std::size_t peak_ = 0;
};

/// Null-safe hold.
inline MemoryMeter::Hold hold(MemoryMeter* meter, std::size_t bytes) { return MemoryMeter::Hold(meter, bytes); }

inline std::size_t bytes_of_doubles(Index count) { return static_cast<std::size_t>(count) * sizeof(double); }
inline std::size_t bytes_of(const Matrix& m) { return bytes_of_doubles(m.size()); }
inline std::size_t bytes_of(const Vector& v) { return bytes_of_doubles(v.size()); }
inline std::size_t bytes_of(const std::vector<Vector>& vs) {
    std::size_t b = 0;
    for (const auto& v : vs) b += bytes_of(v);
    return b;
}

/// Lower triangle of a symmetric matrix, column-major.
class PackedSymmetric {
public:
    PackedSymmetric() = default;
    explicit PackedSymmetric(const Matrix& a) : n_(a.rows()), data_(static_cast<std::size_t>(n_ * (n_ + 1) / 2)) {
        require_shape(a.rows() == a.cols(), "PackedSymmetric: matrix is not square");
        std::size_t k = 0;
        for (Index j = 0; j < n_; ++j)
            for (Index i = j; i < n_; ++i) data_[k++] = a(i, j);
    }

    Index dim() const { return n_; }
    std::size_t stored_doubles() const { return data_.size(); }

    Matrix unpack() const {
        Matrix a(n_, n_);
        std::size_t k = 0;
        for (Index j = 0; j < n_; ++j) {
            for (Index i = j; i < n_; ++i) {
                a(i, j) = data_[k];
                a(j, i) = data_[k];
                ++k;
            }
        }
        return a;
    }

private:
    Index n_ = 0;
    std::vector<double> data_;
};

}  // namespace dyntomo
