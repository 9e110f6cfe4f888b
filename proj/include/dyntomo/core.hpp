#pragma once

/// @file core.hpp
/// Shared numeric aliases, error types and the image-sequence container.

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dyntomo {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration value is out of its valid range.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A factorization or solve failed (loss of definiteness, singular system, ...).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A metric was evaluated outside its domain (for example a zero reference).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Reading or writing a file failed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

/// Pixel grid of an image: `rows` is n_x, `cols` is n_y.
///
/// Images are vectorized row-major, pixel (i, j) lives at index i * cols + j.
struct GridShape {
    Index rows = 0;
    Index cols = 0;

    Index size() const { return rows * cols; }
    Index index(Index i, Index j) const { return i * cols + j; }

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Ordered stack of frames x_0, ..., x_T on a common grid.
struct ImageSequence {
    GridShape grid;
    std::vector<Vector> frames;

    Index frame_count() const { return static_cast<Index>(frames.size()); }
    /// Number of transitions T (frames minus one).
    Index transitions() const { return frame_count() - 1; }
};

/// Symmetric part (A + Aᵀ)/2, computed in place.
inline void symmetrize(Matrix& a) {
    require_shape(a.rows() == a.cols(), "symmetrize: matrix is not square");
    for (Index j = 0; j < a.cols(); ++j) {
        for (Index i = j + 1; i < a.rows(); ++i) {
            const double m = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = m;
            a(j, i) = m;
        }
    }
}

}  // namespace dyntomo
