#pragma once

/// @file metrics.hpp
/// Relative reconstruction error, realized noise level and wall-clock timing.

#include "dyntomo/core.hpp"
#include "dyntomo/linops.hpp"

#include <chrono>
#include <cmath>
#include <vector>

namespace dyntomo {

/// ‖estimate - truth‖ / ‖truth‖.
inline double rre(const Vector& estimate, const Vector& truth) {
    require_shape(estimate.size() == truth.size(), "rre: length mismatch");
    const double t = truth.norm();
    if (!(t > 0.0)) throw DomainError("rre: reference has zero norm");
    return (estimate - truth).norm() / t;
}

/// ‖y - H x‖ / ‖H x‖.
inline double noise_level(const Vector& y, const LinearOperator& H, const Vector& x_true) {
    const Vector hx = H.apply(x_true);
    require_shape(hx.size() == y.size(), "noise_level: length mismatch");
    const double s = hx.norm();
    if (!(s > 0.0)) throw DomainError("noise_level: zero signal");
    return (y - hx).norm() / s;
}

/// Noise level over all frames taken together.
inline double noise_level(const std::vector<Vector>& y, const std::vector<LinearOperator>& H,
                          const std::vector<Vector>& x_true) {
    require_shape(y.size() == H.size() && y.size() == x_true.size(), "noise_level: frame count mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        const Vector hx = H[t].apply(x_true[t]);
        require_shape(hx.size() == y[t].size(), "noise_level: length mismatch");
        num += (y[t] - hx).squaredNorm();
        den += hx.squaredNorm();
    }
    if (!(den > 0.0)) throw DomainError("noise_level: zero signal");
    return std::sqrt(num) / std::sqrt(den);
}

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace dyntomo
