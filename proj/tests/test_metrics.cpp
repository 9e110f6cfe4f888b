#include "dyntomo/metrics.hpp"
#include "dyntomo/radon.hpp"

#include <gtest/gtest.h>

using namespace dyntomo;

TEST(Metrics, RelativeError) {
    Vector truth(2), est(2);
    truth << 3.0, 4.0;
    est << 3.0, 5.0;
    EXPECT_DOUBLE_EQ(rre(est, truth), 0.2);
    EXPECT_EQ(rre(truth, truth), 0.0);
    EXPECT_DOUBLE_EQ(rre(Vector::Zero(2), truth), 1.0);
    EXPECT_THROW(rre(est, Vector::Zero(2)), DomainError);
    EXPECT_THROW(rre(Vector::Zero(3), truth), ShapeError);
}

TEST(Metrics, NoiseLevelSingleAndPooled) {
    const auto H = LinearOperator::identity(2);
    Vector x(2), y(2);
    x << 3.0, 4.0;
    y << 3.0, 4.5;
    EXPECT_DOUBLE_EQ(noise_level(y, H, x), 0.1);
    // Pooled: sqrt(0.25 + 1) / sqrt(25 + 100).
    Vector x2 = 2.0 * x, y2 = x2;
    y2(1) += 1.0;
    EXPECT_DOUBLE_EQ(noise_level({y, y2}, {H, H}, {x, x2}), std::sqrt(1.25) / std::sqrt(125.0));
    EXPECT_THROW(noise_level(y, H, Vector::Zero(2)), DomainError);
    EXPECT_THROW(noise_level({y}, {H, H}, {x, x}), ShapeError);
}

TEST(Metrics, StopwatchIsMonotone) {
    Stopwatch s;
    const double a = s.seconds();
    const double b = s.seconds();
    EXPECT_GE(a, 0.0);
    EXPECT_GE(b, a);
}
