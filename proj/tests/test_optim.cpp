#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "adroit/optim.hpp"

using namespace adroit;

TEST_CASE("sgd with zero learning rate leaves parameters unchanged") {
    Params p{{1.0, -2.0, 3.0}};
    auto s = OptimizerState::sgd(0.0, 0.9, 0.01, 3);
    sgd_momentum_step(p, {5.0, 5.0, 5.0}, s);
    REQUIRE(p.values == std::vector<double>{1.0, -2.0, 3.0});
    REQUIRE(s.step == 1);
}

TEST_CASE("one plain sgd step") {
    // m=0, wd=0, p=1, g=2, lr=0.1 -> p = 0.8
    Params p{{1.0}};
    auto s = OptimizerState::sgd(0.1, 0.0, 0.0, 1);
    sgd_momentum_step(p, {2.0}, s);
    REQUIRE(p.values[0] == 0.8);
}

TEST_CASE("sgd momentum trajectory on a quadratic matches the scalar oracle") {
    // Scalar simulation oracle for f(p) = p^2 with the documented update:
    // v <- m*v + (g + wd*p); p <- p - lr*v.
    double op = 1.0, ov = 0.0;
    const double lr = 0.1, mom = 0.9;
    Params p{{1.0}};
    auto s = OptimizerState::sgd(lr, mom, 0.0, 1);
    for (int step = 0; step < 200; ++step) {
        double g = 2.0 * op;
        ov = mom * ov + g;
        op = op - lr * ov;
        sgd_momentum_step(p, {2.0 * p.values[0]}, s);
        REQUIRE(p.values[0] == op); // identical arithmetic
        if (step == 99) {
            // oscillatory decay: |p| ~ 2.9e-3 at step 100, still shrinking
            REQUIRE(std::abs(op) < 5e-3);
        }
    }
    REQUIRE(std::abs(op) < 1e-3); // converged well before 200 steps
}

TEST_CASE("sgd applies coupled weight decay") {
    // v = g + wd*p = 2 + 0.5*1 = 2.5; p = 1 - 0.1*2.5 = 0.75
    Params p{{1.0}};
    auto s = OptimizerState::sgd(0.1, 0.0, 0.5, 1);
    sgd_momentum_step(p, {2.0}, s);
    REQUIRE(p.values[0] == Catch::Approx(0.75).margin(1e-15));
}

TEST_CASE("adam first step magnitude is the learning rate") {
    const double lr = 3e-4;
    Params p{{1.0, -1.0}};
    auto s = OptimizerState::adam(lr, 2);
    adam_step(p, {0.5, -2.0}, s);
    // bias correction makes the first step lr * sign(g)
    REQUIRE(std::abs((1.0 - p.values[0]) - lr) < 1e-10);
    REQUIRE(std::abs((p.values[1] + 1.0) - lr) < 1e-10);
}

TEST_CASE("adam with zero learning rate leaves parameters unchanged") {
    Params p{{2.0}};
    auto s = OptimizerState::adam(0.0, 1);
    adam_step(p, {7.0}, s);
    REQUIRE(p.values[0] == 2.0);
}

TEST_CASE("adam trajectory matches an independent scalar re-implementation") {
    // Independent oracle: plain double arithmetic on a 2-d quadratic
    // f(p) = 2*p0^2 + 0.5*p1^2.
    double q0 = 1.5, q1 = -2.0;
    double m0 = 0, m1 = 0, v0 = 0, v1 = 0;
    const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    Params p{{1.5, -2.0}};
    auto s = OptimizerState::adam(lr, 2);
    for (int step = 1; step <= 300; ++step) {
        double g0 = 4.0 * q0, g1 = 1.0 * q1;
        m0 = b1 * m0 + (1 - b1) * g0;
        m1 = b1 * m1 + (1 - b1) * g1;
        v0 = b2 * v0 + (1 - b2) * g0 * g0;
        v1 = b2 * v1 + (1 - b2) * g1 * g1;
        double c1 = 1 - std::pow(b1, step), c2 = 1 - std::pow(b2, step);
        q0 -= lr * (m0 / c1) / (std::sqrt(v0 / c2) + eps);
        q1 -= lr * (m1 / c1) / (std::sqrt(v1 / c2) + eps);

        adam_step(p, {4.0 * p.values[0], 1.0 * p.values[1]}, s);
        REQUIRE(std::abs(p.values[0] - q0) < 1e-10);
        REQUIRE(std::abs(p.values[1] - q1) < 1e-10);
    }
    REQUIRE(std::abs(p.values[0]) < 0.05);
    REQUIRE(std::abs(p.values[1]) < 0.2);
}

TEST_CASE("optimizer_step dispatches on kind and validates shapes") {
    Params p{{1.0}};
    auto s = OptimizerState::adam(0.1, 1);
    optimizer_step(p, {1.0}, s);
    REQUIRE(p.values[0] < 1.0);
    REQUIRE_THROWS_AS(adam_step(p, {1.0, 2.0}, s), std::invalid_argument);
    auto sgd = OptimizerState::sgd(0.1, 0.9, 0.0, 1);
    REQUIRE_THROWS_AS(adam_step(p, {1.0}, sgd), std::invalid_argument);
}

TEST_CASE("global norm clipping rescales only oversized gradients") {
    std::vector<double> g{3.0, 4.0}; // norm 5
    clip_global_norm(g, 10.0);
    REQUIRE(g == std::vector<double>{3.0, 4.0});
    clip_global_norm(g, 2.5);
    REQUIRE(std::abs(std::sqrt(g[0] * g[0] + g[1] * g[1]) - 2.5) < 1e-12);
    std::vector<double> g2{1.0};
    clip_global_norm(g2, 0.0); // disabled
    REQUIRE(g2[0] == 1.0);
}
