#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace exitctrl;
using Catch::Matchers::WithinAbs;

namespace {

BsdeSolution solve_plain(const ControlProblem& p, const PathBundle& b, RegressionConfig reg = {}) {
    const auto stopped = stop_paths(b, StopRule::none());
    return solve_bsde(p, b, terminal_values(b, stopped, p.g), Driver::of(p), reg);
}

}  // namespace

TEST_CASE("zero data gives zero solution") {
    const auto p = fixtures::scalar(Expr::constant(0.0), Expr::constant(std::sqrt(2.0)), Expr::constant(0.0),
                                    Expr::constant(0.0));
    RegressionConfig reg;
    reg.store_paths = true;
    const auto b = simulate(p, Policy::constant(0), std::vector<double>{0.0}, fixtures::sim(500, 1e-2));
    const auto s = solve_plain(p, b, reg);
    CHECK(s.y0 == 0.0);
    CHECK(s.stderr_ == 0.0);
    for (std::size_t q = 0; q < 50; ++q)
        for (std::size_t n = 0; n < s.stop_step[q]; ++n) {
            CHECK(s.y(q, n) == 0.0);
            CHECK(s.z(q, n, 0) == 0.0);
        }
}

TEST_CASE("unit source recovers the mean exit time") {
    const auto p = fixtures::catalog("poisson1d");
    const auto b = simulate(p, Policy::constant(0), std::vector<double>{0.0}, fixtures::sim(20000));
    const auto s = solve_plain(p, b);
    CHECK(std::abs(s.y0 - 0.5) <= 3.0 * s.stderr_ + std::sqrt(1e-3));
}

TEST_CASE("linear semilinear driver recovers the hyperbolic closed form") {
    const auto p = fixtures::catalog("semilinear1d");
    const double exact = fixtures::semilinear_exact(2.0, 0.0);
    CHECK_THAT(exact, WithinAbs(0.270451, 1e-6));
    const auto b = simulate(p, Policy::constant(0), std::vector<double>{0.0}, fixtures::sim(20000, 1e-3, 5.0, 2));
    const auto s = solve_plain(p, b);
    CHECK(std::abs(s.y0 - exact) <= 3.0 * s.stderr_ + 0.01);
}

TEST_CASE("semigroup special cases") {
    const auto p = fixtures::catalog("semilinear1d");
    const auto b = simulate(p, Policy::constant(0), std::vector<double>{0.2}, fixtures::sim(2000, 1e-3, 5.0, 4));
    RegressionConfig reg;
    std::vector<double> eta(b.n_paths());
    for (std::size_t q = 0; q < eta.size(); ++q) eta[q] = std::sin(static_cast<double>(q));
    RunningStats mean;
    for (double e : eta) mean.add(e);

    SECTION("Theta = 0 returns the mean of eta") {
        const auto g = backward_semigroup(p, b, StopRule::at_time(0.0), eta, reg);
        CHECK_THAT(g.value, WithinAbs(mean.mean(), 1e-14));
    }
    SECTION("zero driver returns the mean of eta") {
        auto q = p;
        q.f = Expr::constant(0.0);
        const auto stop = StopRule::at_time(0.5);
        const auto g = backward_semigroup(q, b, stop, eta, reg);
        CHECK_THAT(g.value, WithinAbs(mean.mean(), 1e-12));
    }
    SECTION("Theta beyond every exit reproduces the cost functional") {
        const auto stopped = stop_paths(b, StopRule::at_time(b.t_max()));
        const auto g = backward_semigroup(p, b, StopRule::at_time(b.t_max()), terminal_values(b, stopped, p.g), reg);
        const auto s = solve_plain(p, b);
        CHECK(b.censored_fraction() == 0.0);
        CHECK_THAT(g.value, WithinAbs(s.y0, 1e-12));
    }
    SECTION("deterministic times off the grid are rejected") {
        CHECK_THROWS_AS(stop_paths(b, StopRule::at_time(0.00015)), PreconditionError);
    }
}

TEST_CASE("cost and value special cases") {
    const auto p = fixtures::catalog("poisson1d");
    const auto cfg = fixtures::sim(1000);
    RegressionConfig reg;
    SECTION("start on the boundary costs g exactly") {
        const auto c = cost(p, Policy::constant(0), std::vector<double>{-1.0}, cfg, reg);
        CHECK(c.J == 0.0);
        CHECK(c.stderr_ == 0.0);
    }
    SECTION("singleton control set: value equals the single cost") {
        const auto c = cost(p, Policy::constant(0), std::vector<double>{0.3}, cfg, reg);
        const auto v = estimate_value(p, std::vector<double>{0.3}, default_candidates(p), cfg, reg);
        CHECK(v.u == c.J);
        CHECK(v.argmin == 0);
    }
    SECTION("constant terminal and zero driver give the constant") {
        auto q = fixtures::catalog("controlled1d");
        q.f = Expr::constant(0.0);
        q.g = Expr::constant(1.25);
        for (double x : {-0.5, 0.0, 0.9}) {
            const auto v = estimate_value(q, std::vector<double>{x}, default_candidates(q), cfg, reg);
            CHECK(v.u == 1.25);
        }
    }
}

TEST_CASE("controlled benchmark value lies near the grid oracle") {
    const auto p = fixtures::catalog("controlled1d");
    const auto field = solve_hjb(p, GridConfig{});
    auto cands = default_candidates(p);
    cands.push_back(extract_policy(field));
    const auto v = estimate_value(p, std::vector<double>{0.0}, cands, fixtures::sim(10000, 1e-3, 5.0, 8), RegressionConfig{});
    CHECK(v.argmin == 2);
    CHECK(std::abs(v.u - interpolate(field, std::vector<double>{0.0})) <= 3.0 * v.stderr_ + 0.03);
    CHECK(v.table[0].J > v.u);
}

TEST_CASE("z is estimated when the driver needs it") {
    // f = z: Y = u with u'' + sqrt(2) u' + 1 = 0 on (-1, 1), u(+-1) = 0
    auto p = fixtures::catalog("poisson1d");
    p.f = Expr::constant(1.0) + Expr::gradient(0);
    const auto b = simulate(p, Policy::constant(0), std::vector<double>{0.0}, fixtures::sim(20000, 1e-3, 5.0, 6));
    const auto s = solve_plain(p, b);
    const double r = std::sqrt(2.0);
    // u = -x/r + A + B e^{-r x}; u(1) = u(-1) = 0
    const double B = -(2.0 / r) / (std::exp(r) - std::exp(-r));
    const double A = 1.0 / r - B * std::exp(-r);
    CHECK(std::abs(s.y0 - (A + B)) <= 3.0 * s.stderr_ + 0.02);
}

TEST_CASE("singular regressions fall back to the mean or raise") {
    // zero dynamics: every active path sits at x0, so only the constant column survives
    const auto p = fixtures::scalar(Expr::constant(0.0), Expr::constant(0.0), Expr::constant(1.0) - Expr::value(),
                                    Expr::constant(0.0));
    const auto b = simulate(p, Policy::constant(0), std::vector<double>{0.2}, fixtures::sim(50, 0.01, 1.0));
    RegressionConfig reg;
    const auto s = solve_plain(p, b, reg);
    CHECK(s.fallback_steps > 0);
    CHECK_THAT(s.y0, WithinAbs(1.0 - std::exp(-1.0), 0.01));
    reg.fallback_to_mean = false;
    CHECK_THROWS_AS(solve_plain(p, b, reg), NumericalError);
}

TEST_CASE("quadratic test function derivatives") {
    const auto tf = quadratic_test_function({{2.0, 1.0}, {1.0, 4.0}}, {0.5, -1.0}, 3.0);
    const std::vector<double> x{0.3, -0.7};
    const double phi = 0.5 * (2 * 0.09 + 2 * 1.0 * 0.3 * -0.7 + 4 * 0.49) + 0.5 * 0.3 + 0.7 + 3.0;
    CHECK_THAT(tf.phi(x), WithinAbs(phi, 1e-14));
    CHECK_THAT(tf.gradient[0].eval({x, {}, 0.0, {}}), WithinAbs(0.5 + 2 * 0.3 - 0.7, 1e-14));
    CHECK_THAT(tf.gradient[1].eval({x, {}, 0.0, {}}), WithinAbs(-1.0 + 0.3 - 4 * 0.7, 1e-14));
    CHECK(tf.hessian[0][1].eval({x, {}, 0.0, {}}) == 1.0);
    CHECK_THROWS_AS(quadratic_test_function({{1.0, 2.0}, {0.0, 1.0}}, {0.0, 0.0}, 0.0), PreconditionError);
}
