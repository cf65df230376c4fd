#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace exitctrl;
using Catch::Matchers::WithinAbs;

TEST_CASE("poisson1d passes every sampled hypothesis") {
    const auto p = fixtures::catalog("poisson1d");
    Probe probe;
    const auto rep = validate_assumptions(p, probe);
    for (const auto& e : rep.entries) CHECK(e.status != CheckStatus::Fail);
    const detail::ProbeSampler s(p, probe);
    for (std::size_t i = 0; i < 200; ++i) {
        const auto w = detail::sample_witness(s, i);
        CHECK(detail::coefficient_gap(p, w.x1, w.x2, p.controls[0]) == 0.0);
    }
}

TEST_CASE("f = +y^2 violates one-sided monotonicity with a witness") {
    auto p = fixtures::scalar(Expr::constant(0.0), Expr::constant(1.0), Expr::pow(Expr::value(), 2), Expr::constant(0.0));
    p.declared.alpha = 0.0;
    const auto rep = validate_assumptions(p, Probe{});
    const auto& e = rep.at("H3(iii)");
    REQUIRE(e.status == CheckStatus::Fail);
    REQUIRE(e.witness.has_value());
    CHECK(witness_violates(p, e));
    CHECK(e.witness->y1 + e.witness->y2 > 0.0);
}

TEST_CASE("degenerate diffusion row fails non-degeneracy with lambda = 0") {
    ControlProblem p(Domain::box({0.0, 0.0}, {1.0, 1.0}));
    p.d = 2;
    p.m = 2;
    p.b = {Expr::constant(0.0), Expr::constant(0.0)};
    p.sigma = {{Expr::constant(1.0), Expr::constant(0.0)}, {Expr::constant(0.0), Expr::constant(0.0)}};
    p.f = Expr::constant(1.0);
    p.g = Expr::constant(0.0);
    p.controls = {1, {{0.0}}};
    const auto rep = validate_assumptions(p, Probe{});
    CHECK(rep.at("H4(1)").status == CheckStatus::Fail);
    CHECK(rep.at("H4(1)").estimate == 0.0);
}

TEST_CASE("coupling constant delta") {
    SECTION("b = 0 and constant sigma give delta = 0") {
        CHECK(estimate_delta(fixtures::catalog("poisson1d"), Probe{}) == 0.0);
    }
    SECTION("b = -x gives delta = -1") {
        auto p = fixtures::scalar(-Expr::state(0), Expr::constant(1.0), Expr::constant(1.0), Expr::constant(0.0));
        CHECK_THAT(estimate_delta(p, Probe{}), WithinAbs(-1.0, 1e-6));
    }
}

TEST_CASE("gamma and theta selection") {
    auto p = fixtures::scalar(Expr::constant(0.0), Expr::constant(1.0), Expr::constant(-2.0) * Expr::value() + Expr::state(0),
                              Expr::constant(0.0));
    p.declared.alpha = 2.0;
    p.declared.beta = 1.0;
    p.declared.L = 2.0;
    p.declared.mu = 1.0;
    const auto c = derive_constants(p, Probe{});
    CHECK(c.gamma == -3.0);
    REQUIRE(c.theta_feasible());
    CHECK(*c.theta > c.gamma);
    CHECK(*c.theta < std::min(c.mu, -2.0 * std::max(c.delta, 0.0)));
    CHECK(select_theta(-3.0, 1.0, 0.0) == -1.5);
    CHECK_FALSE(select_theta(0.0, 1.0, 0.0).has_value());
    CHECK_FALSE(select_theta(-1.0, 1.0, 1.0).has_value());
}

TEST_CASE("Poisson constants leave the theta interval empty and say why") {
    const auto c = derive_constants(fixtures::catalog("poisson1d"), Probe{});
    CHECK(c.gamma == 0.0);
    CHECK_FALSE(c.theta_feasible());
    CHECK_FALSE(c.theta_note.empty());
}

TEST_CASE("declared constants too small are caught") {
    auto p = fixtures::catalog("controlled1d");
    p.declared.L = 0.1;
    const auto rep = validate_assumptions(p, Probe{});
    CHECK(rep.at("H1").status == CheckStatus::Fail);
    CHECK(witness_violates(p, rep.at("H1")));
    CHECK_THROWS_AS(derive_constants(p, Probe{}, &rep), PreconditionError);
}

TEST_CASE("audit is reproducible from its seed") {
    const auto p = fixtures::catalog("semilinear1d");
    const auto a = validate_assumptions(p, Probe{});
    const auto b = validate_assumptions(p, Probe{});
    for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i].estimate == b.entries[i].estimate);
}
