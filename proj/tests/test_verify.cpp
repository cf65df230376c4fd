#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace exitctrl;
using Catch::Matchers::WithinAbs;

namespace {

VerifyConfig small_config(std::size_t paths = 4000, std::uint64_t seed = 1) {
    VerifyConfig c;
    c.sim = fixtures::sim(paths, 1e-3, 5.0, seed);
    return c;
}

}  // namespace

TEST_CASE("dynamic programming on the controlled benchmark") {
    const auto p = fixtures::catalog("controlled1d");
    const auto cfg = small_config();
    const auto field = solve_hjb(p, cfg.grid);
    const std::vector<double> x0{0.0};
    SECTION("Theta = 0 holds identically") {
        const auto r = check_dpp(p, x0, StopRule::at_time(0.0), field, cfg);
        CHECK(r.passed());
        CHECK(r.measured == 0.0);
        CHECK(r.details["rhs"].get<double>() == interpolate(field, x0));
    }
    SECTION("Theta = 0.1") {
        const auto r = check_dpp(p, x0, StopRule::at_time(0.1), field, cfg);
        CHECK(r.passed());
        CHECK(r.measured <= 0.05);
    }
    SECTION("exit from a sub-interval") {
        const auto r = check_dpp(p, x0, StopRule::subdomain_exit(Domain::interval(0.0, 0.5)), field, cfg);
        CHECK(r.passed());
    }
}

TEST_CASE("Hoelder fits") {
    const auto dom = Domain::interval(0.0, 1.0);
    const auto pairs = holder_pairs(dom, {{0.5}, {1.0}}, 1e-3, 0.5);
    SECTION("constant function passes vacuously") {
        const auto r = check_holder([](std::span<const double>) { return 3.0; }, pairs);
        CHECK(r.passed());
        CHECK(r.details["degenerate_fit"].get<bool>());
    }
    SECTION("Lipschitz closed form gives exponent near 1") {
        const auto r = check_holder([](std::span<const double> x) { return 0.5 * (1.0 - x[0] * x[0]); }, pairs);
        CHECK(r.passed());
        CHECK_THAT(r.measured, WithinAbs(1.0, 0.25));
    }
    SECTION("square root singularity at the boundary") {
        const auto r = check_holder([](std::span<const double> x) { return std::sqrt(1.0 - std::abs(x[0])); },
                                    holder_pairs(dom, {{1.0}}, 1e-4, 0.5));
        CHECK(r.passed());
        CHECK_THAT(r.measured, WithinAbs(0.5, 0.1));
    }
    SECTION("exponent below the threshold fails") {
        const auto r = check_holder([](std::span<const double> x) { return std::pow(1.0 - std::abs(x[0]), 0.2); },
                                    holder_pairs(dom, {{1.0}}, 1e-4, 0.5));
        CHECK(r.failed());
    }
    SECTION("separations must span two decades") {
        CHECK_THROWS_AS(check_holder([](std::span<const double>) { return 0.0; }, holder_pairs(dom, {{0.0}}, 0.1, 0.5)),
                        PreconditionError);
    }
}

TEST_CASE("comparison on a shared bundle") {
    const auto p = fixtures::catalog("semilinear1d");
    const auto bundle = simulate(p, Policy::constant(0), std::vector<double>{0.1}, fixtures::sim(3000, 1e-3, 5.0, 7));
    const RegressionConfig reg;
    const Probe probe;
    const ComparisonVariant base{p.f, p.g};
    SECTION("driver shifted by a positive constant: exact ordering") {
        const auto r = check_comparison(p, base, {p.f + Expr::constant(1.0), p.g}, bundle, reg, probe);
        CHECK(r.passed());
        CHECK(r.tolerance == 0.0);
        CHECK(r.details["exact_branch"].get<bool>());
        CHECK(r.measured < 0.0);
    }
    SECTION("identical variants: equality") {
        const auto r = check_comparison(p, base, base, bundle, reg, probe);
        CHECK(r.passed());
        CHECK(r.measured == 0.0);
    }
    SECTION("terminal shifted by 0.3") {
        auto q = p;
        q.f = Expr::constant(1.0);
        const auto r = check_comparison(q, {q.f, q.g}, {q.f, q.g + Expr::constant(0.3)}, bundle, reg, probe);
        CHECK(r.passed());
        CHECK(-r.measured >= 0.0);
        CHECK(-r.measured <= 0.3 + 1e-12);
    }
    SECTION("unordered variants are refused") {
        const auto r = check_comparison(p, base, {p.f - Expr::constant(0.1), p.g}, bundle, reg, probe);
        CHECK(r.status == ReportStatus::Skipped);
    }
    SECTION("a sign-flipped gap is caught") {
        const auto r = check_comparison(p, base, {p.f + Expr::constant(0.5), p.g}, bundle, reg, probe, {true});
        CHECK(r.failed());
        CHECK(r.margin() > 0.0);
    }
}

TEST_CASE("stability scaling") {
    SECTION("terminal shift with zero driver is exact") {
        auto p = fixtures::catalog("poisson1d");
        p.f = Expr::constant(0.0);
        const auto b = simulate(p, Policy::constant(0), std::vector<double>{0.0}, fixtures::sim(500, 1e-3, 5.0));
        const auto r = check_stability_trend(p, b, Perturbation::Terminal, {0.4, 0.2, 0.1, 0.05, 0.0}, {});
        CHECK(r.passed());
        CHECK_THAT(r.measured, WithinAbs(2.0, 1e-6));
        CHECK(r.details["zero_h_exact"].get<bool>());
        for (const auto& row : r.details["table"])
            CHECK_THAT(std::abs(row["gap"].get<double>()), WithinAbs(row["h"].get<double>(), 1e-12));
    }
    SECTION("driver shift on the semilinear benchmark") {
        const auto p = fixtures::catalog("semilinear1d");
        const auto b = simulate(p, Policy::constant(0), std::vector<double>{0.0}, fixtures::sim(3000, 1e-3, 5.0, 5));
        const auto r = check_stability_trend(p, b, Perturbation::Driver, {0.4, 0.2, 0.1, 0.05, 0.0}, {});
        CHECK(r.passed());
        CHECK(r.measured >= 1.8);
    }
}

TEST_CASE("barrier supermartingale") {
    const auto p = fixtures::catalog("poisson1d");
    const auto cfg = fixtures::sim(3000, 1e-3, 2.0, 12);
    SECTION("boundary start is trivial") {
        const auto r = check_supermartingale(p, std::vector<double>{1.0}, -1.0, Policy::constant(0), cfg, Probe{});
        CHECK(r.passed());
    }
    SECTION("theta = -1 on scaled Brownian motion") {
        const auto r = check_supermartingale(p, std::vector<double>{0.0}, -1.0, Policy::constant(0), cfg, Probe{});
        CHECK(r.passed());
        CHECK(r.details["mu0"].get<double>() > 0.0);
        CHECK(r.details["k"].get<double>() <= 64.0);
    }
    SECTION("theta = 0 bounds the mean exit time") {
        const auto r = check_supermartingale(p, std::vector<double>{0.3}, 0.0, Policy::constant(0), cfg, Probe{});
        CHECK(r.passed());
        CHECK(r.details["mean_tau"].get<double>() <= r.details["tau_bound"].get<double>());
    }
    SECTION("margin search gives up when no k works") {
        auto q = p;
        q.b = {Expr::constant(200.0)};
        q.sigma = {{Expr::constant(0.01)}};
        const auto r = check_supermartingale(q, std::vector<double>{0.0}, 5.0, Policy::constant(0), cfg, Probe{});
        CHECK(r.status == ReportStatus::Skipped);
    }
}

TEST_CASE("ODE comparison solution") {
    CHECK_THAT(y4_closed_form(1.0, 1.0, 0.1), WithinAbs(1.0 - std::exp(-0.1), 1e-15));
    CHECK_THAT(y4_closed_form(1.0, 1.0, 0.1), WithinAbs(0.0951626, 1e-7));
    for (double F0 : {-2.0, -0.3, 0.0, 0.7, 3.0})
        for (double L0 : {0.0, 0.5, 3.0})
            for (double eps : {0.2, 0.1, 0.05, 0.025})
                CHECK_THAT(y4_rk4(F0, L0, eps), WithinAbs(y4_closed_form(F0, L0, eps), 1e-10));
}

TEST_CASE("test-function chain") {
    ChainConfig c5;
    c5.n_paths = 4000;
    SECTION("zero generator gives zero at every epsilon") {
        auto p = fixtures::catalog("poisson1d");
        p.f = Expr::constant(0.0);
        const auto tf = quadratic_test_function({{0.0}}, {1.0}, 0.0);
        const auto [r, bundles] = check_test_function_chain(p, std::vector<double>{0.0}, tf, c5, {});
        CHECK(r.passed());
        for (const auto& b : bundles) {
            CHECK(b.y1 == 0.0);
            CHECK(b.y2 == 0.0);
            CHECK(b.y3 == 0.0);
            CHECK(b.y4 == 0.0);
        }
    }
    SECTION("semilinear benchmark scaling") {
        c5.n_paths = 10000;
        const auto p = fixtures::catalog("semilinear1d");
        const auto tf = quadratic_test_function({{1.0}}, {0.5}, 0.0);
        const auto [r, bundles] = check_test_function_chain(p, std::vector<double>{0.0}, tf, c5, {});
        CHECK(r.details["ode_agreement"].get<bool>());
        CHECK(r.details["y3_below_y2"].get<bool>());
        CHECK(r.details["identity"].get<bool>());
        CHECK(r.passed());
        REQUIRE(bundles.size() == 4);
        for (const auto& b : bundles) CHECK(std::abs(b.y4 - b.y4_ode) <= 1e-10);
    }
    SECTION("boundary points are refused") {
        const auto p = fixtures::catalog("semilinear1d");
        const auto tf = quadratic_test_function({{1.0}}, {0.0}, 0.0);
        CHECK_THROWS_AS(check_test_function_chain(p, std::vector<double>{0.95}, tf, c5, {}), PreconditionError);
    }
}

TEST_CASE("cross-validation") {
    const auto p = fixtures::catalog("poisson1d");
    auto cfg = small_config(5000, 3);
    const auto field = solve_hjb(p, cfg.grid);
    SECTION("boundary probes are exact on both sides") {
        const auto r = cross_validate(p, {{-1.0}, {1.0}}, field, cfg);
        CHECK(r.passed());
        CHECK(r.measured == 0.0);
    }
    SECTION("five interior probes") {
        const auto r = cross_validate(p, {{-0.6}, {-0.3}, {0.0}, {0.3}, {0.6}}, field, cfg);
        CHECK(r.passed());
        CHECK(r.measured <= 0.02);
    }
    SECTION("infeasible theta is annotated") {
        const auto c = derive_constants(p, Probe{});
        const auto r = cross_validate(p, {{0.0}}, field, cfg, c);
        CHECK(r.details.contains("annotation"));
    }
}

TEST_CASE("run documents") {
    const auto rc = parse_run_config(R"({"problem":{"catalog":"controlled1d"},"simulation":{"paths":100,"seed":9}})");
    CHECK(rc.verify.sim.n_paths == 100);
    CHECK(rc.verify.sim.master_seed == 9);
    CHECK(rc.x0 == std::vector<double>{0.0});
    auto path_of = [](const char* text) {
        try {
            parse_run_config(text);
        } catch (const ConfigError& e) {
            return e.path();
        }
        return std::string("accepted");
    };
    CHECK(path_of(R"({"problem":{"catalog":"poisson1d"},"bogus":1})") == "/bogus");
    CHECK(path_of(R"({"problem":{"catalog":"poisson1d","params":{"R":0}}})") == "/problem/params/R");
    CHECK(path_of(R"({"problem":{"catalog":"poisson1d"},"x0":[3]})") == "/x0");
    CHECK(path_of(R"({"problem":{"catalog":"poisson1d"},"simulation":{"seed":-1}})") == "/simulation/seed");
    CHECK(path_of(R"({"problem":{"catalog":"poisson1d"},"verify":{"chain":{"paths":0}}})") == "/verify/chain/paths");
    CHECK(path_of(R"({"x0":[0]})") == "/problem");
    CHECK_THROWS_AS(run_suite(rc, "nonsense"), ConfigError);
}

TEST_CASE("reports are reproducible from their seeds") {
    const auto rc = parse_run_config(
        R"({"problem":{"catalog":"semilinear1d"},"simulation":{"paths":1500,"seed":4},"grid":{"nodes":81}})");
    const auto a = run_suite(rc, "dpp");
    const auto b = run_suite(rc, "dpp");
    REQUIRE(a.reports.size() == b.reports.size());
    for (std::size_t i = 0; i < a.reports.size(); ++i) CHECK(to_json(a.reports[i]).dump() == to_json(b.reports[i]).dump());
}
