#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace exitctrl;
using Catch::Matchers::WithinAbs;

TEST_CASE("interval geometry") {
    const auto d = Domain::interval(0.0, 1.0);
    const std::vector<double> x{0.25};
    CHECK(d.signed_distance(x) == 0.75);
    CHECK(d.closest_boundary_point(x) == std::vector<double>{1.0});
    CHECK(d.outward_normal(std::vector<double>{-1.0}) == std::vector<double>{-1.0});
    CHECK(d.exterior_center(std::vector<double>{1.0}) == std::vector<double>{2.0});
    CHECK(d.on_boundary(std::vector<double>{-1.0}));
    CHECK_FALSE(d.interior(std::vector<double>{1.0}));
    CHECK_FALSE(d.contains(std::vector<double>{1.0 + 1e-12}));
    CHECK(d.rho() == 1.0);
}

TEST_CASE("ball and box distances") {
    const auto b = Domain::ball({0.0, 0.0}, 2.0);
    CHECK_THAT(b.signed_distance(std::vector<double>{1.0, 0.0}), WithinAbs(1.0, 1e-15));
    CHECK_THAT(b.signed_distance(std::vector<double>{3.0, 0.0}), WithinAbs(-1.0, 1e-15));
    const auto bx = Domain::box({0.0, 0.0}, {1.0, 0.5});
    CHECK(bx.signed_distance(std::vector<double>{0.0, 0.25}) == 0.25);
    CHECK(bx.closest_boundary_point(std::vector<double>{0.9, 0.0}) == std::vector<double>{1.0, 0.0});
    CHECK(bx.rho() == 0.5);
}

TEST_CASE("exterior spheres never reach into the closed domain") {
    const std::vector<Domain> doms{Domain::interval(0.5, 2.0), Domain::ball({0.0, 1.0}, 1.5),
                                   Domain::box({0.0, 0.0}, {1.0, 2.0})};
    CounterRng rng(99);
    for (const auto& d : doms) {
        for (std::uint32_t i = 0; i < 400; ++i) {
            std::vector<double> x(d.dim()), y(d.dim());
            for (std::size_t a = 0; a < d.dim(); ++a) {
                const auto u = rng.uniforms(i, static_cast<std::uint32_t>(a), 0);
                x[a] = d.lower(a) + u[0] * (d.upper(a) - d.lower(a));
                y[a] = d.lower(a) - 1.0 + u[1] * (d.upper(a) - d.lower(a) + 2.0);
            }
            const auto p = d.closest_boundary_point(y);
            REQUIRE(d.contains(p));
            if (!d.contains(x)) continue;
            const auto c = d.exterior_center(p);
            double r2 = 0.0;
            for (std::size_t a = 0; a < d.dim(); ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
            CHECK(std::sqrt(r2) >= d.rho() - 1e-12);
        }
    }
}

TEST_CASE("projections onto a sphere stay inside the closed ball") {
    const auto b = Domain::ball({0.1, -0.3}, 1.0);
    for (int i = 0; i < 2000; ++i) {
        const double t = 0.00314159 * i;
        const std::vector<double> x{0.1 + 1.7 * std::cos(t), -0.3 + 1.3 * std::sin(t)};
        CHECK(b.contains(b.closest_boundary_point(x)));
    }
}
