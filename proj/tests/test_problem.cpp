#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace exitctrl;

TEST_CASE("catalog poisson1d maps to the unit-source Poisson problem") {
    const auto p = parse_problem_spec(R"({"catalog":"poisson1d","params":{"R":1,"sigma_scale":1.4142135623730951}})");
    CHECK(p.d == 1);
    CHECK(p.m == 1);
    CHECK(p.domain == Domain::interval(0.0, 1.0));
    CHECK(p.controls.size() == 1);
    const std::vector<double> x{0.3}, v{0.0}, z{0.0};
    std::vector<double> b(1), s(1);
    p.drift(x, v, b);
    p.diffusion(x, v, s);
    CHECK(b[0] == 0.0);
    CHECK(s[0] == std::sqrt(2.0));
    CHECK(p.driver(x, 0.7, z, v) == 1.0);
    CHECK(p.terminal(x) == 0.0);
}

TEST_CASE("explicit tree b(x, v) = v") {
    const auto p = parse_problem_spec(R"({
      "dimension": {"d": 1, "m": 1, "k": 1},
      "domain": {"kind": "interval", "center": [0], "radius": 1},
      "b": [{"op": "v", "value": 0}],
      "sigma": [[{"op": "const", "value": 1}]],
      "f": {"op": "const", "value": 1},
      "g": {"op": "const", "value": 0},
      "controls": {"dimension": 1, "points": [[-1], [1]]}
    })");
    CHECK(p.b[0] == Expr::control(0));
    std::vector<double> out(1);
    p.drift(std::vector<double>{0.0}, p.controls[1], out);
    CHECK(out[0] == 1.0);
}

TEST_CASE("dimension mismatch in sigma is reported at its JSON path") {
    try {
        parse_problem_spec(R"({
          "dimension": {"d": 1, "m": 2, "k": 1},
          "domain": {"kind": "interval", "center": [0], "radius": 1},
          "b": [{"op": "const", "value": 0}],
          "sigma": [[{"op": "const", "value": 1}], [{"op": "const", "value": 1}]],
          "f": {"op": "const", "value": 1},
          "g": {"op": "const", "value": 0},
          "controls": {"dimension": 1, "points": [[0]]}
        })");
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path().rfind("/sigma", 0) == 0);
    }
}

TEST_CASE("invalid documents are rejected with paths") {
    auto path_of = [](const std::string& text) {
        try {
            parse_problem_spec(text);
        } catch (const ConfigError& e) {
            return e.path();
        }
        return std::string("accepted");
    };
    CHECK(path_of(R"({"catalog":"nope"})") == "/catalog");
    CHECK(path_of(R"({"catalog":"poisson1d","params":{"R":-1}})") == "/params/R");
    CHECK(path_of(R"({"catalog":"poisson1d","params":{"bogus":1}})") == "/params/bogus");
    CHECK(path_of("{not json") == "");
    CHECK(path_of(R"({"catalog":"controlled1d","extra":1})") == "/extra");
}

TEST_CASE("serialisation round-trips every catalog entry") {
    for (const auto& entry : catalog()) {
        const auto p = make_catalog_problem(entry.name, nlohmann::json::object());
        const auto back = parse_problem_spec(serialize_problem(p));
        CHECK(back == p);
        CHECK(serialize_problem(back) == serialize_problem(p));
    }
}

TEST_CASE("cosine source matches the manufactured solution cos(pi x / 2)") {
    const auto p = make_catalog_problem("poisson1d", {{"source", "cosine"}});
    const double w = std::numbers::pi / 2.0;
    for (double x : {-0.9, -0.2, 0.0, 0.6}) {
        const std::vector<double> xs{x}, v{0.0}, z{0.0};
        // (sigma^2 / 2) u'' + f = 0 with u = cos(w x)
        CHECK(std::abs(-w * w * std::cos(w * x) + p.driver(xs, 0.0, z, v)) < 1e-12);
    }
}
