#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace exitctrl;
using Catch::Matchers::WithinAbs;

TEST_CASE("expressions evaluate against state, control, y and z") {
    const std::vector<double> x{0.5, -2.0}, v{3.0}, z{0.25};
    const ExprArgs a{x, v, 1.5, z};
    CHECK(Expr::constant(2.0).eval(a) == 2.0);
    CHECK(Expr::state(1).eval(a) == -2.0);
    CHECK(Expr::control(0).eval(a) == 3.0);
    CHECK(Expr::value().eval(a) == 1.5);
    CHECK(Expr::gradient(0).eval(a) == 0.25);
    CHECK((Expr::state(0) * Expr::control(0) + Expr::value()).eval(a) == 3.0);
    CHECK((Expr::state(0) - Expr::value()).eval(a) == -1.0);
    CHECK(Expr::min(Expr::state(0), Expr::state(1)).eval(a) == -2.0);
    CHECK(Expr::max(Expr::state(0), Expr::state(1)).eval(a) == 0.5);
    CHECK(Expr::abs(Expr::state(1)).eval(a) == 2.0);
    CHECK(Expr::pow(Expr::state(1), 3).eval(a) == -8.0);
    CHECK_THAT(Expr::exp(Expr::state(0)).eval(a), WithinAbs(std::exp(0.5), 1e-15));
    CHECK_THAT(Expr::cos(Expr::state(0)).eval(a), WithinAbs(std::cos(0.5), 1e-15));
    CHECK_THAT(Expr::sin(Expr::state(0)).eval(a), WithinAbs(std::sin(0.5), 1e-15));
    CHECK_THAT(Expr::tanh(Expr::state(0)).eval(a), WithinAbs(std::tanh(0.5), 1e-15));
}

TEST_CASE("dependency flags and index bounds") {
    const auto e = Expr::state(2) * Expr::gradient(1) + Expr::control(0);
    CHECK(e.uses_state());
    CHECK(e.uses_control());
    CHECK_FALSE(e.uses_value());
    CHECK(e.uses_gradient());
    CHECK(e.max_state_index() == 2);
    CHECK(e.max_gradient_index() == 1);
    CHECK(e.max_control_index() == 0);
    CHECK_FALSE(Expr::constant(1.0).uses_gradient());
}

TEST_CASE("json round trip preserves the tree") {
    const auto e = Expr::add({Expr::constant(-2.0) * Expr::value(), Expr::cos(Expr::state(0)),
                              Expr::pow(Expr::gradient(0), 2), Expr::negate(Expr::control(0))});
    const auto back = expr_from_json(to_json(e), "");
    CHECK(back == e);
    const std::vector<double> x{0.3}, v{1.0}, z{0.7};
    CHECK(back.eval({x, v, 0.2, z}) == e.eval({x, v, 0.2, z}));
}

TEST_CASE("malformed expression documents name the offending path") {
    auto path_of = [](const char* text) {
        try {
            expr_from_json(nlohmann::json::parse(text), "/f");
        } catch (const ConfigError& e) {
            return e.path();
        }
        return std::string("no error");
    };
    CHECK(path_of(R"({"op":"nope"})") == "/f/op");
    CHECK(path_of(R"({"op":"add","args":[{"op":"const"}]})") == "/f/args/0/value");
    CHECK(path_of(R"({"op":"x","value":-1})") == "/f/value");
    CHECK(path_of(R"({"op":"neg","args":[]})") == "/f/args");
    CHECK(path_of(R"({"op":"const","value":1,"extra":2})") == "/f/extra");
}
