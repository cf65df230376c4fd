#pragma once

#include "exitctrl/domain.hpp"
#include "exitctrl/error.hpp"
#include "exitctrl/expr.hpp"

#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace exitctrl {

/// Finite discretisation of the compact control set, in canonical order.
/// Minimisations over it break ties toward the lowest index.
struct ControlSet {
    std::size_t dim = 1;
    std::vector<std::vector<double>> points;

    std::size_t size() const noexcept { return points.size(); }
    std::span<const double> operator[](std::size_t i) const { return points[i]; }

    void validate(const std::string& path = "/controls") const {
        if (dim == 0) throw ConfigError(path + "/dimension", "control dimension must be positive");
        if (points.empty()) throw ConfigError(path + "/points", "control set must be nonempty");
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (points[i].size() != dim)
                throw ConfigError(path + "/points/" + std::to_string(i), "control point has wrong dimension");
            for (double c : points[i])
                if (!std::isfinite(c)) throw ConfigError(path + "/points/" + std::to_string(i), "non-finite control");
            for (std::size_t j = 0; j < i; ++j)
                if (points[j] == points[i])
                    throw ConfigError(path + "/points/" + std::to_string(i), "duplicate control point");
        }
    }

    friend bool operator==(const ControlSet&, const ControlSet&) = default;
};

/// Constants a problem author may declare; validate_assumptions checks
/// sampled estimates against them.
struct DeclaredConstants {
    std::optional<double> L;
    std::optional<double> beta;
    std::optional<double> alpha;
    std::optional<double> mu;
    std::optional<double> lambda;
    std::optional<double> Ltilde;

    friend bool operator==(const DeclaredConstants&, const DeclaredConstants&) = default;
};

/// Full datum of an exit-time control problem: dynamics dX = b dt + sigma dB
/// on a bounded domain, driver f(x, y, z, v) and boundary cost g(x).
struct ControlProblem {
    explicit ControlProblem(Domain dom) : domain(std::move(dom)) {}

    std::string name = "custom";
    std::size_t d = 1;
    std::size_t m = 1;
    std::size_t k = 1;
    std::vector<Expr> b;
    std::vector<std::vector<Expr>> sigma;  // d rows of m entries
    Expr f;
    Expr g;
    Domain domain;
    ControlSet controls;
    DeclaredConstants declared;

    void validate() const {
        if (d == 0 || m == 0 || k == 0) throw ConfigError("/dimension", "d, m and k must be positive");
        if (domain.dim() != d) throw ConfigError("/domain", "domain dimension does not match d");
        if (controls.dim != k) throw ConfigError("/controls/dimension", "control dimension does not match k");
        controls.validate();
        if (b.size() != d) throw ConfigError("/b", "drift must have d = " + std::to_string(d) + " entries");
        if (sigma.size() != d) throw ConfigError("/sigma", "sigma must have d = " + std::to_string(d) + " rows");
        for (std::size_t i = 0; i < d; ++i) {
            if (sigma[i].size() != m)
                throw ConfigError("/sigma/" + std::to_string(i),
                                  "sigma row has " + std::to_string(sigma[i].size()) + " entries, m = " +
                                      std::to_string(m));
            check_coefficient(b[i], "/b/" + std::to_string(i), true);
            for (std::size_t j = 0; j < m; ++j)
                check_coefficient(sigma[i][j], "/sigma/" + std::to_string(i) + "/" + std::to_string(j), true);
        }
        check_coefficient(g, "/g", false);
        if (f.max_state_index() >= static_cast<int>(d)) throw ConfigError("/f", "state index out of range");
        if (f.max_control_index() >= static_cast<int>(k)) throw ConfigError("/f", "control index out of range");
        if (f.max_gradient_index() >= static_cast<int>(m)) throw ConfigError("/f", "z index out of range");
    }

    void drift(std::span<const double> x, std::span<const double> v, std::span<double> out) const {
        const ExprArgs a{x, v, 0.0, {}};
        for (std::size_t i = 0; i < d; ++i) out[i] = b[i].eval(a);
    }

    /// Row-major d x m diffusion matrix.
    void diffusion(std::span<const double> x, std::span<const double> v, std::span<double> out) const {
        const ExprArgs a{x, v, 0.0, {}};
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] = sigma[i][j].eval(a);
    }

    double driver(std::span<const double> x, double y, std::span<const double> z, std::span<const double> v) const {
        return f.eval({x, v, y, z});
    }

    double terminal(std::span<const double> x) const { return g.eval({x, {}, 0.0, {}}); }

    bool coefficients_state_free() const {
        for (std::size_t i = 0; i < d; ++i) {
            if (b[i].uses_state()) return false;
            for (const auto& s : sigma[i])
                if (s.uses_state()) return false;
        }
        return true;
    }

    bool coefficients_control_free() const {
        for (std::size_t i = 0; i < d; ++i) {
            if (b[i].uses_control()) return false;
            for (const auto& s : sigma[i])
                if (s.uses_control()) return false;
        }
        return true;
    }

    friend bool operator==(const ControlProblem& a, const ControlProblem& b_) {
        return a.name == b_.name && a.d == b_.d && a.m == b_.m && a.k == b_.k && a.b == b_.b &&
               a.sigma == b_.sigma && a.f == b_.f && a.g == b_.g && a.domain == b_.domain &&
               a.controls == b_.controls && a.declared == b_.declared;
    }

private:
    void check_coefficient(const Expr& e, const std::string& path, bool control_allowed) const {
        if (e.uses_value() || e.uses_gradient()) throw ConfigError(path, "y/z nodes are only allowed in the driver f");
        if (!control_allowed && e.uses_control()) throw ConfigError(path, "control nodes are not allowed here");
        if (e.max_state_index() >= static_cast<int>(d)) throw ConfigError(path, "state index out of range");
        if (e.max_control_index() >= static_cast<int>(k)) throw ConfigError(path, "control index out of range");
    }
};

// ---------------------------------------------------------------------------
// Catalog

struct CatalogEntry {
    std::string name;
    std::string description;
    /// Whether alpha > beta^2 / 2 holds, i.e. whether an admissible
    /// regularity exponent theta can exist when delta >= 0.
    bool strongly_monotone;
};

inline const std::vector<CatalogEntry>& catalog() {
    static const std::vector<CatalogEntry> entries = {
        {"poisson1d",
         "b=0, sigma=s, f=1 (source=unit) or f=(s^2/2)(pi/2R)^2 cos(pi x/2R) (source=cosine), g=0 on (-R,R), V={0}",
         false},
        {"semilinear1d", "b=0, sigma=s, f=-alpha*y+c, g=0 on (-R,R), V={0}", true},
        {"controlled1d", "b=v, sigma=s, f=1, g=0 on (-R,R), V={-1,+1}", false},
        {"poisson_ball2d", "b=0, sigma=s*I, f=1, g=0 on the disc of radius R, V={0}", false},
    };
    return entries;
}

namespace detail {

inline double param(const nlohmann::json& params, const char* key, double fallback) {
    if (!params.contains(key)) return fallback;
    const auto& v = params[key];
    if (!v.is_number()) throw ConfigError(std::string("/params/") + key, "expected a number");
    return v.get<double>();
}

inline void positive(double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("/params/") + key, "must be positive");
}

}  // namespace detail

/// Builds a catalog benchmark. Unknown parameters are rejected.
inline ControlProblem make_catalog_problem(const std::string& name, const nlohmann::json& params) {
    if (!params.is_object()) throw ConfigError("/params", "params must be an object");
    const double R = detail::param(params, "R", 1.0);
    const double s = detail::param(params, "sigma_scale", std::numbers::sqrt2);
    detail::positive(R, "R");
    detail::positive(s, "sigma_scale");

    auto check_keys = [&](std::initializer_list<const char*> allowed) {
        for (const auto& [key, _] : params.items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || key == a;
            if (!ok) throw ConfigError("/params/" + key, "unknown parameter for catalog entry '" + name + "'");
        }
    };

    if (name == "poisson1d") {
        check_keys({"R", "sigma_scale", "source"});
        std::string source = "unit";
        if (params.contains("source")) {
            if (!params["source"].is_string()) throw ConfigError("/params/source", "expected a string");
            source = params["source"].get<std::string>();
        }
        ControlProblem p(Domain::interval(0.0, R));
        p.name = "poisson1d";
        p.b = {Expr::constant(0.0)};
        p.sigma = {{Expr::constant(s)}};
        if (source == "unit") {
            p.f = Expr::constant(1.0);
        } else if (source == "cosine") {
            const double w = std::numbers::pi / (2.0 * R);
            p.f = Expr::constant(0.5 * s * s * w * w) * Expr::cos(Expr::constant(w) * Expr::state(0));
        } else {
            throw ConfigError("/params/source", "source must be 'unit' or 'cosine'");
        }
        p.g = Expr::constant(0.0);
        p.controls = {1, {{0.0}}};
        p.declared.L = s;
        p.declared.beta = source == "unit" ? 0.0 : 0.5 * s * s * std::pow(std::numbers::pi / (2.0 * R), 3);
        p.declared.alpha = 0.0;
        p.declared.Ltilde = 0.0;
        p.declared.lambda = s * s;
        p.declared.mu = 0.9 * s * s * std::pow(std::numbers::pi / (2.0 * R), 2) / 2.0;
        return p;
    }
    if (name == "semilinear1d") {
        check_keys({"R", "sigma_scale", "alpha", "c"});
        const double alpha = detail::param(params, "alpha", 2.0);
        const double c = detail::param(params, "c", 1.0);
        ControlProblem p(Domain::interval(0.0, R));
        p.name = "semilinear1d";
        p.b = {Expr::constant(0.0)};
        p.sigma = {{Expr::constant(s)}};
        p.f = Expr::constant(-alpha) * Expr::value() + Expr::constant(c);
        p.g = Expr::constant(0.0);
        p.controls = {1, {{0.0}}};
        p.declared.L = std::max(std::abs(alpha), s);
        p.declared.beta = 0.0;
        p.declared.alpha = alpha;
        p.declared.Ltilde = std::abs(alpha);
        p.declared.lambda = s * s;
        p.declared.mu = 0.9 * s * s * std::pow(std::numbers::pi / (2.0 * R), 2) / 2.0;
        return p;
    }
    if (name == "controlled1d") {
        check_keys({"R", "sigma_scale", "speed"});
        const double speed = detail::param(params, "speed", 1.0);
        detail::positive(speed, "speed");
        ControlProblem p(Domain::interval(0.0, R));
        p.name = "controlled1d";
        p.b = {Expr::control(0)};
        p.sigma = {{Expr::constant(s)}};
        p.f = Expr::constant(1.0);
        p.g = Expr::constant(0.0);
        p.controls = {1, {{-speed}, {speed}}};
        p.declared.L = speed + s;
        p.declared.beta = 0.0;
        p.declared.alpha = 0.0;
        p.declared.Ltilde = 0.0;
        p.declared.lambda = s * s;
        return p;
    }
    if (name == "poisson_ball2d") {
        check_keys({"R", "sigma_scale"});
        ControlProblem p(Domain::ball({0.0, 0.0}, R));
        p.name = "poisson_ball2d";
        p.d = 2;
        p.m = 2;
        p.b = {Expr::constant(0.0), Expr::constant(0.0)};
        p.sigma = {{Expr::constant(s), Expr::constant(0.0)}, {Expr::constant(0.0), Expr::constant(s)}};
        p.f = Expr::constant(1.0);
        p.g = Expr::constant(0.0);
        p.controls = {1, {{0.0}}};
        p.declared.L = s * std::numbers::sqrt2;
        p.declared.beta = 0.0;
        p.declared.alpha = 0.0;
        p.declared.Ltilde = 0.0;
        p.declared.lambda = s * s;
        return p;
    }
    throw ConfigError("/catalog", "unknown catalog entry '" + name + "'");
}

// ---------------------------------------------------------------------------
// JSON (de)serialisation

namespace detail {

inline double number_at(const nlohmann::json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    return j.get<double>();
}

inline std::vector<double> vector_at(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
    std::vector<double> v;
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number_at(j[i], path + "/" + std::to_string(i)));
    return v;
}

inline std::size_t positive_int_at(const nlohmann::json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() <= 0) throw ConfigError(path, "expected a positive integer");
    return static_cast<std::size_t>(j.get<long long>());
}

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ConfigError(path + "/" + key, "missing required field");
    return j[key];
}

inline Domain domain_from_json(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "domain must be an object");
    const auto& kind = field(j, "kind", path);
    if (!kind.is_string()) throw ConfigError(path + "/kind", "expected a string");
    const std::string k = kind.get<std::string>();
    const auto center = vector_at(field(j, "center", path), path + "/center");
    try {
        if (k == "interval") {
            if (center.size() != 1) throw ConfigError(path + "/center", "interval center must have one entry");
            return Domain::interval(center[0], number_at(field(j, "radius", path), path + "/radius"));
        }
        if (k == "ball") return Domain::ball(center, number_at(field(j, "radius", path), path + "/radius"));
        if (k == "box") return Domain::box(center, vector_at(field(j, "half_widths", path), path + "/half_widths"));
    } catch (const PreconditionError& e) {
        throw ConfigError(path, e.what());
    }
    throw ConfigError(path + "/kind", "unknown domain kind '" + k + "'");
}

inline nlohmann::json domain_to_json(const Domain& d) {
    nlohmann::json j;
    j["kind"] = to_string(d.kind());
    j["center"] = d.center();
    if (d.kind() == DomainKind::Box)
        j["half_widths"] = d.half_widths();
    else
        j["radius"] = d.radius();
    return j;
}

}  // namespace detail

inline ControlProblem problem_from_json(const nlohmann::json& doc) {
    using namespace detail;
    if (!doc.is_object()) throw ConfigError("", "problem document must be a JSON object");
    if (doc.contains("catalog")) {
        for (const auto& [key, _] : doc.items())
            if (key != "catalog" && key != "params") throw ConfigError("/" + key, "unexpected field next to catalog");
        if (!doc["catalog"].is_string()) throw ConfigError("/catalog", "expected a string");
        const nlohmann::json params = doc.contains("params") ? doc["params"] : nlohmann::json::object();
        auto p = make_catalog_problem(doc["catalog"].get<std::string>(), params);
        p.validate();
        return p;
    }

    static const char* kKeys[] = {"name", "dimension", "b", "sigma", "f", "g", "domain", "controls", "constants"};
    for (const auto& [key, _] : doc.items()) {
        bool ok = false;
        for (const char* k : kKeys) ok = ok || key == k;
        if (!ok) throw ConfigError("/" + key, "unknown field");
    }

    const auto& dim = field(doc, "dimension", "");
    if (!dim.is_object()) throw ConfigError("/dimension", "expected an object {d, m, k}");
    ControlProblem p(domain_from_json(field(doc, "domain", ""), "/domain"));
    p.d = positive_int_at(field(dim, "d", "/dimension"), "/dimension/d");
    p.m = positive_int_at(field(dim, "m", "/dimension"), "/dimension/m");
    p.k = positive_int_at(field(dim, "k", "/dimension"), "/dimension/k");
    if (doc.contains("name")) {
        if (!doc["name"].is_string()) throw ConfigError("/name", "expected a string");
        p.name = doc["name"].get<std::string>();
    }

    const auto& jb = field(doc, "b", "");
    if (!jb.is_array()) throw ConfigError("/b", "expected an array of expressions");
    for (std::size_t i = 0; i < jb.size(); ++i) p.b.push_back(expr_from_json(jb[i], "/b/" + std::to_string(i)));

    const auto& js = field(doc, "sigma", "");
    if (!js.is_array()) throw ConfigError("/sigma", "expected an array of rows");
    for (std::size_t i = 0; i < js.size(); ++i) {
        const std::string rp = "/sigma/" + std::to_string(i);
        if (!js[i].is_array()) throw ConfigError(rp, "expected an array of expressions");
        std::vector<Expr> row;
        for (std::size_t j = 0; j < js[i].size(); ++j)
            row.push_back(expr_from_json(js[i][j], rp + "/" + std::to_string(j)));
        p.sigma.push_back(std::move(row));
    }
    p.f = expr_from_json(field(doc, "f", ""), "/f");
    p.g = expr_from_json(field(doc, "g", ""), "/g");

    const auto& jc = field(doc, "controls", "");
    if (!jc.is_object()) throw ConfigError("/controls", "expected an object");
    p.controls.dim = positive_int_at(field(jc, "dimension", "/controls"), "/controls/dimension");
    const auto& pts = field(jc, "points", "/controls");
    if (!pts.is_array()) throw ConfigError("/controls/points", "expected an array");
    for (std::size_t i = 0; i < pts.size(); ++i)
        p.controls.points.push_back(vector_at(pts[i], "/controls/points/" + std::to_string(i)));

    if (doc.contains("constants")) {
        const auto& jk = doc["constants"];
        if (!jk.is_object()) throw ConfigError("/constants", "expected an object");
        for (const auto& [key, val] : jk.items()) {
            const double v = number_at(val, "/constants/" + key);
            if (key == "L") p.declared.L = v;
            else if (key == "beta") p.declared.beta = v;
            else if (key == "alpha") p.declared.alpha = v;
            else if (key == "mu") p.declared.mu = v;
            else if (key == "lambda") p.declared.lambda = v;
            else if (key == "Ltilde") p.declared.Ltilde = v;
            else throw ConfigError("/constants/" + key, "unknown constant");
        }
    }
    p.validate();
    return p;
}

inline ControlProblem parse_problem_spec(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    return problem_from_json(doc);
}

/// Explicit (non-catalog) form; keys are emitted sorted.
inline nlohmann::json to_json(const ControlProblem& p) {
    nlohmann::json j;
    j["name"] = p.name;
    j["dimension"] = {{"d", p.d}, {"m", p.m}, {"k", p.k}};
    nlohmann::json b = nlohmann::json::array();
    for (const auto& e : p.b) b.push_back(to_json(e));
    j["b"] = std::move(b);
    nlohmann::json s = nlohmann::json::array();
    for (const auto& row : p.sigma) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& e : row) r.push_back(to_json(e));
        s.push_back(std::move(r));
    }
    j["sigma"] = std::move(s);
    j["f"] = to_json(p.f);
    j["g"] = to_json(p.g);
    j["domain"] = detail::domain_to_json(p.domain);
    j["controls"] = {{"dimension", p.controls.dim}, {"points", p.controls.points}};
    nlohmann::json c = nlohmann::json::object();
    if (p.declared.L) c["L"] = *p.declared.L;
    if (p.declared.beta) c["beta"] = *p.declared.beta;
    if (p.declared.alpha) c["alpha"] = *p.declared.alpha;
    if (p.declared.mu) c["mu"] = *p.declared.mu;
    if (p.declared.lambda) c["lambda"] = *p.declared.lambda;
    if (p.declared.Ltilde) c["Ltilde"] = *p.declared.Ltilde;
    j["constants"] = std::move(c);
    return j;
}

/// Canonical text form: sorted keys, shortest round-trip numbers.
inline std::string serialize_problem(const ControlProblem& p) { return to_json(p).dump(); }

}  // namespace exitctrl
