#pragma once

#include "exitctrl/assumptions.hpp"
#include "exitctrl/bsde.hpp"
#include "exitctrl/error.hpp"
#include "exitctrl/hjb.hpp"
#include "exitctrl/paths.hpp"
#include "exitctrl/problem.hpp"
#include "exitctrl/regression.hpp"
#include "exitctrl/verify.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace exitctrl {

/// Verification suite settings read from the "verify" block.
struct SuiteConfig {
    std::vector<double> dpp_times{0.0, 0.1};
    double subdomain_scale = 0.5;  // 0 disables the sub-domain exit rule
    std::vector<std::vector<double>> probes;  // cross-validation points; empty = default ladder
    std::vector<std::vector<double>> holder_bases;
    double holder_min_separation = 1e-3;
    double holder_max_separation = 0.5;
    double comparison_gap = 0.5;
    bool inject_flip = false;
    std::vector<double> stability_h{0.4, 0.2, 0.1, 0.05, 0.0};
    std::vector<double> barrier_theta{0.0, -1.0};
    std::size_t barrier_paths = 4000;
    double barrier_t_max = 2.0;
    std::optional<std::vector<double>> chain_point;
    std::vector<std::vector<double>> chain_A;
    std::vector<double> chain_c;
    double chain_c0 = 0.0;
    ChainConfig chain;
    Probe probe;
};

/// A complete run document: problem plus every solver setting.
struct RunConfig {
    ControlProblem problem{Domain::interval(0.0, 1.0)};
    std::vector<double> x0;
    std::size_t cost_policy = 0;
    bool value_feedback = true;
    VerifyConfig verify;
    SuiteConfig suite;
    nlohmann::json document;
};

namespace detail {

inline void known_keys(const nlohmann::json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : keys) ok = ok || key == k;
        if (!ok) throw ConfigError(path + "/" + key, "unknown field");
    }
}

inline std::size_t count_at(const nlohmann::json& j, const std::string& path) { return positive_int_at(j, path); }

inline bool bool_at(const nlohmann::json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
    return j.get<bool>();
}

inline std::vector<std::vector<double>> points_at(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of points");
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 0; i < j.size(); ++i) pts.push_back(vector_at(j[i], path + "/" + std::to_string(i)));
    return pts;
}

inline void check_point(const ControlProblem& p, std::span<const double> x, const std::string& path) {
    if (x.size() != p.d) throw ConfigError(path, "point must have " + std::to_string(p.d) + " entries");
    if (!p.domain.contains(x)) throw ConfigError(path, "point lies outside the closed domain");
}

}  // namespace detail

/// Parses a run document. Every error names the offending JSON path.
inline RunConfig run_config_from_json(const nlohmann::json& doc) {
    using namespace detail;
    known_keys(doc, "", {"problem", "x0", "simulation", "regression", "grid", "cost", "value", "verify"});
    RunConfig rc;
    rc.document = doc;
    const auto& problem_doc = field(doc, "problem", "");
    try {
        rc.problem = problem_from_json(problem_doc);
    } catch (const ConfigError& e) {
        throw ConfigError("/problem" + e.path(), e.message());
    }
    const auto& p = rc.problem;
    rc.x0 = doc.contains("x0") ? vector_at(doc["x0"], "/x0") : p.domain.center();
    check_point(p, rc.x0, "/x0");

    auto& sim = rc.verify.sim;
    if (doc.contains("simulation")) {
        const auto& s = doc["simulation"];
        known_keys(s, "/simulation", {"dt", "t_max", "paths", "seed", "exit_mode"});
        if (s.contains("dt")) sim.dt = number_at(s["dt"], "/simulation/dt");
        if (s.contains("t_max")) sim.t_max = number_at(s["t_max"], "/simulation/t_max");
        if (s.contains("paths")) sim.n_paths = count_at(s["paths"], "/simulation/paths");
        if (s.contains("seed")) {
            if (!s["seed"].is_number_unsigned()) throw ConfigError("/simulation/seed", "expected a nonnegative integer");
            sim.master_seed = s["seed"].get<std::uint64_t>();
        }
        if (s.contains("exit_mode")) {
            const auto& m = s["exit_mode"];
            if (m == "grid") sim.exit_mode = ExitMode::GridCrossing;
            else if (m == "bridge") sim.exit_mode = ExitMode::BridgeCorrected;
            else throw ConfigError("/simulation/exit_mode", "expected 'grid' or 'bridge'");
        }
        if (!(sim.dt > 0.0)) throw ConfigError("/simulation/dt", "must be positive");
        if (!(sim.t_max > sim.dt)) throw ConfigError("/simulation/t_max", "must exceed dt");
    }

    auto& reg = rc.verify.regression;
    reg = RegressionConfig::defaults_for(p.d);
    if (doc.contains("regression")) {
        const auto& r = doc["regression"];
        known_keys(r, "/regression", {"basis", "degree", "resolution", "ridge", "picard", "fallback_to_mean"});
        if (r.contains("basis")) {
            if (r["basis"] == "polynomial") reg.basis = BasisKind::Polynomial;
            else if (r["basis"] == "piecewise") reg.basis = BasisKind::PiecewiseConstant;
            else throw ConfigError("/regression/basis", "expected 'polynomial' or 'piecewise'");
        }
        if (r.contains("degree")) {
            if (!r["degree"].is_number_integer() || r["degree"].get<int>() < 0)
                throw ConfigError("/regression/degree", "expected a nonnegative integer");
            reg.degree = r["degree"].get<int>();
        }
        if (r.contains("resolution")) reg.resolution = static_cast<int>(count_at(r["resolution"], "/regression/resolution"));
        if (r.contains("ridge")) {
            reg.ridge = number_at(r["ridge"], "/regression/ridge");
            if (!(reg.ridge >= 0.0)) throw ConfigError("/regression/ridge", "must be nonnegative");
        }
        if (r.contains("picard")) reg.picard = static_cast<int>(count_at(r["picard"], "/regression/picard"));
        if (r.contains("fallback_to_mean")) reg.fallback_to_mean = bool_at(r["fallback_to_mean"], "/regression/fallback_to_mean");
    }

    auto& grid = rc.verify.grid;
    if (p.d == 2) grid.nodes = {81};
    if (doc.contains("grid")) {
        const auto& g = doc["grid"];
        known_keys(g, "/grid", {"nodes", "upwind", "tolerance", "max_policy_iterations", "damping"});
        if (g.contains("nodes")) {
            const auto& n = g["nodes"];
            grid.nodes.clear();
            if (n.is_array())
                for (std::size_t i = 0; i < n.size(); ++i)
                    grid.nodes.push_back(count_at(n[i], "/grid/nodes/" + std::to_string(i)));
            else
                grid.nodes.push_back(count_at(n, "/grid/nodes"));
        }
        if (g.contains("upwind")) grid.upwind = bool_at(g["upwind"], "/grid/upwind");
        if (g.contains("tolerance")) grid.tolerance = number_at(g["tolerance"], "/grid/tolerance");
        if (g.contains("max_policy_iterations"))
            grid.max_policy_iterations = count_at(g["max_policy_iterations"], "/grid/max_policy_iterations");
        if (g.contains("damping")) grid.damping = number_at(g["damping"], "/grid/damping");
        try {
            grid.validate(p.d);
        } catch (const PreconditionError& e) {
            throw ConfigError("/grid", e.what());
        }
    }

    if (doc.contains("cost")) {
        known_keys(doc["cost"], "/cost", {"policy"});
        if (doc["cost"].contains("policy")) {
            const auto& j = doc["cost"]["policy"];
            if (!j.is_number_unsigned() || j.get<std::size_t>() >= p.controls.size())
                throw ConfigError("/cost/policy", "expected a control index below " + std::to_string(p.controls.size()));
            rc.cost_policy = j.get<std::size_t>();
        }
    }
    if (doc.contains("value")) {
        known_keys(doc["value"], "/value", {"feedback"});
        if (doc["value"].contains("feedback")) rc.value_feedback = bool_at(doc["value"]["feedback"], "/value/feedback");
    }

    auto& su = rc.suite;
    su.probe.seed = sim.master_seed + 6;
    su.chain.seed = sim.master_seed + 10;
    if (doc.contains("verify")) {
        const auto& v = doc["verify"];
        known_keys(v, "/verify",
                   {"bias_budget", "c_bias", "max_censoring", "dpp_times", "subdomain_scale", "probes", "holder_bases",
                    "holder_separation", "comparison_gap", "inject_flip", "stability_h", "barrier_theta",
                    "barrier_paths", "barrier_t_max", "chain", "probe_samples"});
        if (v.contains("bias_budget")) rc.verify.bias_budget = number_at(v["bias_budget"], "/verify/bias_budget");
        if (v.contains("c_bias")) rc.verify.c_bias = number_at(v["c_bias"], "/verify/c_bias");
        if (v.contains("max_censoring")) rc.verify.max_censoring = number_at(v["max_censoring"], "/verify/max_censoring");
        if (v.contains("dpp_times")) su.dpp_times = vector_at(v["dpp_times"], "/verify/dpp_times");
        for (std::size_t i = 0; i < su.dpp_times.size(); ++i)
            if (!(su.dpp_times[i] >= 0.0)) throw ConfigError("/verify/dpp_times/" + std::to_string(i), "must be >= 0");
        if (v.contains("subdomain_scale")) {
            su.subdomain_scale = number_at(v["subdomain_scale"], "/verify/subdomain_scale");
            if (!(su.subdomain_scale >= 0.0 && su.subdomain_scale < 1.0))
                throw ConfigError("/verify/subdomain_scale", "must lie in [0, 1)");
        }
        if (v.contains("probes")) {
            su.probes = points_at(v["probes"], "/verify/probes");
            for (std::size_t i = 0; i < su.probes.size(); ++i)
                check_point(p, su.probes[i], "/verify/probes/" + std::to_string(i));
        }
        if (v.contains("holder_bases")) {
            su.holder_bases = points_at(v["holder_bases"], "/verify/holder_bases");
            for (std::size_t i = 0; i < su.holder_bases.size(); ++i)
                check_point(p, su.holder_bases[i], "/verify/holder_bases/" + std::to_string(i));
        }
        if (v.contains("holder_separation")) {
            const auto s = vector_at(v["holder_separation"], "/verify/holder_separation");
            if (s.size() != 2 || !(s[0] > 0.0 && s[1] > s[0]))
                throw ConfigError("/verify/holder_separation", "expected [min, max] with 0 < min < max");
            su.holder_min_separation = s[0];
            su.holder_max_separation = s[1];
        }
        if (v.contains("comparison_gap")) {
            su.comparison_gap = number_at(v["comparison_gap"], "/verify/comparison_gap");
            if (!(su.comparison_gap >= 0.0)) throw ConfigError("/verify/comparison_gap", "must be nonnegative");
        }
        if (v.contains("inject_flip")) su.inject_flip = bool_at(v["inject_flip"], "/verify/inject_flip");
        if (v.contains("stability_h")) su.stability_h = vector_at(v["stability_h"], "/verify/stability_h");
        if (v.contains("barrier_theta")) su.barrier_theta = vector_at(v["barrier_theta"], "/verify/barrier_theta");
        if (v.contains("barrier_paths")) su.barrier_paths = count_at(v["barrier_paths"], "/verify/barrier_paths");
        if (v.contains("barrier_t_max")) su.barrier_t_max = number_at(v["barrier_t_max"], "/verify/barrier_t_max");
        if (v.contains("probe_samples")) su.probe.samples = count_at(v["probe_samples"], "/verify/probe_samples");
        if (v.contains("chain")) {
            const auto& c = v["chain"];
            known_keys(c, "/verify/chain", {"point", "A", "c", "c0", "epsilons", "paths", "steps_per_epsilon"});
            if (c.contains("point")) {
                su.chain_point = vector_at(c["point"], "/verify/chain/point");
                check_point(p, *su.chain_point, "/verify/chain/point");
            }
            if (c.contains("A")) su.chain_A = points_at(c["A"], "/verify/chain/A");
            if (c.contains("c")) su.chain_c = vector_at(c["c"], "/verify/chain/c");
            if (c.contains("c0")) su.chain_c0 = number_at(c["c0"], "/verify/chain/c0");
            if (c.contains("epsilons")) su.chain.epsilons = vector_at(c["epsilons"], "/verify/chain/epsilons");
            if (c.contains("paths")) su.chain.n_paths = count_at(c["paths"], "/verify/chain/paths");
            if (c.contains("steps_per_epsilon"))
                su.chain.steps_per_epsilon = count_at(c["steps_per_epsilon"], "/verify/chain/steps_per_epsilon");
        }
    }
    if (su.chain_A.empty()) {
        su.chain_A.assign(p.d, std::vector<double>(p.d, 0.0));
        for (std::size_t i = 0; i < p.d; ++i) su.chain_A[i][i] = 1.0;
    }
    if (su.chain_c.empty()) {
        su.chain_c.assign(p.d, 0.0);
        su.chain_c[0] = 0.5;
    }
    if (su.chain_A.size() != p.d || su.chain_c.size() != p.d)
        throw ConfigError("/verify/chain", "test function must have dimension " + std::to_string(p.d));
    return rc;
}

inline RunConfig parse_run_config(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    return run_config_from_json(doc);
}

/// Default cross-validation probes: five interior points along the first
/// axis through the centre.
inline std::vector<std::vector<double>> default_probes(const ControlProblem& p) {
    std::vector<std::vector<double>> out;
    for (double f : {-0.6, -0.3, 0.0, 0.3, 0.6}) {
        auto x = p.domain.center();
        x[0] += f * p.domain.half_widths()[0];
        out.push_back(x);
    }
    return out;
}

/// Default Hoelder base points: the centre, an off-centre point and a
/// boundary point, so pairs straddle the interior and the boundary layer.
inline std::vector<std::vector<double>> default_holder_bases(const ControlProblem& p) {
    auto c = p.domain.center();
    auto off = c, edge = c;
    off[0] += 0.5 * p.domain.half_widths()[0];
    edge[0] += p.domain.half_widths()[0];
    return {c, off, edge};
}

inline Domain scaled_domain(const Domain& d, double scale) {
    std::vector<double> half = d.half_widths();
    for (double& h : half) h *= scale;
    switch (d.kind()) {
        case DomainKind::Interval: return Domain::interval(d.center()[0], half[0]);
        case DomainKind::Ball: return Domain::ball(d.center(), half[0]);
        case DomainKind::Box: return Domain::box(d.center(), half);
    }
    return d;
}

/// Output of a verification suite: reports in registry order plus the
/// plot-ready tables.
struct SuiteResult {
    std::vector<CheckReport> reports;
    std::vector<ViscosityTestBundle> chain;
    std::vector<std::pair<double, double>> holder_table;  // separation, |du|

    bool any_failed() const {
        for (const auto& r : reports)
            if (r.failed()) return true;
        return false;
    }
};

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"assumptions", "dpp",            "holder", "comparison",
                                                "stability",   "supermartingale", "chain", "xval"};
    return names;
}

inline CheckReport assumptions_report(const ControlProblem& p, const Probe& probe) {
    const auto rep = validate_assumptions(p, probe);
    CheckReport r;
    r.name = "assumptions";
    r.samples = probe.samples;
    r.seeds = {probe.seed};
    bool failed = false;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : rep.entries) {
        nlohmann::json j{{"name", e.name}, {"status", to_string(e.status)}, {"estimate", e.estimate},
                         {"bound", e.bound}, {"note", e.note}};
        if (e.witness) j["witness"] = {{"x1", e.witness->x1}, {"x2", e.witness->x2}, {"control", e.witness->control}};
        entries.push_back(j);
        failed = failed || e.status == CheckStatus::Fail;
    }
    r.details["entries"] = entries;
    r.status = failed ? ReportStatus::Fail : ReportStatus::Pass;
    r.narrative = "sampled structural hypotheses";
    return r;
}

/// Runs the named suite ("all" or one of suite_names()).
inline SuiteResult run_suite(const RunConfig& rc, const std::string& suite) {
    bool known = suite == "all";
    for (const auto& n : suite_names()) known = known || n == suite;
    if (!known) throw ConfigError("/suite", "unknown suite '" + suite + "'");
    auto want = [&](const char* n) { return suite == "all" || suite == n; };

    const auto& p = rc.problem;
    const auto& cfg = rc.verify;
    const auto& su = rc.suite;
    SuiteResult out;

    std::optional<ValueField> field;
    auto grid = [&]() -> const ValueField& {
        if (!field) field = solve_hjb(p, cfg.grid);
        return *field;
    };

    if (want("assumptions")) out.reports.push_back(assumptions_report(p, su.probe));
    if (want("dpp")) {
        for (double t : su.dpp_times) out.reports.push_back(check_dpp(p, rc.x0, StopRule::at_time(t), grid(), cfg));
        if (su.subdomain_scale > 0.0)
            out.reports.push_back(
                check_dpp(p, rc.x0, StopRule::subdomain_exit(scaled_domain(p.domain, su.subdomain_scale)), grid(), cfg));
    }
    if (want("holder")) {
        const auto& f = grid();
        const auto bases = su.holder_bases.empty() ? default_holder_bases(p) : su.holder_bases;
        const auto pairs = holder_pairs(p.domain, bases, su.holder_min_separation, su.holder_max_separation);
        auto r = check_holder([&](std::span<const double> x) { return interpolate(f, x); }, pairs, 0.4,
                              "holder[" + p.name + "]");
        if (r.details.contains("table"))
            for (const auto& row : r.details["table"]) out.holder_table.emplace_back(row[0].get<double>(), row[1].get<double>());
        out.reports.push_back(std::move(r));
    }
    if (want("comparison")) {
        const auto bundle = simulate(p, Policy::constant(0), rc.x0, cfg.sim);
        const ComparisonVariant a{p.f, p.g};
        const ComparisonVariant b{p.f + Expr::constant(su.comparison_gap), p.g};
        out.reports.push_back(check_comparison(p, a, b, bundle, cfg.regression, su.probe, {su.inject_flip}));
    }
    if (want("stability")) {
        const auto bundle = simulate(p, Policy::constant(0), rc.x0, cfg.sim);
        out.reports.push_back(check_stability_trend(p, bundle, Perturbation::Driver, su.stability_h, cfg.regression));
    }
    if (want("supermartingale")) {
        SimConfig sim = cfg.sim;
        sim.n_paths = su.barrier_paths;
        sim.t_max = su.barrier_t_max;
        for (double th : su.barrier_theta)
            out.reports.push_back(check_supermartingale(p, rc.x0, th, Policy::constant(0), sim, su.probe));
    }
    if (want("chain")) {
        std::vector<double> x;
        if (su.chain_point) {
            x = *su.chain_point;
        } else {
            x = p.domain.center();
        }
        const auto tf = quadratic_test_function(su.chain_A, su.chain_c, su.chain_c0);
        ChainConfig c5 = su.chain;
        c5.probe = su.probe;
        try {
            auto [r, bundles] = check_test_function_chain(p, x, tf, c5, cfg.regression);
            out.chain = std::move(bundles);
            out.reports.push_back(std::move(r));
        } catch (const PreconditionError& e) {
            CheckReport r;
            r.name = "test_function_chain";
            r.status = ReportStatus::Skipped;
            r.narrative = e.what();
            out.reports.push_back(std::move(r));
        }
    }
    if (want("xval")) {
        const auto probes = su.probes.empty() ? default_probes(p) : su.probes;
        std::optional<Constants> constants;
        try {
            constants = derive_constants(p, su.probe);
        } catch (const PreconditionError&) {
        }
        out.reports.push_back(cross_validate(p, probes, grid(), cfg, constants));
    }
    return out;
}

}  // namespace exitctrl
