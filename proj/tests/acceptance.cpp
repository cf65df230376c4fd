// Acceptance driver: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include "exitctrl/exitctrl.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

using namespace exitctrl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void line(int id, bool ok, const std::string& what) {
    std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

ControlProblem catalog(const std::string& name, nlohmann::json params = nlohmann::json::object()) {
    return make_catalog_problem(name, params);
}

SimConfig sim(std::size_t paths, double dt, double t_max, std::uint64_t seed) {
    SimConfig c;
    c.n_paths = paths;
    c.dt = dt;
    c.t_max = t_max;
    c.master_seed = seed;
    c.exit_mode = ExitMode::BridgeCorrected;
    return c;
}

GridConfig grid(std::size_t n) {
    GridConfig g;
    g.nodes = {n};
    return g;
}

double sup_error(const ValueField& f, const std::function<double(std::span<const double>)>& exact) {
    double e = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) e = std::max(e, std::abs(f.u[i] - exact(f.node(i))));
    return e;
}

/// u'' - |u'| + 1 = 0 on (-1, 1) by shooting from the symmetric centre.
double controlled_shooting() {
    const std::size_t steps = 20000;
    auto endpoint = [&](double u0) {
        double u = u0, p = 0.0;
        const double h = 1.0 / static_cast<double>(steps);
        auto rhs = [](double q) { return std::abs(q) - 1.0; };
        for (std::size_t i = 0; i < steps; ++i) {
            const double k1u = p, k1p = rhs(p);
            const double k2u = p + 0.5 * h * k1p, k2p = rhs(p + 0.5 * h * k1p);
            const double k3u = p + 0.5 * h * k2p, k3p = rhs(p + 0.5 * h * k2p);
            const double k4u = p + h * k3p, k4p = rhs(p + h * k3p);
            u += h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u);
            p += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
        }
        return u;
    };
    double lo = 0.0, hi = 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (endpoint(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

const std::vector<double> origin{0.0};

void poisson() {
    const auto p = catalog("poisson1d");
    auto t0 = Clock::now();
    const auto f = solve_hjb(p, grid(201));
    const double t_fd = seconds_since(t0);
    const double e_fd = std::abs(interpolate(f, origin) - 0.5);

    t0 = Clock::now();
    const auto c = cost(p, Policy::constant(0), origin, sim(100000, 1e-3, 5.0, 1), {});
    const double t_mc = seconds_since(t0);
    const double e_mc = std::abs(c.J - 0.5);
    line(1, e_fd <= 1e-4 && t_fd < 1.0 && e_mc <= 0.02 && t_mc <= 60.0,
         fmt("Poisson u(0): FD err %.2e in %.3fs; MC %.5f (se %.5f, censored %.4f) err %.4f in %.1fs", e_fd, t_fd,
             c.J, c.stderr_, c.censored_fraction, e_mc, t_mc));
}

void semilinear() {
    const auto p = catalog("semilinear1d");
    const double exact = 0.5 * (1.0 - 1.0 / std::cosh(std::sqrt(2.0)));
    const double u_fd = interpolate(solve_hjb(p, grid(201)), origin);
    const auto c = cost(p, Policy::constant(0), origin, sim(20000, 1e-3, 5.0, 2), {});
    const double e_fd = std::abs(u_fd - exact), e_mc = std::abs(c.J - exact);
    line(2, e_fd <= 0.02 && e_mc <= 0.02,
         fmt("semilinear u(0) closed form %.6f: FD %.6f (err %.2e), MC %.5f (se %.5f, err %.4f); "
             "closed form sits %.4f from the quoted decimal 0.28024",
             exact, u_fd, e_fd, c.J, c.stderr_, e_mc, std::abs(exact - 0.28024)));
}

void controlled() {
    const auto p = catalog("controlled1d");
    const auto f = solve_hjb(p, grid(201));
    const double shoot = controlled_shooting();
    const double e_shoot = std::abs(interpolate(f, origin) - shoot);
    VerifyConfig cfg;
    cfg.sim = sim(10000, 1e-3, 5.0, 3);
    const auto r = cross_validate(p, {{-0.6}, {-0.3}, {0.0}, {0.3}, {0.6}}, f, cfg);
    line(3, r.measured <= 0.05 && e_shoot <= 1e-3,
         fmt("controlled: xval max gap %.4f over 5 probes (report %s); FD vs shooting %.2e (u(0) = %.6f)",
             r.measured, to_string(r.status).c_str(), e_shoot, shoot));
}

void dpp() {
    const auto p = catalog("controlled1d");
    VerifyConfig cfg;
    cfg.sim = sim(10000, 1e-3, 5.0, 4);
    const auto f = solve_hjb(p, cfg.grid);
    const auto r0 = check_dpp(p, origin, StopRule::at_time(0.0), f, cfg);
    const auto r1 = check_dpp(p, origin, StopRule::at_time(0.1), f, cfg);
    const auto r2 = check_dpp(p, origin, StopRule::subdomain_exit(Domain::interval(0.0, 0.5)), f, cfg);
    line(4, r0.passed() && r0.measured == 0.0 && r1.passed() && r2.passed(),
         fmt("DPP: Theta=0 gap %.1e (exact); Theta=0.1 %.4f <= %.4f; sub-interval exit %.4f <= %.4f", r0.measured,
             r1.measured, r1.tolerance, r2.measured, r2.tolerance));
}

void comparison() {
    const auto p = catalog("semilinear1d");
    const auto bundle = simulate(p, Policy::constant(0), std::vector<double>{0.2}, sim(2000, 1e-3, 5.0, 5));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> slope(-2.0, 0.5), coef(-2.0, 2.0), shift(0.01, 1.0);
    std::size_t ok = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10; ++i) {
        const Expr fa = Expr::constant(slope(rng)) * Expr::value() + Expr::constant(coef(rng)) * Expr::state(0) +
                        Expr::constant(coef(rng));
        const Expr fb = fa + Expr::constant(shift(rng));
        const auto r = check_comparison(p, {fa, p.g}, {fb, p.g}, bundle, {}, Probe{});
        worst = std::max(worst, r.measured);
        if (r.passed() && r.tolerance == 0.0 && r.details.value("exact_branch", false)) ++ok;
    }
    line(5, ok == 10, fmt("comparison: %zu/10 randomized constant-gap pairs ordered with zero tolerance; "
                          "max Y0 - Y0' = %.4f",
                          ok, worst));
}

void chain() {
    const auto p = catalog("semilinear1d");
    const auto tf = quadratic_test_function({{1.0}}, {0.5}, 0.0);
    const ChainConfig cfg;
    const auto t0 = Clock::now();
    const auto [r, bundles] = check_test_function_chain(p, origin, tf, cfg, {});
    const double secs = seconds_since(t0);
    double ode = 0.0;
    for (const auto& b : bundles) ode = std::max(ode, std::abs(b.y4 - b.y4_ode));
    const double s12 = r.details["slope12"].is_number() ? r.details["slope12"].get<double>() : NAN;
    const double s34 = r.details["slope34"].is_number() ? r.details["slope34"].get<double>() : NAN;
    const bool ok12 = r.details["vanishing12"].get<bool>() || s12 >= cfg.min_slope;
    const bool ok34 = r.details["vanishing34"].get<bool>() || s34 >= cfg.min_slope;
    line(6, ode <= 1e-10 && ok12 && ok34 && secs <= 300.0,
         fmt("test-function chain: ODE vs closed form %.1e; slopes |Y1-Y2| %.3f, |Y3-Y4| %.3f; report %s; %.1fs", ode,
             s12, s34, to_string(r.status).c_str(), secs));
}

void moments() {
    const auto p = catalog("poisson1d");
    const auto b = simulate(p, Policy::constant(0), origin, sim(20000, 1e-3, 20.0, 7));
    bool ok = true;
    std::string msg = "exit moments (bridge):";
    for (double mu : {0.5, 1.0}) {
        const auto m = exit_moment(b, mu);
        const double exact = 1.0 / std::cos(std::sqrt(mu));
        const bool conv = exit_moment_convergence(b, mu).converged;
        ok = ok && std::abs(m.mean - exact) <= 3.0 * m.stderr_ && conv;
        msg += fmt(" mu=%.1f %.4f vs %.4f (se %.4f)%s;", mu, m.mean, exact, m.stderr_, conv ? "" : " unconverged");
    }
    const bool flagged = !exit_moment_convergence(b, 2.5).converged;
    msg += flagged ? " mu=2.5 flagged non-convergent" : " mu=2.5 NOT flagged";
    line(7, ok && flagged, msg);
}

void holder() {
    bool ok = true;
    std::string msg = "Hoelder exponents:";
    for (const auto& e : exitctrl::catalog()) {
        const auto p = catalog(e.name);
        const auto f = solve_hjb(p, grid(p.d == 1 ? 201 : 81));
        const auto r = check_holder([&](std::span<const double> x) { return interpolate(f, x); },
                                    holder_pairs(p.domain, default_holder_bases(p), 1e-3, 0.5), 0.4, e.name);
        ok = ok && r.passed();
        msg += fmt(" %s %.3f;", e.name.c_str(), r.measured);
    }
    line(8, ok, msg);
}

std::string summary(const char* threads) {
    setenv("EXITCTRL_THREADS", threads, 1);
    const auto rc = parse_run_config(
        R"({"problem":{"catalog":"semilinear1d"},"simulation":{"paths":3000,"seed":9},"grid":{"nodes":101}})");
    nlohmann::json out = nlohmann::json::array();
    for (const char* suite : {"comparison", "stability", "dpp"})
        for (const auto& r : run_suite(rc, suite).reports) out.push_back(to_json(r));
    const auto c = cost(rc.problem, Policy::constant(0), origin, rc.verify.sim, rc.verify.regression);
    out.push_back({c.J, c.stderr_});
    return out.dump();
}

void determinism() {
    const auto a = summary("1");
    const auto b = summary("1");
    const auto c = summary("4");
    unsetenv("EXITCTRL_THREADS");
    line(9, a == b && a == c,
         fmt("determinism: %zu-byte summary identical across repeats (%s) and thread counts 1/4 (%s)", a.size(),
             a == b ? "yes" : "no", a == c ? "yes" : "no"));
}

void convergence() {
    const auto p = catalog("poisson1d", {{"source", "cosine"}});
    auto exact = [](std::span<const double> x) { return std::cos(std::numbers::pi / 2.0 * x[0]); };
    std::vector<double> lh, le;
    std::string errs;
    for (std::size_t n : {21, 41, 81, 161}) {
        const auto f = solve_hjb(p, grid(n));
        const double e = sup_error(f, exact);
        lh.push_back(std::log(f.max_spacing()));
        le.push_back(std::log(e));
        errs += fmt(" %.2e", e);
    }
    const double slope = fit_line(lh, le).slope;
    const auto unit = solve_hjb(catalog("poisson1d"), grid(41));
    const double e_unit = sup_error(unit, [](std::span<const double> x) { return 0.5 * (1.0 - x[0] * x[0]); });
    line(10, slope >= 1.8 && e_unit <= 1e-12,
         fmt("grid convergence: cosine-source sup errors%s at 21..161 nodes, slope %.3f; unit-source error %.1e",
             errs.c_str(), slope, e_unit));
}

}  // namespace

int main() {
    const auto t0 = Clock::now();
    const std::vector<std::function<void()>> steps{poisson, semilinear, controlled, dpp,         comparison,
                                                   chain,   moments,    holder,     determinism, convergence};
    for (std::size_t i = 0; i < steps.size(); ++i) {
        try {
            steps[i]();
        } catch (const std::exception& e) {
            line(static_cast<int>(i + 1), false, std::string("threw: ") + e.what());
        }
    }
    std::printf("%d of %zu criteria failed (%.1fs)\n", failures, steps.size(), seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
