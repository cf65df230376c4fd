#pragma once

#include "exitctrl/error.hpp"
#include "exitctrl/expr.hpp"
#include "exitctrl/paths.hpp"
#include "exitctrl/problem.hpp"
#include "exitctrl/regression.hpp"
#include "exitctrl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace exitctrl {

/// Smooth test function with explicit derivative trees (all in x only).
struct TestFunction {
    Expr value;
    std::vector<Expr> gradient;             // d entries
    std::vector<std::vector<Expr>> hessian;  // d x d

    double phi(std::span<const double> x) const { return value.eval({x, {}, 0.0, {}}); }
};

/// phi(x) = 1/2 x^T A x + c^T x + c0 with A symmetric.
inline TestFunction quadratic_test_function(const std::vector<std::vector<double>>& A, const std::vector<double>& c,
                                            double c0) {
    const std::size_t d = c.size();
    if (A.size() != d) throw PreconditionError("quadratic test function: A must be d x d");
    TestFunction tf;
    std::vector<Expr> terms{Expr::constant(c0)};
    for (std::size_t i = 0; i < d; ++i) {
        if (A[i].size() != d) throw PreconditionError("quadratic test function: A must be d x d");
        for (std::size_t j = 0; j < d; ++j) {
            if (A[i][j] != A[j][i]) throw PreconditionError("quadratic test function: A must be symmetric");
            if (A[i][j] != 0.0)
                terms.push_back(Expr::constant(0.5 * A[i][j]) * Expr::state(static_cast<int>(i)) *
                                Expr::state(static_cast<int>(j)));
        }
        if (c[i] != 0.0) terms.push_back(Expr::constant(c[i]) * Expr::state(static_cast<int>(i)));
    }
    tf.value = Expr::add(terms);
    for (std::size_t i = 0; i < d; ++i) {
        std::vector<Expr> g{Expr::constant(c[i])};
        for (std::size_t j = 0; j < d; ++j)
            if (A[i][j] != 0.0) g.push_back(Expr::constant(A[i][j]) * Expr::state(static_cast<int>(j)));
        tf.gradient.push_back(Expr::add(g));
        std::vector<Expr> row;
        for (std::size_t j = 0; j < d; ++j) row.push_back(Expr::constant(A[i][j]));
        tf.hessian.push_back(std::move(row));
    }
    return tf;
}

/// The generator of a BSDE: either an expression in (x, y, z, v), or one of
/// the test-function constructions
///   F(x, y, z, v) = L(x, v) phi(x) + f(x, y + phi(x), z + grad phi(x) sigma(x, v), v),
/// optionally frozen at a point, or the lower bound F0 - L0 |y| - L0 |z|.
class Driver {
public:
    enum class Kind { Expression, TestFunction, Frozen, LowerBound };

    static Driver expression(Expr f) { return Driver(Kind::Expression, std::move(f)); }
    static Driver of(const ControlProblem& p) { return expression(p.f); }
    static Driver test_function(TestFunction tf) { return Driver(Kind::TestFunction, TfData{std::move(tf), {}}); }
    static Driver frozen(TestFunction tf, std::vector<double> x) {
        return Driver(Kind::Frozen, TfData{std::move(tf), std::move(x)});
    }
    static Driver lower_bound(double F0, double L0) {
        if (!(L0 >= 0.0)) throw PreconditionError("L0 must be nonnegative");
        return Driver(Kind::LowerBound, LbData{F0, L0});
    }

    Kind kind() const noexcept { return kind_; }

    bool uses_gradient(const ControlProblem& p) const {
        switch (kind_) {
            case Kind::Expression: return std::get<Expr>(data_).uses_gradient();
            case Kind::TestFunction:
            case Kind::Frozen: return p.f.uses_gradient();
            case Kind::LowerBound: return std::get<LbData>(data_).L0 != 0.0;
        }
        return true;
    }

    double operator()(const ControlProblem& p, std::span<const double> x, double y, std::span<const double> z,
                      std::span<const double> v) const {
        switch (kind_) {
            case Kind::Expression: return std::get<Expr>(data_).eval({x, v, y, z});
            case Kind::TestFunction: return shifted(p, std::get<TfData>(data_).tf, x, y, z, v);
            case Kind::Frozen: {
                const auto& t = std::get<TfData>(data_);
                return shifted(p, t.tf, t.point, y, z, v);
            }
            case Kind::LowerBound: {
                const auto& lb = std::get<LbData>(data_);
                double zn = 0.0;
                for (double c : z) zn += c * c;
                return lb.F0 - lb.L0 * std::abs(y) - lb.L0 * std::sqrt(zn);
            }
        }
        return 0.0;
    }

    /// L(x, v) phi(x) + f(x, y + phi, z + grad phi sigma, v).
    static double shifted(const ControlProblem& p, const TestFunction& tf, std::span<const double> x, double y,
                          std::span<const double> z, std::span<const double> v) {
        const std::size_t d = p.d, m = p.m;
        const ExprArgs ax{x, {}, 0.0, {}};
        std::vector<double> b(d), s(d * m), grad(d);
        p.drift(x, v, b);
        p.diffusion(x, v, s);
        for (std::size_t i = 0; i < d; ++i) grad[i] = tf.gradient[i].eval(ax);
        double gen = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            gen += b[i] * grad[i];
            for (std::size_t j = 0; j < d; ++j) {
                double a = 0.0;
                for (std::size_t k = 0; k < m; ++k) a += s[i * m + k] * s[j * m + k];
                gen += 0.5 * a * tf.hessian[i][j].eval(ax);
            }
        }
        std::vector<double> zz(m);
        for (std::size_t k = 0; k < m; ++k) {
            double c = 0.0;
            for (std::size_t i = 0; i < d; ++i) c += grad[i] * s[i * m + k];
            zz[k] = (z.empty() ? 0.0 : z[k]) + c;
        }
        return gen + p.driver(x, y + tf.phi(x), zz, v);
    }

private:
    struct TfData {
        TestFunction tf;
        std::vector<double> point;
    };
    struct LbData {
        double F0, L0;
    };
    using Data = std::variant<Expr, TfData, LbData>;

    Driver(Kind k, Data d) : kind_(k), data_(std::move(d)) {}

    Kind kind_;
    Data data_;
};

/// Stopping rule Theta applied on top of the exit time.
struct StopRule {
    enum class Kind { None, Deterministic, SubdomainExit };
    Kind kind = Kind::None;
    double theta = 0.0;
    std::optional<Domain> subdomain;

    static StopRule none() { return {}; }
    static StopRule at_time(double t) {
        if (!(t >= 0.0)) throw PreconditionError("stopping time must be nonnegative");
        return {Kind::Deterministic, t, std::nullopt};
    }
    /// First grid time at which the path is no longer inside the open sub-domain.
    static StopRule subdomain_exit(Domain sub) { return {Kind::SubdomainExit, 0.0, std::move(sub)}; }

    std::string describe() const {
        switch (kind) {
            case Kind::None: return "none";
            case Kind::Deterministic: return "time " + std::to_string(theta);
            case Kind::SubdomainExit: return "subdomain exit";
        }
        return "?";
    }
};

/// Per-path effective terminal step, time and state for exit time ^ Theta.
struct StoppedPaths {
    std::vector<std::size_t> step;
    std::vector<double> time;
    std::vector<bool> by_exit;  // stopped by leaving D (terminal g applies)

    std::span<const double> state(const PathBundle& b, std::size_t p) const { return b.state(p, step[p]); }
};

inline StoppedPaths stop_paths(const PathBundle& bundle, const StopRule& rule) {
    StoppedPaths s;
    const std::size_t N = bundle.n_paths();
    s.step.resize(N);
    s.time.resize(N);
    s.by_exit.resize(N);
    std::size_t theta_step = std::numeric_limits<std::size_t>::max();
    if (rule.kind == StopRule::Kind::Deterministic) {
        theta_step = static_cast<std::size_t>(std::llround(rule.theta / bundle.dt()));
        if (std::abs(static_cast<double>(theta_step) * bundle.dt() - rule.theta) > 1e-9 * std::max(1.0, rule.theta))
            throw PreconditionError("deterministic stopping time is not on the simulation grid");
    }
    for (std::size_t p = 0; p < N; ++p) {
        const auto& e = bundle.exit(p);
        std::size_t st = e.exit_step;
        double t = e.tau;
        bool by_exit = !e.censored;
        if (rule.kind == StopRule::Kind::Deterministic && theta_step < st) {
            st = theta_step;
            t = bundle.time(st);
            by_exit = false;
        } else if (rule.kind == StopRule::Kind::Deterministic && theta_step == st && e.tau > bundle.time(st)) {
            t = bundle.time(st);
            by_exit = false;
        } else if (rule.kind == StopRule::Kind::SubdomainExit) {
            for (std::size_t n = 0; n < st; ++n) {
                if (!rule.subdomain->interior(bundle.state(p, n))) {
                    st = n;
                    t = bundle.time(n);
                    by_exit = false;
                    break;
                }
            }
        }
        s.step[p] = st;
        s.time[p] = std::min(t, bundle.time(st));
        s.by_exit[p] = by_exit;
    }
    return s;
}

/// g evaluated at each path's stopped state.
inline std::vector<double> terminal_values(const PathBundle& bundle, const StoppedPaths& stopped, const Expr& g) {
    std::vector<double> eta(bundle.n_paths());
    for (std::size_t p = 0; p < eta.size(); ++p) eta[p] = g.eval({stopped.state(bundle, p), {}, 0.0, {}});
    return eta;
}

struct BsdeSolution {
    double y0 = 0.0;
    double stderr_ = 0.0;
    std::size_t n_paths = 0;
    double censored_fraction = 0.0;
    bool censoring_bias = false;  // terminal used at projected censored states
    bool convention_applied = true;
    std::size_t fallback_steps = 0;  // steps solved with the constant basis

    std::size_t m = 1;
    std::vector<std::size_t> stop_step;
    std::vector<double> terminal;
    /// Per-path terminal plus integrated driver; its mean estimates y0 and
    /// differences between solves on one bundle give paired errors.
    std::vector<double> pathwise;
    // Ragged per-path values on active steps (only with store_paths).
    std::vector<std::size_t> offset;
    std::vector<double> y_active;
    std::vector<double> z_active;

    bool has_paths() const noexcept { return !offset.empty(); }

    /// Y at (path, step); the terminal value at and after the stop step.
    double y(std::size_t p, std::size_t n) const {
        if (n >= stop_step[p]) return terminal[p];
        require_paths();
        return y_active[offset[p] + n];
    }
    /// Z component j at (path, step); 0 at and after the stop step.
    double z(std::size_t p, std::size_t n, std::size_t j) const {
        if (n >= stop_step[p]) return 0.0;
        require_paths();
        return z_active[(offset[p] + n) * m + j];
    }

    /// CSV: path_id, step, y, z components (steps 0..stop step).
    void write_csv(std::ostream& os) const {
        require_paths();
        os << "path_id,step,y";
        for (std::size_t j = 0; j < m; ++j) os << ",z" << j;
        os << '\n';
        os.precision(17);
        for (std::size_t p = 0; p < stop_step.size(); ++p)
            for (std::size_t n = 0; n <= stop_step[p]; ++n) {
                os << p << ',' << n << ',' << y(p, n);
                for (std::size_t j = 0; j < m; ++j) os << ',' << z(p, n, j);
                os << '\n';
            }
    }

private:
    void require_paths() const {
        if (!has_paths()) throw PreconditionError("per-path values were not stored (set store_paths)");
    }
};

/// Backward regression Monte Carlo for
///   Y_s = eta + int_s^{tau ^ Theta} driver(X_r, Y_r, Z_r, v_r) dr - int Z dB.
/// Regression is restricted to paths not yet stopped; the last, possibly
/// partial, interval of each path uses its exact stopping time.
inline BsdeSolution solve_bsde(const ControlProblem& problem, const PathBundle& bundle, std::span<const double> eta,
                               const Driver& driver, const RegressionConfig& config,
                               const StopRule& stop = StopRule::none()) {
    config.validate();
    const std::size_t N = bundle.n_paths();
    if (N == 0) throw PreconditionError("solve_bsde needs a nonempty bundle");
    if (eta.size() != N) throw PreconditionError("terminal values must have one entry per path");
    if (bundle.dim() != problem.d) throw PreconditionError("bundle was not simulated under this problem");
    const std::size_t d = problem.d, m = problem.m;
    const double dt = bundle.dt();

    const StoppedPaths stopped = stop_paths(bundle, stop);
    BsdeSolution sol;
    sol.n_paths = N;
    sol.m = m;
    sol.stop_step = stopped.step;
    sol.terminal.assign(eta.begin(), eta.end());
    std::size_t censored = 0;
    for (std::size_t p = 0; p < N; ++p)
        if (bundle.exit(p).censored && stopped.step[p] == bundle.exit(p).exit_step) ++censored;
    sol.censored_fraction = static_cast<double>(censored) / static_cast<double>(N);
    sol.censoring_bias = censored > 0;

    std::size_t max_step = 0;
    for (std::size_t s : stopped.step) max_step = std::max(max_step, s);
    if (config.store_paths) {
        sol.offset.resize(N);
        std::size_t total = 0;
        for (std::size_t p = 0; p < N; ++p) {
            sol.offset[p] = total;
            total += stopped.step[p];
        }
        sol.y_active.assign(total, 0.0);
        sol.z_active.assign(total * m, 0.0);
    }

    std::vector<std::vector<std::size_t>> starting(max_step + 1);
    for (std::size_t p = 0; p < N; ++p)
        if (stopped.step[p] > 0) starting[stopped.step[p] - 1].push_back(p);

    const bool need_z = driver.uses_gradient(problem) || config.store_paths;
    const std::size_t t = need_z ? 1 + m : 1;
    const Basis basis(problem.domain, config);
    const Projector projector(basis, config);

    std::vector<double> ynext(eta.begin(), eta.end());
    std::vector<double> pathwise(eta.begin(), eta.end());
    std::vector<std::size_t> active;
    std::vector<double> states, targets, fitted, dB(m), z(m);

    for (std::size_t nn = max_step; nn-- > 0;) {
        const std::size_t n = nn;
        for (std::size_t p : starting[n]) active.push_back(p);
        const std::size_t A = active.size();
        states.resize(A * d);
        targets.resize(A * t);
        fitted.resize(A * t);
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t p = active[a];
            const auto x = bundle.state(p, n);
            std::copy(x.begin(), x.end(), states.begin() + static_cast<std::ptrdiff_t>(a * d));
            targets[a * t] = ynext[p];
            if (need_z) {
                bundle.increment(p, n, dB);
                for (std::size_t j = 0; j < m; ++j) targets[a * t + 1 + j] = ynext[p] * dB[j] / dt;
            }
        }
        if (!projector.fit(states, d, targets, t, fitted, n)) ++sol.fallback_steps;

        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t p = active[a];
            const auto x = std::span<const double>(states).subspan(a * d, d);
            const auto v = problem.controls[bundle.control_index(p, n)];
            const double h = (n + 1 == stopped.step[p]) ? stopped.time[p] - bundle.time(n) : dt;
            const double ey = fitted[a * t];
            for (std::size_t j = 0; j < m; ++j) z[j] = need_z ? fitted[a * t + 1 + j] : 0.0;
            double y = ey;
            for (int k = 0; k < config.picard; ++k) y = ey + driver(problem, x, y, z, v) * h;
            const double fv = driver(problem, x, y, z, v);
            if (!std::isfinite(y))
                throw NumericalError("non-finite Y at step " + std::to_string(n) + ", path " + std::to_string(p));
            pathwise[p] += fv * h;
            ynext[p] = y;
            if (config.store_paths) {
                sol.y_active[sol.offset[p] + n] = y;
                for (std::size_t j = 0; j < m; ++j) sol.z_active[(sol.offset[p] + n) * m + j] = z[j];
            }
        }
    }

    // Y0 is the sample mean of xi + sum f h along each path; with f = 0 it
    // is the plain mean of the terminal values.
    RunningStats ps;
    for (std::size_t p = 0; p < N; ++p) ps.add(pathwise[p]);
    sol.y0 = ps.mean();
    sol.stderr_ = ps.stderr_of_mean();
    sol.pathwise = std::move(pathwise);
    return sol;
}

struct SemigroupValue {
    double value = 0.0;
    double stderr_ = 0.0;
    double censored_fraction = 0.0;
};

/// G_{tau ^ Theta}[eta]: Y_0 of the BSDE with terminal eta at each path's
/// stopped time and the problem's driver.
inline SemigroupValue backward_semigroup(const ControlProblem& problem, const PathBundle& bundle,
                                         const StopRule& stop, std::span<const double> eta,
                                         const RegressionConfig& config) {
    const auto sol = solve_bsde(problem, bundle, eta, Driver::of(problem), config, stop);
    return {sol.y0, sol.stderr_, sol.censored_fraction};
}

struct CostEstimate {
    double J = 0.0;
    double stderr_ = 0.0;
    double censored_fraction = 0.0;
};

/// Standard error of the mean of a - b over paths of one bundle.
inline double paired_stderr(const BsdeSolution& a, const BsdeSolution& b) {
    if (a.pathwise.size() != b.pathwise.size()) throw PreconditionError("solutions come from different bundles");
    RunningStats s;
    for (std::size_t p = 0; p < a.pathwise.size(); ++p) s.add(a.pathwise[p] - b.pathwise[p]);
    return s.stderr_of_mean();
}

inline CostEstimate cost(const ControlProblem& problem, const Policy& policy, std::span<const double> x0,
                         const SimConfig& sim, const RegressionConfig& reg) {
    const auto bundle = simulate(problem, policy, x0, sim);
    const auto stopped = stop_paths(bundle, StopRule::none());
    const auto eta = terminal_values(bundle, stopped, problem.g);
    const auto sol = solve_bsde(problem, bundle, eta, Driver::of(problem), reg);
    return {sol.y0, sol.stderr_, sol.censored_fraction};
}

struct CandidateResult {
    std::string policy;
    double J = 0.0;
    double stderr_ = 0.0;
    double censored_fraction = 0.0;
};

struct ValueEstimate {
    double u = 0.0;
    double stderr_ = 0.0;
    std::size_t argmin = 0;
    std::vector<CandidateResult> table;
};

/// Every constant policy over the control set, in canonical order.
inline std::vector<Policy> default_candidates(const ControlProblem& problem) {
    std::vector<Policy> c;
    for (std::size_t i = 0; i < problem.controls.size(); ++i) c.push_back(Policy::constant(i));
    return c;
}

/// Minimum cost over candidates on common random numbers; ties go to the
/// lowest candidate index.
inline ValueEstimate estimate_value(const ControlProblem& problem, std::span<const double> x0,
                                    const std::vector<Policy>& candidates, const SimConfig& sim,
                                    const RegressionConfig& reg) {
    if (candidates.empty()) throw PreconditionError("estimate_value needs at least one candidate policy");
    ValueEstimate v;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto c = cost(problem, candidates[i], x0, sim, reg);
        v.table.push_back({candidates[i].describe(), c.J, c.stderr_, c.censored_fraction});
        if (i == 0 || c.J < v.u) {
            v.u = c.J;
            v.stderr_ = c.stderr_;
            v.argmin = i;
        }
    }
    return v;
}

}  // namespace exitctrl
