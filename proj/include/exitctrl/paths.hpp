#pragma once

#include "exitctrl/domain.hpp"
#include "exitctrl/error.hpp"
#include "exitctrl/parallel.hpp"
#include "exitctrl/problem.hpp"
#include "exitctrl/rng.hpp"
#include "exitctrl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace exitctrl {

enum class ExitMode { GridCrossing, BridgeCorrected };

inline std::string to_string(ExitMode m) { return m == ExitMode::GridCrossing ? "grid" : "bridge"; }

struct SimConfig {
    double dt = 1e-3;
    double t_max = 10.0;
    std::size_t n_paths = 10000;
    std::uint64_t master_seed = 1;
    ExitMode exit_mode = ExitMode::BridgeCorrected;

    void validate() const {
        if (!(dt > 0.0)) throw PreconditionError("dt must be positive");
        if (!(dt < t_max)) throw PreconditionError("dt must be smaller than t_max");
        if (n_paths == 0) throw PreconditionError("n_paths must be at least 1");
    }

    /// Number of grid steps; the step is shrunk so that it divides t_max.
    std::size_t n_steps() const { return static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9)); }
    double step() const { return t_max / static_cast<double>(n_steps()); }
};

struct ExitRecord {
    std::size_t exit_step = 0;  // last stored step; equals n_steps when censored
    double tau = 0.0;
    std::vector<double> exit_point;
    bool censored = false;
};

// ---------------------------------------------------------------------------
// Policies

/// Tensor-grid feedback table: control index at each node, nearest-node lookup.
struct FeedbackTable {
    std::vector<std::vector<double>> axes;
    std::vector<std::size_t> indices;  // row-major, last axis fastest

    std::size_t lookup(std::span<const double> x) const {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            const auto& ax = axes[a];
            const auto it = std::lower_bound(ax.begin(), ax.end(), x[a]);
            std::size_t i = static_cast<std::size_t>(it - ax.begin());
            if (i == ax.size()) {
                i = ax.size() - 1;
            } else if (i > 0 && x[a] - ax[i - 1] <= ax[i] - x[a]) {
                --i;
            }
            flat = flat * ax.size() + i;
        }
        return indices[flat];
    }
};

/// Implementable admissible controls. Every evaluation returns an index
/// into ControlSet::points.
class Policy {
public:
    enum class Kind { Constant, OpenLoop, Feedback, Table };

    static Policy constant(std::size_t index) { return Policy(Kind::Constant, ConstantData{index}); }
    /// Piecewise constant on the simulation grid; the last entry persists.
    static Policy open_loop(std::vector<std::size_t> per_step) {
        if (per_step.empty()) throw PreconditionError("open-loop policy needs at least one step");
        return Policy(Kind::OpenLoop, std::move(per_step));
    }
    static Policy feedback(FeedbackTable table) { return Policy(Kind::Feedback, std::move(table)); }
    /// Nearest-point lookup in an external table of states.
    static Policy table(std::vector<std::vector<double>> points, std::vector<std::size_t> indices) {
        if (points.empty() || points.size() != indices.size())
            throw PreconditionError("external policy table needs matching nonempty points/indices");
        return Policy(Kind::Table, TableData{std::move(points), std::move(indices)});
    }

    Kind kind() const noexcept { return kind_; }
    bool is_constant() const noexcept { return kind_ == Kind::Constant; }

    std::size_t index(std::size_t step, std::span<const double> x) const {
        switch (kind_) {
            case Kind::Constant: return std::get<ConstantData>(data_).index;
            case Kind::OpenLoop: {
                const auto& s = std::get<std::vector<std::size_t>>(data_);
                return s[std::min(step, s.size() - 1)];
            }
            case Kind::Feedback: return std::get<FeedbackTable>(data_).lookup(x);
            case Kind::Table: {
                const auto& t = std::get<TableData>(data_);
                std::size_t best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < t.points.size(); ++i) {
                    double d2 = 0.0;
                    for (std::size_t j = 0; j < x.size(); ++j) d2 += (t.points[i][j] - x[j]) * (t.points[i][j] - x[j]);
                    if (d2 < best_d) {
                        best_d = d2;
                        best = i;
                    }
                }
                return t.indices[best];
            }
        }
        return 0;
    }

    /// Largest index the policy can return.
    std::size_t max_index() const {
        switch (kind_) {
            case Kind::Constant: return std::get<ConstantData>(data_).index;
            case Kind::OpenLoop: {
                const auto& s = std::get<std::vector<std::size_t>>(data_);
                return *std::max_element(s.begin(), s.end());
            }
            case Kind::Feedback: {
                const auto& s = std::get<FeedbackTable>(data_).indices;
                return s.empty() ? 0 : *std::max_element(s.begin(), s.end());
            }
            case Kind::Table: {
                const auto& s = std::get<TableData>(data_).indices;
                return *std::max_element(s.begin(), s.end());
            }
        }
        return 0;
    }

    std::string describe() const {
        switch (kind_) {
            case Kind::Constant: return "constant[" + std::to_string(std::get<ConstantData>(data_).index) + "]";
            case Kind::OpenLoop: return "open-loop";
            case Kind::Feedback: return "feedback";
            case Kind::Table: return "table";
        }
        return "?";
    }

private:
    struct ConstantData {
        std::size_t index;
    };
    struct TableData {
        std::vector<std::vector<double>> points;
        std::vector<std::size_t> indices;
    };
    using Data = std::variant<ConstantData, std::vector<std::size_t>, FeedbackTable, TableData>;

    Policy(Kind k, Data d) : kind_(k), data_(std::move(d)) {}

    Kind kind_;
    Data data_;
};

// ---------------------------------------------------------------------------
// Exit detection

/// Probability that a Brownian bridge of variance rate s2 over a step dt,
/// starting at distance d1 and ending at distance d2 from a flat boundary,
/// touches it.
inline double bridge_hit_probability(double d1, double d2, double s2, double dt) {
    if (d1 <= 0.0 || d2 <= 0.0) return 1.0;
    if (!(s2 > 0.0)) return 0.0;
    return std::exp(-2.0 * d1 * d2 / (s2 * dt));
}

struct StepExit {
    bool exited = false;
    double fraction = 1.0;  // exit time within the step, as a fraction of dt
};

/// Decides whether the path exits during the step x -> x_next.
/// `s2` is the diffusion variance along the boundary normal at x and
/// `uniform` the Bernoulli draw for the bridge test (ignored in grid mode).
inline StepExit check_step(const Domain& domain, std::span<const double> x, std::span<const double> x_next,
                           double dt, ExitMode mode, double s2, double uniform) {
    if (!domain.contains(x_next)) return {true, 1.0};
    if (mode == ExitMode::GridCrossing) return {};
    const double d1 = domain.signed_distance(x);
    const double d2 = domain.signed_distance(x_next);
    if (uniform < bridge_hit_probability(d1, d2, s2, dt)) {
        const double denom = d1 + d2;
        return {true, denom > 0.0 ? d1 / denom : 0.0};
    }
    return {};
}

/// Variance rate of the diffusion along the outward normal at the
/// boundary point closest to x.
inline double normal_variance(const Domain& domain, std::span<const double> x, std::span<const double> sig,
                              std::size_t m) {
    const auto y = domain.closest_boundary_point(x);
    const auto n = domain.outward_normal(y);
    double s2 = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        double c = 0.0;
        for (std::size_t i = 0; i < n.size(); ++i) c += n[i] * sig[i * m + j];
        s2 += c * c;
    }
    return s2;
}

/// Stand-alone exit detection over a stored path (`states` is
/// (steps+1) x d, row-major). Bridge mode needs the per-step normal
/// variance rates and uniforms.
inline ExitRecord detect_exit(std::span<const double> states, std::size_t d, double dt, const Domain& domain,
                              ExitMode mode, std::span<const double> normal_s2 = {},
                              std::span<const double> uniforms = {}) {
    const std::size_t n_states = states.size() / d;
    if (n_states == 0) throw PreconditionError("detect_exit needs at least one state");
    if (mode == ExitMode::BridgeCorrected && (normal_s2.size() + 1 < n_states || uniforms.size() + 1 < n_states))
        throw PreconditionError("bridge mode needs one variance rate and uniform per step");
    auto at = [&](std::size_t n) { return states.subspan(n * d, d); };
    ExitRecord rec;
    if (!domain.interior(at(0))) {
        rec.exit_step = 0;
        rec.tau = 0.0;
        rec.exit_point = domain.contains(at(0)) ? std::vector<double>(at(0).begin(), at(0).end())
                                                : domain.closest_boundary_point(at(0));
        return rec;
    }
    for (std::size_t n = 0; n + 1 < n_states; ++n) {
        const double s2 = mode == ExitMode::BridgeCorrected ? normal_s2[n] : 0.0;
        const double u = mode == ExitMode::BridgeCorrected ? uniforms[n] : 1.0;
        const auto ex = check_step(domain, at(n), at(n + 1), dt, mode, s2, u);
        if (ex.exited) {
            rec.exit_step = n + 1;
            if (ex.fraction >= 1.0) {
                rec.tau = static_cast<double>(n + 1) * dt;
                rec.exit_point = domain.closest_boundary_point(at(n + 1));
            } else {
                rec.tau = (static_cast<double>(n) + ex.fraction) * dt;
                std::vector<double> p(d);
                for (std::size_t i = 0; i < d; ++i) p[i] = at(n)[i] + ex.fraction * (at(n + 1)[i] - at(n)[i]);
                rec.exit_point = domain.closest_boundary_point(p);
            }
            return rec;
        }
    }
    rec.censored = true;
    rec.exit_step = n_states - 1;
    rec.tau = static_cast<double>(n_states - 1) * dt;
    rec.exit_point = domain.closest_boundary_point(at(n_states - 1));
    return rec;
}

// ---------------------------------------------------------------------------
// Path bundles

/// Ensemble of simulated controlled paths. States are stored up to each
/// path's exit step (inclusive, the last one being the projected exit
/// point); later steps read back as the exit point.
class PathBundle {
public:
    PathBundle() = default;

    std::size_t n_paths() const noexcept { return exits_.size(); }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t dim() const noexcept { return d_; }
    std::size_t brownian_dim() const noexcept { return m_; }
    double dt() const noexcept { return dt_; }
    double t_max() const noexcept { return dt_ * static_cast<double>(n_steps_); }
    double time(std::size_t n) const noexcept { return dt_ * static_cast<double>(n); }
    std::uint64_t master_seed() const noexcept { return seed_; }
    ExitMode exit_mode() const noexcept { return mode_; }
    /// Substream identifier of a path (its index in the key space).
    std::uint64_t substream(std::size_t p) const noexcept { return p; }

    const std::vector<ExitRecord>& exits() const noexcept { return exits_; }
    const ExitRecord& exit(std::size_t p) const { return exits_[p]; }

    std::span<const double> state(std::size_t p, std::size_t n) const {
        const std::size_t last = exits_[p].exit_step;
        const std::size_t s = std::min(n, last);
        return std::span<const double>(states_).subspan(offsets_[p] + s * d_, d_);
    }

    /// Control index applied on [t_n, t_{n+1}); frozen after exit.
    std::size_t control_index(std::size_t p, std::size_t n) const {
        if (constant_control_) return *constant_control_;
        const std::size_t last = exits_[p].exit_step;
        const std::size_t s = std::min(n, last);
        return controls_[offsets_[p] / d_ + s];
    }

    /// Brownian increment over [t_n, t_{n+1}) for path p, regenerated from
    /// the counter-based stream.
    void increment(std::size_t p, std::size_t n, std::span<double> out) const {
        CounterRng(seed_).normals(substream(p), static_cast<std::uint32_t>(n), out);
        const double s = std::sqrt(dt_);
        for (double& v : out) v *= s;
    }

    double censored_fraction() const {
        std::size_t c = 0;
        for (const auto& e : exits_) c += e.censored ? 1 : 0;
        return exits_.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(exits_.size());
    }

    /// CSV: path_id, exit_step, tau, censored, exit_point coordinates.
    void write_exits_csv(std::ostream& os) const {
        os << "path_id,exit_step,tau,censored";
        for (std::size_t i = 0; i < d_; ++i) os << ",exit_x" << i;
        os << '\n';
        os.precision(17);
        for (std::size_t p = 0; p < exits_.size(); ++p) {
            const auto& e = exits_[p];
            os << p << ',' << e.exit_step << ',' << e.tau << ',' << (e.censored ? 1 : 0);
            for (double c : e.exit_point) os << ',' << c;
            os << '\n';
        }
    }

    friend bool operator==(const PathBundle& a, const PathBundle& b) {
        if (a.n_steps_ != b.n_steps_ || a.d_ != b.d_ || a.dt_ != b.dt_ || a.seed_ != b.seed_ ||
            a.states_ != b.states_ || a.controls_ != b.controls_ || a.offsets_ != b.offsets_ ||
            a.constant_control_ != b.constant_control_ || a.exits_.size() != b.exits_.size())
            return false;
        for (std::size_t p = 0; p < a.exits_.size(); ++p) {
            const auto& x = a.exits_[p];
            const auto& y = b.exits_[p];
            if (x.exit_step != y.exit_step || x.tau != y.tau || x.censored != y.censored ||
                x.exit_point != y.exit_point)
                return false;
        }
        return true;
    }

private:
    friend PathBundle simulate(const ControlProblem&, const Policy&, std::span<const double>, const SimConfig&);

    std::size_t n_steps_ = 0;
    std::size_t d_ = 0;
    std::size_t m_ = 0;
    double dt_ = 0.0;
    std::uint64_t seed_ = 0;
    ExitMode mode_ = ExitMode::GridCrossing;
    std::vector<double> states_;
    std::vector<std::uint32_t> controls_;
    std::vector<std::size_t> offsets_;  // into states_, in doubles
    std::optional<std::size_t> constant_control_;
    std::vector<ExitRecord> exits_;
};

/// Euler-Maruyama simulation of the controlled SDE with exit detection.
/// Output is bit-identical for any worker count.
inline PathBundle simulate(const ControlProblem& problem, const Policy& policy, std::span<const double> x0,
                           const SimConfig& config) {
    config.validate();
    const std::size_t d = problem.d;
    const std::size_t m = problem.m;
    if (x0.size() != d) throw PreconditionError("x0 has the wrong dimension");
    if (!problem.domain.contains(x0)) throw PreconditionError("x0 lies outside the closed domain");
    if (policy.max_index() >= problem.controls.size())
        throw PreconditionError("policy refers to a control index outside the control set");

    const std::size_t n_steps = config.n_steps();
    const double dt = config.step();
    const double sqrt_dt = std::sqrt(dt);
    const CounterRng rng(config.master_seed);
    const bool frozen_coeffs = problem.coefficients_state_free();
    const bool const_policy = policy.is_constant();

    struct PathOut {
        std::vector<double> states;
        std::vector<std::uint32_t> controls;
        ExitRecord exit;
    };
    std::vector<PathOut> out(config.n_paths);
    const bool start_on_boundary = !problem.domain.interior(x0);

    parallel_chunks(config.n_paths, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(x0.begin(), x0.end()), xn(d), drift(d), sig(d * m), dB(m);
        // Coefficients for frozen (state-free) dynamics under a constant policy.
        std::vector<double> drift0(d), sig0(d * m);
        if (frozen_coeffs && const_policy) {
            const auto v = problem.controls[policy.index(0, x0)];
            problem.drift(x0, v, drift0);
            problem.diffusion(x0, v, sig0);
        }
        for (std::size_t p = begin; p < end; ++p) {
            PathOut& po = out[p];
            std::copy(x0.begin(), x0.end(), x.begin());
            po.states.assign(x.begin(), x.end());
            if (start_on_boundary) {
                po.exit.exit_step = 0;
                po.exit.tau = 0.0;
                po.exit.exit_point = x;
                if (!const_policy) po.controls.push_back(static_cast<std::uint32_t>(policy.index(0, x)));
                continue;
            }
            bool exited = false;
            for (std::size_t n = 0; n < n_steps; ++n) {
                const std::size_t vi = policy.index(n, x);
                if (!const_policy) po.controls.push_back(static_cast<std::uint32_t>(vi));
                if (frozen_coeffs && const_policy) {
                    std::copy(drift0.begin(), drift0.end(), drift.begin());
                    std::copy(sig0.begin(), sig0.end(), sig.begin());
                } else {
                    const auto v = problem.controls[vi];
                    problem.drift(x, v, drift);
                    problem.diffusion(x, v, sig);
                }
                rng.normals(p, static_cast<std::uint32_t>(n), dB);
                for (std::size_t i = 0; i < d; ++i) {
                    double s = x[i] + drift[i] * dt;
                    for (std::size_t j = 0; j < m; ++j) s += sig[i * m + j] * dB[j] * sqrt_dt;
                    xn[i] = s;
                    if (!std::isfinite(s))
                        throw NumericalError("non-finite state at path " + std::to_string(p) + ", step " +
                                             std::to_string(n + 1));
                }
                double s2 = 0.0;
                double u = 1.0;
                if (config.exit_mode == ExitMode::BridgeCorrected && problem.domain.contains(xn)) {
                    s2 = normal_variance(problem.domain, x, sig, m);
                    u = rng.aux_uniform(p, static_cast<std::uint32_t>(n));
                }
                const auto ex = check_step(problem.domain, x, xn, dt, config.exit_mode, s2, u);
                if (ex.exited) {
                    po.exit.exit_step = n + 1;
                    if (ex.fraction >= 1.0) {
                        po.exit.tau = static_cast<double>(n + 1) * dt;
                        po.exit.exit_point = problem.domain.closest_boundary_point(xn);
                    } else {
                        po.exit.tau = (static_cast<double>(n) + ex.fraction) * dt;
                        std::vector<double> mid(d);
                        for (std::size_t i = 0; i < d; ++i) mid[i] = x[i] + ex.fraction * (xn[i] - x[i]);
                        po.exit.exit_point = problem.domain.closest_boundary_point(mid);
                    }
                    po.states.insert(po.states.end(), po.exit.exit_point.begin(), po.exit.exit_point.end());
                    exited = true;
                    break;
                }
                po.states.insert(po.states.end(), xn.begin(), xn.end());
                std::swap(x, xn);
            }
            if (!exited) {
                po.exit.censored = true;
                po.exit.exit_step = n_steps;
                po.exit.tau = static_cast<double>(n_steps) * dt;
                po.exit.exit_point = problem.domain.closest_boundary_point(x);
            }
            if (!const_policy) po.controls.push_back(po.controls.empty() ? 0u : po.controls.back());
        }
    });

    PathBundle bundle;
    bundle.n_steps_ = n_steps;
    bundle.d_ = d;
    bundle.m_ = m;
    bundle.dt_ = dt;
    bundle.seed_ = config.master_seed;
    bundle.mode_ = config.exit_mode;
    if (const_policy) bundle.constant_control_ = policy.index(0, x0);
    std::size_t total = 0;
    for (const auto& po : out) total += po.states.size();
    bundle.states_.reserve(total);
    if (!const_policy) bundle.controls_.reserve(total / d);
    bundle.offsets_.reserve(out.size());
    bundle.exits_.reserve(out.size());
    for (auto& po : out) {
        bundle.offsets_.push_back(bundle.states_.size());
        bundle.states_.insert(bundle.states_.end(), po.states.begin(), po.states.end());
        if (!const_policy) bundle.controls_.insert(bundle.controls_.end(), po.controls.begin(), po.controls.end());
        bundle.exits_.push_back(std::move(po.exit));
        po = PathOut{};
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Exit-time functionals

struct MomentEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
    double censored_fraction = 0.0;
};

/// Sample mean of exp(mu * tau); censored paths contribute exp(mu * t_max),
/// so for mu > 0 with censoring the value is a lower bound.
inline MomentEstimate exit_moment(const PathBundle& bundle, double mu) {
    if (bundle.n_paths() == 0) throw PreconditionError("exit_moment needs a nonempty bundle");
    RunningStats s;
    for (const auto& e : bundle.exits()) s.add(std::exp(mu * e.tau));
    return {s.mean(), s.stderr_of_mean(), s.count(), bundle.censored_fraction()};
}

struct MomentConvergence {
    std::vector<double> horizons;
    std::vector<double> estimates;   // E[exp(mu * min(tau, T))] per horizon
    std::vector<double> increments;  // estimate growth between consecutive horizons
    double decay_rate = 0.0;         // fitted slope of log(increment) versus horizon
    std::size_t fitted_points = 0;
    bool converged = false;
};

/// Diagnoses whether E[exp(mu tau)] stabilises as the truncation horizon
/// grows: increments of the truncated estimate must decay at least at
/// rate `min_decay` per unit time. Increments resting on fewer than
/// `min_survivors` surviving paths are not fitted.
inline MomentConvergence exit_moment_convergence(const PathBundle& bundle, double mu, std::size_t n_horizons = 12,
                                                 double min_decay = 0.5, std::size_t min_survivors = 30) {
    MomentConvergence c;
    // The ladder ends where only min_survivors paths remain, so every rung
    // still sees the tail.
    std::vector<double> taus;
    for (const auto& e : bundle.exits()) taus.push_back(e.tau);
    std::sort(taus.begin(), taus.end());
    double tmax = bundle.t_max();
    if (taus.size() > min_survivors) tmax = std::min(tmax, taus[taus.size() - min_survivors - 1]);
    if (!(tmax > 0.0)) tmax = bundle.t_max();
    for (std::size_t h = 1; h <= n_horizons; ++h) c.horizons.push_back(tmax * static_cast<double>(h) / n_horizons);
    for (double T : c.horizons) {
        RunningStats s;
        for (const auto& e : bundle.exits()) s.add(std::exp(mu * std::min(e.tau, T)));
        c.estimates.push_back(s.mean());
    }
    std::vector<double> ts, logs;
    for (std::size_t h = 1; h < c.horizons.size(); ++h) {
        const double inc = c.estimates[h] - c.estimates[h - 1];
        c.increments.push_back(inc);
        std::size_t survivors = 0;
        for (const auto& e : bundle.exits()) survivors += e.tau > c.horizons[h - 1] ? 1 : 0;
        if (survivors >= min_survivors && inc > 0.0) {
            ts.push_back(c.horizons[h - 1]);
            logs.push_back(std::log(inc));
        }
    }
    c.fitted_points = ts.size();
    if (ts.size() >= 3) {
        c.decay_rate = -fit_line(ts, logs).slope;
        c.converged = c.decay_rate >= min_decay;
    } else {
        // Too few surviving paths to see a tail: the horizon outlived them all.
        c.converged = bundle.censored_fraction() == 0.0 && mu <= 0.0;
    }
    return c;
}

/// Exponential decay rate of the empirical survival function P(tau > t),
/// fitted where at least `min_survivors` paths remain.
inline double exit_decay_rate(const PathBundle& bundle, std::size_t n_points = 20, std::size_t min_survivors = 50) {
    std::vector<double> taus;
    for (const auto& e : bundle.exits()) taus.push_back(e.tau);
    std::sort(taus.begin(), taus.end());
    const double n = static_cast<double>(taus.size());
    std::vector<double> ts, logs;
    const double tmax = bundle.t_max();
    for (std::size_t i = 1; i <= n_points; ++i) {
        const double t = tmax * static_cast<double>(i) / static_cast<double>(n_points + 1);
        const auto survivors = static_cast<std::size_t>(taus.end() - std::upper_bound(taus.begin(), taus.end(), t));
        if (survivors < min_survivors) break;
        // Skip the initial transient before the principal mode dominates.
        if (static_cast<double>(survivors) > 0.5 * n) continue;
        ts.push_back(t);
        logs.push_back(std::log(static_cast<double>(survivors) / n));
    }
    if (ts.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    return -fit_line(ts, logs).slope;
}

// ---------------------------------------------------------------------------
// Barrier function

struct BarrierValue {
    double w = 0.0;
    std::vector<double> boundary_point;   // minimising y*
    std::vector<double> exterior_center;  // touching-sphere centre for y*
};

/// w(x, y) = exp(-k rho^2) - exp(-k |x - ytilde(y)|^2) for a fixed boundary point y.
inline double barrier_at(const Domain& domain, std::span<const double> x, std::span<const double> y, double k) {
    const auto c = domain.exterior_center(y);
    const double rho = domain.rho();
    double r2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - c[i]) * (x[i] - c[i]);
    return std::exp(-k * rho * rho) - std::exp(-k * r2);
}

/// w(x) = inf over boundary points y of w(x, y). For the supported convex
/// kinds the infimum sits at the closest boundary point, where
/// |x - ytilde| = rho + dist(x, boundary).
inline BarrierValue barrier_value(const Domain& domain, std::span<const double> x, double k) {
    if (!(k > 0.0)) throw PreconditionError("barrier exponent k must be positive");
    if (!domain.contains(x)) throw PreconditionError("barrier_value: x lies outside the closed domain");
    BarrierValue bv;
    if (domain.on_boundary(x)) {
        bv.boundary_point.assign(x.begin(), x.end());
        bv.exterior_center = domain.exterior_center(x);
        bv.w = 0.0;
        return bv;
    }
    bv.boundary_point = domain.closest_boundary_point(x);
    bv.exterior_center = domain.exterior_center(bv.boundary_point);
    const double rho = domain.rho();
    const double r = rho + domain.signed_distance(x);
    bv.w = std::exp(-k * rho * rho) - std::exp(-k * r * r);
    return bv;
}

}  // namespace exitctrl
