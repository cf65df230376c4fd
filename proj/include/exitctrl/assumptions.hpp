#pragma once

#include "exitctrl/paths.hpp"
#include "exitctrl/problem.hpp"
#include "exitctrl/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace exitctrl {

struct Probe {
    std::uint64_t seed = 7;
    std::size_t samples = 1000;
    double y_box = 2.0;  // y sampled in [-y_box, y_box]
    double z_box = 2.0;  // each z component in [-z_box, z_box]
    double min_separation = 1e-3;
};

enum class CheckStatus { Pass, Fail, NotCheckable };

inline std::string to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "pass";
        case CheckStatus::Fail: return "fail";
        case CheckStatus::NotCheckable: return "not-checkable";
    }
    return "?";
}

/// A sampled point pair in closure(D) x R x R^m x V.
struct Witness {
    std::vector<double> x1, x2;
    double y1 = 0.0, y2 = 0.0;
    std::vector<double> z1, z2;
    std::size_t control = 0;
};

struct AssumptionEntry {
    std::string name;
    CheckStatus status = CheckStatus::NotCheckable;
    double estimate = 0.0;     // empirical constant
    double bound = 0.0;        // constant the estimate was checked against
    std::optional<Witness> witness;
    std::size_t samples = 0;
    std::string note;
};

struct AssumptionReport {
    std::vector<AssumptionEntry> entries;

    const AssumptionEntry& at(const std::string& name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw PreconditionError("no assumption entry named " + name);
    }
    bool passed(const std::string& name) const { return at(name).status == CheckStatus::Pass; }
};

namespace detail {

inline double norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

/// Deterministic sampler over closure(D) and the probe boxes.
class ProbeSampler {
public:
    ProbeSampler(const ControlProblem& p, const Probe& probe) : p_(p), probe_(probe), rng_(probe.seed) {}

    std::vector<double> point(std::size_t sample, std::uint32_t stream) const {
        const auto& dom = p_.domain;
        std::vector<double> x(p_.d);
        for (std::uint32_t attempt = 0;; ++attempt) {
            for (std::size_t i = 0; i < p_.d; ++i) {
                const double u = uniform(sample, stream, attempt * 64 + static_cast<std::uint32_t>(i));
                x[i] = dom.lower(i) + u * (dom.upper(i) - dom.lower(i));
            }
            if (dom.contains(x)) return x;
        }
    }
    double y(std::size_t sample, std::uint32_t stream) const {
        return probe_.y_box * (2.0 * uniform(sample, stream, 0) - 1.0);
    }
    std::vector<double> z(std::size_t sample, std::uint32_t stream) const {
        std::vector<double> z(p_.m);
        for (std::size_t j = 0; j < p_.m; ++j)
            z[j] = probe_.z_box * (2.0 * uniform(sample, stream, static_cast<std::uint32_t>(j)) - 1.0);
        return z;
    }
    std::size_t control(std::size_t sample, std::uint32_t stream) const {
        const auto n = p_.controls.size();
        return std::min(n - 1, static_cast<std::size_t>(uniform(sample, stream, 0) * static_cast<double>(n)));
    }

private:
    double uniform(std::size_t sample, std::uint32_t stream, std::uint32_t lane) const {
        return rng_.uniforms(sample, stream, lane)[0];
    }

    const ControlProblem& p_;
    const Probe& probe_;
    CounterRng rng_;
};

inline Witness sample_witness(const ProbeSampler& s, std::size_t i) {
    Witness w;
    w.x1 = s.point(i, 1);
    w.x2 = s.point(i, 2);
    w.y1 = s.y(i, 3);
    w.y2 = s.y(i, 4);
    w.z1 = s.z(i, 5);
    w.z2 = s.z(i, 6);
    w.control = s.control(i, 7);
    return w;
}

inline double coefficient_gap(const ControlProblem& p, std::span<const double> x1, std::span<const double> x2,
                              std::span<const double> v) {
    std::vector<double> b1(p.d), b2(p.d), s1(p.d * p.m), s2(p.d * p.m);
    p.drift(x1, v, b1);
    p.drift(x2, v, b2);
    p.diffusion(x1, v, s1);
    p.diffusion(x2, v, s2);
    return dist(b1, b2) + dist(s1, s2);
}

inline double coefficient_size(const ControlProblem& p, std::span<const double> x, std::span<const double> v) {
    std::vector<double> b(p.d), s(p.d * p.m);
    p.drift(x, v, b);
    p.diffusion(x, v, s);
    return norm(b) + norm(s);
}

inline double min_eigen_a(const ControlProblem& p, std::span<const double> x, std::span<const double> v) {
    std::vector<double> s(p.d * p.m);
    p.diffusion(x, v, s);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> sig(
        s.data(), static_cast<Eigen::Index>(p.d), static_cast<Eigen::Index>(p.m));
    const Eigen::MatrixXd a = sig * sig.transpose();
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace detail

/// The quantity an assumption bounds, evaluated at a witness. A witness
/// violates the assumption when this exceeds the entry's bound (for H3(iii)
/// and H4(1): when it falls below).
inline double assumption_quantity(const ControlProblem& p, const std::string& name, const Witness& w) {
    using namespace detail;
    const auto v = p.controls[w.control];
    if (name == "H1") {
        const double dx = dist(w.x1, w.x2);
        const double lip = dx > 0.0 ? coefficient_gap(p, w.x1, w.x2, v) / dx : 0.0;
        const double growth = coefficient_size(p, w.x1, v) / (1.0 + norm(w.x1));
        return std::max(lip, growth);
    }
    if (name == "H3(i)") {
        const std::vector<double> z(w.z1);
        const double excess = std::abs(p.driver(w.x1, w.y1, z, v)) - std::abs(p.driver(w.x1, 0.0, z, v));
        return excess / (1.0 + std::abs(w.y1));
    }
    if (name == "H3(ii)") {
        const double den = dist(w.x1, w.x2) + dist(w.z1, w.z2);
        if (den == 0.0) return 0.0;
        return std::abs(p.driver(w.x1, w.y1, w.z1, v) - p.driver(w.x2, w.y1, w.z2, v)) / den;
    }
    if (name == "H3(iii)") {
        const double dy = w.y1 - w.y2;
        if (dy == 0.0) return std::numeric_limits<double>::infinity();
        return -dy * (p.driver(w.x1, w.y1, w.z1, v) - p.driver(w.x1, w.y2, w.z1, v)) / (dy * dy);
    }
    if (name == "H4(1)") return min_eigen_a(p, w.x1, v);
    if (name == "H6") {
        const double dy = w.y1 - w.y2;
        if (dy == 0.0) return 0.0;
        return std::abs(p.driver(w.x1, w.y1, w.z1, v) - p.driver(w.x1, w.y2, w.z1, v)) / std::abs(dy);
    }
    throw PreconditionError("assumption " + name + " has no sampled quantity");
}

inline bool lower_bounded(const std::string& name) { return name == "H3(iii)" || name == "H4(1)"; }

/// Re-evaluates a stored witness; true when it still violates the entry's bound.
inline bool witness_violates(const ControlProblem& p, const AssumptionEntry& e) {
    if (!e.witness) return false;
    const double q = assumption_quantity(p, e.name, *e.witness);
    const double tol = 1e-9 * std::max(1.0, std::abs(e.bound));
    return lower_bounded(e.name) ? q < e.bound - tol : q > e.bound + tol;
}

/// Sampling audit of the standing assumptions. Declared constants are
/// the bounds; missing ones fall back to the estimate (always passing),
/// except alpha which defaults to 0.
inline AssumptionReport validate_assumptions(const ControlProblem& p, const Probe& probe) {
    if (probe.samples < 2) throw PreconditionError("probe needs at least 2 samples");
    const detail::ProbeSampler sampler(p, probe);
    AssumptionReport report;

    auto sampled = [&](const std::string& name, std::optional<double> declared, double fallback_bound) {
        AssumptionEntry e;
        e.name = name;
        e.samples = probe.samples;
        const bool lower = lower_bounded(name);
        double extreme = lower ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        Witness worst;
        for (std::size_t i = 0; i < probe.samples; ++i) {
            Witness w = detail::sample_witness(sampler, i);
            const double q = assumption_quantity(p, name, w);
            if (lower ? q < extreme : q > extreme) {
                extreme = q;
                worst = std::move(w);
            }
        }
        if (!std::isfinite(extreme)) extreme = 0.0;
        e.estimate = extreme;
        e.bound = declared ? *declared : (std::isnan(fallback_bound) ? extreme : fallback_bound);
        if (!declared && std::isnan(fallback_bound)) e.note = "no declared constant; estimate reported";
        e.status = CheckStatus::Pass;
        e.witness = worst;
        if (witness_violates(p, e)) {
            e.status = CheckStatus::Fail;
        } else {
            e.witness.reset();
        }
        return e;
    };

    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.entries.push_back(sampled("H1", p.declared.L, nan));
    report.entries.push_back(sampled("H3(i)", p.declared.L, nan));
    report.entries.push_back(sampled("H3(ii)", p.declared.beta, nan));
    {
        auto e = sampled("H3(iii)", p.declared.alpha, 0.0);
        if (!p.declared.alpha) e.note = "no declared alpha; checked against alpha = 0";
        report.entries.push_back(std::move(e));
    }
    {
        // Non-degeneracy: the smallest eigenvalue of sigma sigma^T must stay
        // away from zero on the sampled points.
        auto e = sampled("H4(1)", std::nullopt, 1e-6);
        if (p.declared.lambda && e.estimate < *p.declared.lambda - 1e-9 * std::max(1.0, *p.declared.lambda))
            e.note = "estimate below declared lambda";
        report.entries.push_back(std::move(e));
    }
    {
        AssumptionEntry e;
        e.name = "H4(2)";
        e.status = CheckStatus::Pass;
        e.estimate = p.domain.rho();
        e.bound = 0.0;
        e.note = to_string(p.domain.kind()) + " domains have exterior spheres of radius " + std::to_string(e.estimate);
        report.entries.push_back(std::move(e));
    }
    {
        AssumptionEntry e;
        e.name = "H5";
        const double alpha = p.declared.alpha.value_or(report.at("H3(iii)").estimate);
        const double beta = p.declared.beta.value_or(report.at("H3(ii)").estimate);
        const double gamma = beta * beta - 2.0 * alpha;
        e.bound = gamma;
        if (p.declared.mu) {
            e.estimate = *p.declared.mu;
            e.status = *p.declared.mu > gamma ? CheckStatus::Pass : CheckStatus::Fail;
        } else {
            e.status = CheckStatus::NotCheckable;
            e.note = "no declared mu; derive_constants estimates it by simulation";
        }
        report.entries.push_back(std::move(e));
    }
    report.entries.push_back(sampled("H6", p.declared.Ltilde, nan));
    return report;
}

/// Sampled supremum of the coupling quotient
///   1/2 tr((s - s')(s - s')^T) / |x - x'|^2 + <x - x', b - b'> / |x - x'|^2
/// over the first `probe.samples` pairs with |x - x'| >= min_separation.
inline double estimate_delta(const ControlProblem& p, const Probe& probe) {
    const detail::ProbeSampler sampler(p, probe);
    double sup = -std::numeric_limits<double>::infinity();
    std::vector<double> b1(p.d), b2(p.d), s1(p.d * p.m), s2(p.d * p.m);
    for (std::size_t i = 0; i < probe.samples; ++i) {
        const auto x1 = sampler.point(i, 11);
        const auto x2 = sampler.point(i, 12);
        const double dx2 = detail::dist(x1, x2) * detail::dist(x1, x2);
        if (std::sqrt(dx2) < probe.min_separation) continue;
        const auto v = p.controls[sampler.control(i, 13)];
        p.drift(x1, v, b1);
        p.drift(x2, v, b2);
        p.diffusion(x1, v, s1);
        p.diffusion(x2, v, s2);
        double tr = 0.0, inner = 0.0;
        for (std::size_t k = 0; k < s1.size(); ++k) tr += (s1[k] - s2[k]) * (s1[k] - s2[k]);
        for (std::size_t k = 0; k < p.d; ++k) inner += (x1[k] - x2[k]) * (b1[k] - b2[k]);
        sup = std::max(sup, 0.5 * tr / dx2 + inner / dx2);
    }
    return sup;
}

struct Constants {
    double L = 0.0;
    double beta = 0.0;
    double alpha = 0.0;
    double gamma = 0.0;
    double mu = 0.0;
    std::optional<double> theta;
    std::string theta_note;  // why theta is unset
    double delta = 0.0;
    double lambda = 0.0;
    double rho = 0.0;
    std::optional<double> mu0;
    std::optional<double> L0;
    double Ltilde = 0.0;

    bool theta_feasible() const { return theta.has_value(); }
};

/// Midpoint of (gamma, min(mu, -2 [delta]^+)), or nullopt when empty.
inline std::optional<double> select_theta(double gamma, double mu, double delta) {
    const double upper = std::min(mu, -2.0 * std::max(delta, 0.0));
    if (!(gamma < upper)) return std::nullopt;
    return 0.5 * (gamma + upper);
}

/// Estimates mu as 0.9 times the smallest fitted exit decay rate over
/// constant policies started at the domain centre.
inline double estimate_mu(const ControlProblem& p, std::uint64_t seed, std::size_t n_paths = 4000) {
    double rate = std::numeric_limits<double>::infinity();
    const double diam = p.domain.diameter();
    SimConfig cfg;
    cfg.n_paths = n_paths;
    cfg.master_seed = seed;
    cfg.exit_mode = ExitMode::BridgeCorrected;
    double lam = 0.0;
    {
        std::vector<double> s(p.d * p.m);
        p.diffusion(p.domain.center(), p.controls[0], s);
        for (double c : s) lam = std::max(lam, c * c);
    }
    cfg.t_max = std::max(1.0, 4.0 * diam * diam / std::max(lam, 1e-6));
    cfg.dt = cfg.t_max / 4000.0;
    for (std::size_t v = 0; v < p.controls.size(); ++v) {
        const auto bundle = simulate(p, Policy::constant(v), p.domain.center(), cfg);
        const double r = exit_decay_rate(bundle);
        if (std::isfinite(r)) rate = std::min(rate, r);
    }
    return std::isfinite(rate) ? 0.9 * rate : 0.0;
}

inline Constants derive_constants(const ControlProblem& p, const Probe& probe,
                                  const AssumptionReport* report = nullptr) {
    AssumptionReport local;
    if (!report) {
        local = validate_assumptions(p, probe);
        report = &local;
    }
    for (const char* name : {"H1", "H3(i)", "H3(ii)"})
        if (report->at(name).status == CheckStatus::Fail)
            throw PreconditionError(std::string("derive_constants requires ") + name + " to pass");
    Constants c;
    c.L = std::max(p.declared.L.value_or(report->at("H1").estimate), report->at("H3(i)").estimate);
    c.beta = p.declared.beta.value_or(report->at("H3(ii)").estimate);
    c.alpha = p.declared.alpha.value_or(report->at("H3(iii)").estimate);
    c.gamma = c.beta * c.beta - 2.0 * c.alpha;
    c.delta = estimate_delta(p, probe);
    c.lambda = p.declared.lambda.value_or(report->at("H4(1)").estimate);
    c.rho = p.domain.rho();
    c.Ltilde = p.declared.Ltilde.value_or(report->at("H6").estimate);
    c.mu = p.declared.mu ? *p.declared.mu : estimate_mu(p, probe.seed);
    c.theta = select_theta(c.gamma, c.mu, c.delta);
    if (!c.theta) {
        c.theta_note = "empty theta interval: gamma = " + std::to_string(c.gamma) +
                       " is not below min(mu, -2[delta]^+) = " +
                       std::to_string(std::min(c.mu, -2.0 * std::max(c.delta, 0.0)));
    }
    return c;
}

}  // namespace exitctrl
