#pragma once

#include "exitctrl/error.hpp"
#include "exitctrl/paths.hpp"
#include "exitctrl/problem.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace exitctrl {

struct GridConfig {
    std::vector<std::size_t> nodes{201};  // per axis; a single entry is reused for every axis
    std::size_t max_policy_iterations = 100;
    std::size_t max_semilinear_iterations = 500;
    double tolerance = 1e-9;
    /// Always upwind the drift. When false, central differences are used
    /// wherever they keep the stencil monotone.
    bool upwind = false;
    double damping = 0.5;

    std::size_t nodes_on(std::size_t axis) const { return nodes.size() == 1 ? nodes[0] : nodes.at(axis); }

    void validate(std::size_t d) const {
        if (nodes.empty() || (nodes.size() != 1 && nodes.size() != d))
            throw PreconditionError("grid needs one node count or one per axis");
        for (std::size_t n : nodes)
            if (n < 3) throw PreconditionError("grid needs at least 3 nodes per axis");
        if (!(tolerance > 0.0)) throw PreconditionError("grid tolerance must be positive");
        if (!(damping > 0.0 && damping <= 1.0)) throw PreconditionError("damping must lie in (0, 1]");
    }
};

/// Nodal solution of the HJB Dirichlet problem on a tensor grid.
struct ValueField {
    std::vector<std::vector<double>> axes;
    std::vector<double> u;
    std::vector<std::size_t> policy;
    std::vector<bool> boundary;
    std::vector<double> log;  // sup-norm HJB residual after each policy evaluation
    std::size_t sweeps = 0;
    std::size_t semilinear_iterations = 0;
    GridConfig config;

    std::size_t dim() const noexcept { return axes.size(); }
    std::size_t size() const noexcept { return u.size(); }

    std::vector<std::size_t> multi_index(std::size_t flat) const {
        std::vector<std::size_t> idx(dim());
        for (std::size_t a = dim(); a-- > 0;) {
            idx[a] = flat % axes[a].size();
            flat /= axes[a].size();
        }
        return idx;
    }
    std::size_t flat_index(std::span<const std::size_t> idx) const {
        std::size_t f = 0;
        for (std::size_t a = 0; a < dim(); ++a) f = f * axes[a].size() + idx[a];
        return f;
    }
    std::vector<double> node(std::size_t flat) const {
        const auto idx = multi_index(flat);
        std::vector<double> x(dim());
        for (std::size_t a = 0; a < dim(); ++a) x[a] = axes[a][idx[a]];
        return x;
    }
    double spacing(std::size_t axis) const { return axes[axis][1] - axes[axis][0]; }
    double max_spacing() const {
        double h = 0.0;
        for (std::size_t a = 0; a < dim(); ++a) h = std::max(h, spacing(a));
        return h;
    }

    /// Index of the node nearest to x.
    std::size_t nearest(std::span<const double> x) const {
        std::vector<std::size_t> idx(dim());
        for (std::size_t a = 0; a < dim(); ++a) {
            const double t = (x[a] - axes[a].front()) / spacing(a);
            idx[a] = static_cast<std::size_t>(
                std::clamp(std::llround(t), 0LL, static_cast<long long>(axes[a].size()) - 1));
        }
        return flat_index(idx);
    }

    double sup_residual() const { return log.empty() ? 0.0 : log.back(); }

    /// CSV: node coordinates, u, policy index, boundary flag.
    void write_csv(std::ostream& os) const {
        for (std::size_t a = 0; a < dim(); ++a) os << 'x' << a << ',';
        os << "u,policy,boundary\n";
        os.precision(17);
        for (std::size_t i = 0; i < size(); ++i) {
            for (double c : node(i)) os << c << ',';
            os << u[i] << ',' << policy[i] << ',' << (boundary[i] ? 1 : 0) << '\n';
        }
    }

    nlohmann::json summary() const {
        nlohmann::json grid = nlohmann::json::array();
        for (const auto& ax : axes) grid.push_back({{"lower", ax.front()}, {"upper", ax.back()}, {"nodes", ax.size()}});
        return {{"sup_residual", sup_residual()},
                {"sweeps", sweeps},
                {"semilinear_iterations", semilinear_iterations},
                {"grid", grid},
                {"tolerance", config.tolerance},
                {"upwind", config.upwind}};
    }
};

namespace detail {

struct Stencil {
    double center = 0.0;
    std::vector<std::pair<std::size_t, double>> neighbors;
};

/// Finite-difference machinery shared by the solver and the residual query.
class HjbGrid {
public:
    HjbGrid(const ControlProblem& p, const ValueField& field) : p_(p), f_(field) {
        const std::size_t d = p.d;
        strides_.assign(d, 1);
        for (std::size_t a = d - 1; a-- > 0;) strides_[a] = strides_[a + 1] * field.axes[a + 1].size();
    }

    /// Monotone stencil of L_h(x_i, v). Throws NumericalError when the
    /// cross-derivative term breaks diagonal dominance.
    Stencil stencil(std::size_t i, std::span<const double> v) const {
        const std::size_t d = p_.d, m = p_.m;
        const auto x = f_.node(i);
        std::vector<double> b(d), s(d * m);
        p_.drift(x, v, b);
        p_.diffusion(x, v, s);
        auto a = [&](std::size_t r, std::size_t c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k) acc += s[r * m + k] * s[c * m + k];
            return acc;
        };
        Stencil st;
        std::vector<double> plus(d), minus(d);
        for (std::size_t k = 0; k < d; ++k) {
            const double h = f_.spacing(k);
            const double diff = 0.5 * a(k, k) / (h * h);
            double cross = 0.0;
            for (std::size_t l = 0; l < d; ++l)
                if (l != k) cross += 0.5 * std::abs(a(k, l)) / (h * f_.spacing(l));
            const double base = diff - cross;
            const bool central = !f_.config.upwind && base - 0.5 * std::abs(b[k]) / h >= 0.0;
            if (central) {
                plus[k] = base + 0.5 * b[k] / h;
                minus[k] = base - 0.5 * b[k] / h;
            } else {
                plus[k] = base + std::max(b[k], 0.0) / h;
                minus[k] = base + std::max(-b[k], 0.0) / h;
            }
            if (plus[k] < -1e-14 || minus[k] < -1e-14)
                throw NumericalError("non-monotone stencil at node " + std::to_string(i) +
                                     ": cross-derivative term dominates; refine the grid");
            st.center -= plus[k] + minus[k];
            st.neighbors.push_back({i + strides_[k], plus[k]});
            st.neighbors.push_back({i - strides_[k], minus[k]});
        }
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t l = k + 1; l < d; ++l) {
                const double c = a(k, l);
                if (c == 0.0) continue;
                const double w = 0.5 * std::abs(c) / (f_.spacing(k) * f_.spacing(l));
                st.center -= 2.0 * w;
                if (c > 0.0) {
                    st.neighbors.push_back({i + strides_[k] + strides_[l], w});
                    st.neighbors.push_back({i - strides_[k] - strides_[l], w});
                } else {
                    st.neighbors.push_back({i + strides_[k] - strides_[l], w});
                    st.neighbors.push_back({i - strides_[k] + strides_[l], w});
                }
            }
        return st;
    }

    /// Central-difference gradient times sigma(x_i, v).
    std::vector<double> z(std::span<const double> u, std::size_t i, std::span<const double> v) const {
        const std::size_t d = p_.d, m = p_.m;
        const auto x = f_.node(i);
        std::vector<double> s(d * m), zz(m, 0.0);
        p_.diffusion(x, v, s);
        for (std::size_t k = 0; k < d; ++k) {
            const double g = (u[i + strides_[k]] - u[i - strides_[k]]) / (2.0 * f_.spacing(k));
            for (std::size_t j = 0; j < m; ++j) zz[j] += g * s[k * m + j];
        }
        return zz;
    }

    double hamiltonian(std::span<const double> u, std::size_t i, std::size_t vi) const {
        const auto v = p_.controls[vi];
        const auto st = stencil(i, v);
        double lu = st.center * u[i];
        for (const auto& [j, w] : st.neighbors) lu += w * u[j];
        const auto zz = z(u, i, v);
        return lu + p_.driver(f_.node(i), u[i], zz, v);
    }

private:
    const ControlProblem& p_;
    const ValueField& f_;
    std::vector<std::size_t> strides_;
};

inline double sup_hjb_residual(const detail::HjbGrid& grid, const ValueField& field, std::size_t n_controls) {
    double r = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (field.boundary[i]) continue;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t v = 0; v < n_controls; ++v) best = std::min(best, grid.hamiltonian(field.u, i, v));
        r = std::max(r, std::abs(best));
    }
    return r;
}

}  // namespace detail

/// Policy iteration for inf_v { L(x, v) u + f(x, u, grad u sigma, v) } = 0
/// in D with u = g outside the open domain. Each policy evaluation solves
/// the semilinear system by damped Newton in u with the gradient argument
/// lagged.
inline ValueField solve_hjb(const ControlProblem& problem, const GridConfig& config) {
    problem.validate();
    const std::size_t d = problem.d;
    if (d > 2) throw PreconditionError("the finite-difference solver supports d = 1 or 2");
    config.validate(d);

    ValueField field;
    field.config = config;
    const auto& dom = problem.domain;
    for (std::size_t a = 0; a < d; ++a) {
        const std::size_t n = config.nodes_on(a);
        std::vector<double> ax(n);
        for (std::size_t k = 0; k < n; ++k)
            ax[k] = dom.lower(a) + (dom.upper(a) - dom.lower(a)) * static_cast<double>(k) / static_cast<double>(n - 1);
        ax.back() = dom.upper(a);
        field.axes.push_back(std::move(ax));
    }
    std::size_t total = 1;
    for (const auto& ax : field.axes) total *= ax.size();
    field.u.assign(total, 0.0);
    field.policy.assign(total, 0);
    field.boundary.assign(total, false);

    // Dirichlet data: g at nodes outside the open domain, evaluated at the
    // closest boundary point for nodes strictly outside.
    std::vector<std::size_t> unknown_of(total, std::numeric_limits<std::size_t>::max());
    std::vector<std::size_t> interior;
    for (std::size_t i = 0; i < total; ++i) {
        const auto x = field.node(i);
        const auto idx = field.multi_index(i);
        bool edge = false;
        for (std::size_t a = 0; a < d; ++a) edge = edge || idx[a] == 0 || idx[a] + 1 == field.axes[a].size();
        if (edge || !dom.interior(x)) {
            field.boundary[i] = true;
            field.u[i] = problem.terminal(dom.contains(x) ? x : dom.closest_boundary_point(x));
        } else {
            unknown_of[i] = interior.size();
            interior.push_back(i);
        }
    }

    const detail::HjbGrid grid(problem, field);
    const std::size_t n_int = interior.size();
    const std::size_t nv = problem.controls.size();
    const bool y_dep = problem.f.uses_value();
    const bool z_dep = problem.f.uses_gradient();

    auto evaluate_policy = [&]() {
        std::vector<detail::Stencil> stencils(n_int);
        for (std::size_t r = 0; r < n_int; ++r)
            stencils[r] = grid.stencil(interior[r], problem.controls[field.policy[interior[r]]]);
        for (std::size_t it = 0; it < config.max_semilinear_iterations; ++it) {
            ++field.semilinear_iterations;
            std::vector<Eigen::Triplet<double>> trip;
            Eigen::VectorXd rhs(static_cast<Eigen::Index>(n_int));
            for (std::size_t r = 0; r < n_int; ++r) {
                const std::size_t i = interior[r];
                const auto x = field.node(i);
                const auto v = problem.controls[field.policy[i]];
                const auto zz = grid.z(field.u, i, v);
                const double fy = problem.driver(x, field.u[i], zz, v);
                double c = 0.0;
                if (y_dep) {
                    const double eps = 1e-6 * std::max(1.0, std::abs(field.u[i]));
                    c = std::min(0.0, (problem.driver(x, field.u[i] + eps, zz, v) - fy) / eps);
                }
                double b = -(fy - c * field.u[i]);
                trip.emplace_back(r, r, stencils[r].center + c);
                for (const auto& [j, w] : stencils[r].neighbors) {
                    if (field.boundary[j])
                        b -= w * field.u[j];
                    else
                        trip.emplace_back(r, unknown_of[j], w);
                }
                rhs(static_cast<Eigen::Index>(r)) = b;
            }
            Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n_int), static_cast<Eigen::Index>(n_int));
            A.setFromTriplets(trip.begin(), trip.end());
            Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
            lu.compute(A);
            if (lu.info() != Eigen::Success) throw NumericalError("singular finite-difference system");
            const Eigen::VectorXd sol = lu.solve(rhs);
            const bool linear = !y_dep && !z_dep;
            const double damp = (linear || it == 0) ? 1.0 : config.damping;
            double change = 0.0;
            for (std::size_t r = 0; r < n_int; ++r) {
                const std::size_t i = interior[r];
                const double next = field.u[i] + damp * (sol(static_cast<Eigen::Index>(r)) - field.u[i]);
                change = std::max(change, std::abs(next - field.u[i]));
                field.u[i] = next;
            }
            if (!std::isfinite(change)) throw NumericalError("non-finite value in the semilinear iteration");
            if (linear) return;
            double res = 0.0;
            for (std::size_t r = 0; r < n_int; ++r)
                res = std::max(res, std::abs(grid.hamiltonian(field.u, interior[r], field.policy[interior[r]])));
            if (res <= config.tolerance || change <= 1e-3 * config.tolerance) return;
        }
        throw NumericalError("semilinear iteration cap exceeded (" + std::to_string(config.max_semilinear_iterations) +
                             ")");
    };

    for (std::size_t sweep = 0; sweep < config.max_policy_iterations; ++sweep) {
        ++field.sweeps;
        evaluate_policy();
        field.log.push_back(detail::sup_hjb_residual(grid, field, nv));
        bool changed = false;
        for (std::size_t i : interior) {
            std::size_t best = 0;
            double hbest = grid.hamiltonian(field.u, i, 0);
            for (std::size_t v = 1; v < nv; ++v) {
                const double h = grid.hamiltonian(field.u, i, v);
                if (h < hbest) {
                    hbest = h;
                    best = v;
                }
            }
            if (best != field.policy[i]) {
                const double hcur = grid.hamiltonian(field.u, i, field.policy[i]);
                // Ignore rounding-level improvements so the iteration cannot cycle.
                if (hcur - hbest > 1e-12 * (1.0 + std::abs(hbest)) || best < field.policy[i]) {
                    field.policy[i] = best;
                    changed = true;
                }
            }
        }
        if (!changed && field.log.back() <= config.tolerance) break;
        if (!changed && sweep + 1 == config.max_policy_iterations)
            throw NumericalError("policy iteration stalled with residual " + std::to_string(field.log.back()));
        if (sweep + 1 == config.max_policy_iterations)
            throw NumericalError("policy iteration cap exceeded (" + std::to_string(config.max_policy_iterations) + ")");
    }

    // Boundary nodes inherit the control of their nearest interior node.
    for (std::size_t i = 0; i < total; ++i) {
        if (!field.boundary[i] || interior.empty()) continue;
        const auto x = field.node(i);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j : interior) {
            const auto y = field.node(j);
            double d2 = 0.0;
            for (std::size_t a = 0; a < d; ++a) d2 += (x[a] - y[a]) * (x[a] - y[a]);
            if (d2 < best) {
                best = d2;
                field.policy[i] = field.policy[j];
            }
        }
    }
    return field;
}

/// inf over the control set of the discrete Hamiltonian at an interior node.
inline double hjb_residual(const ValueField& field, const ControlProblem& problem, std::size_t node) {
    if (node >= field.size()) throw PreconditionError("node index out of range");
    if (field.boundary[node]) throw PreconditionError("hjb_residual: node " + std::to_string(node) + " is a boundary node");
    const detail::HjbGrid grid(problem, field);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < problem.controls.size(); ++v) best = std::min(best, grid.hamiltonian(field.u, node, v));
    return best;
}

/// Discrete Hamiltonian at an interior node for one control.
inline double hjb_hamiltonian(const ValueField& field, const ControlProblem& problem, std::size_t node,
                              std::size_t control) {
    if (field.boundary[node]) throw PreconditionError("hjb_hamiltonian: boundary node");
    return detail::HjbGrid(problem, field).hamiltonian(field.u, node, control);
}

/// Centre weight of the stencil of L_h at a node for one control.
inline double hjb_center_weight(const ValueField& field, const ControlProblem& problem, std::size_t node,
                                std::size_t control) {
    return detail::HjbGrid(problem, field).stencil(node, problem.controls[control]).center;
}

inline Policy extract_policy(const ValueField& field) { return Policy::feedback({field.axes, field.policy}); }

/// Multilinear interpolation of u at x (clamped to the grid box).
inline double interpolate(const ValueField& field, std::span<const double> x) {
    const std::size_t d = field.dim();
    std::vector<std::size_t> lo(d);
    std::vector<double> w(d);
    for (std::size_t a = 0; a < d; ++a) {
        const auto& ax = field.axes[a];
        const double h = field.spacing(a);
        const double t = std::clamp((x[a] - ax.front()) / h, 0.0, static_cast<double>(ax.size() - 1));
        std::size_t k = std::min(static_cast<std::size_t>(t), ax.size() - 2);
        lo[a] = k;
        w[a] = t - static_cast<double>(k);
        if (x[a] <= ax.front()) w[a] = 0.0;
        if (x[a] >= ax.back()) w[a] = 1.0;
    }
    double acc = 0.0;
    std::vector<std::size_t> idx(d);
    for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
        double weight = 1.0;
        for (std::size_t a = 0; a < d; ++a) {
            const bool up = (corner >> a) & 1u;
            idx[a] = lo[a] + (up ? 1 : 0);
            weight *= up ? w[a] : 1.0 - w[a];
        }
        if (weight != 0.0) acc += weight * field.u[field.flat_index(idx)];
    }
    return acc;
}

}  // namespace exitctrl
