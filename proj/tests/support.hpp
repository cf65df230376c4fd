#pragma once

#include "exitctrl/exitctrl.hpp"

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace fixtures {

using namespace exitctrl;

inline ControlProblem catalog(const std::string& name, nlohmann::json params = nlohmann::json::object()) {
    return make_catalog_problem(name, params);
}

/// 1-d problem on (-1, 1) with constant drift/diffusion and V = {0}.
inline ControlProblem scalar(Expr b, Expr sigma, Expr f, Expr g) {
    ControlProblem p(Domain::interval(0.0, 1.0));
    p.b = {std::move(b)};
    p.sigma = {{std::move(sigma)}};
    p.f = std::move(f);
    p.g = std::move(g);
    p.controls = {1, {{0.0}}};
    return p;
}

inline SimConfig sim(std::size_t paths, double dt = 1e-3, double t_max = 5.0, std::uint64_t seed = 1) {
    SimConfig c;
    c.n_paths = paths;
    c.dt = dt;
    c.t_max = t_max;
    c.master_seed = seed;
    return c;
}

inline double semilinear_exact(double alpha, double x) {
    return (1.0 - std::cosh(std::sqrt(alpha) * x) / std::cosh(std::sqrt(alpha))) / alpha;
}

/// Shooting solve of u'' - |u'| + 1 = 0 on (-1, 1), u(+-1) = 0. By symmetry
/// u'(0) = 0; integrate from 0 to 1 with RK4 and bisect on u(0).
inline double controlled_shooting(std::size_t steps = 20000) {
    auto endpoint = [&](double u0) {
        double u = u0, p = 0.0;
        const double h = 1.0 / static_cast<double>(steps);
        auto rhs = [](double pp) { return std::abs(pp) - 1.0; };
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

}  // namespace fixtures
