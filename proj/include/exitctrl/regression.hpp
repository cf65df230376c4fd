#pragma once

#include "exitctrl/domain.hpp"
#include "exitctrl/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace exitctrl {

enum class BasisKind { Polynomial, PiecewiseConstant };

inline std::string to_string(BasisKind k) { return k == BasisKind::Polynomial ? "polynomial" : "piecewise"; }

struct RegressionConfig {
    BasisKind basis = BasisKind::Polynomial;
    int degree = 2;       // polynomial total degree
    int resolution = 4;   // cells per axis for the piecewise basis
    double ridge = 0.0;
    int picard = 3;
    bool store_paths = false;
    /// On a singular normal system, fall back to the sample mean (the
    /// constant basis) instead of raising NumericalError.
    bool fallback_to_mean = true;

    void validate() const {
        if (degree < 0) throw PreconditionError("regression degree must be >= 0");
        if (resolution < 1) throw PreconditionError("partition resolution must be >= 1");
        if (!(ridge >= 0.0)) throw PreconditionError("ridge weight must be >= 0");
        if (picard < 1) throw PreconditionError("picard_iterations must be >= 1");
    }

    /// Polynomials of total degree 2 for d <= 2, a partition otherwise.
    static RegressionConfig defaults_for(std::size_t d) {
        RegressionConfig c;
        if (d > 2) c.basis = BasisKind::PiecewiseConstant;
        return c;
    }
};

/// Feature map on coordinates normalised to the domain's bounding box.
class Basis {
public:
    Basis(const Domain& domain, const RegressionConfig& cfg) : kind_(cfg.basis), resolution_(cfg.resolution) {
        const std::size_t d = domain.dim();
        for (std::size_t i = 0; i < d; ++i) {
            center_.push_back(domain.center()[i]);
            scale_.push_back(domain.half_widths()[i]);
        }
        if (kind_ == BasisKind::Polynomial) {
            std::vector<int> e(d, 0);
            enumerate(e, 0, cfg.degree);
            std::sort(exponents_.begin(), exponents_.end(), [](const auto& a, const auto& b) {
                int sa = 0, sb = 0;
                for (int v : a) sa += v;
                for (int v : b) sb += v;
                if (sa != sb) return sa < sb;
                return a > b;
            });
        }
    }

    BasisKind kind() const noexcept { return kind_; }

    /// Number of features (polynomial) or cells (partition).
    std::size_t size() const noexcept {
        if (kind_ == BasisKind::Polynomial) return exponents_.size();
        std::size_t n = 1;
        for (std::size_t i = 0; i < center_.size(); ++i) n *= static_cast<std::size_t>(resolution_);
        return n;
    }

    /// Polynomial features; the first one is the constant 1.
    void features(std::span<const double> x, std::span<double> out) const {
        for (std::size_t k = 0; k < exponents_.size(); ++k) {
            double v = 1.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double u = (x[i] - center_[i]) / scale_[i];
                for (int p = 0; p < exponents_[k][i]; ++p) v *= u;
            }
            out[k] = v;
        }
    }

    std::size_t cell(std::span<const double> x) const {
        std::size_t flat = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double u = 0.5 * ((x[i] - center_[i]) / scale_[i] + 1.0);
            const auto c = std::clamp(static_cast<long>(std::floor(u * resolution_)), 0L,
                                      static_cast<long>(resolution_) - 1);
            flat = flat * static_cast<std::size_t>(resolution_) + static_cast<std::size_t>(c);
        }
        return flat;
    }

private:
    void enumerate(std::vector<int>& e, std::size_t axis, int remaining) {
        if (axis == e.size()) {
            exponents_.push_back(e);
            return;
        }
        for (int p = 0; p <= remaining; ++p) {
            e[axis] = p;
            enumerate(e, axis + 1, remaining - p);
        }
        e[axis] = 0;
    }

    BasisKind kind_;
    int resolution_;
    std::vector<double> center_, scale_;
    std::vector<std::vector<int>> exponents_;
};

/// Least-squares projection of several targets onto a basis, over the
/// samples handed to `fit`. With an intercept in the basis, fitted values
/// average to the target mean.
class Projector {
public:
    Projector(const Basis& basis, const RegressionConfig& cfg) : basis_(basis), cfg_(cfg) {}

    /// `states` is n x d, `targets` n x t (both row-major). On return
    /// `fitted` (n x t) holds the projections. Returns false when the
    /// normal system was singular and the constant basis was used.
    bool fit(std::span<const double> states, std::size_t d, std::span<const double> targets, std::size_t t,
             std::span<double> fitted, std::size_t step) const {
        const std::size_t n = states.size() / d;
        if (n == 0) return true;
        if (basis_.kind() == BasisKind::PiecewiseConstant) {
            fit_cells(states, d, targets, t, fitted);
            return true;
        }
        const std::size_t K = basis_.size();
        phi_.resize(n * K);
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(K));
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(t));
        for (std::size_t p = 0; p < n; ++p) {
            double* f = phi_.data() + p * K;
            basis_.features(states.subspan(p * d, d), std::span<double>(f, K));
            for (std::size_t a = 0; a < K; ++a) {
                for (std::size_t b = a; b < K; ++b) G(a, b) += f[a] * f[b];
                for (std::size_t j = 0; j < t; ++j) R(a, j) += f[a] * targets[p * t + j];
            }
        }
        for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = 0; b < a; ++b) G(a, b) = G(b, a);
        for (std::size_t a = 1; a < K; ++a) G(a, a) += cfg_.ridge * static_cast<double>(n);

        bool ok = n >= K;
        Eigen::MatrixXd coef;
        if (ok) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
            const auto D = ldlt.vectorD().cwiseAbs();
            ok = ldlt.info() == Eigen::Success && D.minCoeff() > 1e-10 * std::max(1.0, D.maxCoeff());
            if (ok) coef = ldlt.solve(R);
        }
        if (!ok) {
            if (!cfg_.fallback_to_mean)
                throw NumericalError("singular regression system at step " + std::to_string(step) +
                                     "; raise the ridge weight");
            fit_mean(n, targets, t, fitted);
            return false;
        }
        for (std::size_t p = 0; p < n; ++p) {
            const double* f = phi_.data() + p * K;
            for (std::size_t j = 0; j < t; ++j) {
                double s = 0.0;
                for (std::size_t a = 0; a < K; ++a) s += f[a] * coef(a, j);
                fitted[p * t + j] = s;
            }
        }
        return true;
    }

private:
    static void fit_mean(std::size_t n, std::span<const double> targets, std::size_t t, std::span<double> fitted) {
        for (std::size_t j = 0; j < t; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < n; ++p) s += targets[p * t + j];
            s /= static_cast<double>(n);
            for (std::size_t p = 0; p < n; ++p) fitted[p * t + j] = s;
        }
    }

    void fit_cells(std::span<const double> states, std::size_t d, std::span<const double> targets, std::size_t t,
                   std::span<double> fitted) const {
        const std::size_t n = states.size() / d;
        const std::size_t C = basis_.size();
        std::vector<double> sums(C * t, 0.0);
        std::vector<std::size_t> counts(C, 0), cells(n);
        for (std::size_t p = 0; p < n; ++p) {
            cells[p] = basis_.cell(states.subspan(p * d, d));
            ++counts[cells[p]];
            for (std::size_t j = 0; j < t; ++j) sums[cells[p] * t + j] += targets[p * t + j];
        }
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t j = 0; j < t; ++j)
                fitted[p * t + j] = sums[cells[p] * t + j] / static_cast<double>(counts[cells[p]]);
    }

    const Basis& basis_;
    const RegressionConfig& cfg_;
    mutable std::vector<double> phi_;
};

}  // namespace exitctrl
