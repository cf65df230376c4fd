#pragma once

#include "exitctrl/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace exitctrl {

enum class DomainKind { Interval, Ball, Box };

inline std::string to_string(DomainKind k) {
    switch (k) {
        case DomainKind::Interval: return "interval";
        case DomainKind::Ball: return "ball";
        case DomainKind::Box: return "box";
    }
    return "?";
}

/// Bounded convex domain with exact membership, distance and
/// closest-boundary-point queries.
///
/// Interval and Ball store a single radius; Box stores per-axis
/// half-widths. Each kind satisfies the uniform exterior sphere condition:
/// the touching sphere at a boundary point y is centred at y + rho * n(y).
class Domain {
public:
    static Domain interval(double center, double radius) {
        return Domain(DomainKind::Interval, {center}, {radius});
    }
    static Domain ball(std::vector<double> center, double radius) {
        const std::size_t d = center.size();
        return Domain(DomainKind::Ball, std::move(center), std::vector<double>(d, radius));
    }
    static Domain box(std::vector<double> center, std::vector<double> half_widths) {
        return Domain(DomainKind::Box, std::move(center), std::move(half_widths));
    }

    DomainKind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return center_.size(); }
    const std::vector<double>& center() const noexcept { return center_; }
    const std::vector<double>& half_widths() const noexcept { return half_; }
    double radius() const noexcept { return half_[0]; }

    /// Exterior-sphere radius. Any positive value works for boxes; the
    /// smallest half-width is used.
    double rho() const noexcept { return *std::min_element(half_.begin(), half_.end()); }

    double lower(std::size_t i) const { return center_[i] - half_[i]; }
    double upper(std::size_t i) const { return center_[i] + half_[i]; }

    /// Signed distance to the boundary: positive inside, zero on the
    /// boundary, negative outside.
    double signed_distance(std::span<const double> x) const {
        if (kind_ == DomainKind::Box) {
            double inside = std::numeric_limits<double>::infinity();
            double out2 = 0.0;
            bool outside = false;
            for (std::size_t i = 0; i < dim(); ++i) {
                const double g = half_[i] - std::abs(x[i] - center_[i]);
                inside = std::min(inside, g);
                if (g < 0.0) {
                    outside = true;
                    out2 += g * g;
                }
            }
            return outside ? -std::sqrt(out2) : inside;
        }
        return half_[0] - distance_to_center(x);
    }

    /// Membership in the closed domain.
    bool contains(std::span<const double> x) const {
        if (kind_ == DomainKind::Box) {
            for (std::size_t i = 0; i < dim(); ++i)
                if (std::abs(x[i] - center_[i]) > half_[i]) return false;
            return true;
        }
        return squared_distance_to_center(x) <= half_[0] * half_[0];
    }

    /// Membership in the open domain.
    bool interior(std::span<const double> x) const {
        if (kind_ == DomainKind::Box) {
            for (std::size_t i = 0; i < dim(); ++i)
                if (std::abs(x[i] - center_[i]) >= half_[i]) return false;
            return true;
        }
        return squared_distance_to_center(x) < half_[0] * half_[0];
    }

    bool on_boundary(std::span<const double> x) const { return contains(x) && !interior(x); }

    /// Closest point of the boundary to x (x inside or outside).
    std::vector<double> closest_boundary_point(std::span<const double> x) const {
        std::vector<double> y(x.begin(), x.end());
        if (kind_ == DomainKind::Box) {
            if (!contains(x)) {
                for (std::size_t i = 0; i < dim(); ++i) y[i] = std::clamp(x[i], lower(i), upper(i));
                return y;
            }
            std::size_t best = 0;
            double gap = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < dim(); ++i) {
                const double g = half_[i] - std::abs(x[i] - center_[i]);
                if (g < gap) {
                    gap = g;
                    best = i;
                }
            }
            y[best] = x[best] >= center_[best] ? upper(best) : lower(best);
            return y;
        }
        const double r = distance_to_center(x);
        if (r == 0.0) {
            y[0] = center_[0] + half_[0];
            return y;
        }
        for (std::size_t i = 0; i < dim(); ++i) y[i] = center_[i] + half_[0] * (x[i] - center_[i]) / r;
        if (kind_ == DomainKind::Interval) y[0] = x[0] >= center_[0] ? upper(0) : lower(0);
        // Rounding can leave the projection a few ulps outside the sphere.
        for (int it = 0; it < 40 && !contains(y); ++it) {
            const double shrink = 1.0 - std::ldexp(1.0, it - 52);
            for (std::size_t i = 0; i < dim(); ++i) y[i] = center_[i] + (y[i] - center_[i]) * shrink;
        }
        return y;
    }

    /// Unit outward normal at a boundary point (for box edges and corners,
    /// the normalised sum of the active face normals).
    std::vector<double> outward_normal(std::span<const double> y) const {
        std::vector<double> n(dim(), 0.0);
        if (kind_ == DomainKind::Box) {
            bool any = false;
            for (std::size_t i = 0; i < dim(); ++i) {
                const double off = y[i] - center_[i];
                if (std::abs(std::abs(off) - half_[i]) <= 1e-12 * std::max(1.0, half_[i])) {
                    n[i] = off >= 0.0 ? 1.0 : -1.0;
                    any = true;
                }
            }
            if (!any) {
                const auto p = closest_boundary_point(y);
                return outward_normal(p);
            }
        } else {
            const double r = distance_to_center(y);
            if (r == 0.0) {
                n[0] = 1.0;
                return n;
            }
            for (std::size_t i = 0; i < dim(); ++i) n[i] = (y[i] - center_[i]) / r;
            return n;
        }
        double s = 0.0;
        for (double c : n) s += c * c;
        s = std::sqrt(s);
        for (double& c : n) c /= s;
        return n;
    }

    /// Centre of the exterior touching sphere of radius rho() at boundary point y.
    std::vector<double> exterior_center(std::span<const double> y) const {
        auto n = outward_normal(y);
        const double r = rho();
        for (std::size_t i = 0; i < dim(); ++i) n[i] = y[i] + r * n[i];
        return n;
    }

    /// Largest distance between two points of the closed domain.
    double diameter() const {
        if (kind_ == DomainKind::Box) {
            double s = 0.0;
            for (double h : half_) s += 4.0 * h * h;
            return std::sqrt(s);
        }
        return 2.0 * half_[0];
    }

    friend bool operator==(const Domain& a, const Domain& b) {
        return a.kind_ == b.kind_ && a.center_ == b.center_ && a.half_ == b.half_;
    }

private:
    Domain(DomainKind kind, std::vector<double> center, std::vector<double> half)
        : kind_(kind), center_(std::move(center)), half_(std::move(half)) {
        if (center_.empty()) throw PreconditionError("domain dimension must be positive");
        if (half_.size() != center_.size()) throw PreconditionError("domain half-width count does not match dimension");
        if (kind_ == DomainKind::Interval && center_.size() != 1)
            throw PreconditionError("interval domain must be one-dimensional");
        for (double h : half_)
            if (!(h > 0.0) || !std::isfinite(h)) throw PreconditionError("domain radius/half-widths must be positive");
        for (double c : center_)
            if (!std::isfinite(c)) throw PreconditionError("domain center must be finite");
    }

    double squared_distance_to_center(std::span<const double> x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < dim(); ++i) s += (x[i] - center_[i]) * (x[i] - center_[i]);
        return s;
    }
    double distance_to_center(std::span<const double> x) const {
        if (dim() == 1) return std::abs(x[0] - center_[0]);
        return std::sqrt(squared_distance_to_center(x));
    }

    DomainKind kind_;
    std::vector<double> center_;
    std::vector<double> half_;
};

}  // namespace exitctrl
