#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "core/summation.hpp"

namespace gmt {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Point2 operator-(Point2 a) { return {-a.x, -a.y}; }
    friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Point2 a, Point2 b) { return a.x == b.x && a.y == b.y; }
    friend bool operator<(Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); }
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }
inline bool finite(Point2 a) { return std::isfinite(a.x) && std::isfinite(a.y); }

/// Open disc B(center, radius).
struct Ball {
    Point2 center;
    double radius = 1.0;

    bool contains(Point2 p) const { return dist(p, center) < radius; }
    Ball scaled(double f) const { return {center, f * radius}; }
};

struct Atom {
    Point2 p;
    double w = 0.0;
};

/// Finite atomic measure with a resolution scale. Immutable once built.
class DiscreteMeasure {
public:
    DiscreteMeasure() = default;

    /// Validating constructor: positive finite weights, distinct finite
    /// positions, scale in (0, min pairwise distance].
    DiscreteMeasure(std::vector<Atom> atoms, double scale) : atoms_(std::move(atoms)), scale_(scale) {
        if (!(scale_ > 0.0) || !std::isfinite(scale_)) throw Error("discretization scale must be positive and finite");
        for (const auto& a : atoms_) {
            if (!finite(a.p)) throw Error("atom position not finite");
            if (!(a.w > 0.0) || !std::isfinite(a.w)) throw Error("atom weight must be positive and finite");
        }
        const double md = min_pairwise_distance();
        if (md == 0.0) throw Error("atom positions must be pairwise distinct");
        if (scale_ > md * (1.0 + 1e-12)) throw Error("discretization scale exceeds minimal pairwise distance");
    }

    /// Unchecked construction for sub-measures of an already validated measure.
    static DiscreteMeasure trusted(std::vector<Atom> atoms, double scale) {
        DiscreteMeasure m;
        m.atoms_ = std::move(atoms);
        m.scale_ = scale;
        return m;
    }

    const std::vector<Atom>& atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.size(); }
    bool empty() const { return atoms_.empty(); }
    double scale() const { return scale_; }
    const Atom& operator[](std::size_t i) const { return atoms_[i]; }

    double min_pairwise_distance() const {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < atoms_.size(); ++i)
            for (std::size_t j = i + 1; j < atoms_.size(); ++j) best = std::min(best, dist(atoms_[i].p, atoms_[j].p));
        return best;
    }

private:
    std::vector<Atom> atoms_;
    double scale_ = 1.0;
};

inline double total_mass(const DiscreteMeasure& mu) {
    KahanSum s;
    for (const auto& a : mu.atoms()) s.add(a.w);
    return s.value();
}

inline double mass_in(const DiscreteMeasure& mu, const Ball& b) {
    KahanSum s;
    for (const auto& a : mu.atoms())
        if (b.contains(a.p)) s.add(a.w);
    return s.value();
}

inline DiscreteMeasure restrict(const DiscreteMeasure& mu, const Ball& b) {
    std::vector<Atom> kept;
    for (const auto& a : mu.atoms())
        if (b.contains(a.p)) kept.push_back(a);
    return DiscreteMeasure::trusted(std::move(kept), mu.scale());
}

inline double diameter(const std::vector<Point2>& pts) {
    double d = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) d = std::max(d, dist(pts[i], pts[j]));
    return d;
}

inline std::vector<Point2> positions(const DiscreteMeasure& mu) {
    std::vector<Point2> out;
    out.reserve(mu.size());
    for (const auto& a : mu.atoms()) out.push_back(a.p);
    return out;
}

inline double diameter(const DiscreteMeasure& mu) { return diameter(positions(mu)); }

struct DensityResult {
    double value = 0.0;
    bool below_resolution = false;
};

/// Θ_μ(B) = μ(B)/r.
inline DensityResult density(const DiscreteMeasure& mu, const Ball& b) {
    return {mass_in(mu, b) / b.radius, b.radius < mu.scale()};
}

namespace detail {

/// For a fixed center atom: distances to all atoms sorted, with weights.
inline std::vector<std::pair<double, double>> sorted_profile(const DiscreteMeasure& mu, std::size_t i) {
    std::vector<std::pair<double, double>> prof;
    prof.reserve(mu.size());
    for (const auto& a : mu.atoms()) prof.emplace_back(dist(mu[i].p, a.p), a.w);
    std::sort(prof.begin(), prof.end());
    return prof;
}

/// Visits (radius, open-ball mass) for each radius in the candidate list,
/// which must be sorted ascending.
template <class Visit>
void sweep_open_masses(const std::vector<std::pair<double, double>>& prof, const std::vector<double>& radii, Visit&& visit) {
    std::size_t k = 0;
    KahanSum m;
    for (double r : radii) {
        while (k < prof.size() && prof[k].first < r) m.add(prof[k++].second);
        visit(r, m.value());
    }
}

}  // namespace detail

/// C* = max μ(B(x,r))/r over atom centers x and candidate radii
/// {pairwise distances ≥ scale} ∪ {scale, diam}.
inline double linear_growth_constant(const DiscreteMeasure& mu) {
    if (mu.empty()) throw Error("linear growth constant of an empty measure");
    const double s = mu.scale();
    const double diam = diameter(mu);
    double best = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto prof = detail::sorted_profile(mu, i);
        std::vector<double> radii{s};
        for (const auto& [d, w] : prof)
            if (d >= s) radii.push_back(d);
        if (diam >= s) radii.push_back(diam);
        std::sort(radii.begin(), radii.end());
        radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
        detail::sweep_open_masses(prof, radii, [&](double r, double m) { best = std::max(best, m / r); });
    }
    return best;
}

struct AdBounds {
    double lower = 0.0;  ///< max r/μ(B): the C in C⁻¹r ≤ μ(B)
    double upper = 0.0;  ///< max μ(B)/r: the C in μ(B) ≤ Cr
    double tight() const { return std::max(lower, upper); }
};

/// Two-sided linear bounds over atom-centered balls with candidate radii
/// (pairwise distances and the range endpoints) inside [lo, hi].
inline AdBounds ad_regularity_bounds(const DiscreteMeasure& mu, double lo, double hi) {
    if (mu.empty() || !(lo > 0.0) || hi < lo) throw Error("no candidate balls in scale range");
    AdBounds out;
    bool any = false;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto prof = detail::sorted_profile(mu, i);
        std::vector<double> radii{lo, hi};
        for (const auto& [d, w] : prof)
            if (d >= lo && d <= hi) radii.push_back(d);
        std::sort(radii.begin(), radii.end());
        radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
        detail::sweep_open_masses(prof, radii, [&](double r, double m) {
            any = true;
            out.upper = std::max(out.upper, m / r);
            out.lower = std::max(out.lower, m > 0.0 ? r / m : std::numeric_limits<double>::infinity());
        });
    }
    if (!any) throw Error("no candidate balls in scale range");
    return out;
}

/// Plane map with a declared bi-Lipschitz constant.
struct PlaneMap {
    std::function<Point2(Point2)> f;
    double lipschitz = 1.0;
};

inline DiscreteMeasure pushforward(const DiscreteMeasure& mu, const PlaneMap& map) {
    if (!(map.lipschitz >= 1.0)) throw Error("bi-Lipschitz constant must be at least 1");
    std::vector<Atom> out;
    out.reserve(mu.size());
    for (const auto& a : mu.atoms()) out.push_back({map.f(a.p), a.w});
    std::vector<Point2> sorted;
    for (const auto& a : out) sorted.push_back(a.p);
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw Error("pushforward collision of atom positions");
    return DiscreteMeasure(std::move(out), mu.scale() / map.lipschitz);
}

}  // namespace gmt
