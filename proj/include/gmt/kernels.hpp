#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "measure.hpp"

namespace gmt {

/// Selects k_t for finite t, or k_∞ as a distinct state.
class KernelParam {
public:
    static KernelParam finite(double t) {
        if (!std::isfinite(t)) throw Error("finite kernel parameter must be a finite real");
        return KernelParam(false, t);
    }
    static KernelParam infinity() { return KernelParam(true, 0.0); }

    bool is_infinity() const { return inf_; }
    double t() const {
        if (inf_) throw Error("k_infinity has no finite parameter");
        return t_;
    }
    std::string label() const { return inf_ ? std::string("inf") : std::to_string(t_); }

    /// Parses "inf"/"infinity" or a real number.
    static KernelParam parse(const std::string& s) {
        if (s == "inf" || s == "infinity") return infinity();
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw Error("bad kernel parameter: " + s);
        }
        if (pos != s.size()) throw Error("bad kernel parameter: " + s);
        return finite(v);
    }

private:
    KernelParam(bool inf, double t) : inf_(inf), t_(t) {}
    bool inf_ = false;
    double t_ = 0.0;
};

/// k(z) without the z ≠ 0 check.
inline double kernel_unchecked(const KernelParam& k, Point2 z) {
    const double r2 = z.x * z.x + z.y * z.y;
    const double q = z.x / r2;
    if (k.is_infinity()) return q;
    return q * (z.x * z.x / r2) + k.t() * q;
}

inline double kernel_eval(const KernelParam& k, Point2 z) {
    if (z.x == 0.0 && z.y == 0.0) throw Error("kernel evaluated at its singularity z = 0");
    return kernel_unchecked(k, z);
}

/// 1/z as a complex number.
inline Point2 cauchy_kernel(Point2 z) {
    const double r2 = z.x * z.x + z.y * z.y;
    if (r2 == 0.0) throw Error("Cauchy kernel evaluated at 0");
    return {z.x / r2, -z.y / r2};
}

/// Affine line: anchor plus unit direction.
struct Line {
    Point2 anchor;
    Point2 direction{1.0, 0.0};

    static Line through(Point2 a, Point2 b) {
        const Point2 d = b - a;
        const double n = norm(d);
        if (n == 0.0) throw Error("line through coincident points");
        return Line{a, (1.0 / n) * d}.canonical();
    }
    static Line with_angle(Point2 a, double angle) { return Line{a, {std::cos(angle), std::sin(angle)}}.canonical(); }

    /// Direction angle folded into [0, π); anchor = foot of the perpendicular from the origin.
    Line canonical() const {
        Point2 d = (1.0 / norm(direction)) * direction;
        if (d.y < 0.0 || (d.y == 0.0 && d.x < 0.0)) d = -d;
        const Point2 a = anchor - dot(anchor, d) * d;
        return {a, d};
    }
    double angle() const { return canonical_angle(direction); }
    Point2 normal() const { return {-direction.y, direction.x}; }
    double coordinate(Point2 p) const { return dot(p - anchor, direction); }
    double offset(Point2 p) const { return dot(p - anchor, normal()); }
    double distance(Point2 p) const { return std::abs(offset(p)); }
    Point2 at(double u) const { return anchor + u * direction; }

    static double canonical_angle(Point2 d) {
        double a = std::atan2(d.y, d.x);
        if (a < 0.0) a += std::numbers::pi;
        if (a >= std::numbers::pi) a -= std::numbers::pi;
        return a;
    }
};

/// Angles in [0, π) of the lines through 0 on which k_t vanishes.
inline std::vector<double> zero_lines(double t) {
    std::vector<double> out{std::numbers::pi / 2.0};
    if (t >= -1.0 && t < 0.0) {
        const double a = std::acos(std::sqrt(-t));
        for (double th : {a, std::numbers::pi - a}) {
            double f = std::fmod(th, std::numbers::pi);
            if (std::abs(f - std::numbers::pi) < 1e-15) f = 0.0;
            bool dup = false;
            for (double e : out) dup = dup || std::abs(e - f) < 1e-15;
            if (!dup) out.push_back(f);
        }
    }
    return out;
}

/// Smallest angle to the vertical axis, in [0, π/2].
inline double theta_vertical(const Line& l) { return std::atan2(std::abs(l.direction.x), std::abs(l.direction.y)); }

/// Smallest angle between two lines, in [0, π/2].
inline double angle_between(const Line& a, const Line& b) {
    return std::atan2(std::abs(cross(a.direction, b.direction)), std::abs(dot(a.direction, b.direction)));
}

inline double vertical_angle_sum(Point2 z1, Point2 z2, Point2 z3) {
    return theta_vertical(Line::through(z1, z2)) + theta_vertical(Line::through(z1, z3)) + theta_vertical(Line::through(z2, z3));
}

/// Membership in V_Far(θ).
inline bool v_far(Point2 z1, Point2 z2, Point2 z3, double theta) {
    if (z1 == z2 || z1 == z3 || z2 == z3) throw Error("v_far needs pairwise distinct points");
    return vertical_angle_sum(z1, z2, z3) >= theta;
}

}  // namespace gmt
