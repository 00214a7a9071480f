#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "measure.hpp"

namespace gmt {

/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Generator kind plus named parameters, e.g. "graph:n=200,slope=0.2,profile=sine".
struct Recipe {
    std::string kind;
    std::map<std::string, std::string> params;
    std::uint64_t seed = 0;

    double num(const std::string& key, double fallback) const {
        auto it = params.find(key);
        if (it == params.end()) return fallback;
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(it->second, &pos);
        } catch (const std::exception&) {
            throw Error("recipe parameter '" + key + "' is not a number: " + it->second);
        }
        if (pos != it->second.size()) throw Error("recipe parameter '" + key + "' is not a number: " + it->second);
        return v;
    }
    std::string str(const std::string& key, const std::string& fallback) const {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
    long count(const std::string& key, long fallback) const {
        const double v = num(key, static_cast<double>(fallback));
        if (v != std::floor(v)) throw Error("recipe parameter '" + key + "' must be an integer");
        return static_cast<long>(v);
    }

    std::string to_string() const {
        std::ostringstream os;
        os << kind;
        char sep = ':';
        for (const auto& [k, v] : params) {
            os << sep << k << '=' << v;
            sep = ',';
        }
        return os.str();
    }

    static Recipe parse(const std::string& text, std::uint64_t seed = 0) {
        Recipe r;
        r.seed = seed;
        const auto colon = text.find(':');
        r.kind = text.substr(0, colon);
        if (r.kind.empty()) throw Error("empty recipe kind");
        if (colon == std::string::npos) return r;
        std::stringstream ss(text.substr(colon + 1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            const auto eq = item.find('=');
            if (eq == std::string::npos || eq == 0) throw Error("malformed recipe item: " + item);
            r.params[item.substr(0, eq)] = item.substr(eq + 1);
        }
        return r;
    }
};

namespace detail {

inline double half_min_distance(const std::vector<Atom>& atoms) {
    return 0.5 * DiscreteMeasure::trusted(atoms, 1.0).min_pairwise_distance();
}

inline std::vector<Atom> line_atoms(long n, double length, double angle, double mass) {
    if (n < 1) throw Error("line needs n >= 1");
    if (!(length > 0.0) || !(mass > 0.0)) throw Error("line needs positive length and mass");
    Point2 dir{std::cos(angle), std::sin(angle)};
    if (angle == std::numbers::pi / 2.0) dir = {0.0, 1.0};  // exact, so k_0 vanishes identically
    std::vector<Atom> out;
    for (long i = 0; i < n; ++i) {
        const double s = n == 1 ? 0.0 : length * static_cast<double>(i) / static_cast<double>(n - 1);
        out.push_back({s * dir, mass / static_cast<double>(n)});
    }
    return out;
}

inline double graph_profile(const std::string& profile, double slope, double x) {
    if (profile == "sine") return slope / (2.0 * std::numbers::pi) * std::sin(2.0 * std::numbers::pi * x);
    if (profile == "linear") return slope * x;
    if (profile == "tent") return slope * (0.5 - std::abs(x - 0.5));
    throw Error("unknown graph profile: " + profile);
}

inline std::vector<Atom> graph_atoms(long n, double slope, const std::string& profile) {
    if (n < 2) throw Error("graph needs n >= 2");
    std::vector<Point2> pts;
    for (long i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(n - 1);
        pts.push_back({x, graph_profile(profile, slope, x)});
    }
    std::vector<Atom> out;
    for (long i = 0; i < n; ++i) {
        double w = 0.0;
        if (i > 0) w += 0.5 * dist(pts[i], pts[i - 1]);
        if (i + 1 < n) w += 0.5 * dist(pts[i], pts[i + 1]);
        out.push_back({pts[i], w});
    }
    return out;
}

inline std::vector<Atom> cantor_atoms(long level) {
    if (level < 0 || level > 6) throw Error("cantor4 level must be in [0, 6]");
    struct Sq {
        double x, y, s;
    };
    std::vector<Sq> sq{{0.0, 0.0, 1.0}};
    for (long l = 0; l < level; ++l) {
        std::vector<Sq> next;
        for (const auto& q : sq) {
            const double t = q.s / 4.0;
            for (double dy : {0.0, q.s - t})
                for (double dx : {0.0, q.s - t}) next.push_back({q.x + dx, q.y + dy, t});
        }
        sq = std::move(next);
    }
    std::vector<Atom> out;
    const double w = std::pow(4.0, -static_cast<double>(level));
    for (const auto& q : sq) out.push_back({{q.x + q.s / 2.0, q.y + q.s / 2.0}, w});
    return out;
}

}  // namespace detail

/// Builds a measure from a recipe. Kinds: segment, line, vertical, graph,
/// circle, cantor4. Any kind accepts noise=<σ> (uniform jitter, seeded) and
/// outlier_x/outlier_y/outlier_w (one extra atom).
inline DiscreteMeasure generate(const Recipe& r) {
    std::vector<Atom> atoms;
    double scale = 0.0;
    const std::string& k = r.kind;
    if (k == "segment" || k == "line" || k == "vertical") {
        const long n = r.count("n", 100);
        const double length = r.num("length", 1.0);
        const double angle = k == "vertical" ? std::numbers::pi / 2.0 : (k == "line" ? r.num("angle", 0.0) : 0.0);
        atoms = detail::line_atoms(n, length, angle, r.num("mass", 1.0));
        scale = length / (2.0 * static_cast<double>(n));
    } else if (k == "graph") {
        const double slope = r.num("slope", 0.2);
        if (!(slope >= 0.0)) throw Error("graph slope must be nonnegative");
        atoms = detail::graph_atoms(r.count("n", 200), slope, r.str("profile", "sine"));
    } else if (k == "circle") {
        const long n = r.count("n", 256);
        const double radius = r.num("radius", 1.0);
        if (n < 1 || !(radius > 0.0)) throw Error("circle needs n >= 1 and positive radius");
        for (long i = 0; i < n; ++i) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
            atoms.push_back({{radius * std::cos(a), radius * std::sin(a)}, 2.0 * std::numbers::pi * radius / static_cast<double>(n)});
        }
    } else if (k == "cantor4") {
        atoms = detail::cantor_atoms(r.count("level", 2));
    } else {
        throw Error("unknown measure kind: " + k);
    }
    const double noise = r.num("noise", 0.0);
    if (noise < 0.0) throw Error("noise must be nonnegative");
    if (noise > 0.0) {
        std::mt19937_64 rng(r.seed);
        for (auto& a : atoms) {
            a.p.x += noise * (2.0 * unit_uniform(rng) - 1.0);
            a.p.y += noise * (2.0 * unit_uniform(rng) - 1.0);
        }
    }
    if (r.params.count("outlier_x") || r.params.count("outlier_y")) {
        atoms.push_back({{r.num("outlier_x", 0.0), r.num("outlier_y", 0.0)}, r.num("outlier_w", atoms.empty() ? 1.0 : atoms.front().w)});
    }
    const double hm = atoms.size() > 1 ? detail::half_min_distance(atoms) : 0.5;
    scale = scale > 0.0 ? std::min(scale, 2.0 * hm) : hm;
    return DiscreteMeasure(std::move(atoms), scale);
}

inline DiscreteMeasure generate(const std::string& recipe, std::uint64_t seed = 0) { return generate(Recipe::parse(recipe, seed)); }

}  // namespace gmt
