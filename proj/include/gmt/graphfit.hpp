#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <tuple>
#include <vector>

#include "core/summation.hpp"
#include "kernels.hpp"
#include "lattice.hpp"
#include "measure.hpp"
#include "permutations.hpp"

namespace gmt {

// ---------------------------------------------------------------- beta numbers

struct BetaResult {
    double beta = 0.0;
    Line best_line;
    Ball ball;
    double mass_in_ball = 0.0;
    double min_sum = 0.0;  ///< Σ w·dist(y, L)² at the minimizer
    bool empty = false;    ///< no atom in the ball; line is the horizontal through the centre
};

/// β_{μ,2}(B) with its minimizing line (weighted principal axis).
inline BetaResult beta2(const DiscreteMeasure& mu, const Ball& B) {
    if (!(B.radius > 0.0)) throw Error("beta2 needs a positive radius");
    BetaResult out;
    out.ball = B;
    std::vector<Atom> in;
    for (const auto& a : mu.atoms())
        if (B.contains(a.p)) in.push_back(a);
    if (in.empty()) {
        out.empty = true;
        out.best_line = Line{B.center, {1.0, 0.0}}.canonical();
        return out;
    }
    KahanSum m, cx, cy;
    for (const auto& a : in) {
        m.add(a.w);
        cx.add(a.w * a.p.x);
        cy.add(a.w * a.p.y);
    }
    out.mass_in_ball = m.value();
    const Point2 c{cx.value() / m.value(), cy.value() / m.value()};

    // exactly collinear (same rule as degenerate triangles) means β = 0
    const Point2 a0 = in.front().p;
    std::size_t far = 0;
    for (std::size_t i = 1; i < in.size(); ++i)
        if (dist(in[i].p, a0) > dist(in[far].p, a0)) far = i;
    const double span = dist(in[far].p, a0);
    bool collinear = true;
    for (const auto& a : in)
        collinear = collinear && std::abs(cross(in[far].p - a0, a.p - a0)) < kDegenerateArea * span * span;
    if (collinear) {
        out.best_line = span > 0.0 ? Line::through(a0, in[far].p) : Line{a0, {1.0, 0.0}}.canonical();
        return out;
    }

    KahanSum sxx, sxy, syy;
    for (const auto& a : in) {
        const Point2 d = a.p - c;
        sxx.add(a.w * d.x * d.x);
        sxy.add(a.w * d.x * d.y);
        syy.add(a.w * d.y * d.y);
    }
    const double phi = 0.5 * std::atan2(2.0 * sxy.value(), sxx.value() - syy.value());
    out.best_line = Line{c, {std::cos(phi), std::sin(phi)}}.canonical();
    KahanSum res;
    for (const auto& a : in) {
        const double o = out.best_line.offset(a.p);
        res.add(a.w * o * o);
    }
    out.min_sum = res.value();
    out.beta = std::sqrt(out.min_sum / (B.radius * B.radius * B.radius));
    return out;
}

/// L_Q: the β-line of 2B_Q.
inline Line cube_line(const Lattice& L, int q) { return beta2(L.measure(), L.cube(q).ball_scaled(56.0)).best_line; }

// ---------------------------------------------------------------- d and D

/// diam(Q) as used by d and D: leaves count as points.
inline double effective_diam(const Cube& q) { return q.leaf ? 0.0 : q.diam; }

/// d(z) straight from the definition.
inline double d_function(Point2 z, const Lattice& L, const std::vector<int>& dbtree) {
    if (dbtree.empty()) throw Error("d_function needs a nonempty DbTree");
    double best = std::numeric_limits<double>::infinity();
    for (int id : dbtree) {
        const Cube& q = L.cube(id);
        double dz = std::numeric_limits<double>::infinity();
        for (int a : q.members) dz = std::min(dz, dist(z, L.measure()[a].p));
        best = std::min(best, dz + effective_diam(q));
    }
    return best;
}

/// D(u) straight from the definition; u is the coordinate along L_R.
inline double D_function(double u, const Lattice& L, const std::vector<int>& dbtree, const Line& LR) {
    if (dbtree.empty()) throw Error("D_function needs a nonempty DbTree");
    double best = std::numeric_limits<double>::infinity();
    for (int id : dbtree) {
        const Cube& q = L.cube(id);
        double du = std::numeric_limits<double>::infinity();
        for (int a : q.members) du = std::min(du, std::abs(u - LR.coordinate(L.measure()[a].p)));
        best = std::min(best, du + effective_diam(q));
    }
    return best;
}

/// d and D collapsed to atom sites: each atom carries the smallest effective diameter among the DbTree cubes holding it.
class DistanceField {
public:
    DistanceField(const Lattice& L, const std::vector<int>& dbtree, const Line& LR) : line_(LR) {
        std::map<int, double> best;
        for (int id : dbtree) {
            const Cube& q = L.cube(id);
            for (int a : q.members) {
                auto [it, fresh] = best.emplace(a, effective_diam(q));
                if (!fresh) it->second = std::min(it->second, effective_diam(q));
            }
        }
        for (auto [a, dl] : best) sites_.push_back({L.measure()[a].p, LR.coordinate(L.measure()[a].p), dl, a});
        std::sort(sites_.begin(), sites_.end(), [](const Site& x, const Site& y) { return x.u < y.u || (x.u == y.u && x.atom < y.atom); });
    }

    bool empty() const { return sites_.empty(); }

    double d(Point2 z) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : sites_) best = std::min(best, dist(z, s.p) + s.delta);
        return best;
    }
    double D(double u) const { return inf_on(u, u); }

    /// inf of D over [a, b].
    double inf_on(double a, double b) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : sites_) {
            const double gap = s.u < a ? a - s.u : (s.u > b ? s.u - b : 0.0);
            best = std::min(best, gap + s.delta);
        }
        return best;
    }

    /// Atoms with d = 0, ordered along the line.
    std::vector<int> zero_sites() const {
        std::vector<int> out;
        for (const auto& s : sites_)
            if (s.delta == 0.0) out.push_back(s.atom);
        return out;
    }

private:
    struct Site {
        Point2 p;
        double u;
        double delta;
        int atom;
    };
    Line line_;
    std::vector<Site> sites_;
};

// ---------------------------------------------------------------- Whitney cover

/// Everything the F construction needs about one root.
struct GraphInput {
    const Lattice* lattice = nullptr;
    int root = 0;
    std::vector<int> dbtree;  ///< sorted cube ids
    Line line;                ///< L_R
};

struct WhitneyInterval {
    double lo = 0.0, hi = 0.0;
    bool in_I0 = false;
    int cube = -1;          ///< Q_i for i ∈ I₀
    bool promoted = false;  ///< Q_i replaced by a doubling ancestor
    double a = 0.0, b = 0.0;  ///< F_i(u) = a + b·u
    bool steep = false;     ///< L_{Q_i} orthogonal to L_R; F_i set to 0

    double len() const { return hi - lo; }
    double center() const { return 0.5 * (lo + hi); }
    double F(double u) const { return a + b * u; }
};

struct WhitneyCover {
    std::vector<WhitneyInterval> intervals;  ///< sorted by lo, interiors disjoint
    double u0 = 0.0;       ///< Π(x₀)
    Point2 x0;
    double diam_R = 0.0;
    double ell_min = 0.0;  ///< shortest dyadic length tried
    double window = 0.0;   ///< construction covers |u − u0| ≤ window
    std::size_t unresolved = 0;  ///< dyadic cells dropped at ell_min
    double neighbor_ratio = 1.0; ///< max ℓ(J')/ℓ(J) over pairs with 15J ∩ 15J' ≠ ∅
};

inline double bump_profile(double s) {
    if (s <= 1.0) return 1.0;
    if (s >= 1.5) return 0.0;
    const double t = (1.5 - s) / 0.5;
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

/// φ̃_i: 1 on 2J_i, 0 off 3J_i, C² smootherstep in between.
inline double bump(const WhitneyInterval& J, double u) { return bump_profile(std::abs(u - J.center()) / J.len()); }

namespace detail {

inline std::pair<double, double> affine_in_frame(const Line& target, const Line& frame, bool& steep) {
    const Point2 e = frame.direction, n = frame.normal();
    const double du = dot(target.direction, e), dv = dot(target.direction, n);
    steep = std::abs(du) < 1e-12;
    if (steep) return {0.0, 0.0};
    const double u0 = frame.coordinate(target.anchor), v0 = frame.offset(target.anchor);
    const double slope = dv / du;
    return {v0 - slope * u0, slope};
}

inline double dist_to_projection(double u, const Lattice& L, const Cube& q, const Line& LR) {
    double d = std::numeric_limits<double>::infinity();
    for (int a : q.members) d = std::min(d, std::abs(u - LR.coordinate(L.measure()[a].p)));
    return d;
}

}  // namespace detail

inline WhitneyCover whitney_cover(const GraphInput& in, double ell_min = 0.0, std::size_t max_intervals = 2000000) {
    const Lattice& L = *in.lattice;
    const DiscreteMeasure& mu = L.measure();
    const Cube& R = L.cube(in.root);
    WhitneyCover cov;
    cov.diam_R = R.diam;
    cov.ell_min = ell_min > 0.0 ? ell_min : mu.scale();
    {
        int best = R.members.front();
        for (int a : R.members)
            if (in.line.distance(mu[a].p) < in.line.distance(mu[best].p)) best = a;
        cov.x0 = mu[best].p;
        cov.u0 = in.line.coordinate(cov.x0);
    }
    cov.window = 20.0 * cov.diam_R;
    if (in.dbtree.empty() || !(cov.diam_R > 0.0)) return cov;
    const DistanceField field(L, in.dbtree, in.line);

    const int M = static_cast<int>(std::ceil(std::log2(64.0 * cov.diam_R)));
    const double top = std::ldexp(1.0, M);
    const double wlo = cov.u0 - cov.window, whi = cov.u0 + cov.window;
    std::vector<std::pair<double, double>> stack;
    for (long j = static_cast<long>(std::floor((wlo - cov.u0) / top)); cov.u0 + j * top < whi; ++j)
        stack.push_back({cov.u0 + j * top, cov.u0 + (j + 1) * top});
    std::reverse(stack.begin(), stack.end());
    while (!stack.empty()) {
        auto [lo, hi] = stack.back();
        stack.pop_back();
        if (hi <= wlo || lo >= whi) continue;
        const double len = hi - lo;
        if (len <= field.inf_on(lo, hi) / 20.0) {
            WhitneyInterval J;
            J.lo = lo;
            J.hi = hi;
            cov.intervals.push_back(J);
            if (cov.intervals.size() > max_intervals) throw Error("Whitney cover exceeded its interval budget");
            continue;
        }
        if (len / 2.0 < cov.ell_min) {
            ++cov.unresolved;
            continue;
        }
        const double mid = lo + len / 2.0;
        stack.push_back({mid, hi});
        stack.push_back({lo, mid});
    }
    std::sort(cov.intervals.begin(), cov.intervals.end(), [](const auto& x, const auto& y) { return x.lo < y.lo; });

    // I₀, Q_i and F_i
    const std::set<int> db(in.dbtree.begin(), in.dbtree.end());
    std::map<int, std::pair<double, double>> line_cache;
    std::map<int, bool> steep_cache;
    const double r0 = 10.0 * cov.diam_R;
    for (auto& J : cov.intervals) {
        J.in_I0 = J.hi > cov.u0 - r0 && J.lo < cov.u0 + r0;
        if (!J.in_I0) continue;
        const double c = J.center(), Dc = field.D(c);
        int pick = -1;
        for (int id : in.dbtree) {
            const Cube& q = L.cube(id);
            if (detail::dist_to_projection(c, L, q, in.line) + effective_diam(q) <= 2.0 * Dc) {
                pick = id;
                break;
            }
        }
        if (pick < 0) throw Error("no DbTree cube attains D within factor 2");
        if (L.cube(pick).diam < J.len()) {
            int top_db = pick;
            for (int a = L.cube(pick).parent; a >= 0 && L.contains(in.root, a); a = L.cube(a).parent) {
                if (!db.count(a)) continue;
                top_db = a;
                if (L.cube(a).diam >= J.len()) break;
            }
            J.promoted = top_db != pick;
            pick = top_db;
        }
        J.cube = pick;
        if (!line_cache.count(pick)) {
            bool steep = false;
            line_cache[pick] = detail::affine_in_frame(cube_line(L, pick), in.line, steep);
            steep_cache[pick] = steep;
        }
        std::tie(J.a, J.b) = line_cache[pick];
        J.steep = steep_cache[pick];
    }

    // comparability of neighbours
    double lmax = 0.0;
    for (const auto& J : cov.intervals) lmax = std::max(lmax, J.len());
    for (std::size_t i = 0; i < cov.intervals.size(); ++i) {
        const auto& A = cov.intervals[i];
        for (std::size_t j = i + 1; j < cov.intervals.size(); ++j) {
            const auto& B = cov.intervals[j];
            if (B.lo - A.hi > 7.0 * (A.len() + lmax)) break;
            const double gap = std::max(0.0, B.lo - A.hi);
            if (gap < 7.0 * (A.len() + B.len())) cov.neighbor_ratio = std::max(cov.neighbor_ratio, std::max(A.len() / B.len(), B.len() / A.len()));
        }
    }
    return cov;
}

// ---------------------------------------------------------------- partition of unity

struct PouWeights {
    std::vector<std::pair<int, double>> weights;  ///< (interval index, φ_i)
    double bump_sum = 0.0;                        ///< Σ φ̃_i
    bool covered = false;                         ///< inside some 3J_i
};

/// Fast lookup of the intervals whose 3J contains a point.
class BumpIndex {
public:
    BumpIndex() = default;
    explicit BumpIndex(const WhitneyCover& c) {
        struct Ev {
            double x;
            int id;
            bool open;
        };
        std::vector<Ev> ev;
        for (std::size_t i = 0; i < c.intervals.size(); ++i) {
            const auto& J = c.intervals[i];
            ev.push_back({J.center() - 1.5 * J.len(), static_cast<int>(i), true});
            ev.push_back({J.center() + 1.5 * J.len(), static_cast<int>(i), false});
        }
        std::sort(ev.begin(), ev.end(), [](const Ev& a, const Ev& b) { return a.x < b.x || (a.x == b.x && !a.open && b.open); });
        std::set<int> active;
        for (std::size_t k = 0; k < ev.size();) {
            const double x = ev[k].x;
            while (k < ev.size() && ev[k].x == x) {
                if (ev[k].open) active.insert(ev[k].id);
                else active.erase(ev[k].id);
                ++k;
            }
            breaks_.push_back(x);
            active_.emplace_back(active.begin(), active.end());
        }
    }
    const std::vector<int>& at(double u) const {
        static const std::vector<int> none;
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), u);
        if (it == breaks_.begin()) return none;
        return active_[static_cast<std::size_t>(it - breaks_.begin() - 1)];
    }

private:
    std::vector<double> breaks_;
    std::vector<std::vector<int>> active_;
};

inline PouWeights partition_of_unity(const WhitneyCover& c, const BumpIndex& index, double u) {
    PouWeights out;
    for (int i : index.at(u)) {
        const double b = bump(c.intervals[static_cast<std::size_t>(i)], u);
        if (b > 0.0) {
            out.weights.push_back({i, b});
            out.bump_sum += b;
        }
    }
    out.covered = out.bump_sum > 0.0;
    for (auto& [i, w] : out.weights) w /= out.bump_sum;
    return out;
}

inline PouWeights partition_of_unity(const WhitneyCover& c, double u) { return partition_of_unity(c, BumpIndex(c), u); }

// ---------------------------------------------------------------- F and Γ_R

struct LipschitzGraph {
    Line line;  ///< L_R
    WhitneyCover cover;
    BumpIndex index;
    std::vector<double> good_u, good_v;  ///< Π(G_R) sorted, with Π⊥
    bool injective = true;
    double lipschitz_estimate = 0.0;
    double lipschitz_bound = 0.0;  ///< C_F·θ(R) reference
    double support_radius = 0.0;   ///< max |u − u0| with F(u) ≠ 0 over the samples
    std::size_t samples = 0;

    /// Graph map on Π(G_R), linearly interpolated.
    double graph_map(double u) const {
        if (good_u.empty()) return 0.0;
        if (u <= good_u.front()) return good_v.front();
        if (u >= good_u.back()) return good_v.back();
        const auto it = std::upper_bound(good_u.begin(), good_u.end(), u);
        const std::size_t j = static_cast<std::size_t>(it - good_u.begin());
        const double t = (u - good_u[j - 1]) / (good_u[j] - good_u[j - 1]);
        return good_v[j - 1] + t * (good_v[j] - good_v[j - 1]);
    }

    double F(double u) const {
        if (std::abs(u - cover.u0) > cover.window) return 0.0;
        double s = 0.0, blend = 0.0;
        for (int i : index.at(u)) {
            const auto& J = cover.intervals[static_cast<std::size_t>(i)];
            const double b = bump(J, u);
            s += b;
            if (J.in_I0 && !J.steep) blend += b * J.F(u);
        }
        if (s >= 1.0) return blend / s;
        return blend + (1.0 - s) * graph_map(u);
    }

    Point2 point(double u) const { return line.at(u) + F(u) * line.normal(); }
};

inline LipschitzGraph build_lipschitz_F(const GraphInput& in, double theta_R = 0.0, double C_F = 1.0, std::size_t grid = 4096) {
    const Lattice& L = *in.lattice;
    const DiscreteMeasure& mu = L.measure();
    LipschitzGraph g;
    g.line = in.line;
    g.cover = whitney_cover(in);
    g.index = BumpIndex(g.cover);
    g.lipschitz_bound = C_F * theta_R;
    if (!in.dbtree.empty()) {
        const DistanceField field(L, in.dbtree, in.line);
        std::vector<std::pair<double, double>> pts;
        for (int a : field.zero_sites()) pts.push_back({in.line.coordinate(mu[a].p), in.line.offset(mu[a].p)});
        std::sort(pts.begin(), pts.end());
        for (std::size_t i = 0; i < pts.size();) {
            std::size_t j = i;
            double v = 0.0;
            while (j < pts.size() && pts[j].first == pts[i].first) v += pts[j++].second;
            if (j - i > 1) g.injective = false;
            g.good_u.push_back(pts[i].first);
            g.good_v.push_back(v / static_cast<double>(j - i));
            i = j;
        }
    }
    // A point root lies on the constant graph through it: nothing to sample.
    if (!(g.cover.diam_R > 0.0)) {
        g.samples = 1;
        return g;
    }
    const double u0 = g.cover.u0, w = std::max(13.0 * g.cover.diam_R, mu.scale());
    std::vector<double> us;
    for (std::size_t i = 0; i <= grid; ++i) us.push_back(u0 - w + 2.0 * w * static_cast<double>(i) / static_cast<double>(grid));
    for (double u : g.good_u) us.push_back(u);
    for (const auto& J : g.cover.intervals) {
        const double c = J.center(), l = J.len();
        for (double x : {J.lo, J.hi, c - l, c + l, c - 1.5 * l, c + 1.5 * l})
            if (std::abs(x - u0) <= w) us.push_back(x);
    }
    std::sort(us.begin(), us.end());
    us.erase(std::unique(us.begin(), us.end()), us.end());
    g.samples = us.size();
    double prev_u = 0.0, prev_f = 0.0;
    for (std::size_t i = 0; i < us.size(); ++i) {
        const double f = g.F(us[i]);
        if (f != 0.0) g.support_radius = std::max(g.support_radius, std::abs(us[i] - u0));
        if (i > 0 && us[i] > prev_u) g.lipschitz_estimate = std::max(g.lipschitz_estimate, std::abs(f - prev_f) / (us[i] - prev_u));
        prev_u = us[i];
        prev_f = f;
    }
    return g;
}

struct ClosenessRecord {
    int atom = -1;
    double dist_to_graph = 0.0;
    double d = 0.0;
    double ratio = 0.0;  ///< dist/d, 0 when both vanish
};

struct ClosenessReport {
    std::vector<ClosenessRecord> atoms;
    double max_ratio = 0.0;               ///< over atoms with d > 0
    double max_line_distance = 0.0;       ///< max |F|/r(R) on the samples
    std::size_t zero_d_positive_dist = 0; ///< atoms with d = 0 but off the graph
};

/// Distance from x to Γ_R by a bracketed scan around Π(x).
inline double distance_to_graph(const LipschitzGraph& g, Point2 x) {
    const double ux = g.line.coordinate(x);
    double best = dist(x, g.point(ux));
    if (best == 0.0) return 0.0;
    double lo = ux - best, hi = ux + best;
    for (int round = 0; round < 4; ++round) {
        const int n = 128;
        double arg = ux;
        for (int i = 0; i <= n; ++i) {
            const double u = lo + (hi - lo) * i / n;
            const double d = dist(x, g.point(u));
            if (d < best) best = d, arg = u;
        }
        const double h = (hi - lo) / n;
        lo = arg - h;
        hi = arg + h;
    }
    return best;
}

inline ClosenessReport graph_closeness_report(const GraphInput& in, const LipschitzGraph& g) {
    const Lattice& L = *in.lattice;
    const DiscreteMeasure& mu = L.measure();
    ClosenessReport rep;
    const Ball B0{g.line.at(g.cover.u0), 10.0 * g.cover.diam_R};
    const Cube& R = L.cube(in.root);
    std::unique_ptr<DistanceField> field;
    if (!in.dbtree.empty()) field = std::make_unique<DistanceField>(L, in.dbtree, in.line);
    for (std::size_t a = 0; a < mu.size(); ++a) {
        if (!(B0.contains(mu[a].p) || mu[a].p == B0.center)) continue;
        ClosenessRecord r;
        r.atom = static_cast<int>(a);
        r.dist_to_graph = distance_to_graph(g, mu[a].p);
        r.d = field ? field->d(mu[a].p) : 0.0;
        if (r.d > 0.0) {
            r.ratio = r.dist_to_graph / r.d;
            rep.max_ratio = std::max(rep.max_ratio, r.ratio);
        } else if (r.dist_to_graph > 1e-12 * std::max(1.0, g.cover.diam_R)) {
            ++rep.zero_d_positive_dist;
        }
        rep.atoms.push_back(r);
    }
    const double w = 12.0 * g.cover.diam_R;
    for (int i = 0; i <= 1024; ++i) {
        const double u = g.cover.u0 - w + 2.0 * w * i / 1024.0;
        rep.max_line_distance = std::max(rep.max_line_distance, std::abs(g.F(u)) / R.r);
    }
    return rep;
}

// ---------------------------------------------------------------- balanced cubes

struct BalancedVerdict {
    bool balanced = false;
    int xi1 = -1, xi2 = -1;  ///< witness centres (atom indices)
    double rho1 = 0.0, rho2 = 0.0;
    std::vector<int> family;     ///< alternative (b): high-density doubling descendants
    double family_ratio = 0.0;   ///< Σ_P Θ(2B_P)²μ(P) / (γ⁻² Θ(2B_Q)² μ(Q))
};

inline BalancedVerdict balanced_ball_test(const Lattice& L, int q, double gamma, double rho1 = -1.0, double rho2 = -1.0) {
    const Cube& Q = L.cube(q);
    if (!Q.doubling) throw Error("balanced_ball_test needs a doubling cube");
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gamma must lie in (0,1)");
    BalancedVerdict v;
    v.rho1 = rho1 > 0.0 ? rho1 : gamma / 4.0;
    v.rho2 = rho2 > 0.0 ? rho2 : gamma * gamma;
    const DiscreteMeasure& mu = L.measure();
    const Ball BQ = Q.ball();
    const double rad = v.rho1 * Q.r, sep = gamma * 28.0 * Q.r;

    std::vector<int> cand;
    std::vector<std::vector<int>> near;  // members of Q within each candidate ball
    for (int a : Q.members) {
        if (!BQ.contains(mu[a].p)) continue;
        const Ball Bk{mu[a].p, rad};
        double m = 0.0;
        for (const auto& b : mu.atoms())
            if (Bk.contains(b.p) && BQ.contains(b.p)) m += b.w;
        if (m < v.rho2 * Q.mass) continue;
        std::vector<int> in;
        for (int b : Q.members)
            if (Bk.contains(mu[b].p)) in.push_back(b);
        cand.push_back(a);
        near.push_back(std::move(in));
    }
    for (std::size_t i = 0; i < cand.size() && !v.balanced; ++i)
        for (std::size_t j = i + 1; j < cand.size(); ++j) {
            const double dc = dist(mu[cand[i]].p, mu[cand[j]].p);
            if (dc + 2.0 * rad < sep) continue;
            bool ok = dc - 2.0 * rad >= sep;
            if (!ok) {
                ok = true;
                for (int y1 : near[i]) {
                    for (int y2 : near[j])
                        if (dist(mu[y1].p, mu[y2].p) < sep) {
                            ok = false;
                            break;
                        }
                    if (!ok) break;
                }
            }
            if (ok) {
                v.balanced = true;
                v.xi1 = cand[i];
                v.xi2 = cand[j];
                break;
            }
        }
    if (v.balanced) return v;

    const double tq = L.theta_2BQ(q);
    std::vector<int> stack(Q.children.rbegin(), Q.children.rend());
    KahanSum s;
    while (!stack.empty()) {
        const int c = stack.back();
        stack.pop_back();
        const Cube& P = L.cube(c);
        if (P.doubling && L.theta_2BQ(c) >= tq / gamma) {
            v.family.push_back(c);
            s.add(L.theta_2BQ(c) * L.theta_2BQ(c) * P.mass);
            continue;
        }
        for (auto it = P.children.rbegin(); it != P.children.rend(); ++it) stack.push_back(*it);
    }
    std::sort(v.family.begin(), v.family.end());
    const double denom = tq * tq * Q.mass / (gamma * gamma);
    v.family_ratio = denom > 0.0 ? s.value() / denom : 0.0;
    return v;
}

}  // namespace gmt
