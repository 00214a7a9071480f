#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "core/summation.hpp"
#include "measure.hpp"

namespace gmt {

struct Cube {
    int id = 0;
    int level = 0;
    int center_atom = 0;
    Point2 center;
    double r = 0.0;
    std::vector<int> members;
    int parent = -1;
    std::vector<int> children;
    bool doubling = false;          ///< literal test, or declared for leaf cells
    bool doubling_literal = false;  ///< μ(100B(Q)) ≤ C₀ μ(B(Q))
    bool leaf = false;
    double mass = 0.0;
    double diam = 0.0;

    Ball ball() const { return {center, r}; }
    Ball big_ball() const { return {center, 28.0 * r}; }
    Ball ball_scaled(double f) const { return {center, f * r}; }
};

struct LatticeViolation {
    std::string property;
    int cube = -1;
    int other = -1;
};

struct LatticeReport {
    std::size_t sibling_pairs = 0;
    std::size_t sibling_disjoint = 0;
    std::size_t level_pairs = 0;
    std::size_t level_disjoint = 0;
    std::vector<LatticeViolation> violations;

    double sibling_fraction() const { return sibling_pairs == 0 ? 1.0 : static_cast<double>(sibling_disjoint) / static_cast<double>(sibling_pairs); }
};

/// Multiscale partition with greedy nets at spacing A₀⁻ᵏ (after rescaling the support to diameter 1).
class Lattice {
public:
    static Lattice build(const DiscreteMeasure& mu, double C0 = 2.0, double A0 = 8.0, std::optional<int> k_max = std::nullopt) {
        if (mu.empty()) throw Error("lattice of an empty measure");
        if (!(A0 > C0 && C0 > 1.0)) throw Error("lattice constants need A0 > C0 > 1");
        Lattice L;
        L.mu_ = mu;
        L.C0_ = C0;
        L.A0_ = A0;
        const double diam = diameter(mu);
        L.unit_ = diam > 0.0 ? diam : 1.0;
        int deepest = 0;
        while (std::pow(A0, -(deepest + 1)) * L.unit_ >= mu.scale()) ++deepest;
        if (k_max) {
            if (*k_max < 0) throw Error("k_max must be nonnegative");
            if (*k_max > deepest) throw Error("k_max too large for the discretization scale");
            deepest = *k_max;
        }
        L.build_levels(deepest);
        L.finish();
        return L;
    }

    const DiscreteMeasure& measure() const { return mu_; }
    const std::vector<Cube>& cubes() const { return cubes_; }
    const Cube& cube(int id) const { return cubes_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::vector<int>>& levels() const { return levels_; }
    int root() const { return 0; }
    int depth() const { return static_cast<int>(levels_.size()) - 1; }
    double C0() const { return C0_; }
    double A0() const { return A0_; }
    double unit() const { return unit_; }
    const LatticeReport& report() const { return report_; }

    /// Side length A₀⁻ᵏ in original units.
    double level_scale(int k) const { return std::pow(A0_, -k) * unit_; }

    double mass_in(const Ball& b) const { return gmt::mass_in(mu_, b); }

    /// Θ_μ(f·B(Q)).
    double theta(int id, double factor) const {
        const Cube& q = cube(id);
        return mass_in(q.ball_scaled(factor)) / (factor * q.r);
    }
    /// Θ_μ(2B_Q) with B_Q = 28 B(Q).
    double theta_2BQ(int id) const { return theta(id, 56.0); }

    bool contains(int ancestor, int q) const {
        for (int c = q; c >= 0; c = cube(c).parent)
            if (c == ancestor) return true;
        return false;
    }

    /// Descendants of q including q, in (level, id) order.
    std::vector<int> descendants(int q) const {
        std::vector<int> out{q};
        for (std::size_t i = 0; i < out.size(); ++i)
            for (int c : cube(out[i]).children) out.push_back(c);
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Leaf cube holding each atom.
    const std::vector<int>& leaf_of() const { return leaf_of_; }

private:
    void add_cube(Cube c) {
        c.id = static_cast<int>(cubes_.size());
        cubes_.push_back(std::move(c));
    }

    void build_levels(int deepest) {
        const std::size_t n = mu_.size();
        Cube root;
        {
            std::size_t best = 0;
            double best_ecc = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                double ecc = 0.0;
                for (std::size_t j = 0; j < n; ++j) ecc = std::max(ecc, dist(mu_[i].p, mu_[j].p));
                if (ecc < best_ecc) {
                    best_ecc = ecc;
                    best = i;
                }
            }
            root.center_atom = static_cast<int>(best);
            root.center = mu_[best].p;
            root.r = best_ecc < unit_ ? unit_ : C0_ * unit_;
            for (std::size_t i = 0; i < n; ++i) root.members.push_back(static_cast<int>(i));
        }
        add_cube(std::move(root));
        levels_.push_back({0});
        for (int k = 1; k <= deepest; ++k) {
            const double r = level_scale(k);
            const double sep = r;
            std::vector<int> level;
            for (int pid : levels_.back()) {
                const std::vector<int> pm = cube(pid).members;
                std::vector<int> net{pm.front()};
                std::vector<double> dmin(pm.size());
                for (std::size_t a = 0; a < pm.size(); ++a) dmin[a] = dist(mu_[pm[a]].p, mu_[pm.front()].p);
                for (;;) {
                    std::size_t far = 0;
                    for (std::size_t a = 1; a < pm.size(); ++a)
                        if (dmin[a] > dmin[far]) far = a;
                    if (dmin[far] < sep) break;
                    net.push_back(pm[far]);
                    for (std::size_t a = 0; a < pm.size(); ++a) dmin[a] = std::min(dmin[a], dist(mu_[pm[a]].p, mu_[pm[far]].p));
                }
                std::vector<std::vector<int>> groups(net.size());
                for (int a : pm) {
                    std::size_t best = 0;
                    double bd = std::numeric_limits<double>::infinity();
                    for (std::size_t c = 0; c < net.size(); ++c) {
                        const double d = dist(mu_[a].p, mu_[net[c]].p);
                        if (d < bd || (d == bd && net[c] < net[best])) {
                            bd = d;
                            best = c;
                        }
                    }
                    groups[best].push_back(a);
                }
                for (std::size_t c = 0; c < net.size(); ++c) {
                    Cube q;
                    q.level = k;
                    q.center_atom = net[c];
                    q.center = mu_[net[c]].p;
                    q.r = r;
                    q.members = std::move(groups[c]);
                    q.parent = pid;
                    add_cube(std::move(q));
                    cubes_[static_cast<std::size_t>(pid)].children.push_back(cubes_.back().id);
                    level.push_back(cubes_.back().id);
                }
            }
            levels_.push_back(std::move(level));
        }
    }

    void finish() {
        leaf_of_.assign(mu_.size(), -1);
        for (auto& q : cubes_) {
            q.leaf = q.children.empty();
            KahanSum m;
            std::vector<Point2> pts;
            for (int a : q.members) {
                m.add(mu_[a].w);
                pts.push_back(mu_[a].p);
            }
            q.mass = m.value();
            q.diam = diameter(pts);
            q.doubling_literal = gmt::mass_in(mu_, q.ball_scaled(100.0)) <= C0_ * gmt::mass_in(mu_, q.ball());
            q.doubling = q.doubling_literal || q.leaf;
            if (q.leaf)
                for (int a : q.members) leaf_of_[a] = q.id;
        }
        check_properties();
    }

    void check_properties() {
        auto& rep = report_;
        for (const auto& q : cubes_) {
            const double lo = std::pow(A0_, -q.level) * unit_, hi = C0_ * lo;
            if (q.r < lo * (1 - 1e-12) || q.r > hi * (1 + 1e-12)) rep.violations.push_back({"radius_sandwich", q.id, -1});
            if (std::find(q.members.begin(), q.members.end(), q.center_atom) == q.members.end()) rep.violations.push_back({"center_in_cube", q.id, -1});
            for (int a : q.members)
                if (!(dist(mu_[a].p, q.center) < 28.0 * q.r)) {
                    rep.violations.push_back({"inside_28B", q.id, a});
                    break;
                }
            std::vector<char> in(mu_.size(), 0);
            for (int a : q.members) in[a] = 1;
            for (std::size_t a = 0; a < mu_.size(); ++a)
                if (!in[a] && q.ball().contains(mu_[a].p)) {
                    rep.violations.push_back({"ball_inside_cube", q.id, static_cast<int>(a)});
                    break;
                }
        }
        for (const auto& level : levels_) {
            for (std::size_t i = 0; i < level.size(); ++i)
                for (std::size_t j = i + 1; j < level.size(); ++j) {
                    const Cube& a = cube(level[i]);
                    const Cube& b = cube(level[j]);
                    const bool disjoint = dist(a.center, b.center) >= 5.0 * (a.r + b.r);
                    ++rep.level_pairs;
                    if (disjoint) ++rep.level_disjoint;
                    if (a.parent == b.parent) {
                        ++rep.sibling_pairs;
                        if (disjoint) ++rep.sibling_disjoint;
                        else rep.violations.push_back({"sibling_5B_disjoint", a.id, b.id});
                    }
                }
        }
    }

    DiscreteMeasure mu_;
    double C0_ = 2.0, A0_ = 8.0, unit_ = 1.0;
    std::vector<Cube> cubes_;
    std::vector<std::vector<int>> levels_;
    std::vector<int> leaf_of_;
    LatticeReport report_;
};

inline bool doubling_check(const Lattice& L, int q) { return L.cube(q).doubling_literal; }

struct MaximalDoubling {
    std::vector<int> cubes;
    double coverage = 0.0;  ///< covered mass / μ(Q)
};

/// Maximal doubling descendants of q (q itself if doubling).
inline MaximalDoubling maximal_doubling(const Lattice& L, int q) {
    MaximalDoubling out;
    std::vector<int> stack{q};
    KahanSum covered;
    while (!stack.empty()) {
        const int c = stack.back();
        stack.pop_back();
        const Cube& cc = L.cube(c);
        if (cc.doubling) {
            out.cubes.push_back(c);
            covered.add(cc.mass);
        } else {
            for (auto it = cc.children.rbegin(); it != cc.children.rend(); ++it) stack.push_back(*it);
        }
    }
    std::sort(out.cubes.begin(), out.cubes.end());
    out.coverage = covered.value() / L.cube(q).mass;
    return out;
}

struct DoublingAncestor {
    int cube = -1;
    double diam_ratio = 1.0;  ///< diam(ancestor)/diam(Q); 1 when both vanish
};

inline DoublingAncestor first_doubling_ancestor(const Lattice& L, int q) {
    if (!L.cube(L.root()).doubling) throw Error("root cube is not doubling");
    for (int c = q; c >= 0; c = L.cube(c).parent) {
        if (L.cube(c).doubling) {
            const double dq = L.cube(q).diam, da = L.cube(c).diam;
            return {c, dq > 0.0 ? da / dq : (da > 0.0 ? std::numeric_limits<double>::infinity() : 1.0)};
        }
    }
    throw Error("no doubling ancestor");
}

struct DensityChain {
    std::vector<int> chain;           ///< Q, ..., P
    std::vector<double> densities;    ///< Θ_μ(100B(S)) along the chain
    double sum_ratio = 0.0;           ///< Σ Θ(100B(S)) / Θ(100B(P))
};

/// Densities along Q ⊂ S ⊂ P; every S strictly between must be non-doubling.
inline DensityChain density_chain_report(const Lattice& L, int q, int p) {
    if (!L.contains(p, q)) throw Error("density chain needs Q inside P");
    DensityChain out;
    for (int c = q;; c = L.cube(c).parent) {
        out.chain.push_back(c);
        if (c == p) break;
    }
    for (std::size_t i = 1; i + 1 < out.chain.size(); ++i)
        if (L.cube(out.chain[i]).doubling) throw Error("density chain has a doubling intermediate cube");
    KahanSum s;
    for (int c : out.chain) {
        out.densities.push_back(L.theta(c, 100.0));
        s.add(out.densities.back());
    }
    const double tp = out.densities.back();
    out.sum_ratio = tp > 0.0 ? s.value() / tp : 0.0;
    return out;
}

struct SmallBoundary {
    double ext_mass = 0.0;
    double int_mass = 0.0;
    double rhs = 0.0;  ///< (C₀⁻⁷A₀)^{-l} μ(90B(Q)) with the unnamed constant set to 1; reference only
    bool below_resolution = false;
    bool pass = true;
};

inline SmallBoundary small_boundary_report(const Lattice& L, int q, int l) {
    if (l < 0) throw Error("collar index must be nonnegative");
    const Cube& Q = L.cube(q);
    const DiscreteMeasure& mu = L.measure();
    const double width = L.level_scale(Q.level + l);
    std::vector<char> in(mu.size(), 0);
    for (int a : Q.members) in[a] = 1;
    SmallBoundary out;
    out.below_resolution = width < mu.scale();
    KahanSum ext, inn;
    for (std::size_t x = 0; x < mu.size(); ++x) {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t y = 0; y < mu.size(); ++y)
            if (in[y] != in[x]) d = std::min(d, dist(mu[x].p, mu[y].p));
        if (d < width) (in[x] ? inn : ext).add(mu[x].w);
    }
    out.ext_mass = ext.value();
    out.int_mass = inn.value();
    out.rhs = std::pow(std::pow(L.C0(), -7.0) * L.A0(), -static_cast<double>(l)) * L.mass_in(Q.ball_scaled(90.0));
    out.pass = out.ext_mass + out.int_mass <= out.rhs;
    return out;
}

/// δ_μ(Q, Q̃) = Σ over atoms in 2B_Q̃ \ 2B_Q of w/|y − z_Q|.
inline double delta_mu(const Lattice& L, int q, int qt) {
    if (!L.contains(qt, q)) throw Error("delta_mu needs Q inside Q~");
    const Cube& Q = L.cube(q);
    const Ball outer = L.cube(qt).ball_scaled(56.0), inner = Q.ball_scaled(56.0);
    KahanSum s;
    for (const auto& a : L.measure().atoms())
        if (outer.contains(a.p) && !inner.contains(a.p)) s.add(a.w / dist(a.p, Q.center));
    return s.value();
}

}  // namespace gmt
