#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "core/summation.hpp"
#include "graphfit.hpp"
#include "kernels.hpp"
#include "lattice.hpp"
#include "measure.hpp"
#include "permutations.hpp"

namespace gmt {

// ---------------------------------------------------------------- parameters

struct Params {
    double tau = 0.1;      ///< low-density threshold
    double A = 100.0;      ///< high-density threshold
    double theta0 = 0.05;  ///< angle threshold
    double gamma = 1e-3;   ///< balance parameter
    double eps0 = 1e-2;    ///< beta threshold
    double alpha = 1e-3;   ///< permutation threshold
    double delta = 1e-3;   ///< window of the truncated permutations
    double C0 = 2.0;
    double A0 = 8.0;
    double C_F = 1.0;    ///< Lipschitz constant factor used by θ(R)
    double c2 = -1.0;    ///< R_Far cutoff; negative means the default ε₀τ²γ²
    double rho1 = -1.0;  ///< ρ′(γ); negative means γ/4
    double rho2 = -1.0;  ///< ρ″(γ); negative means γ²
    unsigned workers = 1;

    double c2_value() const { return c2 > 0.0 ? c2 : eps0 * tau * tau * gamma * gamma; }

    /// Positivity plus A⁻¹ ≤ τ² and γ ≤ τ³ (relative slack 1e-12 for decimal inputs).
    void validate() const {
        for (double v : {tau, A, theta0, gamma, eps0, alpha, delta, C0, A0, C_F})
            if (!(v > 0.0) || !std::isfinite(v)) throw Error("corona parameters must be positive and finite");
        if (!(tau < 1.0)) throw Error("tau must be below 1");
        if (!(gamma < 1.0) || !(alpha < 1.0) || !(delta < 1.0) || !(eps0 < 1.0)) throw Error("gamma, alpha, delta, eps0 must be below 1");
        if (1.0 / A > tau * tau * (1.0 + 1e-12)) throw Error("need 1/A <= tau^2");
        if (gamma > tau * tau * tau * (1.0 + 1e-12)) throw Error("need gamma <= tau^3");
        if (!(A0 > C0 && C0 > 1.0)) throw Error("lattice constants need A0 > C0 > 1");
    }
};

// ---------------------------------------------------------------- verdicts

enum class StopLabel { none, HD, LD, UB, BP, BS, F };

inline const char* label_name(StopLabel l) {
    switch (l) {
        case StopLabel::HD: return "HD";
        case StopLabel::LD: return "LD";
        case StopLabel::UB: return "UB";
        case StopLabel::BP: return "BP";
        case StopLabel::BS: return "BS";
        case StopLabel::F: return "F";
        default: return "none";
    }
}

/// Evidence: Θ ratio for HD/LD, family ratio for UB, chain sum for BP,
/// angle for BS, far mass fraction for F.
struct StopVerdict {
    StopLabel label = StopLabel::none;
    double evidence = 0.0;
};

struct ThetaRule {
    bool in_T_VF = false;
    double theta = 0.0;
    double theta_V = 0.0;
};

/// θ(R) from the angle of L_R to the vertical.
inline ThetaRule theta_R(double theta_V, const Params& p) {
    ThetaRule t;
    t.theta_V = theta_V;
    t.in_T_VF = theta_V >= (1.0 + p.C_F) * p.theta0;
    t.theta = t.in_T_VF ? p.theta0 : 2.0 * (1.0 + p.C_F) * p.theta0;
    return t;
}

inline ThetaRule theta_R(const Line& LR, const Params& p) { return theta_R(theta_vertical(LR), p); }

// ---------------------------------------------------------------- shared per-lattice data

/// Root-independent quantities, computed once: Θ(2B_Q), L_Q and balance verdicts.
class CoronaContext {
public:
    CoronaContext(const Lattice& L, const Params& p) : L_(&L), p_(p) {
        p.validate();
        const auto& cs = L.cubes();
        theta_.resize(cs.size());
        lines_.resize(cs.size());
        balanced_.resize(cs.size());
        for (const auto& q : cs) {
            theta_[q.id] = L.theta_2BQ(q.id);
            lines_[q.id] = cube_line(L, q.id);
            if (q.doubling && !q.leaf) balanced_[q.id] = balanced_ball_test(L, q.id, p.gamma, p.rho1, p.rho2);
        }
    }

    const Lattice& lattice() const { return *L_; }
    const Params& params() const { return p_; }
    double theta(int q) const { return theta_[q]; }
    const Line& line(int q) const { return lines_[q]; }
    /// Leaves count as balanced: their balance scale γ·r(B_Q) sits below the resolution.
    bool balanced(int q) const { return !balanced_[q] || balanced_[q]->balanced; }
    const std::optional<BalancedVerdict>& balance(int q) const { return balanced_[q]; }

private:
    const Lattice* L_;
    Params p_;
    std::vector<double> theta_;
    std::vector<Line> lines_;
    std::vector<std::optional<BalancedVerdict>> balanced_;
};

/// Per-root memo: 2B_R, the raw permutation sums and the raw (S1)–(S3) flags.
class RootCache {
public:
    RootCache(const CoronaContext& ctx, int R, Reduction policy = {})
        : ctx_(&ctx), R_(R), policy_(policy), mu2BR_(restrict(ctx.lattice().measure(), ctx.lattice().cube(R).ball_scaled(56.0))) {
        const double t = ctx.theta(R);
        theta_R2_ = t * t;
        rule_ = theta_R(ctx.line(R), ctx.params());
    }

    int root() const { return R_; }
    const ThetaRule& rule() const { return rule_; }
    const DiscreteMeasure& mu2BR() const { return mu2BR_; }

    /// p₀^{[δ,Q]}(μ⌊2B_Q, μ⌊2B_R, μ⌊2B_R).
    double p0(int q) {
        auto it = p0_.find(q);
        if (it != p0_.end()) return it->second;
        const Lattice& L = ctx_->lattice();
        const auto inner = restrict(L.measure(), L.cube(q).ball_scaled(56.0));
        if (!t23_) t23_ = detail::pair_table(KernelParam::finite(0.0), mu2BR_, mu2BR_);
        const double v = perm_truncated_window(inner, mu2BR_, mu2BR_, *t23_, ctx_->params().delta, L.cube(q).r, policy_).value;
        return p0_[q] = v;
    }

    /// perm(Q)² = p₀^{[δ,Q]}/(Θ(2B_R)² μ(Q)).
    double perm2(int q) { return p0(q) / (theta_R2_ * ctx_->lattice().cube(q).mass); }

    /// Σ perm(Q̃)² over Q ⊂ Q̃ ⊂ R.
    double chain(int q) {
        auto it = chain_.find(q);
        if (it != chain_.end()) return it->second;
        const double up = q == R_ ? 0.0 : chain(ctx_->lattice().cube(q).parent);
        return chain_[q] = up + perm2(q);
    }

    /// Raw (S1)–(S3) test, no maximality.
    StopVerdict s13(int q) {
        auto it = s13_.find(q);
        if (it != s13_.end()) return it->second;
        const Lattice& L = ctx_->lattice();
        const Params& p = ctx_->params();
        const Cube& Q = L.cube(q);
        const double tr = ctx_->theta(R_), tq = ctx_->theta(q);
        StopVerdict v;
        if (Q.doubling && tq > p.A * tr) v = {StopLabel::HD, tq / tr};
        else if (tq < p.tau * tr) v = {StopLabel::LD, tq / tr};
        else if (Q.doubling && !ctx_->balanced(q)) v = {StopLabel::UB, ctx_->balance(q)->family_ratio};
        else if (chain(q) > p.alpha * p.alpha) v = {StopLabel::BP, chain(q)};
        else if (Q.doubling) {
            const double ang = angle_between(ctx_->line(q), ctx_->line(R_));
            if (ang > rule_.theta) v = {StopLabel::BS, ang};
        }
        return s13_[q] = v;
    }

    /// Q̃ ∈ D^db(R) not contained in any cube of R that meets (S1)–(S3).
    bool clean(int q) {
        auto it = clean_.find(q);
        if (it != clean_.end()) return it->second;
        bool ok = s13(q).label == StopLabel::none;
        if (ok && q != R_) ok = clean(ctx_->lattice().cube(q).parent);
        return clean_[q] = ok;
    }

    /// μ(Q \ 2B_Q^Cl)/μ(Q).
    double far_fraction(int q) {
        const Lattice& L = ctx_->lattice();
        const auto& mu = L.measure();
        const Cube& Q = L.cube(q);
        const Ball twoB = Q.ball_scaled(56.0);
        if (dbl_in_R_.empty())
            for (int c : L.descendants(R_))
                if (L.cube(c).doubling) dbl_in_R_.push_back(c);
        std::vector<int> lines;
        for (int c : dbl_in_R_) {
            const Cube& C = L.cube(c);
            if (dist(C.center, Q.center) + 56.0 * Q.r <= 56.0 * C.r && clean(c)) lines.push_back(c);
        }
        const double slack = 5.0 * std::sqrt(ctx_->params().eps0);
        KahanSum far;
        for (int a : Q.members) {
            bool out = !twoB.contains(mu[a].p);
            for (std::size_t i = 0; i < lines.size() && !out; ++i)
                out = ctx_->line(lines[i]).distance(mu[a].p) > slack * 28.0 * L.cube(lines[i]).r;
            if (out) far.add(mu[a].w);
        }
        return far.value() / Q.mass;
    }

    const std::map<int, double>& p0_table() const { return p0_; }

private:
    const CoronaContext* ctx_;
    int R_;
    Reduction policy_;
    DiscreteMeasure mu2BR_;
    std::optional<detail::PairTable> t23_;
    double theta_R2_ = 1.0;
    ThetaRule rule_;
    std::map<int, double> p0_, chain_;
    std::map<int, StopVerdict> s13_;
    std::map<int, bool> clean_;
    std::vector<int> dbl_in_R_;
};

/// Full (S1)→(S4) verdict for Q ⊂ R, first hit wins.
inline StopVerdict full_verdict(RootCache& rc, double alpha, int q) {
    StopVerdict v = rc.s13(q);
    if (v.label == StopLabel::none) {
        const double ff = rc.far_fraction(q);
        if (ff > std::sqrt(alpha)) v = {StopLabel::F, ff};
    }
    return v;
}

// ---------------------------------------------------------------- trees

struct TreeDecomposition {
    int root = -1;
    bool terminal = false;  ///< R is a leaf: nothing below the resolution to stop
    double theta_2BR = 0.0;
    Line line;  ///< L_R
    ThetaRule rule;
    std::vector<int> tree, dbtree, stop;
    std::map<int, StopVerdict> verdicts;  ///< for the Stop cubes
    std::vector<int> HD, LD, UB, BP, BS, F;
    std::vector<int> ub_tilde, o_tilde, next;
    std::vector<int> good;  ///< G_R atoms
    std::vector<int> far;   ///< R_Far atoms
    std::map<int, double> perm2;  ///< perm(Q)² per Tree cube
    std::map<int, double> p0;     ///< p₀^{[δ,Q]}(μ⌊2B_Q, μ⌊2B_R, μ⌊2B_R) per Tree cube
};

namespace detail {

/// Children, or the cube itself at the resolution floor.
inline std::vector<int> sons(const Lattice& L, int q) {
    const Cube& Q = L.cube(q);
    return Q.leaf ? std::vector<int>{q} : Q.children;
}

inline void append_md(const Lattice& L, int q, std::vector<int>& out) {
    const auto md = maximal_doubling(L, q);
    out.insert(out.end(), md.cubes.begin(), md.cubes.end());
}

/// I_Q ∪ Ĩ_Q: the high-density family plus MD of the maximal strict descendants missing it.
inline std::vector<int> ub_tilde_of(const Lattice& L, int q, const std::vector<int>& family) {
    std::vector<int> out = family;
    const std::set<int> fam(family.begin(), family.end());
    auto holds_family = [&](int c) {
        for (int f : family)
            if (L.contains(c, f)) return true;
        return false;
    };
    std::vector<int> stack = sons(L, q);
    while (!stack.empty()) {
        const int c = stack.back();
        stack.pop_back();
        if (fam.count(c)) continue;
        if (holds_family(c)) {
            for (int s : L.cube(c).children) stack.push_back(s);
            continue;
        }
        append_md(L, c, out);
    }
    return out;
}

inline void sort_unique(std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace detail

/// p₀^{[δ,Q]}(x, μ⌊2B_R, μ⌊2B_R)/Θ(2B_R)² for every cube radius in `radii`, in one pass over y.
inline std::vector<double> far_profile(Point2 x, const DiscreteMeasure& m, double delta, const std::vector<double>& radii, double theta_R) {
    std::vector<double> ys, ds;
    for (const auto& y : m.atoms()) {
        const double dxy = dist(x, y.p);
        if (!(dxy > 0.0)) continue;
        if (std::none_of(radii.begin(), radii.end(), [&](double r) { return in_window(dxy, delta, r); })) continue;
        KahanSum s;
        for (const auto& z : m.atoms()) {
            if (z.p == x || z.p == y.p) continue;
            s.add(z.w * perm_unchecked(KernelParam::finite(0.0), x, y.p, z.p));
        }
        ys.push_back(y.w * s.value());
        ds.push_back(dxy);
    }
    std::vector<double> out;
    for (double r : radii) {
        KahanSum s;
        for (std::size_t i = 0; i < ys.size(); ++i)
            if (in_window(ds[i], delta, r)) s.add(ys[i]);
        out.push_back(s.value() / (theta_R * theta_R));
    }
    return out;
}

inline TreeDecomposition build_tree(const CoronaContext& ctx, int R, Reduction policy = {}) {
    const Lattice& L = ctx.lattice();
    const Params& p = ctx.params();
    const auto& mu = L.measure();
    const Cube& RC = L.cube(R);
    if (!RC.doubling) throw Error("tree root must be a doubling cube");
    TreeDecomposition T;
    T.root = R;
    T.theta_2BR = ctx.theta(R);
    T.line = ctx.line(R);
    RootCache rc(ctx, R, policy);
    T.rule = rc.rule();
    if (RC.leaf) {
        T.terminal = true;
        T.tree = T.dbtree = {R};
        T.good = RC.members;
        std::sort(T.good.begin(), T.good.end());
        return T;
    }

    std::vector<int> queue{R};
    for (std::size_t i = 0; i < queue.size(); ++i) {
        const int q = queue[i];
        T.tree.push_back(q);
        T.perm2[q] = rc.perm2(q);
        const StopVerdict v = full_verdict(rc, p.alpha, q);
        if (v.label != StopLabel::none) {
            T.stop.push_back(q);
            T.verdicts[q] = v;
            switch (v.label) {
                case StopLabel::HD: T.HD.push_back(q); break;
                case StopLabel::LD: T.LD.push_back(q); break;
                case StopLabel::UB: T.UB.push_back(q); break;
                case StopLabel::BP: T.BP.push_back(q); break;
                case StopLabel::BS: T.BS.push_back(q); break;
                case StopLabel::F: T.F.push_back(q); break;
                default: break;
            }
            continue;
        }
        for (int c : L.cube(q).children) queue.push_back(c);
    }
    for (auto& [q, v] : rc.p0_table())
        if (T.perm2.count(q)) T.p0[q] = v;
    std::sort(T.tree.begin(), T.tree.end());
    std::sort(T.stop.begin(), T.stop.end());
    const std::set<int> stop(T.stop.begin(), T.stop.end());
    for (int q : T.tree)
        if (L.cube(q).doubling && !stop.count(q)) T.dbtree.push_back(q);

    std::vector<char> stopped(mu.size(), 0);
    for (int q : T.stop)
        for (int a : L.cube(q).members) stopped[a] = 1;
    for (int a : RC.members)
        if (!stopped[a]) T.good.push_back(a);
    std::sort(T.good.begin(), T.good.end());

    // R_Far over {R} ∪ (Tree \ Stop)
    std::vector<int> carriers{R};
    for (int q : T.tree)
        if (q != R && !stop.count(q)) carriers.push_back(q);
    const double c2 = p.c2_value();
    for (int a : RC.members) {
        std::vector<double> radii;
        for (int q : carriers)
            if (L.cube(q).ball_scaled(56.0).contains(mu[a].p)) radii.push_back(L.cube(q).r);
        if (radii.empty()) continue;
        const auto prof = far_profile(mu[a].p, rc.mu2BR(), p.delta, radii, T.theta_2BR);
        if (std::any_of(prof.begin(), prof.end(), [c2](double v) { return v >= c2; })) T.far.push_back(a);
    }
    std::sort(T.far.begin(), T.far.end());

    for (int q : T.UB) {
        const auto part = detail::ub_tilde_of(L, q, ctx.balance(q)->family);
        T.ub_tilde.insert(T.ub_tilde.end(), part.begin(), part.end());
    }
    for (const auto* fam : {&T.LD, &T.BP, &T.F})
        for (int q : *fam)
            for (int s : detail::sons(L, q)) detail::append_md(L, s, T.o_tilde);
    detail::sort_unique(T.ub_tilde);
    detail::sort_unique(T.o_tilde);
    T.next = T.HD;
    T.next.insert(T.next.end(), T.ub_tilde.begin(), T.ub_tilde.end());
    T.next.insert(T.next.end(), T.o_tilde.begin(), T.o_tilde.end());
    T.next.insert(T.next.end(), T.BS.begin(), T.BS.end());
    detail::sort_unique(T.next);
    return T;
}

/// The (S1)→(S4) verdict of Q inside the tree of R, as the scan would assign it.
inline StopVerdict stopping_classify(const CoronaContext& ctx, int q, int R) {
    const Lattice& L = ctx.lattice();
    if (!L.contains(R, q)) throw Error("stopping_classify needs Q inside R");
    RootCache rc(ctx, R);
    return full_verdict(rc, ctx.params().alpha, q);
}

/// G_R as input to the Lipschitz graph construction.
inline GraphInput graph_input(const Lattice& L, const TreeDecomposition& T) {
    GraphInput in;
    in.lattice = &L;
    in.root = T.root;
    in.dbtree = T.dbtree;
    in.line = T.line;
    return in;
}

// ---------------------------------------------------------------- tree checks

struct TreeChecks {
    bool stop_disjoint = true;
    bool tree_exact = true;     ///< Tree = cubes of R not strictly inside a Stop cube
    bool dbtree_exact = true;   ///< DbTree = doubling ∩ (Tree \ Stop)
    bool next_ok = true;        ///< doubling, ≠ R, inside R, pairwise disjoint
    bool new_good = true;       ///< R \ ∪Next = R \ ∪Stop as atom sets
    bool good_is_zero_d = true; ///< G_R = {d = 0}
    bool density_lower = true;  ///< τΘ_R ≤ Θ_Q on Tree \ (LD ∪ HD)
    double bp_lhs = 0.0, bp_rhs = 0.0;
    bool bp_bound = true;
    double max_density_ratio = 0.0;  ///< max Θ_Q/Θ_R over Tree

    bool all() const { return stop_disjoint && tree_exact && dbtree_exact && next_ok && new_good && good_is_zero_d && density_lower && bp_bound; }
};

inline bool disjoint_family(const Lattice& L, const std::vector<int>& fam) {
    std::vector<int> seen(L.measure().size(), 0);
    for (int q : fam)
        for (int a : L.cube(q).members)
            if (seen[a]++) return false;
    return true;
}

inline TreeChecks verify_tree(const CoronaContext& ctx, const TreeDecomposition& T) {
    const Lattice& L = ctx.lattice();
    const Params& p = ctx.params();
    const auto& mu = L.measure();
    const int R = T.root;
    TreeChecks c;
    c.stop_disjoint = disjoint_family(L, T.stop);
    const std::set<int> stop(T.stop.begin(), T.stop.end());
    std::vector<int> expect;
    for (int q : L.descendants(R)) {
        bool inside = false;
        for (int s = L.cube(q).parent; s >= 0 && !inside; s = L.cube(s).parent) {
            inside = stop.count(s) > 0;
            if (s == R) break;
        }
        if (!inside) expect.push_back(q);
    }
    if (T.terminal) expect = {R};
    c.tree_exact = expect == T.tree;
    std::vector<int> db;
    for (int q : T.tree)
        if (L.cube(q).doubling && !stop.count(q)) db.push_back(q);
    c.dbtree_exact = db == T.dbtree;

    c.next_ok = disjoint_family(L, T.next);
    for (int q : T.next) c.next_ok = c.next_ok && L.cube(q).doubling && q != R && L.contains(R, q);

    std::vector<char> in_next(mu.size(), 0), in_stop(mu.size(), 0);
    for (int q : T.next)
        for (int a : L.cube(q).members) in_next[a] = 1;
    for (int q : T.stop)
        for (int a : L.cube(q).members) in_stop[a] = 1;
    for (int a : L.cube(R).members) c.new_good = c.new_good && in_next[a] == in_stop[a];

    std::vector<int> zero;
    if (!T.dbtree.empty()) {
        const DistanceField f(L, T.dbtree, T.line);
        zero = f.zero_sites();
        std::sort(zero.begin(), zero.end());
    }
    c.good_is_zero_d = zero == T.good;

    const double tr = ctx.theta(R);
    for (int q : T.tree) {
        c.max_density_ratio = std::max(c.max_density_ratio, ctx.theta(q) / tr);
        auto it = T.verdicts.find(q);
        const bool dens = it != T.verdicts.end() && (it->second.label == StopLabel::LD || it->second.label == StopLabel::HD);
        if (!dens && ctx.theta(q) < p.tau * tr) c.density_lower = false;
    }

    KahanSum lhs, rhs;
    for (int q : T.BP) lhs.add(L.cube(q).mass);
    for (auto [q, v] : T.p0) rhs.add(v);
    c.bp_lhs = lhs.value();
    c.bp_rhs = T.terminal ? 0.0 : rhs.value() / (p.alpha * p.alpha * tr * tr);
    c.bp_bound = c.bp_lhs <= c.bp_rhs * (1.0 + 1e-12);
    return c;
}

// ---------------------------------------------------------------- corona

struct CoronaDecomposition {
    std::vector<std::vector<int>> generations;
    std::map<int, TreeDecomposition> trees;  ///< keyed by root
    bool truncated = false;                  ///< k_max reached with Next still nonempty

    std::vector<int> top() const {
        std::vector<int> out;
        for (const auto& g : generations) out.insert(out.end(), g.begin(), g.end());
        std::sort(out.begin(), out.end());
        return out;
    }
};

inline CoronaDecomposition build_top(const CoronaContext& ctx, int k_max = 64) {
    const Lattice& L = ctx.lattice();
    const unsigned workers = Reduction{16, ctx.params().workers}.resolved_workers();
    CoronaDecomposition C;
    std::vector<int> gen{L.root()};
    for (int k = 0; !gen.empty(); ++k) {
        if (k > k_max) {
            C.truncated = true;
            break;
        }
        C.generations.push_back(gen);
        std::vector<TreeDecomposition> built(gen.size());
        if (workers <= 1 || gen.size() == 1) {
            for (std::size_t i = 0; i < gen.size(); ++i) built[i] = build_tree(ctx, gen[i], {16, workers});
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < workers; ++w)
                pool.emplace_back([&, w] {
                    for (std::size_t i = w; i < gen.size(); i += workers) built[i] = build_tree(ctx, gen[i], {16, 1});
                });
            for (auto& t : pool) t.join();
        }
        std::vector<int> next;
        for (auto& T : built) {
            next.insert(next.end(), T.next.begin(), T.next.end());
            C.trees.emplace(T.root, std::move(T));
        }
        detail::sort_unique(next);
        gen = std::move(next);
    }
    return C;
}

/// Each generation-(k+1) cube lies in exactly one generation-k cube, which lists it in Next.
inline bool corona_nested(const Lattice& L, const CoronaDecomposition& C) {
    for (std::size_t k = 1; k < C.generations.size(); ++k)
        for (int q : C.generations[k]) {
            int parents = 0;
            for (int r : C.generations[k - 1])
                if (L.contains(r, q)) {
                    ++parents;
                    const auto& nx = C.trees.at(r).next;
                    if (!std::binary_search(nx.begin(), nx.end(), q)) return false;
                }
            if (parents != 1) return false;
        }
    return true;
}

// ---------------------------------------------------------------- reports

struct IdFlags {
    bool ID_H = false, ID_U = false;
    double hd_fraction = 0.0, ub_fraction = 0.0;
    double lhs = 0.0;         ///< Θ(2B_R)²μ(R)
    double next_sum = 0.0;    ///< Σ_Next Θ(2B_Q)²μ(Q)
    double observed_c = 0.0;  ///< lhs/(τ⁴·next_sum), 0 when Next is empty
};

inline IdFlags id_classify(const CoronaContext& ctx, const TreeDecomposition& T) {
    const Lattice& L = ctx.lattice();
    const double mR = L.cube(T.root).mass;
    auto frac = [&](const std::vector<int>& fam) {
        KahanSum s;
        for (int q : fam) s.add(L.cube(q).mass);
        return s.value() / mR;
    };
    IdFlags f;
    f.hd_fraction = frac(T.HD);
    f.ub_fraction = frac(T.ub_tilde);
    f.ID_H = f.hd_fraction >= 0.25;
    f.ID_U = f.ub_fraction >= 0.25;
    f.lhs = ctx.theta(T.root) * ctx.theta(T.root) * mR;
    KahanSum s;
    for (int q : T.next) s.add(ctx.theta(q) * ctx.theta(q) * L.cube(q).mass);
    f.next_sum = s.value();
    const double t4 = std::pow(ctx.params().tau, 4);
    f.observed_c = f.next_sum > 0.0 ? f.lhs / (t4 * f.next_sum) : 0.0;
    return f;
}

struct StopMass {
    double LD = 0.0, BP = 0.0, F = 0.0, BS = 0.0;  ///< μ(family)/μ(R)
    double far = 0.0;                              ///< μ(R_Far)/μ(R)
    double ld_bound = 0.0, f_bound = 0.0, bs_bound = 0.0, far_bound = 0.0;
    bool ld_ok = true, f_ok = true, bs_ok = true, far_ok = true;
    bool bs_applies = false;  ///< R ∈ T_VF
    double bp_lhs = 0.0, bp_rhs = 0.0;
    bool bp_ok = true;
};

inline StopMass stop_mass_report(const CoronaContext& ctx, const TreeDecomposition& T) {
    const Lattice& L = ctx.lattice();
    const Params& p = ctx.params();
    const double mR = L.cube(T.root).mass;
    auto frac = [&](const std::vector<int>& fam) {
        KahanSum s;
        for (int q : fam) s.add(L.cube(q).mass);
        return s.value() / mR;
    };
    StopMass m;
    m.LD = frac(T.LD);
    m.BP = frac(T.BP);
    m.F = frac(T.F);
    m.BS = frac(T.BS);
    KahanSum fm;
    for (int a : T.far) fm.add(L.measure()[a].w);
    m.far = fm.value() / mR;
    m.ld_bound = std::sqrt(p.tau) / 3.0;
    m.f_bound = std::sqrt(p.alpha);
    m.bs_bound = std::sqrt(p.tau) / 3.0;
    m.far_bound = p.alpha;
    m.ld_ok = m.LD <= m.ld_bound;
    m.f_ok = m.F <= m.f_bound;
    m.bs_applies = T.rule.in_T_VF;
    m.bs_ok = !m.bs_applies || m.BS <= m.bs_bound;
    m.far_ok = m.far <= m.far_bound;
    const auto c = verify_tree(ctx, T);
    m.bp_lhs = c.bp_lhs;
    m.bp_rhs = c.bp_rhs;
    m.bp_ok = c.bp_bound;
    return m;
}

struct PackingSum {
    double sum = 0.0;  ///< Σ_Top Θ(2B_R)²μ(R)
    double p0 = 0.0, p_inf = 0.0;
    double growth = 0.0;       ///< C*
    double growth_term = 0.0;  ///< C*²μ(ℂ)
    double ratio = 0.0;        ///< sum/(p0 + growth_term), the observed right constant
    double c_left = 0.0;       ///< p_∞/sum
};

inline PackingSum packing_sum(const CoronaContext& ctx, const CoronaDecomposition& C, Reduction policy = {}) {
    const Lattice& L = ctx.lattice();
    const auto& mu = L.measure();
    PackingSum s;
    KahanSum acc;
    for (int r : C.top()) acc.add(ctx.theta(r) * ctx.theta(r) * L.cube(r).mass);
    s.sum = acc.value();
    s.p0 = perm_measure(KernelParam::finite(0.0), mu, 0.0, policy).value;
    s.p_inf = perm_measure(KernelParam::infinity(), mu, 0.0, policy).value;
    s.growth = linear_growth_constant(mu);
    s.growth_term = s.growth * s.growth * total_mass(mu);
    s.ratio = s.sum / (s.p0 + s.growth_term);
    s.c_left = s.sum > 0.0 ? s.p_inf / s.sum : 0.0;
    return s;
}

struct BetaPacking {
    double lhs = 0.0;  ///< Σ_Q β₂(2B_Q)²Θ(2B_Q)μ(Q)
    double c2 = 0.0;   ///< c²(μ)
    double mass = 0.0;
    double ratio = 0.0;  ///< lhs/(c² + μ(ℂ))
};

inline BetaPacking beta_packing_sum(const Lattice& L, Reduction policy = {}) {
    const auto& mu = L.measure();
    BetaPacking b;
    KahanSum s;
    for (const auto& q : L.cubes()) {
        const double beta = beta2(mu, q.ball_scaled(56.0)).beta;
        s.add(beta * beta * L.theta_2BQ(q.id) * q.mass);
    }
    b.lhs = s.value();
    b.c2 = curvature_squared(mu, 0.0, policy);
    b.mass = total_mass(mu);
    b.ratio = b.lhs / (b.c2 + b.mass);
    return b;
}

struct BetaPermRecord {
    int cube = -1;
    double lhs = 0.0;        ///< β²Θ on 2B_Q
    double eps_term = 0.0;   ///< 4ε²Θ²
    double perm_term = 0.0;  ///< p₀^{[δ,Q]}(μ⌊2B_Q)/μ(Q)
    double needed_C = 0.0;   ///< (lhs − eps_term)/perm_term, 0 when lhs ≤ eps_term
};

struct BetaPermFit {
    double eps = 0.0;
    std::vector<BetaPermRecord> records;
    double fitted_C = 0.0;
    std::size_t unbounded = 0;  ///< cubes needing C = ∞ (remainder with vanishing permutations)
};

/// Fits C(ε,γ) in β²Θ ≤ 4ε²Θ² + C·p₀^{[δ,Q]}/μ(Q) over the γ-balanced non-leaf doubling cubes.
inline BetaPermFit beta_perm_fit(const CoronaContext& ctx, double eps = -1.0, Reduction policy = {}) {
    const Lattice& L = ctx.lattice();
    const Params& p = ctx.params();
    const auto& mu = L.measure();
    BetaPermFit fit;
    fit.eps = eps > 0.0 ? eps : std::sqrt(2.0) / 4.0 * p.eps0;
    for (const auto& q : L.cubes()) {
        if (!q.doubling || q.leaf || !ctx.balanced(q.id)) continue;
        BetaPermRecord r;
        r.cube = q.id;
        const auto m2 = restrict(mu, q.ball_scaled(56.0));
        const double th = ctx.theta(q.id), beta = beta2(mu, q.ball_scaled(56.0)).beta;
        r.lhs = beta * beta * th;
        r.eps_term = 4.0 * fit.eps * fit.eps * th * th;
        r.perm_term = perm_truncated_window(m2, m2, m2, p.delta, q.r, policy).value / q.mass;
        const double rem = r.lhs - r.eps_term;
        if (rem > 0.0) {
            if (r.perm_term > 0.0) r.needed_C = rem / r.perm_term;
            else ++fit.unbounded;
        }
        fit.fitted_C = std::max(fit.fitted_C, r.needed_C);
        fit.records.push_back(r);
    }
    return fit;
}

}  // namespace gmt
