#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "corona.hpp"
#include "graphfit.hpp"
#include "lattice.hpp"
#include "measure_io.hpp"
#include "sio.hpp"

namespace gmt {

using ojson = nlohmann::ordered_json;

inline ojson to_json(Point2 p) { return ojson::array({p.x, p.y}); }

inline ojson to_json(const Line& l) {
    return ojson{{"anchor", to_json(l.anchor)}, {"direction", to_json(l.direction)}, {"angle", l.angle()}};
}

inline ojson params_to_json(const Params& p) {
    return ojson{{"tau", p.tau},   {"A", p.A},       {"theta0", p.theta0}, {"gamma", p.gamma}, {"eps0", p.eps0},
                 {"alpha", p.alpha}, {"delta", p.delta}, {"C0", p.C0},       {"A0", p.A0},       {"C_F", p.C_F},
                 {"c2", p.c2_value()}, {"rho1", p.rho1}, {"rho2", p.rho2},   {"workers", p.workers}};
}

/// Overrides the named fields; unknown keys are rejected.
inline Params params_from_json(const nlohmann::json& j, Params p = {}) {
    if (j.is_null()) return p;
    if (!j.is_object()) throw Error("params must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (k == "workers") {
            p.workers = v.get<unsigned>();
            continue;
        }
        double* slot = k == "tau"      ? &p.tau
                       : k == "A"      ? &p.A
                       : k == "theta0" ? &p.theta0
                       : k == "gamma"  ? &p.gamma
                       : k == "eps0"   ? &p.eps0
                       : k == "alpha"  ? &p.alpha
                       : k == "delta"  ? &p.delta
                       : k == "C0"     ? &p.C0
                       : k == "A0"     ? &p.A0
                       : k == "C_F"    ? &p.C_F
                       : k == "c2"     ? &p.c2
                       : k == "rho1"   ? &p.rho1
                       : k == "rho2"   ? &p.rho2
                                       : nullptr;
        if (!slot) throw Error("unknown parameter: " + k);
        *slot = v.get<double>();
    }
    p.validate();
    return p;
}

inline ojson to_json(const Lattice& L) {
    ojson j;
    j["C0"] = L.C0();
    j["A0"] = L.A0();
    j["unit"] = L.unit();
    j["depth"] = L.depth();
    auto& cubes = j["cubes"] = ojson::array();
    for (const auto& q : L.cubes())
        cubes.push_back({{"id", q.id},
                         {"level", q.level},
                         {"parent", q.parent},
                         {"center", to_json(q.center)},
                         {"r", q.r},
                         {"mass", q.mass},
                         {"diam", q.diam},
                         {"doubling", q.doubling},
                         {"doubling_literal", q.doubling_literal},
                         {"leaf", q.leaf},
                         {"members", q.members},
                         {"theta_2BQ", L.theta_2BQ(q.id)}});
    const auto& rep = L.report();
    j["report"] = {{"sibling_fraction", rep.sibling_fraction()}, {"violations", rep.violations.size()}};
    return j;
}

inline ojson to_json(const StopVerdict& v) { return ojson{{"label", label_name(v.label)}, {"evidence", v.evidence}}; }

inline ojson to_json(const TreeChecks& c) {
    return ojson{{"stop_disjoint", c.stop_disjoint}, {"tree_exact", c.tree_exact},     {"dbtree_exact", c.dbtree_exact},
                 {"next_ok", c.next_ok},             {"new_good", c.new_good},         {"good_is_zero_d", c.good_is_zero_d},
                 {"density_lower", c.density_lower}, {"bp_lhs", c.bp_lhs},             {"bp_rhs", c.bp_rhs},
                 {"bp_bound", c.bp_bound},           {"max_density_ratio", c.max_density_ratio}};
}

/// One tree: families sorted by cube id, verdicts keyed by id.
inline ojson to_json(const TreeDecomposition& T) {
    ojson j;
    j["root"] = T.root;
    j["terminal"] = T.terminal;
    j["theta_2BR"] = T.theta_2BR;
    j["line"] = to_json(T.line);
    j["theta_rule"] = {{"in_T_VF", T.rule.in_T_VF}, {"theta", T.rule.theta}, {"theta_V", T.rule.theta_V}};
    j["tree"] = T.tree;
    j["dbtree"] = T.dbtree;
    j["stop"] = T.stop;
    for (const auto& [name, fam] : {std::pair<const char*, const std::vector<int>*>{"HD", &T.HD}, {"LD", &T.LD}, {"UB", &T.UB},
                                    {"BP", &T.BP}, {"BS", &T.BS}, {"F", &T.F}, {"UB_tilde", &T.ub_tilde}, {"O_tilde", &T.o_tilde},
                                    {"next", &T.next}})
        j["families"][name] = *fam;
    auto& v = j["verdicts"] = ojson::array();
    for (const auto& [q, sv] : T.verdicts) {
        ojson row = to_json(sv);
        row["cube"] = q;
        v.push_back(row);
    }
    j["good"] = T.good;
    j["far"] = T.far;
    auto& perm = j["perm2"] = ojson::array();
    for (const auto& [q, x] : T.perm2) perm.push_back({{"cube", q}, {"perm2", x}, {"p0", T.p0.at(q)}});
    return j;
}

inline ojson to_json(const CoronaDecomposition& C, const CoronaContext* ctx = nullptr) {
    ojson j;
    j["generations"] = C.generations;
    j["truncated"] = C.truncated;
    auto& trees = j["trees"] = ojson::array();
    std::vector<int> roots;
    for (const auto& [r, t] : C.trees) roots.push_back(r);
    const auto& L = ctx ? &ctx->lattice() : nullptr;
    std::sort(roots.begin(), roots.end(), [&](int a, int b) {
        if (L && L->cube(a).level != L->cube(b).level) return L->cube(a).level < L->cube(b).level;
        return a < b;
    });
    for (int r : roots) {
        ojson t = to_json(C.trees.at(r));
        if (ctx) t["checks"] = to_json(verify_tree(*ctx, C.trees.at(r)));
        trees.push_back(std::move(t));
    }
    return j;
}

inline ojson to_json(const PackingSum& s) {
    return ojson{{"sum", s.sum},       {"p0", s.p0},     {"p_inf", s.p_inf}, {"growth", s.growth},
                 {"growth_term", s.growth_term}, {"c_right", s.ratio}, {"c_left", s.c_left}};
}

inline ojson to_json(const BetaPacking& b) {
    return ojson{{"lhs", b.lhs}, {"c2", b.c2}, {"mass", b.mass}, {"ratio", b.ratio}};
}

inline ojson to_json(const StopMass& m) {
    return ojson{{"LD", m.LD},           {"BP", m.BP},           {"F", m.F},           {"BS", m.BS},
                 {"far", m.far},         {"ld_ok", m.ld_ok},     {"f_ok", m.f_ok},     {"bs_applies", m.bs_applies},
                 {"bs_ok", m.bs_ok},     {"far_ok", m.far_ok},   {"bp_lhs", m.bp_lhs}, {"bp_rhs", m.bp_rhs},
                 {"bp_ok", m.bp_ok}};
}

inline ojson to_json(const IdFlags& f) {
    return ojson{{"ID_H", f.ID_H}, {"ID_U", f.ID_U}, {"hd_fraction", f.hd_fraction}, {"ub_fraction", f.ub_fraction},
                 {"lhs", f.lhs},   {"next_sum", f.next_sum}, {"observed_c", f.observed_c}};
}

inline ojson to_json(const MvReport& r) {
    return ojson{{"lhs", r.lhs}, {"p_third", r.p_third}, {"remainder", r.remainder}, {"normalized_remainder", r.normalized_remainder},
                 {"growth", r.growth}, {"mass", r.mass}};
}

inline ojson to_json(const Theorem1Ratios& r) {
    return ojson{{"sup_inf", r.sup_inf}, {"sup_0", r.sup_0}, {"mass", r.mass}, {"growth", r.growth},
                 {"ratio_fwd", r.ratio_fwd}, {"ratio_bwd", r.ratio_bwd}};
}

inline ojson to_json(const LipschitzGraph& g) {
    return ojson{{"intervals", g.cover.intervals.size()},
                 {"unresolved", g.cover.unresolved},
                 {"neighbor_ratio", g.cover.neighbor_ratio},
                 {"good_points", g.good_u.size()},
                 {"injective", g.injective},
                 {"lipschitz_estimate", g.lipschitz_estimate},
                 {"lipschitz_bound", g.lipschitz_bound},
                 {"support_radius", g.support_radius},
                 {"diam_R", g.cover.diam_R},
                 {"samples", g.samples}};
}

}  // namespace gmt
