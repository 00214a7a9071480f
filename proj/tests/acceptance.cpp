// Acceptance run: one spec per criterion, one PASS/FAIL line each.
// Verdicts are recomputed from the report records against the tolerances pinned below.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gmt/experiments.hpp"

#ifndef GMT_SPEC_DIR
#define GMT_SPEC_DIR "experiments/specs"
#endif

using namespace gmt;

namespace {

namespace tol {
constexpr double identity_rel = 1e-10;
constexpr double anchor_rel = 1e-15;
constexpr double comparison_slack = 1e-12;
constexpr double sign_floor = -1e-10;
constexpr double collinear_scale = 1e-14;
constexpr double max_drift = 2.0;
constexpr double oracle_rel = 1e-10;
constexpr double lipschitz = 1.0;
constexpr double support_diam = 12.0;
constexpr double pou = 1e-12;
constexpr double rotation_rel = 1e-12;
}  // namespace tol

// Wall-clock budgets in milliseconds.
namespace budget {
constexpr double c1 = 1e3, c2 = 1e3, c3 = 30e3, c4 = 1e3, c5 = 5e3, c6 = 120e3, c7 = 10e3;
constexpr double c8_cantor3 = 300e3, c9 = 60e3, c10 = 600e3, c11 = 300e3, c12 = 600e3, c13 = 300e3;
}  // namespace budget

// Criteria expected to stay red; the reason is printed with the line.
const std::set<int> known_red{9};
const char* known_red_reason =
    "lines L_Q are fitted on 2B_Q (radius 56 r(Q)) and sit off the data by a fraction of diam(Q), while Whitney intervals "
    "shrink to the resolution floor, so F moves by that offset across about one interval (measured 15 at n=100, 34 at "
    "n=200). Terminal leaf trees hit the floor at once and F stays nonzero across the sampled 13 diam(R). At n=50 and "
    "n=400 every tree is a single atom or has F = 0, so those sizes would pass without testing anything.";

struct Verdict {
    bool ok = true;
    std::ostringstream why;
    std::string failed;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            failed += " [" + what + "]";
        }
    }
};

std::string fmt(double x) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3g", x);
    return b;
}

double num(const ojson& row, const char* key) { return row.at(key).get<double>(); }

void timed(Verdict& v, const Report& r, double limit) {
    v.why << "; " << fmt(r.total_ms()) << " ms (limit " << fmt(limit) << ")";
    v.require(r.total_ms() < limit, "over time budget");
}

struct Criterion {
    int id;
    std::string title;
    std::string spec;
    std::function<void(const Report&, Verdict&)> check;
};

std::vector<Criterion> criteria() {
    std::vector<Criterion> c;
    c.push_back({1, "curvature identity p_inf = c^2/4", "c01_curvature_identity", [](const Report& r, Verdict& v) {
                     const auto& s = r.records.at(0);
                     const auto& a = r.records.at(1);
                     const double e = std::max(num(s, "max_rel_error"), num(s, "max_rel_error_menger"));
                     v.require(s.at("triples").get<std::uint64_t>() >= 100000, "fewer than 1e5 triples");
                     v.require(e <= tol::identity_rel, "relative error");
                     v.require(std::abs(num(a, "p_inf") - 0.5) <= tol::anchor_rel * 0.5, "anchor p_inf");
                     v.require(std::abs(num(a, "c") - std::sqrt(2.0)) <= tol::anchor_rel * std::sqrt(2.0), "anchor c");
                     v.why << "max rel err " << fmt(e) << " <= " << fmt(tol::identity_rel) << ", anchor p=" << num(a, "p_inf")
                           << " c=" << fmt(num(a, "c"));
                     timed(v, r, budget::c1);
                 }});
    c.push_back({2, "comparison p_0 <= 2 p_inf", "c02_comparison", [](const Report& r, Verdict& v) {
                     const auto& s = r.records.at(0);
                     v.require(s.at("triples").get<std::uint64_t>() >= 100000, "fewer than 1e5 triples");
                     v.require(num(s, "max_excess") <= tol::comparison_slack, "excess");
                     v.why << "max (p0 - 2p_inf) " << fmt(num(s, "max_excess")) << " <= " << fmt(tol::comparison_slack);
                     timed(v, r, budget::c2);
                 }});
    c.push_back({3, "sign dichotomy of p_t", "c03_sign_dichotomy", [](const Report& r, Verdict& v) {
                     const std::set<double> nonneg{-3, -2, 0, 0.5, 1, 5}, neg{-1, -0.75, -0.5};
                     std::set<double> seen;
                     double worst_nonneg = INFINITY;
                     for (const auto& row : r.records) {
                         const double t = num(row, "t"), m = num(row, "min");
                         seen.insert(t);
                         if (neg.count(t)) v.require(m < 0.0, "no negative witness at t=" + fmt(t));
                         if (nonneg.count(t)) {
                             v.require(m >= tol::sign_floor, "negative value at t=" + fmt(t));
                             worst_nonneg = std::min(worst_nonneg, m);
                         }
                     }
                     for (double t : nonneg) v.require(seen.count(t) > 0, "t=" + fmt(t) + " not scanned");
                     for (double t : neg) v.require(seen.count(t) > 0, "t=" + fmt(t) + " not scanned");
                     v.why << "min over t outside (-2,0) " << fmt(worst_nonneg) << " >= " << fmt(tol::sign_floor)
                           << ", witnesses for t in {-1,-0.75,-0.5}";
                     timed(v, r, budget::c3);
                 }});
    c.push_back({4, "zero-line counts", "c04_zero_lines", [](const Report& r, Verdict& v) {
                     for (const auto& row : r.records) {
                         const double t = num(row, "t");
                         const std::size_t want = (t < -1.0 || t >= 0.0) ? 1 : (t == -1.0 ? 2 : 3);
                         v.require(row.at("count").get<std::size_t>() == want, "count at t=" + fmt(t));
                     }
                     v.require(r.records.size() == 10, "expected 10 t values");
                     v.why << r.records.size() << " t values, integer counts match";
                     timed(v, r, budget::c4);
                 }});
    c.push_back({5, "collinear measures vanish", "c05_collinearity", [](const Report& r, Verdict& v) {
                     double worst = 0.0;
                     std::set<std::string> ms;
                     for (const auto& row : r.records) {
                         const auto rec = row.at("measure").get<std::string>();
                         ms.insert(rec);
                         const double scale = load_or_generate(rec, r.spec.seed).scale();
                         v.require(std::abs(num(row, "value")) <= tol::collinear_scale * scale, rec);
                         worst = std::max(worst, std::abs(num(row, "value")));
                     }
                     for (const auto& rec : corpus("lines")) v.require(ms.count(rec) > 0, rec + " missing");
                     v.why << ms.size() << " line measures, max |value| " << fmt(worst);
                     timed(v, r, budget::c5);
                 }});
    c.push_back({6, "operator identity remainder stable", "c06_mv_identity", [](const Report& r, Verdict& v) {
                     double worst = 1.0;
                     for (const auto& row : r.records) {
                         v.require(std::isfinite(num(row, "normalized_remainder")), "non-finite remainder");
                         worst = std::max(worst, num(row, "drift_from_previous"));
                     }
                     v.require(worst <= tol::max_drift, "drift");
                     v.why << "worst drift " << fmt(worst) << " <= " << fmt(tol::max_drift);
                     timed(v, r, budget::c6);
                 }});
    c.push_back({7, "brute-force oracle equivalence", "c07_oracle_equivalence", [](const Report& r, Verdict& v) {
                     double worst = 0.0;
                     for (const auto& row : r.records) worst = std::max(worst, num(row, "rel_error"));
                     v.require(worst <= tol::oracle_rel, "relative error");
                     v.require(!r.records.empty(), "no records");
                     v.why << r.records.size() << " comparisons, max rel err " << fmt(worst);
                     timed(v, r, budget::c7);
                 }});
    c.push_back({8, "corona structure", "c08_corona_structure", [](const Report& r, Verdict& v) {
                     bool segment = false;
                     double cantor3 = 0.0;
                     for (const auto& row : r.records) {
                         const auto rec = row.at("measure").get<std::string>();
                         v.require(row.at("checks_pass").get<bool>(), rec);
                         if (rec == "segment:n=64") {
                             segment = true;
                             v.require(row.at("stop_cubes").get<int>() == 0, "segment Stop nonempty");
                             v.require(num(row, "max_abs_F") == 0.0, "segment F nonzero");
                         }
                     }
                     for (const auto& [k, ms] : r.wall_ms)
                         if (k == "cantor4:level=3") cantor3 = ms;
                     v.require(segment, "segment missing");
                     v.require(r.flag_value("corona_nested"), "nesting");
                     v.require(cantor3 > 0.0 && cantor3 < budget::c8_cantor3, "cantor4(3) time");
                     v.why << r.records.size() << " measures, all tree checks hold, segment Stop empty and F = 0; cantor4(3) "
                           << fmt(cantor3) << " ms";
                 }});
    c.push_back({9, "Lipschitz graph at default parameters", "c09_lipschitz_graph", [](const Report& r, Verdict& v) {
                     double lip = 0.0, supp = 0.0, pou = 0.0;
                     bool whitney = true;
                     for (const auto& row : r.records) {
                         if (row.at("params") != "spec") continue;
                         lip = std::max(lip, num(row, "lipschitz_estimate"));
                         supp = std::max(supp, num(row, "support_over_diam"));
                         pou = std::max(pou, num(row, "pou_max_error"));
                     }
                     std::size_t intervals = 0;
                     for (const auto& row : r.records)
                         if (row.at("params") == "spec") intervals += row.at("intervals").get<std::size_t>();
                     whitney = r.flag_value("whitney_5_50");
                     v.require(intervals > 0, "vacuous: no Whitney intervals built");
                     v.require(lip <= tol::lipschitz, "Lipschitz " + fmt(lip) + " > 1");
                     v.require(supp <= tol::support_diam, "support " + fmt(supp) + " diam > 12 diam");
                     v.require(pou <= tol::pou, "partition of unity");
                     v.require(whitney, "Whitney bounds");
                     v.why << intervals << " intervals, Lipschitz " << fmt(lip) << ", support " << fmt(supp) << " diam, PoU err " << fmt(pou)
                           << ", Whitney " << (whitney ? "ok" : "violated");
                     timed(v, r, budget::c9);
                 }});
    c.push_back({10, "packing sandwich", "c10_packing_sandwich", [](const Report& r, Verdict& v) {
                     double worst = 1.0, cl = 0.0, cr = 0.0;
                     for (const auto& row : r.records) {
                         if (row.contains("refine")) {
                             worst = std::max({worst, num(row, "drift_c_left"), num(row, "drift_c_right")});
                             continue;
                         }
                         v.require(std::isfinite(num(row, "c_left")) && std::isfinite(num(row, "c_right")), "non-finite constant");
                         cl = std::max(cl, num(row, "c_left"));
                         cr = std::max(cr, num(row, "c_right"));
                     }
                     v.require(worst <= tol::max_drift, "drift");
                     v.why << "max c_left " << fmt(cl) << ", max c_right " << fmt(cr) << ", refinement drift " << fmt(worst);
                     timed(v, r, budget::c10);
                 }});
    c.push_back({11, "beta packing", "c11_beta_packing", [](const Report& r, Verdict& v) {
                     double worst = 0.0;
                     for (const auto& row : r.records) {
                         v.require(std::isfinite(num(row, "ratio")), "non-finite ratio");
                         if (row.at("line_supported").get<bool>()) v.require(num(row, "lhs") == 0.0, "line lhs nonzero");
                         worst = std::max(worst, num(row, "ratio"));
                     }
                     v.why << "max ratio " << fmt(worst) << ", line measures exactly 0";
                     timed(v, r, budget::c11);
                 }});
    c.push_back({12, "four-corner Cantor growth", "c12_cantor_growth", [](const Report& r, Verdict& v) {
                     double prev = 0.0;
                     std::ostringstream seq;
                     for (const auto& row : r.records) {
                         const double p = num(row, "p_inf");
                         v.require(p > prev, "not increasing at level " + std::to_string(row.at("level").get<int>()));
                         v.require(num(row, "collinear_control") == 0.0, "control nonzero");
                         seq << (prev == 0.0 ? "" : " < ") << fmt(p);
                         prev = p;
                     }
                     v.require(r.records.size() == 4, "expected levels 1..4");
                     const double s = 0.75;  // corner spacing at level 1
                     v.require(std::abs(num(r.records.at(0), "p_inf") - 24.0 / 64.0 * (2.0 / (s * s)) / 4.0) <= 1e-14, "level-1 value");
                     v.why << "p_inf " << seq.str() << ", control 0";
                     timed(v, r, budget::c12);
                 }});
    c.push_back({13, "bi-Lipschitz comparison", "c13_bilipschitz", [](const Report& r, Verdict& v) {
                     double worst = 0.0;
                     std::set<double> Ls;
                     for (const auto& row : r.records) {
                         const auto map = row.at("map").get<std::string>();
                         if (map == "rotate_0.3")
                             v.require(num(row, "rel_error") <= tol::rotation_rel, "rotation");
                         else if (num(row, "L") == 1.0)
                             v.require(num(row, "c2_mapped") == num(row, "c2"), map + " not exact");
                         else
                             Ls.insert(num(row, "L"));
                         v.require(std::isfinite(num(row, "ratio")), "non-finite ratio");
                         worst = std::max(worst, num(row, "ratio"));
                     }
                     v.require(Ls == std::set<double>{1.1, 1.2, 1.5}, "L set");
                     v.why << "max ratio " << fmt(worst) << ", isometries exact";
                     timed(v, r, budget::c13);
                 }});
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : GMT_SPEC_DIR;
    const std::string out = argc > 2 ? argv[2] : "acceptance_reports";
    int unexpected = 0;
    for (const auto& c : criteria()) {
        Verdict v;
        try {
            const auto spec = load_spec((std::filesystem::path(dir) / (c.spec + ".json")).string());
            const Report r = run(spec);
            write_report(r, out, "json");
            c.check(r, v);
        } catch (const std::exception& e) {
            v.require(false, std::string("error: ") + e.what());
        }
        const bool red = known_red.count(c.id) > 0;
        std::cout << (v.ok ? "PASS" : "FAIL") << "  " << c.id << ". " << c.title << ": " << v.why.str() << v.failed;
        if (red && !v.ok) std::cout << "\n      known red: " << known_red_reason;
        if (red && v.ok) std::cout << "  (listed as known red, now passing)";
        std::cout << std::endl;
        if (!v.ok && !red) ++unexpected;
    }
    std::cout << (unexpected ? "unexpected failures: " + std::to_string(unexpected) : std::string("no unexpected failures")) << '\n';
    return unexpected ? 1 : 0;
}
