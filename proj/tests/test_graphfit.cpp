#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gmt/generators.hpp"
#include "gmt/graphfit.hpp"

using namespace gmt;

namespace {

int find_cube(const Lattice& L, int level, int center_atom) {
    for (int id : L.levels().at(level))
        if (L.cube(id).center_atom == center_atom) return id;
    return -1;
}

// Every doubling cube counts as DbTree: no stopping at all.
GraphInput all_doubling(const Lattice& L) {
    GraphInput in;
    in.lattice = &L;
    in.root = L.root();
    for (const auto& q : L.cubes())
        if (q.doubling) in.dbtree.push_back(q.id);
    in.line = cube_line(L, L.root());
    return in;
}

DiscreteMeasure gapped_segment() {
    std::vector<Atom> a;
    for (int i = 0; i <= 40; ++i) a.push_back({{0.01 * i, 0}, 0.01});
    for (int i = 0; i <= 40; ++i) a.push_back({{0.6 + 0.01 * i, 0}, 0.01});
    return DiscreteMeasure(a, 0.0005);
}

// Σ w·dist² to the line through c at angle φ, in long double.
long double residual(const std::vector<Atom>& in, Point2 c, double phi) {
    long double s = 0;
    const long double nx = -std::sin(phi), ny = std::cos(phi);
    for (const auto& a : in) {
        const long double o = (a.p.x - c.x) * nx + (a.p.y - c.y) * ny;
        s += a.w * o * o;
    }
    return s;
}

}  // namespace

TEST(Beta2, Examples) {
    const DiscreteMeasure line({{{0, 0}, 1}, {{1, 1}, 2}, {{2, 2}, 1}, {{-3, -3}, 1}}, 0.5);
    const auto b = beta2(line, {{0, 0}, 10});
    EXPECT_EQ(b.beta, 0.0);
    EXPECT_NEAR(b.best_line.angle(), std::numbers::pi / 4, 1e-15);
    EXPECT_NEAR(b.best_line.distance({5, 5}), 0.0, 1e-14);

    const DiscreteMeasure tri({{{-1, 0}, 1}, {{0, 0.6}, 1}, {{1, 0}, 1}}, 0.5);
    const auto t = beta2(tri, {{0, 0}, 2});
    EXPECT_NEAR(t.beta * t.beta, 0.03, 1e-15);
    EXPECT_NEAR(t.beta, 0.17320508075688773, 1e-15);
    EXPECT_NEAR(t.best_line.offset({0, 0.2}), 0.0, 1e-15);

    EXPECT_EQ(beta2(DiscreteMeasure({{{0.3, 0.4}, 2}}, 0.1), {{0, 0}, 1}).beta, 0.0);
    EXPECT_TRUE(beta2(tri, {{10, 10}, 1}).empty);
}

TEST(Beta2, EigenSolutionIsTheMinimizer) {
    std::mt19937_64 rng(17);
    int tested = 0;
    for (const char* rec : {"graph:n=120,slope=0.4,noise=0.02", "cantor4:level=3", "circle:n=80"}) {
        const auto mu = generate(rec, 5);
        for (int k = 0; k < 17; ++k) {
            const Point2 c = mu[static_cast<std::size_t>(rng() % mu.size())].p;
            const Ball B{c, 0.05 + 0.6 * unit_uniform(rng)};
            const auto b = beta2(mu, B);
            std::vector<Atom> in;
            KahanSum m, cx, cy;
            for (const auto& a : mu.atoms())
                if (B.contains(a.p)) in.push_back(a), m.add(a.w), cx.add(a.w * a.p.x), cy.add(a.w * a.p.y);
            const Point2 cen{cx.value() / m.value(), cy.value() / m.value()};
            // coarse scan then golden section on the angle
            double best_phi = 0;
            long double best = residual(in, cen, 0);
            for (int i = 1; i < 720; ++i) {
                const double phi = std::numbers::pi * i / 720;
                const long double r = residual(in, cen, phi);
                if (r < best) best = r, best_phi = phi;
            }
            double lo = best_phi - std::numbers::pi / 720, hi = best_phi + std::numbers::pi / 720;
            const double g = (std::sqrt(5.0) - 1) / 2;
            for (int it = 0; it < 100; ++it) {
                const double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
                if (residual(in, cen, x1) < residual(in, cen, x2)) hi = x2;
                else lo = x1;
            }
            best = std::min(best, residual(in, cen, 0.5 * (lo + hi)));
            EXPECT_LE(b.min_sum, (double)best * (1 + 1e-9) + 1e-300);
            const double r3 = B.radius * B.radius * B.radius;
            EXPECT_NEAR(b.beta * b.beta * r3, b.min_sum, 1e-10 * b.min_sum + 1e-300);
            EXPECT_LE(b.beta * b.beta, 4 * density(mu, B).value);
            ++tested;
        }
    }
    EXPECT_GE(tested, 50);
}

TEST(DistanceFunctions, Examples) {
    const DiscreteMeasure mu({{{0, 0}, 1}, {{0.004, 0}, 1}, {{0.008, 0}, 1}, {{0.06, 0}, 4}, {{1, 0}, 0.1}}, 0.001);
    const auto L = Lattice::build(mu);
    const int wide = find_cube(L, 1, 0), point = find_cube(L, 3, 4);
    ASSERT_TRUE(wide >= 0 && point >= 0);
    const std::vector<int> db{wide, point};
    EXPECT_EQ(d_function({1, 0}, L, db), 0.0);
    EXPECT_NEAR(d_function({0.52, 0}, L, db), 0.48, 1e-15);
    EXPECT_NEAR(d_function({0.3, 0}, L, db), 0.24 + 0.06, 1e-15);
    EXPECT_NEAR(d_function({50, 0}, L, db), 49.0, 1e-12);
    const Line LR = Line::through({0, 0}, {1, 0});
    EXPECT_EQ(D_function(1.0, L, db, LR), 0.0);
    EXPECT_NEAR(D_function(40.0, L, db, LR), 39.0, 1e-12);
    EXPECT_THROW(d_function({0, 0}, L, {}), Error);
    EXPECT_THROW(D_function(0, L, {}, LR), Error);
}

TEST(DistanceFunctions, FieldMatchesDefinitionAndDBelowD) {
    const auto mu = generate("graph:n=150,slope=0.3,noise=0.01", 2);
    const auto L = Lattice::build(mu);
    auto in = all_doubling(L);
    in.dbtree.erase(in.dbtree.begin());  // drop the root so the field is not trivial
    const DistanceField f(L, in.dbtree, in.line);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const Point2 z{3 * unit_uniform(rng) - 1, 2 * unit_uniform(rng) - 1};
        const double d = d_function(z, L, in.dbtree);
        EXPECT_NEAR(f.d(z), d, 1e-14);
        const double u = in.line.coordinate(z);
        const double D = D_function(u, L, in.dbtree, in.line);
        EXPECT_NEAR(f.D(u), D, 1e-14);
        EXPECT_LE(D, d + 1e-14);
    }
}

TEST(Whitney, GapIsTiledByDyadicIntervals) {
    const auto mu = gapped_segment();
    const auto L = Lattice::build(mu);
    const auto in = all_doubling(L);
    const auto cov = whitney_cover(in);
    const DistanceField f(L, in.dbtree, in.line);
    ASSERT_FALSE(cov.intervals.empty());
    const double top = std::ldexp(1.0, static_cast<int>(std::ceil(std::log2(64.0 * cov.diam_R))));
    int inside_gap = 0;
    for (std::size_t i = 0; i < cov.intervals.size(); ++i) {
        const auto& J = cov.intervals[i];
        const double k = std::log2(top / J.len());
        EXPECT_NEAR(k, std::round(k), 1e-9);
        if (i > 0) {
            EXPECT_LE(cov.intervals[i - 1].hi, J.lo);
        }
        const double a = in.line.coordinate({0.4, 0}), b = in.line.coordinate({0.6, 0});
        if (J.lo >= std::min(a, b) && J.hi <= std::max(a, b)) ++inside_gap;
    }
    EXPECT_GT(inside_gap, 0);
    // every point of the gap with D ≥ 50 ℓ_min lies in some interval
    for (int i = 0; i <= 400; ++i) {
        const double u = in.line.coordinate({0.4 + 0.2 * i / 400.0, 0});
        if (f.D(u) < 50 * cov.ell_min) continue;
        bool hit = false;
        for (const auto& J : cov.intervals) hit = hit || (J.lo <= u && u <= J.hi);
        EXPECT_TRUE(hit) << u;
    }
    EXPECT_THROW(whitney_cover(in, 0.0, 3), Error);
}

TEST(Whitney, DistanceBoundsOnFifteenJ) {
    for (const char* rec : {"graph:n=150,slope=0.2", "cantor4:level=3"}) {
        const auto mu = generate(rec);
        const auto L = Lattice::build(mu);
        const auto in = all_doubling(L);
        const auto cov = whitney_cover(in);
        const DistanceField f(L, in.dbtree, in.line);
        for (const auto& J : cov.intervals)
            for (int s = 0; s <= 30; ++s) {
                const double u = J.center() - 7.5 * J.len() + 15 * J.len() * s / 30.0;
                const double D = f.D(u);
                EXPECT_GE(D, 5 * J.len() * (1 - 1e-12));
                EXPECT_LE(D, 50 * J.len() * (1 + 1e-12));
            }
        EXPECT_LE(cov.neighbor_ratio, 64.0);
    }
}

TEST(PartitionOfUnity, Examples) {
    const auto mu = gapped_segment();
    const auto L = Lattice::build(mu);
    const auto cov = whitney_cover(all_doubling(L));
    const BumpIndex idx(cov);
    const auto far = partition_of_unity(cov, idx, cov.u0 + 1e6);
    EXPECT_FALSE(far.covered);
    EXPECT_TRUE(far.weights.empty());
    std::mt19937_64 rng(9);
    for (int i = 0; i < 5000; ++i) {
        const double u = cov.u0 + 40 * unit_uniform(rng) - 20;
        const auto w = partition_of_unity(cov, idx, u);
        if (!w.covered) continue;
        double s = 0;
        for (auto [k, x] : w.weights) {
            EXPECT_GT(x, 0.0);
            EXPECT_LE(x, 1.0);
            s += x;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
        const auto slow = partition_of_unity(cov, u);
        EXPECT_EQ(slow.weights.size(), w.weights.size());
    }
}

TEST(PartitionOfUnity, BumpDerivativeBound) {
    WhitneyInterval J;
    J.lo = 0.0;
    J.hi = 0.25;
    double worst = 0;
    for (int i = 0; i < 4000; ++i) {
        const double u = -0.5 + i * 1e-3 / 4, h = 1e-7;
        worst = std::max(worst, std::abs(bump(J, u + h) - bump(J, u - h)) / (2 * h));
    }
    EXPECT_LE(worst * J.len(), 3.75 + 1e-5);
    EXPECT_EQ(bump(J, J.center() + J.len()), 1.0);
    EXPECT_EQ(bump(J, J.center() + 1.5 * J.len()), 0.0);
}

TEST(LipschitzGraph, SegmentGivesZero) {
    const auto L = Lattice::build(generate("segment:n=64"));
    const auto in = all_doubling(L);
    const auto g = build_lipschitz_F(in, 0.05);
    EXPECT_EQ(g.lipschitz_estimate, 0.0);
    EXPECT_EQ(g.support_radius, 0.0);
    for (int i = 0; i <= 100; ++i) EXPECT_EQ(g.F(g.cover.u0 - 15 + 0.3 * i), 0.0);
    const auto rep = graph_closeness_report(in, g);
    EXPECT_EQ(rep.max_ratio, 0.0);
    EXPECT_EQ(rep.max_line_distance, 0.0);
}

TEST(LipschitzGraph, GraphMeasureStructure) {
    const auto mu = generate("graph:n=200,slope=0.2");
    const auto L = Lattice::build(mu);
    const auto in = all_doubling(L);
    const auto g = build_lipschitz_F(in, 0.05);
    EXPECT_TRUE(std::isfinite(g.lipschitz_estimate));
    EXPECT_LE(g.support_radius, 12 * g.cover.diam_R);
    EXPECT_EQ(g.good_u.size(), mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double u = in.line.coordinate(mu[i].p);
        EXPECT_EQ(g.F(u), in.line.offset(mu[i].p));
    }
    const auto rep = graph_closeness_report(in, g);
    EXPECT_EQ(rep.zero_d_positive_dist, 0u);
    for (const auto& r : rep.atoms) EXPECT_LE(r.dist_to_graph, 1e-12);
    EXPECT_TRUE(std::isfinite(rep.max_line_distance));
}

TEST(LipschitzGraph, OutlierStaysInsideWindow) {
    const auto mu = generate("graph:n=120,slope=0.2,outlier_x=0.5,outlier_y=0.4,outlier_w=0.01");
    const auto L = Lattice::build(mu);
    auto in = all_doubling(L);
    // the outlier's branch is stopped: drop every cube that holds it
    const int outlier = static_cast<int>(mu.size()) - 1;
    std::vector<int> kept;
    for (int id : in.dbtree) {
        const auto& m = L.cube(id).members;
        if (std::find(m.begin(), m.end(), outlier) == m.end()) kept.push_back(id);
    }
    in.dbtree = kept;
    const auto g = build_lipschitz_F(in, 0.05);
    EXPECT_LE(g.support_radius, 12 * g.cover.diam_R);
    for (int i = 0; i <= 200; ++i) {
        const double u = g.cover.u0 + 12.5 * g.cover.diam_R + 0.05 * i;
        EXPECT_EQ(g.F(u), 0.0);
        EXPECT_EQ(g.F(2 * g.cover.u0 - u), 0.0);
    }
}

TEST(LipschitzGraph, PointRootIsFlat) {
    const auto mu = generate("graph:n=100,slope=0.2");
    const auto L = Lattice::build(mu);
    int single = -1;
    for (const auto& q : L.cubes())
        if (q.members.size() == 1 && q.diam == 0.0) single = q.id;
    ASSERT_GE(single, 0);
    GraphInput in;
    in.lattice = &L;
    in.root = single;
    in.dbtree = {single};
    in.line = cube_line(L, single);
    const auto g = build_lipschitz_F(in);
    EXPECT_EQ(g.lipschitz_estimate, 0.0);
    EXPECT_EQ(g.support_radius, 0.0);
    EXPECT_TRUE(g.cover.intervals.empty());
    EXPECT_EQ(g.F(g.cover.u0 + 1e-3), 0.0);
}

TEST(BalancedBalls, Examples) {
    std::vector<Atom> two;
    for (int i = 0; i < 5; ++i) {
        two.push_back({{0.001 * i, 0}, 1});
        two.push_back({{1 + 0.001 * i, 0.0005}, 1});
    }
    const auto L2 = Lattice::build(DiscreteMeasure(two, 0.0004));
    const auto v = balanced_ball_test(L2, L2.root(), 1e-3);
    EXPECT_TRUE(v.balanced);
    EXPECT_GT(dist(L2.measure()[v.xi1].p, L2.measure()[v.xi2].p), 0.5);

    std::vector<Atom> tight;
    for (int i = 0; i < 5; ++i) tight.push_back({{1e-5 * i, 0}, 1});
    tight.push_back({{1, 0}, 1e-9});
    const auto L1 = Lattice::build(DiscreteMeasure(tight, 4e-6));
    const auto u = balanced_ball_test(L1, L1.root(), 1e-3);
    EXPECT_FALSE(u.balanced);
    EXPECT_TRUE(std::isfinite(u.family_ratio));

    const auto Ls = Lattice::build(generate("segment:n=64"));
    EXPECT_TRUE(balanced_ball_test(Ls, Ls.root(), 1e-3).balanced);

    int nd = -1;
    for (const auto& q : Ls.cubes())
        if (!q.doubling) nd = q.id;
    ASSERT_GE(nd, 0);
    EXPECT_THROW(balanced_ball_test(Ls, nd, 1e-3), Error);
}
