#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gmt/generators.hpp"
#include "gmt/lattice.hpp"

using namespace gmt;

namespace {

int find_cube(const Lattice& L, int level, int center_atom) {
    for (int id : L.levels().at(level))
        if (L.cube(id).center_atom == center_atom) return id;
    return -1;
}

// Atoms 0,1,2 at x = 0, .004, .008 (unit weight), a heavy atom 3 at .06 and a light one 4 at 1.
DiscreteMeasure three_level() {
    return DiscreteMeasure({{{0, 0}, 1}, {{0.004, 0}, 1}, {{0.008, 0}, 1}, {{0.06, 0}, 4}, {{1, 0}, 0.1}}, 0.001);
}

// Greedy farthest-point net on an ordered set of 1D positions, counted without the library.
std::size_t net_count_1d(const std::vector<double>& xs, double sep) {
    std::vector<double> net{xs.front()};
    for (;;) {
        double best = -1;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double d = INFINITY;
            for (double c : net) d = std::min(d, std::abs(xs[i] - c));
            if (d > best) best = d, arg = i;
        }
        if (best < sep) return net.size();
        net.push_back(xs[arg]);
    }
}

}  // namespace

TEST(LatticeBuild, SingleAtomIsAChain) {
    const auto L = Lattice::build(DiscreteMeasure({{{0.5, 0.5}, 2}}, 0.01));
    ASSERT_GE(L.depth(), 1);
    for (const auto& level : L.levels()) {
        ASSERT_EQ(level.size(), 1u);
        EXPECT_EQ(L.cube(level[0]).members, std::vector<int>{0});
    }
    EXPECT_TRUE(L.cube(L.levels().back()[0]).leaf);
}

TEST(LatticeBuild, TwoClustersSplitAtLevelOne) {
    const DiscreteMeasure mu({{{0, 0}, 1}, {{0.01, 0}, 1}, {{1, 0}, 1}, {{1.01, 0}, 1}}, 0.005);
    const auto L = Lattice::build(mu);
    ASSERT_GE(L.depth(), 1);
    ASSERT_EQ(L.levels()[1].size(), 2u);
    std::set<std::vector<int>> got;
    for (int id : L.levels()[1]) got.insert(L.cube(id).members);
    EXPECT_EQ(got, (std::set<std::vector<int>>{{0, 1}, {2, 3}}));
}

TEST(LatticeBuild, SegmentCountsTrackTheNets) {
    const auto mu = generate("segment:n=64");
    const auto L = Lattice::build(mu);
    ASSERT_EQ(L.depth(), 2);
    std::vector<double> xs;
    for (const auto& a : mu.atoms()) xs.push_back(a.p.x);
    EXPECT_EQ(L.levels()[1].size(), net_count_1d(xs, 1.0 / 8));
    for (int k = 1; k <= L.depth(); ++k) {
        const double n = static_cast<double>(L.levels()[k].size()), ak = std::pow(8.0, k);
        EXPECT_GE(n, ak / 4) << k;
        EXPECT_LE(n, 4 * ak) << k;
    }
}

TEST(LatticeBuild, Errors) {
    EXPECT_THROW(Lattice::build(DiscreteMeasure::trusted({}, 1)), Error);
    EXPECT_THROW(Lattice::build(generate("segment:n=8"), 2.0, 1.5), Error);
    EXPECT_THROW(Lattice::build(generate("segment:n=8"), 1.0, 8.0), Error);
    EXPECT_THROW(Lattice::build(generate("segment:n=8"), 2.0, 8.0, 9), Error);
}

TEST(LatticeProperties, PartitionNestingSandwich) {
    for (const char* rec : {"segment:n=64", "cantor4:level=3", "graph:n=120,slope=0.2,noise=0.002", "circle:n=90"}) {
        const auto mu = generate(rec, 4);
        const auto L = Lattice::build(mu);
        for (int k = 0; k <= L.depth(); ++k) {
            std::vector<int> seen(mu.size(), 0);
            for (int id : L.levels()[k])
                for (int a : L.cube(id).members) ++seen[a];
            EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; })) << rec << " level " << k;
        }
        for (const auto& q : L.cubes()) {
            if (q.id == L.root()) {
                EXPECT_TRUE(q.doubling_literal);
            }
            const double lo = std::pow(L.A0(), -q.level) * L.unit();
            EXPECT_GE(q.r, lo);
            EXPECT_LE(q.r, L.C0() * lo);
            if (q.leaf) continue;
            std::vector<int> u;
            for (int c : q.children) u.insert(u.end(), L.cube(c).members.begin(), L.cube(c).members.end());
            std::sort(u.begin(), u.end());
            std::vector<int> m = q.members;
            std::sort(m.begin(), m.end());
            EXPECT_EQ(u, m);
        }
        for (const auto& v : L.report().violations) {
            EXPECT_NE(v.property, "radius_sandwich");
            EXPECT_NE(v.property, "center_in_cube");
            EXPECT_NE(v.property, "inside_28B");
        }
    }
}

TEST(Doubling, Examples) {
    const DiscreteMeasure mu({{{0, 0}, 1}, {{1, 0}, 10}}, 0.001);
    const auto L = Lattice::build(mu);
    const int q = find_cube(L, 1, 0);
    ASSERT_GE(q, 0);
    EXPECT_EQ(L.cube(q).members, std::vector<int>{0});
    EXPECT_FALSE(doubling_check(L, q));
    EXPECT_TRUE(doubling_check(L, L.root()));
    for (const char* rec : {"segment:n=64", "cantor4:level=3"}) EXPECT_TRUE(doubling_check(Lattice::build(generate(rec)), 0));
}

TEST(Doubling, ConstructedThreeLevels) {
    const auto L = Lattice::build(three_level());
    ASSERT_EQ(L.depth(), 3);
    const int a = find_cube(L, 1, 0), q = find_cube(L, 2, 0), leaf = find_cube(L, 3, 0);
    ASSERT_TRUE(a >= 0 && q >= 0 && leaf >= 0);
    EXPECT_EQ(L.cube(q).members, (std::vector<int>{0, 1, 2}));
    EXPECT_TRUE(L.cube(a).doubling);
    EXPECT_FALSE(L.cube(q).doubling);
    EXPECT_EQ(first_doubling_ancestor(L, q).cube, a);
    EXPECT_EQ(first_doubling_ancestor(L, a).cube, a);
    EXPECT_EQ(first_doubling_ancestor(L, a).diam_ratio, 1.0);

    const auto md = maximal_doubling(L, q);
    EXPECT_EQ(md.cubes.size(), 3u);
    EXPECT_DOUBLE_EQ(md.coverage, 1.0);
    EXPECT_EQ(maximal_doubling(L, a).cubes, std::vector<int>{a});

    const auto ch = density_chain_report(L, leaf, a);
    ASSERT_EQ(ch.chain, (std::vector<int>{leaf, q, a}));
    double s = 0;
    for (int c : ch.chain) s += L.theta(c, 100.0);
    EXPECT_NEAR(ch.sum_ratio, s / L.theta(a, 100.0), 1e-13 * ch.sum_ratio);
    EXPECT_THROW(density_chain_report(L, leaf, L.root()), Error);
    EXPECT_THROW(density_chain_report(L, a, leaf), Error);
}

TEST(MaximalDoubling, Antichain) {
    for (const char* rec : {"graph:n=150,slope=0.3", "cantor4:level=3"}) {
        const auto L = Lattice::build(generate(rec));
        for (const auto& q : L.cubes()) {
            const auto md = maximal_doubling(L, q.id);
            for (int c : md.cubes) {
                EXPECT_TRUE(L.cube(c).doubling);
                EXPECT_TRUE(L.contains(q.id, c));
                for (int d : md.cubes)
                    if (c != d) {
                        EXPECT_FALSE(L.contains(c, d));
                    }
            }
            EXPECT_NEAR(md.coverage, 1.0, 1e-12);
        }
    }
}

TEST(SmallBoundary, Examples) {
    const DiscreteMeasure mu({{{0, 0}, 1}, {{0.001, 0}, 1}, {{1, 0}, 1}, {{1.001, 0}, 1}}, 0.0005);
    const auto L = Lattice::build(mu);
    const int q = L.levels()[1][0];
    const auto r = small_boundary_report(L, q, 1);
    EXPECT_EQ(r.ext_mass, 0.0);
    EXPECT_EQ(r.int_mass, 0.0);
    EXPECT_TRUE(r.pass);
    EXPECT_TRUE(small_boundary_report(L, q, 9).below_resolution);
    // two atoms straddling the cut between the cubes at 0 and 0.2
    const DiscreteMeasure adv({{{0, 0}, 1}, {{0.2, 0}, 1}, {{0.09999, 0}, 1}, {{0.10001, 0}, 1}, {{1, 0}, 1}}, 1e-5);
    const auto La = Lattice::build(adv, 1.1, 8.0);
    const int c = find_cube(La, 1, 0);
    ASSERT_EQ(La.cube(c).members, (std::vector<int>{0, 2}));
    const auto s = small_boundary_report(La, c, 2);
    EXPECT_EQ(s.int_mass, 1.0);
    EXPECT_EQ(s.ext_mass, 1.0);
    EXPECT_FALSE(s.pass);
    EXPECT_THROW(small_boundary_report(L, q, -1), Error);
}

TEST(DeltaMu, Examples) {
    const auto L = Lattice::build(three_level());
    const int q = find_cube(L, 2, 0);
    EXPECT_EQ(delta_mu(L, q, q), 0.0);
    // 56·r at level 2 is 0.875: atom 4 at distance 1 is the only annulus atom under the root
    EXPECT_DOUBLE_EQ(delta_mu(L, q, L.root()), 0.1 / 1.0);
    EXPECT_THROW(delta_mu(L, L.root(), q), Error);
    const auto seg = Lattice::build(generate("segment:n=64"));
    const int deep = seg.levels()[2][5];
    const double d = delta_mu(seg, deep, seg.root());
    double oracle = 0;
    const Cube& Q = seg.cube(deep);
    for (const auto& a : seg.measure().atoms()) {
        const double r = dist(a.p, Q.center);
        if (dist(a.p, seg.cube(0).center) < 56 * seg.cube(0).r && r >= 56 * Q.r) oracle += a.w / r;
    }
    EXPECT_NEAR(d, oracle, 1e-14);
}
