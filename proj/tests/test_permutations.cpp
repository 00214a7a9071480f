#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gmt/generators.hpp"
#include "gmt/permutations.hpp"

using namespace gmt;

namespace {

const KernelParam kinf = KernelParam::infinity();
const KernelParam k0 = KernelParam::finite(0);

// Circumradius from the circumcenter, solved in long double.
long double curvature_oracle(Point2 a, Point2 b, Point2 c) {
    const long double bx = b.x - (long double)a.x, by = b.y - (long double)a.y;
    const long double cx = c.x - (long double)a.x, cy = c.y - (long double)a.y;
    const long double d = 2 * (bx * cy - by * cx);
    const long double ux = (cy * (bx * bx + by * by) - by * (cx * cx + cy * cy)) / d;
    const long double uy = (bx * (cx * cx + cy * cy) - cx * (bx * bx + by * by)) / d;
    return 1 / std::sqrt(ux * ux + uy * uy);
}

// Independent kernel and triple loop in long double.
long double kernel_ld(const KernelParam& k, long double x, long double y) {
    const long double r2 = x * x + y * y;
    return k.is_infinity() ? x / r2 : x * x * x / (r2 * r2) + k.t() * x / r2;
}

long double perm_oracle_ld(const KernelParam& k, const DiscreteMeasure& mu, double eps) {
    long double s = 0;
    const std::size_t n = mu.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t l = 0; l < n; ++l) {
                if (i == j || i == l || j == l) continue;
                const Point2 a = mu[i].p, b = mu[j].p, c = mu[l].p;
                if (dist(a, b) < eps || dist(a, c) < eps || dist(b, c) < eps) continue;
                const double m = std::max({dist(a, b), dist(a, c), dist(b, c)});
                if (std::abs(cross(b - a, c - a)) < 1e-14 * m * m) continue;
                auto K = [&](Point2 p, Point2 q) { return kernel_ld(k, (long double)p.x - q.x, (long double)p.y - q.y); };
                s += (long double)mu[i].w * mu[j].w * mu[l].w * (K(a, b) * K(a, c) + K(b, a) * K(b, c) + K(c, a) * K(c, b));
            }
    return s;
}

// Same arithmetic as the library pointwise function, lexicographic order, one Kahan accumulator.
double perm_naive_kahan(const KernelParam& k, const DiscreteMeasure& mu) {
    KahanSum s;
    for (std::size_t i = 0; i < mu.size(); ++i)
        for (std::size_t j = 0; j < mu.size(); ++j)
            for (std::size_t l = 0; l < mu.size(); ++l) {
                if (i == j || i == l || j == l) continue;
                s.add(mu[i].w * mu[j].w * mu[l].w * perm_pointwise(k, mu[i].p, mu[j].p, mu[l].p));
            }
    return s.value();
}

Triple random_triple(std::mt19937_64& rng) {
    Triple t;
    for (auto& p : t) p = {2 * unit_uniform(rng) - 1, 2 * unit_uniform(rng) - 1};
    return t;
}

bool nondegenerate(const Triple& t) {
    const double a = dist(t[0], t[1]), b = dist(t[0], t[2]), c = dist(t[1], t[2]);
    const double mx = std::max({a, b, c}), mn = std::min({a, b, c});
    return mn >= 1e-3 * mx && menger_curvature(t[0], t[1], t[2]) * mx >= 1e-2;
}

}  // namespace

TEST(PermPointwise, Examples) {
    EXPECT_NEAR(perm_pointwise(kinf, {0, 0}, {1, 0}, {0, 1}), 0.5, 1e-15);
    EXPECT_NEAR(perm_pointwise(k0, {0, 0}, {1, 0}, {0, 1}), 0.25, 1e-15);
    for (double t : {-3.0, -1.0, 0.0, 2.0}) EXPECT_EQ(perm_pointwise(KernelParam::finite(t), {0, 0}, {1, 0}, {2, 0}), 0.0);
    EXPECT_THROW(perm_pointwise(k0, {0, 0}, {0, 0}, {1, 0}), Error);
}

TEST(PermPointwise, FullSymmetry) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 2000; ++i) {
        Triple t = random_triple(rng);
        const double ref = perm_pointwise(KernelParam::finite(-0.7), t[0], t[1], t[2]);
        const double m = std::min({dist(t[0], t[1]), dist(t[0], t[2]), dist(t[1], t[2])});
        const double mag = 3 * 1.7 * 1.7 / (m * m);  // bound on the summed terms
        std::array<int, 3> idx{0, 1, 2};
        while (std::next_permutation(idx.begin(), idx.end())) {
            const double v = perm_pointwise(KernelParam::finite(-0.7), t[idx[0]], t[idx[1]], t[idx[2]]);
            EXPECT_LE(std::abs(v - ref), 1e-13 * mag);
        }
    }
}

TEST(Menger, Examples) {
    EXPECT_EQ(menger_curvature({0, 0}, {1, 1}, {2, 2}), 0.0);
    EXPECT_NEAR(menger_curvature({1, 0}, {0, 1}, {-0.6, -0.8}), 1.0, 1e-15);
    EXPECT_NEAR(menger_curvature({0, 0}, {1, 0}, {0, 1}), std::sqrt(2.0), 1e-15);
    EXPECT_THROW(menger_curvature({0, 0}, {0, 0}, {1, 0}), Error);
}

TEST(PermPointwise, CurvatureIdentityAndComparison) {
    std::mt19937_64 rng(7);
    int tested = 0;
    for (int i = 0; i < 20000; ++i) {
        const Triple t = random_triple(rng);
        const double pinf = perm_pointwise(kinf, t[0], t[1], t[2]);
        const double p0 = perm_pointwise(k0, t[0], t[1], t[2]);
        EXPECT_LE(p0, 2 * pinf + 1e-12 * std::max(1.0, std::abs(pinf)));
        if (!nondegenerate(t)) continue;
        ++tested;
        const long double c = curvature_oracle(t[0], t[1], t[2]);
        EXPECT_LE(std::abs(pinf - (double)(c * c / 4)), 1e-10 * (double)(c * c / 4));
        const double cm = menger_curvature(t[0], t[1], t[2]);
        EXPECT_LE(std::abs(cm - (double)c), 1e-10 * (double)c);
    }
    EXPECT_GT(tested, 19000);
}

TEST(PermMeasure, Examples) {
    EXPECT_EQ(perm_measure(kinf, generate("line:n=40,angle=0.7"), 0).value, 0.0);
    EXPECT_EQ(perm_measure(kinf, generate("vertical:n=25"), 0).value, 0.0);
    const auto two = generate("segment:n=2");
    const auto r2 = perm_measure(kinf, two, 0);
    EXPECT_EQ(r2.value, 0.0);
    EXPECT_EQ(r2.triples_counted, 0u);
    const auto c2 = generate("cantor4:level=2");
    const auto r = perm_measure(kinf, c2, 0);
    EXPECT_GT(r.value, 0.0);
    EXPECT_EQ(r.triples_counted, 16u * 15u * 14u);
    EXPECT_NEAR(r.value, (double)perm_oracle_ld(kinf, c2, 0), 1e-12 * r.value);
    EXPECT_NEAR(curvature_squared(c2), 4 * r.value, 1e-15 * r.value);
}

TEST(PermMeasure, BitIdenticalToNaiveLoopInOneChunk) {
    for (const char* rec : {"cantor4:level=2", "graph:n=30,slope=0.3,noise=0.01", "circle:n=17"}) {
        const auto mu = generate(rec, 3);
        for (const auto& k : {kinf, k0, KernelParam::finite(-0.5)}) {
            const double fast = perm_measure(k, mu, 0, {mu.size(), 1}).value;
            EXPECT_EQ(fast, perm_naive_kahan(k, mu)) << rec;
        }
    }
}

TEST(PermMeasure, ParallelChunksMatchOracle) {
    for (const char* rec : {"cantor4:level=2", "graph:n=30,slope=0.3,noise=0.01", "circle:n=29"}) {
        const auto mu = generate(rec, 5);
        for (const auto& k : {kinf, k0, KernelParam::finite(-1)}) {
            const double ref = (double)perm_oracle_ld(k, mu, 0.05);
            const double one = perm_measure(k, mu, 0.05, {3, 1}).value;
            const double many = perm_measure(k, mu, 0.05, {3, 4}).value;
            EXPECT_EQ(one, many) << "worker count changed the result";
            EXPECT_LE(std::abs(one - ref), 1e-10 * std::abs(ref) + 1e-300) << rec;
        }
    }
}

TEST(PermMeasure, TruncationMonotone) {
    const auto mu = generate("graph:n=40,slope=0.2");
    std::uint64_t prev = UINT64_MAX;
    for (double e : {0.0, 0.01, 0.05, 0.1, 0.3, 0.8, 2.0}) {
        const auto r = perm_measure(k0, mu, e);
        EXPECT_LE(r.triples_counted, prev);
        prev = r.triples_counted;
    }
    EXPECT_EQ(prev, 0u);
}

TEST(PermWindow, Examples) {
    const auto mu = generate("graph:n=25,slope=0.3,noise=0.01", 2);
    EXPECT_EQ(perm_truncated_window(mu, mu, mu, 0.5, 100.0).value, 0.0);
    const auto wide = perm_truncated_window(mu, mu, mu, 1e-9, 1.0);
    const auto full = perm_measure(k0, mu, 0);
    EXPECT_EQ(wide.triples_counted, full.triples_counted);
    EXPECT_NEAR(wide.value, full.value, 1e-13 * std::abs(full.value));
    // window predicate oracle
    long double s = 0;
    for (const auto& a : mu.atoms())
        for (const auto& b : mu.atoms())
            for (const auto& c : mu.atoms()) {
                if (a.p == b.p || a.p == c.p || b.p == c.p) continue;
                const double d = dist(a.p, b.p);
                if (d < 0.05 || d > 5.0) continue;
                s += (long double)a.w * b.w * c.w * perm_pointwise(k0, a.p, b.p, c.p);
            }
    EXPECT_NEAR(perm_truncated_window(mu, mu, mu, 0.1, 0.5).value, (double)s, 1e-12 * std::abs((double)s));
    EXPECT_THROW(perm_truncated_window(mu, mu, mu, 1.5, 1.0), Error);
}

TEST(PermAtPoint, Examples) {
    const auto mu = generate("graph:n=20,slope=0.3,noise=0.01", 4);
    EXPECT_EQ(perm_at_point({100, 100}, mu, mu, 0.5, 1.0), 0.0);
    double total = 0;
    for (const auto& a : mu.atoms()) total += a.w * perm_at_point(a.p, mu, mu, 0.1, 0.5);
    const double win = perm_truncated_window(mu, mu, mu, 0.1, 0.5).value;
    EXPECT_NEAR(total, win, 1e-12 * std::abs(win));
    const DiscreteMeasure y({{{1, 0}, 0.3}}, 0.1), z({{{0, 1}, 0.7}}, 0.1);
    EXPECT_NEAR(perm_at_point({0, 0}, y, z, 0.5, 1.0), 0.25 * 0.3 * 0.7, 1e-16);
}

TEST(SignScan, Dichotomy) {
    const Ball dom{{0, 0}, 1};
    for (double t : {0.0, 1.0}) {
        const auto r = sign_scan(t, dom, 20000, 1);
        EXPECT_GE(r.min_value, -1e-10) << t;
        EXPECT_EQ(r.min_value, perm_pointwise(KernelParam::finite(t), r.argmin_triple[0], r.argmin_triple[1], r.argmin_triple[2]));
    }
    const auto neg = sign_scan(-1, dom, 20000, 1);
    EXPECT_LT(neg.min_value, 0.0);
    EXPECT_LT(perm_pointwise(KernelParam::finite(-1), neg.argmin_triple[0], neg.argmin_triple[1], neg.argmin_triple[2]), 0.0);
    EXPECT_THROW(sign_scan(0, dom, 0, 1), Error);
}

TEST(EstimateC1, Bounds) {
    const auto a = estimate_c1(0.1, 20000, 3);
    EXPECT_GT(a.estimate, 0.0);
    EXPECT_LE(a.estimate, 2.0);
    EXPECT_TRUE(v_far(a.witness[0], a.witness[1], a.witness[2], 0.1));
    const auto b = estimate_c1(3 * std::numbers::pi / 2 - 0.01, 20000, 3);
    EXPECT_GT(b.estimate, 1.99);
    EXPECT_LE(b.estimate, 2.0);
    EXPECT_THROW(estimate_c1(0, 10, 1), Error);
}
