#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "core/summation.hpp"
#include "generators.hpp"
#include "kernels.hpp"
#include "measure.hpp"

namespace gmt {

using Triple = std::array<Point2, 3>;

inline bool pairwise_distinct(Point2 a, Point2 b, Point2 c) { return !(a == b) && !(a == c) && !(b == c); }

/// Triangles with |cross| below this fraction of the squared longest side count as collinear.
inline constexpr double kDegenerateArea = 1e-14;

inline bool degenerate_triangle(Point2 z1, Point2 z2, Point2 z3, double d12, double d13, double d23) {
    const double m = std::max({d12, d13, d23});
    return std::abs(cross(z2 - z1, z3 - z1)) < kDegenerateArea * m * m;
}

/// p_K(z1,z2,z3) without the distinctness check. Collinear (degenerate) triples give 0,
/// which is the exact value for every kernel of the family.
inline double perm_unchecked(const KernelParam& k, Point2 z1, Point2 z2, Point2 z3) {
    if (degenerate_triangle(z1, z2, z3, dist(z1, z2), dist(z1, z3), dist(z2, z3))) return 0.0;
    const double k12 = kernel_unchecked(k, z1 - z2), k13 = kernel_unchecked(k, z1 - z3);
    const double k21 = kernel_unchecked(k, z2 - z1), k23 = kernel_unchecked(k, z2 - z3);
    const double k31 = kernel_unchecked(k, z3 - z1), k32 = kernel_unchecked(k, z3 - z2);
    return k12 * k13 + k21 * k23 + k31 * k32;
}

inline double perm_pointwise(const KernelParam& k, Point2 z1, Point2 z2, Point2 z3) {
    if (!pairwise_distinct(z1, z2, z3)) throw Error("permutation needs pairwise distinct points");
    return perm_unchecked(k, z1, z2, z3);
}

inline double menger_curvature(Point2 z1, Point2 z2, Point2 z3) {
    if (!pairwise_distinct(z1, z2, z3)) throw Error("curvature needs pairwise distinct points");
    const double a = dist(z1, z2), b = dist(z1, z3), c = dist(z2, z3);
    if (degenerate_triangle(z1, z2, z3, a, b, c)) return 0.0;
    return 2.0 * std::abs(cross(z2 - z1, z3 - z1)) / (a * b * c);
}

struct Truncation {
    enum class Kind { epsilon, window } kind = Kind::epsilon;
    double epsilon = 0.0;
    double delta = 0.0;
    double q_radius = 0.0;
};

struct TripleIntegralResult {
    double value = 0.0;
    std::uint64_t triples_counted = 0;
    Truncation truncation;
};

namespace detail {

/// Pairwise data between two point sets: kernel values K(a_i - b_j) and distances.
struct PairTable {
    std::size_t n = 0, m = 0;
    std::vector<double> k, d;
    double kv(std::size_t i, std::size_t j) const { return k[i * m + j]; }
    double dv(std::size_t i, std::size_t j) const { return d[i * m + j]; }
};

inline PairTable pair_table(const KernelParam& kp, const DiscreteMeasure& a, const DiscreteMeasure& b) {
    PairTable t;
    t.n = a.size();
    t.m = b.size();
    t.k.resize(t.n * t.m);
    t.d.resize(t.n * t.m);
    for (std::size_t i = 0; i < t.n; ++i)
        for (std::size_t j = 0; j < t.m; ++j) {
            const Point2 z = a[i].p - b[j].p;
            const double dd = norm(z);
            t.d[i * t.m + j] = dd;
            t.k[i * t.m + j] = dd > 0.0 ? kernel_unchecked(kp, z) : 0.0;
        }
    return t;
}

/// Generic triple sum; admit12(d12) restricts the first pair, the others need d ≥ eps_rest and d > 0.
template <class Admit12>
TripleIntegralResult triple_sum(const KernelParam& kp, const DiscreteMeasure& m1, const DiscreteMeasure& m2, const DiscreteMeasure& m3,
                                Admit12 admit12, double eps_rest, const Reduction& policy, const PairTable* t23_given = nullptr) {
    const PairTable t12 = pair_table(kp, m1, m2);
    const PairTable t13 = pair_table(kp, m1, m3);
    const PairTable t23_own = t23_given ? PairTable{} : pair_table(kp, m2, m3);
    const PairTable& t23 = t23_given ? *t23_given : t23_own;
    auto acc = chunked_reduce<SumCount>(
        m1.size(), policy,
        [&](std::size_t lo, std::size_t hi, SumCount& out) {
            for (std::size_t i = lo; i < hi; ++i) {
                for (std::size_t j = 0; j < m2.size(); ++j) {
                    const double d12 = t12.dv(i, j);
                    if (!(d12 > 0.0) || !admit12(d12)) continue;
                    const double a = t12.kv(i, j);
                    const double wij = m1[i].w * m2[j].w;
                    for (std::size_t l = 0; l < m3.size(); ++l) {
                        const double d13 = t13.dv(i, l), d23 = t23.dv(j, l);
                        if (!(d13 > 0.0) || !(d23 > 0.0) || d13 < eps_rest || d23 < eps_rest) continue;
                        const double b = t13.kv(i, l), c = t23.kv(j, l);
                        const double p = degenerate_triangle(m1[i].p, m2[j].p, m3[l].p, d12, d13, d23) ? 0.0 : a * b + (-a) * c + (-b) * (-c);
                        out.sum.add(wij * m3[l].w * p);
                        ++out.count;
                    }
                }
            }
        },
        merge_sum_count);
    TripleIntegralResult r;
    r.value = acc.sum.value();
    r.triples_counted = acc.count;
    return r;
}

}  // namespace detail

/// p_{K,ε}(μ1,μ2,μ3): all pairwise distances ≥ ε and nonzero; ε = 0 is the distinct-atom sum.
inline TripleIntegralResult perm_measure(const KernelParam& k, const DiscreteMeasure& m1, const DiscreteMeasure& m2,
                                         const DiscreteMeasure& m3, double eps, const Reduction& policy = {}) {
    if (eps < 0.0) throw Error("truncation must be nonnegative");
    auto r = detail::triple_sum(k, m1, m2, m3, [eps](double d) { return d >= eps; }, eps, policy);
    r.truncation = {Truncation::Kind::epsilon, eps, 0.0, 0.0};
    return r;
}

inline TripleIntegralResult perm_measure(const KernelParam& k, const DiscreteMeasure& mu, double eps, const Reduction& policy = {}) {
    return perm_measure(k, mu, mu, mu, eps, policy);
}

/// c²_ε(μ) = 4 p_{k_∞,ε}(μ).
inline double curvature_squared(const DiscreteMeasure& mu, double eps = 0.0, const Reduction& policy = {}) {
    return 4.0 * perm_measure(KernelParam::infinity(), mu, eps, policy).value;
}

inline bool in_window(double d, double delta, double r) { return d >= delta * r && d <= r / delta; }

/// p₀^{[δ,Q]}(μ1,μ2,μ3): |z1 − z2| ∈ [δ r(Q), r(Q)/δ], other pairs only distinct.
inline TripleIntegralResult perm_truncated_window(const DiscreteMeasure& inner, const DiscreteMeasure& mid, const DiscreteMeasure& outer,
                                                  double delta, double q_radius, const Reduction& policy = {},
                                                  const KernelParam& k = KernelParam::finite(0.0)) {
    if (!(delta > 0.0 && delta < 1.0)) throw Error("window parameter delta must lie in (0,1)");
    auto r = detail::triple_sum(k, inner, mid, outer, [&](double d) { return in_window(d, delta, q_radius); }, 0.0, policy);
    r.truncation = {Truncation::Kind::window, 0.0, delta, q_radius};
    return r;
}

/// Same sum with the mid×outer table supplied, for repeated calls sharing the last two measures.
inline TripleIntegralResult perm_truncated_window(const DiscreteMeasure& inner, const DiscreteMeasure& mid, const DiscreteMeasure& outer,
                                                  const detail::PairTable& mid_outer, double delta, double q_radius,
                                                  const Reduction& policy = {}, const KernelParam& k = KernelParam::finite(0.0)) {
    if (!(delta > 0.0 && delta < 1.0)) throw Error("window parameter delta must lie in (0,1)");
    if (mid_outer.n != mid.size() || mid_outer.m != outer.size()) throw Error("pair table does not match the measures");
    auto r = detail::triple_sum(k, inner, mid, outer, [&](double d) { return in_window(d, delta, q_radius); }, 0.0, policy, &mid_outer);
    r.truncation = {Truncation::Kind::window, 0.0, delta, q_radius};
    return r;
}

/// p₀^{[δ,Q]}(x, μ2, μ3).
inline double perm_at_point(Point2 x, const DiscreteMeasure& m2, const DiscreteMeasure& m3, double delta, double q_radius,
                            const KernelParam& k = KernelParam::finite(0.0)) {
    if (!(delta > 0.0 && delta < 1.0)) throw Error("window parameter delta must lie in (0,1)");
    KahanSum s;
    for (const auto& y : m2.atoms()) {
        const double dxy = dist(x, y.p);
        if (!(dxy > 0.0) || !in_window(dxy, delta, q_radius)) continue;
        for (const auto& z : m3.atoms()) {
            if (z.p == x || z.p == y.p) continue;
            s.add(y.w * z.w * perm_unchecked(k, x, y.p, z.p));
        }
    }
    return s.value();
}

// ---------------------------------------------------------------- scanning

struct SignScanResult {
    double min_value = std::numeric_limits<double>::infinity();
    Triple argmin_triple{};
    std::uint64_t samples = 0;
};

namespace detail {

/// Uniform point in a ball by rejection.
inline Point2 sample_in_ball(std::mt19937_64& rng, const Ball& b) {
    for (;;) {
        const double u = 2.0 * unit_uniform(rng) - 1.0, v = 2.0 * unit_uniform(rng) - 1.0;
        if (u * u + v * v < 1.0) return {b.center.x + b.radius * u, b.center.y + b.radius * v};
    }
}

inline double min_side(const Triple& t) { return std::min({dist(t[0], t[1]), dist(t[0], t[2]), dist(t[1], t[2])}); }

/// Compass search over the six coordinates, accepting only feasible moves.
template <class Objective, class Feasible>
void pattern_refine(Triple& best, double& fbest, double step, double min_step, Objective&& f, Feasible&& ok, std::uint64_t& evals) {
    while (step > min_step) {
        bool improved = false;
        for (int c = 0; c < 6; ++c) {
            for (double sgn : {1.0, -1.0}) {
                Triple t = best;
                double& coord = (c % 2 == 0) ? t[c / 2].x : t[c / 2].y;
                coord += sgn * step;
                if (!ok(t)) continue;
                const double v = f(t);
                ++evals;
                if (v < fbest) {
                    fbest = v;
                    best = t;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
}

}  // namespace detail

/// Minimum of p_t over random triples in the domain (pairwise separation ≥ 1e-2·radius),
/// followed by a local compass refinement of the best candidates.
inline SignScanResult sign_scan(double t, const Ball& domain, std::uint64_t n_samples, std::uint64_t seed, int refine_starts = 8) {
    if (n_samples < 1) throw Error("sign_scan needs at least one sample");
    const KernelParam k = KernelParam::finite(t);
    const double sep = 1e-2 * domain.radius;
    auto ok = [&](const Triple& tr) {
        for (const auto& p : tr)
            if (!domain.contains(p)) return false;
        return detail::min_side(tr) >= sep;
    };
    auto f = [&](const Triple& tr) { return perm_unchecked(k, tr[0], tr[1], tr[2]); };
    std::mt19937_64 rng(seed);
    std::vector<std::pair<double, Triple>> top;
    SignScanResult res;
    while (res.samples < n_samples) {
        Triple tr{detail::sample_in_ball(rng, domain), detail::sample_in_ball(rng, domain), detail::sample_in_ball(rng, domain)};
        if (!ok(tr)) continue;
        ++res.samples;
        const double v = f(tr);
        if (static_cast<int>(top.size()) < refine_starts || v < top.back().first) {
            top.emplace_back(v, tr);
            std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            if (static_cast<int>(top.size()) > refine_starts) top.pop_back();
        }
    }
    for (auto& [v, tr] : top) {
        detail::pattern_refine(tr, v, 0.05 * domain.radius, 1e-6 * domain.radius, f, ok, res.samples);
        if (v < res.min_value) {
            res.min_value = v;
            res.argmin_triple = tr;
        }
    }
    res.min_value = f(res.argmin_triple);
    return res;
}

struct C1Estimate {
    double estimate = 0.0;  ///< an upper bound on the true infimum c₁(θ)
    Triple witness{};
    std::uint64_t admissible = 0;
    std::uint64_t samples = 0;
};

/// Empirical infimum of p₀/p_∞ over V_Far(θ) triples with p_∞ > 1e-9.
/// Half the samples are vertically compressed to reach nearly horizontal triples.
inline C1Estimate estimate_c1(double theta, std::uint64_t n_samples, std::uint64_t seed, int refine_starts = 8) {
    if (!(theta > 0.0)) throw Error("estimate_c1 needs theta > 0");
    const KernelParam k0 = KernelParam::finite(0.0), kinf = KernelParam::infinity();
    const Ball domain{{0.0, 0.0}, 1.0};
    auto ok = [&](const Triple& tr) {
        if (detail::min_side(tr) < 1e-3) return false;
        if (vertical_angle_sum(tr[0], tr[1], tr[2]) < theta) return false;
        return perm_unchecked(kinf, tr[0], tr[1], tr[2]) > 1e-9;
    };
    auto f = [&](const Triple& tr) { return perm_unchecked(k0, tr[0], tr[1], tr[2]) / perm_unchecked(kinf, tr[0], tr[1], tr[2]); };
    std::mt19937_64 rng(seed);
    C1Estimate res;
    std::vector<std::pair<double, Triple>> top;
    for (std::uint64_t s = 0; s < n_samples; ++s) {
        Triple tr{detail::sample_in_ball(rng, domain), detail::sample_in_ball(rng, domain), detail::sample_in_ball(rng, domain)};
        if (s % 2 == 1) {
            const double squash = std::pow(10.0, -4.0 * unit_uniform(rng));
            for (auto& p : tr) p.y *= squash;
        }
        ++res.samples;
        if (!ok(tr)) continue;
        ++res.admissible;
        const double v = f(tr);
        if (static_cast<int>(top.size()) < refine_starts || v < top.back().first) {
            top.emplace_back(v, tr);
            std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            if (static_cast<int>(top.size()) > refine_starts) top.pop_back();
        }
    }
    if (top.empty()) throw Error("no admissible V_Far samples found");
    res.estimate = std::numeric_limits<double>::infinity();
    for (auto& [v, tr] : top) {
        detail::pattern_refine(tr, v, 0.02, 1e-7, f, ok, res.samples);
        if (v < res.estimate) {
            res.estimate = v;
            res.witness = tr;
        }
    }
    return res;
}

}  // namespace gmt
