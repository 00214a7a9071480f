#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "core/summation.hpp"
#include "kernels.hpp"
#include "measure.hpp"
#include "permutations.hpp"

namespace gmt {

struct TruncationGrid {
    std::vector<double> epsilons;

    explicit TruncationGrid(std::vector<double> eps) : epsilons(std::move(eps)) {
        if (epsilons.empty()) throw Error("truncation grid must be nonempty");
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            if (!(epsilons[i] > 0.0)) throw Error("truncation lengths must be positive");
            if (i > 0 && !(epsilons[i] > epsilons[i - 1])) throw Error("truncation grid must be strictly increasing");
        }
    }

    /// Geometric grid from the discretization scale to the support diameter.
    static TruncationGrid geometric(double lo, double hi, int points = 16) {
        if (!(hi > lo) || points < 2) return TruncationGrid({lo});
        std::vector<double> e;
        const double ratio = std::log(hi / lo);
        for (int i = 0; i < points; ++i) e.push_back(lo * std::exp(ratio * i / (points - 1)));
        e.back() = hi;
        return TruncationGrid(std::move(e));
    }
    static TruncationGrid for_measure(const DiscreteMeasure& mu, int points = 16) {
        return geometric(mu.scale(), std::max(mu.scale(), diameter(mu)), points);
    }
};

/// T_{K,ε}f(z) = Σ_{|z−ζ| ≥ ε} f(ζ) K(z−ζ) w(ζ).
inline double apply_truncated(const KernelParam& k, const DiscreteMeasure& mu, const std::vector<double>& f, double eps, Point2 z) {
    if (!(eps > 0.0)) throw Error("truncation must be positive");
    if (f.size() != mu.size()) throw Error("function values must match the atom count");
    KahanSum s;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const Point2 d = z - mu[j].p;
        if (norm(d) >= eps) s.add(f[j] * kernel_unchecked(k, d) * mu[j].w);
    }
    return s.value();
}

/// T_{K,ε}1 evaluated at every atom.
inline std::vector<double> t1_at_atoms(const KernelParam& k, const DiscreteMeasure& mu, double eps, const Reduction& policy = {}) {
    const std::vector<double> one(mu.size(), 1.0);
    std::vector<double> out(mu.size());
    parallel_for(mu.size(), policy, [&](std::size_t i) { out[i] = apply_truncated(k, mu, one, eps, mu[i].p); });
    return out;
}

inline double weighted_l2(const DiscreteMeasure& mu, const std::vector<double>& v) {
    KahanSum s;
    for (std::size_t i = 0; i < mu.size(); ++i) s.add(v[i] * v[i] * mu[i].w);
    return std::sqrt(s.value());
}

inline double l2_norm_T1(const KernelParam& k, const DiscreteMeasure& mu, double eps, const Reduction& policy = {}) {
    return weighted_l2(mu, t1_at_atoms(k, mu, eps, policy));
}

struct SupNorm {
    double value = 0.0;
    double argmax_eps = 0.0;
};

inline SupNorm sup_l2_norm(const KernelParam& k, const DiscreteMeasure& mu, const TruncationGrid& grid, const Reduction& policy = {}) {
    SupNorm best{-1.0, grid.epsilons.front()};
    for (double e : grid.epsilons) {
        const double v = l2_norm_T1(k, mu, e, policy);
        if (v > best.value) best = {v, e};
    }
    return best;
}

struct MvReport {
    double lhs = 0.0;
    double p_third = 0.0;
    double remainder = 0.0;
    double normalized_remainder = 0.0;
    double growth = 0.0;
    double mass = 0.0;
};

/// Both sides of ‖T_{K,ε}1‖² = p_{K,ε}(μ)/3 + R with the same truncation.
inline MvReport mv_identity_report(const KernelParam& k, const DiscreteMeasure& mu, double eps, const Reduction& policy = {},
                                   std::optional<double> growth = std::nullopt) {
    if (eps < mu.scale()) throw Error("truncation below the discretization scale");
    MvReport r;
    const double n = l2_norm_T1(k, mu, eps, policy);
    r.lhs = n * n;
    r.p_third = perm_measure(k, mu, eps, policy).value / 3.0;
    r.remainder = r.lhs - r.p_third;
    r.growth = growth ? *growth : linear_growth_constant(mu);
    r.mass = total_mass(mu);
    r.normalized_remainder = r.remainder / (r.growth * r.growth * r.mass);
    return r;
}

struct Theorem1Ratios {
    double sup_inf = 0.0;
    double sup_0 = 0.0;
    double mass = 0.0;
    double growth = 0.0;
    double ratio_fwd = 0.0;
    double ratio_bwd = 0.0;
};

inline Theorem1Ratios theorem1_ratios(const DiscreteMeasure& mu, const TruncationGrid& grid, const Reduction& policy = {}) {
    if (mu.empty()) throw Error("theorem1 ratios need a nonempty measure");
    Theorem1Ratios r;
    r.sup_inf = sup_l2_norm(KernelParam::infinity(), mu, grid, policy).value;
    r.sup_0 = sup_l2_norm(KernelParam::finite(0.0), mu, grid, policy).value;
    r.mass = total_mass(mu);
    r.growth = linear_growth_constant(mu);
    const double g = r.growth * std::sqrt(r.mass);
    r.ratio_fwd = r.sup_inf / (r.sup_0 + g);
    r.ratio_bwd = r.sup_0 / (r.sup_inf + g);
    return r;
}

/// Truncated Cauchy transform of 1 at every atom, as complex numbers.
inline std::vector<Point2> cauchy_t1_at_atoms(const DiscreteMeasure& mu, double eps) {
    if (!(eps > 0.0)) throw Error("truncation must be positive");
    std::vector<Point2> out(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        KahanSum re, im;
        for (std::size_t j = 0; j < mu.size(); ++j) {
            const Point2 d = mu[i].p - mu[j].p;
            if (norm(d) < eps) continue;
            const Point2 c = cauchy_kernel(d);
            re.add(c.x * mu[j].w);
            im.add(c.y * mu[j].w);
        }
        out[i] = {re.value(), im.value()};
    }
    return out;
}

inline double cauchy_l2_norm(const DiscreteMeasure& mu, double eps) {
    const auto c = cauchy_t1_at_atoms(mu, eps);
    KahanSum s;
    for (std::size_t i = 0; i < mu.size(); ++i) s.add((c[i].x * c[i].x + c[i].y * c[i].y) * mu[i].w);
    return std::sqrt(s.value());
}

}  // namespace gmt
