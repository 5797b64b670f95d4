#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "cma/precompute.hpp"

// Fully-conformal prediction for noise-free effects, plus the brute-force
// grid oracle used to validate it.

namespace cma {

// Training residuals R and test residual r of the augmented fit at a
// candidate effect u.
struct ResidualPair {
    VectorXd R;
    double r = 0.0;
};

inline ResidualPair residuals_at(const Precomputation& pre, double u) {
    ResidualPair rp;
    rp.R = ((pre.A.array() * u + pre.B.array()).abs() / pre.S.array()).matrix();
    rp.r = std::abs(pre.a * u + pre.b) / pre.s;
    return rp;
}

// Per-training-point candidate intervals L_i: u is inside L_i exactly when
// the test residual does not exceed training residual i.
struct CandidateIntervals {
    VectorXd lower;
    VectorXd upper;
};

inline CandidateIntervals candidate_intervals(const Precomputation& pre) {
    CandidateIntervals ci;
    ci.lower.resize(pre.n);
    ci.upper.resize(pre.n);
    for (Index i = 0; i < pre.n; ++i) {
        double den_plus = pre.S(i) * pre.a + pre.s * pre.A(i);
        double den_minus = pre.S(i) * pre.a - pre.s * pre.A(i);
        if (den_minus <= 1e-14 * pre.S(i) * pre.a)
            throw idiocentricity_violation("candidate_intervals: vanishing denominator");
        double e1 = (-pre.S(i) * pre.b - pre.s * pre.B(i)) / den_plus;
        double e2 = (-pre.S(i) * pre.b + pre.s * pre.B(i)) / den_minus;
        ci.lower(i) = std::min(e1, e2);
        ci.upper(i) = std::max(e1, e2);
    }
    return ci;
}

namespace detail {

// tau-th smallest of the upper endpoints and tau-th largest of the lower
// endpoints, stable sort, zero-based index tau-1.
inline std::pair<double, double> endpoint_quantiles(VectorXd lower, VectorXd upper, int tau) {
    std::stable_sort(upper.begin(), upper.end());
    std::stable_sort(lower.begin(), lower.end(), std::greater<double>());
    return {lower(tau - 1), upper(tau - 1)};
}

}  // namespace detail

inline PredictionInterval predict_noise_free(const Precomputation& pre) {
    PredictionInterval itv;
    itv.method = Method::noise_free;
    itv.nominal_alpha = pre.alpha;
    itv.effective_confidence = 1.0 - pre.alpha;
    if (pre.tau > pre.n) return itv;  // no information: (-inf, +inf)
    CandidateIntervals ci = candidate_intervals(pre);
    auto [lo, up] = detail::endpoint_quantiles(std::move(ci.lower), std::move(ci.upper), pre.tau);
    itv.lower = lo;
    itv.upper = up;
    return itv;
}

// Evenly spaced validation grid spanning the data range plus ten standard
// deviations on each side.
inline std::vector<double> oracle_grid(const VectorXd& y, int points = 10000) {
    double mean = y.mean();
    double sd = std::sqrt((y.array() - mean).square().sum() / std::max<Index>(y.size(), 1));
    if (!(sd > 0.0)) sd = std::max(1.0, std::abs(mean));
    double lo = y.minCoeff() - 10.0 * sd;
    double hi = y.maxCoeff() + 10.0 * sd;
    std::vector<double> grid(points);
    for (int i = 0; i < points; ++i)
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / (points - 1);
    return grid;
}

// Brute-force conformal set: for every grid candidate u, refit the augmented
// posterior mean, compute all n+1 residuals, and keep u when the test
// residual ranks among the tau smallest.  Deliberately independent of the
// candidate-interval machinery above: explicit inverse, no partitioned
// shortcut.
inline std::vector<double> oracle_conformal_set(const PriorBundle& pb, const VectorXd& U,
                                                double alpha, const std::vector<double>& grid) {
    Index n = pb.n();
    if (U.size() != n) throw invalid_input("oracle_conformal_set: size mismatch");
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("oracle_conformal_set: bad alpha");
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (!std::isfinite(grid[g]) || (g > 0 && grid[g] < grid[g - 1]))
            throw invalid_input("oracle_conformal_set: grid must be finite and sorted");
    }
    int tau = conformal_tau(n, alpha);

    MatrixXd Kbar = pb.augmented_gram();
    VectorXd Mbar = pb.augmented_mean();
    double lambda = Kbar.diagonal().maxCoeff();
    MatrixXd inv = (Kbar + lambda * MatrixXd::Identity(n + 1, n + 1)).fullPivLu().inverse();
    MatrixXd Qbar = inv * Kbar;
    VectorXd tbar = lambda * (inv * Mbar);
    VectorXd scales = (lambda * Qbar.diagonal().array()).cwiseMax(0.0).sqrt();

    std::vector<double> accepted;
    VectorXd Ubar(n + 1);
    Ubar.head(n) = U;
    for (double u : grid) {
        Ubar(n) = u;
        VectorXd post = Qbar * Ubar + tbar;
        VectorXd res = (Ubar - post).cwiseAbs().cwiseQuotient(scales);
        double r = res(n);
        int strictly_below = 0;
        for (Index i = 0; i < n; ++i)
            if (res(i) < r) ++strictly_below;
        if (strictly_below <= tau - 1) accepted.push_back(u);
    }
    return accepted;
}

}  // namespace cma
