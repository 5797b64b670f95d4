#pragma once

#include <cmath>

#include "cma/statfns.hpp"
#include "cma/types.hpp"

// Classical random-effects meta-analysis baselines: DerSimonian-Laird,
// REML with the Hartung-Knapp-Sidik-Jonkman variance, and Bayesian trial
// prediction with a plug-in heterogeneity estimate.

namespace cma {

struct HeterogeneityFit {
    double nu_hat = 0.0;       // heterogeneity variance estimate (tau^2)
    double ate_hat = 0.0;      // pooled mean
    double var_ate_hat = 0.0;  // variance of the pooled mean
    VectorXd weights;          // w_i = 1 / (V_i + nu_hat)
    int iterations = 0;
    bool converged = true;
    bool small_sample = false;  // n == 2: t quantile with 1 dof, interval is fragile
};

namespace detail {

inline void check_meta_inputs(const VectorXd& Y, const VectorXd& V, double alpha) {
    if (Y.size() != V.size()) throw invalid_input("meta baseline: Y/V size mismatch");
    if (Y.size() < 2) throw invalid_input("meta baseline: need n >= 2 trials");
    if (!Y.allFinite() || !V.allFinite()) throw invalid_input("meta baseline: non-finite input");
    if ((V.array() <= 0.0).any())
        throw invalid_input("meta baseline: within-trial variances must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("meta baseline: alpha outside (0,1)");
}

inline double pooled_mean(const VectorXd& Y, const VectorXd& w) {
    return w.dot(Y) / w.sum();
}

}  // namespace detail

inline std::pair<HeterogeneityFit, PredictionInterval> dersimonian_laird(const VectorXd& Y,
                                                                         const VectorXd& V,
                                                                         double alpha) {
    detail::check_meta_inputs(Y, V, alpha);
    Index n = Y.size();
    VectorXd Vinv = V.cwiseInverse();
    double ybar = Vinv.dot(Y) / Vinv.sum();
    double Qstat = (Vinv.array() * (Y.array() - ybar).square()).sum();
    double S1 = Vinv.sum();
    double S2 = Vinv.array().square().sum();
    double nu = std::max(0.0, (Qstat - static_cast<double>(n - 1)) / (S1 - S2 / S1));

    HeterogeneityFit fit;
    fit.nu_hat = nu;
    fit.weights = (V.array() + nu).inverse();
    fit.ate_hat = detail::pooled_mean(Y, fit.weights);
    fit.var_ate_hat = 1.0 / fit.weights.sum();
    fit.small_sample = n == 2;

    double half = stats::t_quantile(1.0 - alpha / 2.0, static_cast<int>(n - 1)) *
                  std::sqrt(fit.nu_hat + fit.var_ate_hat);
    PredictionInterval itv{fit.ate_hat - half, fit.ate_hat + half, Method::dersimonian_laird,
                           alpha, 1.0 - alpha};
    return {fit, itv};
}

// Alternating REML update for nu with the inverse-variance weight/mean
// update, from nu = 0, clamped at zero each step.  Non-convergence is
// reported through the fit; the interval is still emitted.
inline std::pair<HeterogeneityFit, PredictionInterval> reml_hksj(const VectorXd& Y,
                                                                 const VectorXd& V, double alpha,
                                                                 double tol = 1e-8,
                                                                 int max_iter = 1000) {
    detail::check_meta_inputs(Y, V, alpha);
    if (!(tol > 0.0)) throw invalid_input("reml_hksj: tol must be > 0");
    Index n = Y.size();

    HeterogeneityFit fit;
    fit.converged = false;
    double nu = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        VectorXd w = (V.array() + nu).inverse();
        double ate = detail::pooled_mean(Y, w);
        VectorXd w2 = w.array().square();
        double nu_next = (w2.array() * ((Y.array() - ate).square() - V.array())).sum() /
                             w2.sum() +
                         1.0 / w.sum();
        nu_next = std::max(0.0, nu_next);
        fit.iterations = it;
        bool done = std::abs(nu_next - nu) <= tol;
        nu = nu_next;
        if (done) {
            fit.converged = true;
            break;
        }
    }
    fit.nu_hat = nu;
    fit.weights = (V.array() + nu).inverse();
    fit.ate_hat = detail::pooled_mean(Y, fit.weights);
    double wsum = fit.weights.sum();
    fit.var_ate_hat =
        (fit.weights.array() * (Y.array() - fit.ate_hat).square()).sum() /
        (static_cast<double>(n - 1) * wsum);
    fit.small_sample = n == 2;

    double half = stats::t_quantile(1.0 - alpha / 2.0, static_cast<int>(n - 1)) *
                  std::sqrt(fit.nu_hat + fit.var_ate_hat);
    PredictionInterval itv{fit.ate_hat - half, fit.ate_hat + half, Method::reml_hksj, alpha,
                           1.0 - alpha};
    return {fit, itv};
}

// Posterior predictive interval for a new trial's observed effect given its
// within-trial variance, with an improper uniform prior on the pooled mean
// and plug-in heterogeneity.
inline PredictionInterval bayesian_trial(const VectorXd& Y, const VectorXd& V, double v_new,
                                         double alpha, double nu_plugin) {
    detail::check_meta_inputs(Y, V, alpha);
    if (v_new < 0.0 || !std::isfinite(v_new)) throw invalid_input("bayesian_trial: negative v");
    if (nu_plugin < 0.0 || !std::isfinite(nu_plugin))
        throw invalid_input("bayesian_trial: negative nu");
    VectorXd w = (V.array() + nu_plugin).inverse();
    double ate = detail::pooled_mean(Y, w);
    double variance = 1.0 / w.sum() + nu_plugin + v_new;
    double half = stats::normal_quantile(1.0 - alpha / 2.0) * std::sqrt(variance);
    return {ate - half, ate + half, Method::bayes, alpha, 1.0 - alpha};
}

}  // namespace cma
