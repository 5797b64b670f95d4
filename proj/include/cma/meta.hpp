#pragma once

#include <cmath>

#include "cma/conformal.hpp"
#include "cma/statfns.hpp"

// The three meta-analysis predictors: clean-effect prediction with worst-case
// noise, noise-corrected trial prediction, and shaved effect prediction.

namespace cma {

// Expected noise contributions subtracted from squared residuals when
// predicting trials.  rho_i = eta * (Z_i s^2 - z S_i^2) is strictly
// decreasing in v under idiocentricity.
struct NoiseCorrection {
    VectorXd D;
    double d = 0.0;
    VectorXd Z;
    double z = 0.0;
    VectorXd rho;
    double eta = 0.0;
};

inline NoiseCorrection noise_correction(const Precomputation& pre, const VectorXd& V, double v,
                                        double eta) {
    if (V.size() != pre.n) throw invalid_input("noise_correction: V size mismatch");
    if (!V.allFinite() || (V.array() < 0.0).any())
        throw invalid_input("noise_correction: variances must be finite and >= 0");
    if (v < 0.0 || !std::isfinite(v)) throw invalid_input("noise_correction: negative v");
    if (eta < 0.0 || !std::isfinite(eta)) throw invalid_input("noise_correction: negative eta");

    NoiseCorrection nc;
    nc.eta = eta;
    MatrixXd ImQ = MatrixXd::Identity(pre.n, pre.n) - pre.Q;
    nc.D = ImQ.array().square().matrix() * V;
    nc.d = pre.q.array().square().matrix().dot(V);
    nc.Z = nc.D + v * pre.A.array().square().matrix();
    nc.z = nc.d + v * pre.a * pre.a;
    double s2 = pre.s * pre.s;
    nc.rho = eta * (nc.Z.array() * s2 - nc.z * pre.S.array().square()).matrix();
    return nc;
}

// Candidate intervals for trial prediction: y is inside L_i exactly when the
// noise-corrected squared test residual does not exceed training residual i.
// A negative radicand clamps to a point interval at the center.
inline CandidateIntervals trial_candidate_intervals(const Precomputation& pre,
                                                    const NoiseCorrection& nc) {
    CandidateIntervals ci;
    ci.lower.resize(pre.n);
    ci.upper.resize(pre.n);
    double s2 = pre.s * pre.s;
    for (Index i = 0; i < pre.n; ++i) {
        double S2 = pre.S(i) * pre.S(i);
        double aS2 = pre.a * pre.a * S2;
        double a2A2 = aS2 - pre.A(i) * pre.A(i) * s2;
        if (a2A2 <= 1e-14 * aS2)
            throw idiocentricity_violation("predict_trial: (aS_i)^2 - (A_i s)^2 not positive");
        double cross = pre.A(i) * pre.b - pre.a * pre.B(i);
        double center = (pre.A(i) * pre.B(i) * s2 - pre.a * pre.b * S2) / a2A2;
        double radicand = s2 * S2 * cross * cross - nc.rho(i) * a2A2;
        double radius = std::sqrt(std::max(0.0, radicand)) / a2A2;
        ci.lower(i) = center - radius;
        ci.upper(i) = center + radius;
    }
    return ci;
}

// Conformal prediction of a new trial's observed effect y given its
// within-trial variance v.  With eta == 0 (or all noise terms zero) this is
// exactly the noise-free interval, computed through the same code path.
inline PredictionInterval predict_trial(const Precomputation& pre, const VectorXd& V, double v,
                                        double eta) {
    NoiseCorrection nc = noise_correction(pre, V, v, eta);
    PredictionInterval itv;
    itv.method = Method::trial;
    itv.nominal_alpha = pre.alpha;
    itv.effective_confidence = 1.0 - pre.alpha;
    if (pre.tau > pre.n) return itv;

    CandidateIntervals ci = (nc.rho.array() == 0.0).all() ? candidate_intervals(pre)
                                                          : trial_candidate_intervals(pre, nc);
    auto [lo, up] = detail::endpoint_quantiles(std::move(ci.lower), std::move(ci.upper), pre.tau);
    itv.lower = lo;
    itv.upper = up;
    return itv;
}

// Confidence actually guaranteed for the true effect when the trial interval
// at v = 0 is used with noise correction eta.
inline double effect_confidence(double alpha, double eta) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("effect_confidence: bad alpha");
    if (eta < 0.0) throw invalid_input("effect_confidence: negative eta");
    return 1.0 - alpha / ((1.0 - alpha) * stats::erfc(std::sqrt(0.5 * eta)));
}

// Shaved effect prediction: the trial interval at v = 0, reported with the
// reduced effective confidence.  The confidence is metadata only; the
// interval is never re-inflated from it.
inline PredictionInterval predict_effect(const Precomputation& pre, const VectorXd& V,
                                         double eta) {
    double conf = effect_confidence(pre.alpha, eta);
    if (conf <= 0.0)
        throw infeasible_confidence("predict_effect: eta too large for the given alpha");
    PredictionInterval itv = predict_trial(pre, V, 0.0, eta);
    itv.method = Method::effect;
    itv.effective_confidence = conf;
    return itv;
}

// eta such that the effective confidence equals 1 - c * alpha.
inline double eta_for_confidence(double alpha, double c) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("eta_for_confidence: bad alpha");
    if (!(c > 1.0)) throw invalid_input("eta_for_confidence: need c > 1");
    double x = 1.0 / (c * (1.0 - alpha));
    if (x > 1.0 + 1e-12)
        throw infeasible_confidence("eta_for_confidence: c below 1/(1-alpha)");
    double t = x >= 1.0 ? 0.0 : stats::inverfc(x);
    return 2.0 * t * t;
}

// Smallest n at which the conformal quantile stays strictly within the n
// training candidates for a final confidence of `confidence` under
// noise-correction cost factor c (boundary n with (1-alpha)(n+1) == n
// counts as infeasible).
inline long min_trials_for_final_confidence(double c, double confidence) {
    if (!(c > 1.0)) throw invalid_input("min_trials: need c > 1");
    if (!(confidence > 0.0 && confidence < 1.0)) throw invalid_input("min_trials: bad confidence");
    double alpha = (1.0 - confidence) / c;
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("min_trials: infeasible target");
    double r = (1.0 - alpha) / alpha;
    return static_cast<long>(std::floor(r + 1e-9)) + 1;
}

// Worst-case interval displacement over all noise vectors in the chi-square
// ellipsoid: a 2n x n sensitivity matrix G and its maximal row norm after
// scaling by sqrt(rho * V).
struct CleanEffectGeometry {
    double rho_chi = 0.0;
    MatrixXd G;
    double omega = 0.0;
};

inline CleanEffectGeometry clean_effect_geometry(const Precomputation& pre, const VectorXd& V,
                                                 double delta) {
    if (V.size() != pre.n) throw invalid_input("clean_effect_geometry: V size mismatch");
    if (!V.allFinite() || (V.array() < 0.0).any())
        throw invalid_input("clean_effect_geometry: variances must be finite and >= 0");
    if (!(delta > 0.0 && delta < 1.0))
        throw invalid_input("clean_effect_geometry: delta outside (0,1)");

    CleanEffectGeometry geom;
    geom.rho_chi = stats::chi2_quantile(1.0 - delta, static_cast<int>(pre.n));
    geom.G.resize(2 * pre.n, pre.n);
    MatrixXd ImQ = MatrixXd::Identity(pre.n, pre.n) - pre.Q;
    for (Index i = 0; i < pre.n; ++i) {
        double den_plus = pre.S(i) * pre.a + pre.s * pre.A(i);
        double den_minus = pre.S(i) * pre.a - pre.s * pre.A(i);
        if (den_minus <= 1e-14 * pre.S(i) * pre.a)
            throw idiocentricity_violation("clean_effect_geometry: vanishing denominator");
        geom.G.row(i) = (-pre.S(i) * pre.q.transpose() + pre.s * ImQ.row(i)) / den_plus;
        geom.G.row(pre.n + i) = (-pre.S(i) * pre.q.transpose() - pre.s * ImQ.row(i)) / den_minus;
    }
    VectorXd scale = (geom.rho_chi * V.array()).sqrt();
    geom.omega = 0.0;
    for (Index r = 0; r < 2 * pre.n; ++r)
        geom.omega = std::max(geom.omega, geom.G.row(r).cwiseProduct(scale.transpose()).norm());
    return geom;
}

// Clean-effect prediction: the plain conformal interval computed on the
// observed Y, widened by omega at both ends.  Requires the Precomputation to
// have been built from Y.
inline PredictionInterval predict_clean_effect(const Precomputation& pre_on_y, const VectorXd& V,
                                               double delta) {
    PredictionInterval base = predict_noise_free(pre_on_y);
    CleanEffectGeometry geom = clean_effect_geometry(pre_on_y, V, delta);
    PredictionInterval itv;
    itv.lower = base.lower - geom.omega;
    itv.upper = base.upper + geom.omega;
    itv.method = Method::clean_effect;
    itv.nominal_alpha = pre_on_y.alpha;
    itv.effective_confidence = (1.0 - pre_on_y.alpha) * (1.0 - delta);
    return itv;
}

}  // namespace cma
