#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "cma/baselines.hpp"
#include "cma/meta.hpp"
#include "cma/rng.hpp"

// Synthetic-data generators and the coverage/width experiment runner.

namespace cma {

struct Dataset {
    MatrixXd X;
    VectorXd U;

    [[nodiscard]] Index rows() const { return X.rows(); }
};

// Self-contained synthetic dataset: uniform features on [-1,1]^dim and a
// random smooth RKHS function as the true effect, standardized to unit
// spread.
inline Dataset synth_dataset(Index rows, Index dim, const KernelSpec& kernel, std::uint64_t seed,
                             Index centers = 24) {
    if (rows < 1 || dim < 1 || centers < 1) throw invalid_input("synth_dataset: bad shape");
    auto rng = substream(seed, 0, 0x5d417);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    MatrixXd C(centers, dim);
    VectorXd coef(centers);
    for (Index i = 0; i < centers; ++i) {
        for (Index j = 0; j < dim; ++j) C(i, j) = unif(rng);
        coef(i) = gauss(rng);
    }
    Dataset ds;
    ds.X.resize(rows, dim);
    ds.U.resize(rows);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < dim; ++j) ds.X(i, j) = unif(rng);
        double u = 0.0;
        for (Index c = 0; c < centers; ++c) u += coef(c) * kernel_eval(kernel, C.row(c), ds.X.row(i));
        ds.U(i) = u;
    }
    double mean = ds.U.mean();
    double sd = std::sqrt((ds.U.array() - mean).square().sum() / rows);
    if (sd > 0.0) ds.U = ((ds.U.array() - mean) / sd).matrix();
    return ds;
}

// Scale of the within-trial variance sampler: V_i ~ Exp(1) * scale with
// scale = sqrt(effect_noise * mean|U|), so (E V_i)^2 / E|U_i| = effect_noise.
inline double variance_scale(const VectorXd& U, double effect_noise) {
    if (effect_noise < 0.0) throw invalid_input("variance_scale: negative effect noise");
    if (U.size() < 1) throw invalid_input("variance_scale: empty U");
    return std::sqrt(effect_noise * U.cwiseAbs().mean());
}

inline VectorXd gen_variances(Index count, double scale, std::mt19937_64& rng) {
    std::exponential_distribution<double> exp1(1.0);
    VectorXd V(count);
    for (Index i = 0; i < count; ++i) V(i) = exp1(rng) * scale;
    return V;
}

inline VectorXd gen_variances(const VectorXd& U, double effect_noise, std::mt19937_64& rng) {
    return gen_variances(U.size(), variance_scale(U, effect_noise), rng);
}

// Random RKHS offset f~(x) = sum_i g_i kappa(x~_i, x) over held-out anchors.
inline VectorXd rkhs_offset(const MatrixXd& Xeval, const MatrixXd& Xheld, const KernelSpec& kernel,
                            std::mt19937_64& rng) {
    if (Xheld.rows() < 1) throw invalid_input("rkhs_offset: need held-out rows");
    std::normal_distribution<double> gauss(0.0, 1.0);
    VectorXd g(Xheld.rows());
    for (Index i = 0; i < g.size(); ++i) g(i) = gauss(rng);
    VectorXd f(Xeval.rows());
    for (Index r = 0; r < Xeval.rows(); ++r) {
        double acc = 0.0;
        for (Index i = 0; i < Xheld.rows(); ++i)
            acc += g(i) * kernel_eval(kernel, Xheld.row(i), Xeval.row(r));
        f(r) = acc;
    }
    return f;
}

// Mixing weight p = sqrt(prior_error * Var(U) / MSE(U, F)); M = p F + (1-p) U
// gives MSE(M, U) = prior_error * Var(U) exactly.  p > 1 is permitted.
inline double prior_mix_weight(const VectorXd& U, const VectorXd& F, double prior_error) {
    if (U.size() != F.size()) throw invalid_input("prior_mix_weight: size mismatch");
    if (prior_error < 0.0) throw invalid_input("prior_mix_weight: negative prior error");
    double n = static_cast<double>(U.size());
    double var_u = (U.array() - U.mean()).square().sum() / n;
    double mse = (U - F).squaredNorm() / n;
    if (mse == 0.0) throw numerical_failure("prior_mix_weight: degenerate offset (MSE == 0)");
    return std::sqrt(prior_error * var_u / mse);
}

inline VectorXd mix_prior(const VectorXd& U, const VectorXd& F, double p) {
    return p * F + (1.0 - p) * U;
}

// Prior means of controlled quality for the training features.  Redraws the
// random offset up to 10 times if it degenerates.
inline VectorXd gen_prior_mean(const VectorXd& U, const MatrixXd& X, const MatrixXd& Xheld,
                               double prior_error, const KernelSpec& kernel,
                               std::mt19937_64& rng) {
    if (U.size() != X.rows()) throw invalid_input("gen_prior_mean: size mismatch");
    for (int attempt = 0; attempt < 10; ++attempt) {
        VectorXd F = rkhs_offset(X, Xheld, kernel, rng);
        double mse = (U - F).squaredNorm() / static_cast<double>(U.size());
        if (mse > 0.0) return mix_prior(U, F, prior_mix_weight(U, F, prior_error));
    }
    throw numerical_failure("gen_prior_mean: offset degenerate after 10 attempts");
}

inline VectorXd sample_observed(const VectorXd& U, const VectorXd& V, std::mt19937_64& rng) {
    if (U.size() != V.size()) throw invalid_input("sample_observed: size mismatch");
    if ((V.array() < 0.0).any()) throw invalid_input("sample_observed: negative variance");
    std::normal_distribution<double> gauss(0.0, 1.0);
    VectorXd Y(U.size());
    for (Index i = 0; i < U.size(); ++i) Y(i) = U(i) + std::sqrt(V(i)) * gauss(rng);
    return Y;
}

// Split-style calibration treating the prior mean as a frozen predictor:
// conformal quantile of the |Y_i - M_i| residuals around the test-point mean.
inline PredictionInterval fixed_prior_interval(const VectorXd& Y, const VectorXd& M, double m_test,
                                               double alpha) {
    if (Y.size() != M.size()) throw invalid_input("fixed_prior_interval: size mismatch");
    Index n = Y.size();
    int tau = conformal_tau(n, alpha);
    PredictionInterval itv;
    itv.method = Method::fixed_prior;
    itv.nominal_alpha = alpha;
    itv.effective_confidence = 1.0 - alpha;
    if (tau > n) return itv;
    VectorXd res = (Y - M).cwiseAbs();
    std::stable_sort(res.begin(), res.end());
    double radius = res(tau - 1);
    itv.lower = m_test - radius;
    itv.upper = m_test + radius;
    return itv;
}

struct SimConfig {
    double effect_noise = 0.0;
    double prior_error = 0.0;
    Index n_train = 50;
    Index n_test = 16;
    int n_splits = 32;
    Index n_heldout = 32;
    double alpha = 0.1;
    double eta = 0.0;
    double delta = 0.05;
    KernelSpec kernel = KernelSpec::gaussian(1.0);
    std::vector<Method> methods = {Method::effect};
    std::uint64_t seed = 0;
};

struct MethodStats {
    double coverage = 0.0;
    double mean_width = 0.0;
    double width_std = 0.0;
    long n_evaluated = 0;
    double infinite_fraction = 0.0;
};

struct PointRecord {
    Method method;
    int split;
    Index test_index;
    double width;
    bool covered;
    bool finite;
};

struct CoverageReport {
    std::map<Method, MethodStats> per_method;
    std::vector<PointRecord> points;
    std::vector<double> split_mix_weight;  // prior mixing weight p per split
};

// Run the configured methods over random train/test splits and aggregate
// coverage and width.  Coverage targets the true effect u for effect methods
// and a freshly drawn observed effect y for trial methods.  Infinite
// intervals count as covered and are excluded from the width averages.
inline CoverageReport run_simulation(const SimConfig& cfg, const Dataset& data) {
    if (cfg.n_splits < 1 || cfg.n_test < 1 || cfg.n_train < 1)
        throw invalid_input("run_simulation: bad split shape");
    if (cfg.methods.empty()) throw invalid_input("run_simulation: no methods configured");
    Index needed = cfg.n_train + cfg.n_test + cfg.n_heldout;
    if (data.rows() < needed)
        throw invalid_input("run_simulation: dataset has fewer rows than n_train + n_test + held-out");

    CoverageReport report;
    bool wants_hksj_fit = false;
    for (Method m : cfg.methods)
        if (m == Method::bayes) wants_hksj_fit = true;

    for (int split = 0; split < cfg.n_splits; ++split) {
        auto rng = substream(cfg.seed, static_cast<std::uint64_t>(split));
        std::vector<Index> idx(data.rows());
        std::iota(idx.begin(), idx.end(), Index{0});
        std::shuffle(idx.begin(), idx.end(), rng);

        auto take = [&](Index offset, Index count, MatrixXd& Xout, VectorXd& Uout) {
            Xout.resize(count, data.X.cols());
            Uout.resize(count);
            for (Index i = 0; i < count; ++i) {
                Xout.row(i) = data.X.row(idx[offset + i]);
                Uout(i) = data.U(idx[offset + i]);
            }
        };
        MatrixXd Xtr, Xte, Xheld;
        VectorXd Utr, Ute, Uheld;
        take(0, cfg.n_train, Xtr, Utr);
        take(cfg.n_train, cfg.n_test, Xte, Ute);
        take(cfg.n_train + cfg.n_test, cfg.n_heldout, Xheld, Uheld);

        // per-split moments come from the training pool
        double vscale = variance_scale(Utr, cfg.effect_noise);
        VectorXd Vtr = gen_variances(cfg.n_train, vscale, rng);
        VectorXd Vte = gen_variances(cfg.n_test, vscale, rng);
        VectorXd Ytr = sample_observed(Utr, Vtr, rng);
        VectorXd Yte = sample_observed(Ute, Vte, rng);

        MatrixXd Xall(cfg.n_train + cfg.n_test, data.X.cols());
        Xall << Xtr, Xte;
        VectorXd F = rkhs_offset(Xall, Xheld, cfg.kernel, rng);
        double p = 0.0;
        if (cfg.prior_error == 0.0) {
            p = 0.0;
        } else {
            for (int attempt = 0;; ++attempt) {
                double mse = (Utr - F.head(cfg.n_train)).squaredNorm() / double(cfg.n_train);
                if (mse > 0.0) break;
                if (attempt >= 9)
                    throw numerical_failure("run_simulation: degenerate prior offset");
                F = rkhs_offset(Xall, Xheld, cfg.kernel, rng);
            }
            p = prior_mix_weight(Utr, F.head(cfg.n_train), cfg.prior_error);
        }
        report.split_mix_weight.push_back(p);
        VectorXd Mtr = mix_prior(Utr, F.head(cfg.n_train), p);
        VectorXd Mte = mix_prior(Ute, F.tail(cfg.n_test), p);

        // training Gram is shared across the split's test points
        MatrixXd Ktr(cfg.n_train, cfg.n_train);
        for (Index i = 0; i < cfg.n_train; ++i)
            for (Index j = i; j < cfg.n_train; ++j) {
                double kij = kernel_eval(cfg.kernel, Xtr.row(i), Xtr.row(j));
                Ktr(i, j) = kij;
                Ktr(j, i) = kij;
            }

        // split-level baselines
        PredictionInterval itv_dl, itv_hksj;
        HeterogeneityFit fit_hksj;
        bool have_dl = false, have_hksj = false;
        for (Method m : cfg.methods) {
            if (m == Method::dersimonian_laird && !have_dl) {
                itv_dl = dersimonian_laird(Ytr, Vtr, cfg.alpha).second;
                have_dl = true;
            }
            if ((m == Method::reml_hksj || wants_hksj_fit) && !have_hksj) {
                auto [fit, itv] = reml_hksj(Ytr, Vtr, cfg.alpha);
                fit_hksj = fit;
                itv_hksj = itv;
                have_hksj = true;
            }
        }

        for (Index t = 0; t < cfg.n_test; ++t) {
            PriorBundle pb;
            pb.M = Mtr;
            pb.K = Ktr;
            pb.m = Mte(t);
            pb.k.resize(cfg.n_train);
            for (Index i = 0; i < cfg.n_train; ++i)
                pb.k(i) = kernel_eval(cfg.kernel, Xtr.row(i), Xte.row(t));
            pb.k0 = kernel_eval(cfg.kernel, Xte.row(t), Xte.row(t));

            bool need_pre = false;
            for (Method m : cfg.methods)
                if (m == Method::effect || m == Method::clean_effect || m == Method::trial ||
                    m == Method::noise_free)
                    need_pre = true;
            Precomputation pre;
            if (need_pre) pre = precompute(pb, Ytr, cfg.alpha);

            for (Method m : cfg.methods) {
                PredictionInterval itv;
                double target;
                switch (m) {
                    case Method::effect:
                        itv = predict_effect(pre, Vtr, cfg.eta);
                        target = Ute(t);
                        break;
                    case Method::clean_effect:
                        itv = predict_clean_effect(pre, Vtr, cfg.delta);
                        target = Ute(t);
                        break;
                    case Method::trial:
                        itv = predict_trial(pre, Vtr, Vte(t), cfg.eta);
                        target = Yte(t);
                        break;
                    case Method::noise_free:
                        itv = predict_noise_free(pre);
                        target = Ute(t);
                        break;
                    case Method::dersimonian_laird:
                        itv = itv_dl;
                        target = Ute(t);
                        break;
                    case Method::reml_hksj:
                        itv = itv_hksj;
                        target = Ute(t);
                        break;
                    case Method::bayes:
                        itv = bayesian_trial(Ytr, Vtr, Vte(t), cfg.alpha, fit_hksj.nu_hat);
                        target = Yte(t);
                        break;
                    case Method::fixed_prior:
                        itv = fixed_prior_interval(Ytr, Mtr, Mte(t), cfg.alpha);
                        target = Ute(t);
                        break;
                }
                bool finite = itv.is_finite();
                report.points.push_back({m, split, t, finite ? itv.width() : kInf,
                                         finite ? itv.contains(target) : true, finite});
            }
        }
    }

    std::stable_sort(report.points.begin(), report.points.end(),
                     [](const PointRecord& l, const PointRecord& r) {
                         if (l.method != r.method) return l.method < r.method;
                         if (l.split != r.split) return l.split < r.split;
                         return l.test_index < r.test_index;
                     });

    for (Method m : cfg.methods) {
        MethodStats st;
        double wsum = 0.0, wsq = 0.0;
        long finite_count = 0, covered = 0, infinite = 0;
        for (const PointRecord& p : report.points) {
            if (p.method != m) continue;
            ++st.n_evaluated;
            if (!p.finite) {
                ++infinite;
                ++covered;  // an infinite interval trivially covers
                continue;
            }
            ++finite_count;
            if (p.covered) ++covered;
            wsum += p.width;
            wsq += p.width * p.width;
        }
        if (st.n_evaluated > 0) {
            st.coverage = static_cast<double>(covered) / st.n_evaluated;
            st.infinite_fraction = static_cast<double>(infinite) / st.n_evaluated;
        }
        if (finite_count > 0) {
            st.mean_width = wsum / finite_count;
            double var = wsq / finite_count - st.mean_width * st.mean_width;
            st.width_std = std::sqrt(std::max(0.0, var));
        }
        report.per_method[m] = st;
    }
    return report;
}

}  // namespace cma
