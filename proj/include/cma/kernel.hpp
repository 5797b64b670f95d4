#pragma once

#include <cmath>
#include <functional>

#include "cma/types.hpp"

namespace cma {

// Prior mean and kernel data for n training points plus one test point.
// K is the training Gram, k the cross-kernel column, k0 the test self-kernel,
// M / m the prior means.
struct PriorBundle {
    VectorXd M;
    MatrixXd K;
    double m = 0.0;
    VectorXd k;
    double k0 = 1.0;

    [[nodiscard]] Index n() const { return M.size(); }

    // Augmented (n+1) x (n+1) Gram, training rows first.
    [[nodiscard]] MatrixXd augmented_gram() const {
        Index nn = n();
        MatrixXd Kbar(nn + 1, nn + 1);
        Kbar.topLeftCorner(nn, nn) = K;
        Kbar.topRightCorner(nn, 1) = k;
        Kbar.bottomLeftCorner(1, nn) = k.transpose();
        Kbar(nn, nn) = k0;
        return Kbar;
    }

    [[nodiscard]] VectorXd augmented_mean() const {
        VectorXd Mbar(n() + 1);
        Mbar.head(n()) = M;
        Mbar(n()) = m;
        return Mbar;
    }
};

inline double kernel_eval(const KernelSpec& spec, const VectorXd& x1, const VectorXd& x2) {
    if (x1.size() != x2.size())
        throw invalid_input("kernel_eval: dimension mismatch");
    if (spec.kind == KernelKind::precomputed_gram)
        throw invalid_input("kernel_eval: precomputed Gram has no kernel function");
    if (!(spec.lengthscale > 0.0))
        throw invalid_input("kernel_eval: lengthscale must be > 0");
    double ell = spec.lengthscale;
    if (spec.kind == KernelKind::gaussian)
        return std::exp(-(x1 - x2).squaredNorm() / (2.0 * ell * ell));
    return std::exp(-(x1 - x2).lpNorm<1>() / ell);
}

using MeanFn = std::function<double(const VectorXd&)>;

namespace detail {

inline void check_bundle_diagonal(const PriorBundle& pb) {
    if (!(pb.k0 > 0.0)) throw invalid_gram("test self-kernel k0 must be > 0");
    if ((pb.K.diagonal().array() <= 0.0).any())
        throw invalid_gram("Gram diagonal must be strictly positive");
}

}  // namespace detail

// Evaluate an analytic kernel at all training/test pairs. mean_values holds the
// prior mean at the n training points followed by the test point.
inline PriorBundle assemble_prior(const VectorXd& mean_values, const KernelSpec& spec,
                                  const MatrixXd& X, const VectorXd& x) {
    Index n = X.rows();
    if (n < 1) throw invalid_input("assemble_prior: need at least one training point");
    if (X.cols() != x.size()) throw invalid_input("assemble_prior: feature dimension mismatch");
    if (mean_values.size() != n + 1)
        throw invalid_input("assemble_prior: need a mean value for all n+1 points");
    if (!mean_values.allFinite()) throw invalid_input("assemble_prior: non-finite mean value");

    PriorBundle pb;
    pb.M = mean_values.head(n);
    pb.m = mean_values(n);
    pb.K.resize(n, n);
    pb.k.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = i; j < n; ++j) {
            double kij = kernel_eval(spec, X.row(i), X.row(j));
            pb.K(i, j) = kij;
            pb.K(j, i) = kij;
        }
        pb.k(i) = kernel_eval(spec, X.row(i), x);
    }
    pb.k0 = kernel_eval(spec, x, x);
    detail::check_bundle_diagonal(pb);
    return pb;
}

inline PriorBundle assemble_prior(const MeanFn& mu, const KernelSpec& spec, const MatrixXd& X,
                                  const VectorXd& x) {
    if (!mu) throw invalid_input("assemble_prior: missing mean function");
    VectorXd means(X.rows() + 1);
    for (Index i = 0; i < X.rows(); ++i) means(i) = mu(X.row(i));
    means(X.rows()) = mu(x);
    return assemble_prior(means, spec, X, x);
}

// Precomputed-Gram path: Kbar is the augmented (n+1) x (n+1) Gram, training
// rows first.  Symmetry noise below tolerance is repaired by symmetrizing;
// larger asymmetry or an indefinite matrix is rejected.
inline PriorBundle assemble_prior_gram(const VectorXd& mean_values, MatrixXd Kbar) {
    if (Kbar.rows() != Kbar.cols() || Kbar.rows() < 2)
        throw invalid_gram("augmented Gram must be square with n+1 >= 2");
    Index n = Kbar.rows() - 1;
    if (mean_values.size() != n + 1)
        throw invalid_input("assemble_prior_gram: need a mean value for all n+1 points");
    if (!Kbar.allFinite()) throw invalid_gram("Gram contains non-finite entries");

    double scale = Kbar.cwiseAbs().maxCoeff();
    double asym = (Kbar - Kbar.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * std::max(scale, 1e-300))
        throw invalid_gram("Gram asymmetric beyond tolerance");
    Kbar = 0.5 * (Kbar + Kbar.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Kbar, Eigen::EigenvaluesOnly);
    double max_diag = Kbar.diagonal().maxCoeff();
    if (es.eigenvalues().minCoeff() < -1e-8 * max_diag)
        throw invalid_gram("Gram is not positive semidefinite");

    PriorBundle pb;
    pb.M = mean_values.head(n);
    pb.m = mean_values(n);
    pb.K = Kbar.topLeftCorner(n, n);
    pb.k = Kbar.topRightCorner(n, 1);
    pb.k0 = Kbar(n, n);
    detail::check_bundle_diagonal(pb);
    return pb;
}

}  // namespace cma
