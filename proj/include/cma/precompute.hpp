#pragma once

#include <cmath>
#include <optional>

#include "cma/kernel.hpp"
#include "cma/types.hpp"

namespace cma {

// Shared linear-algebraic quantities behind every conformal predictor here:
// the augmented ridge smoother Qbar = (Kbar + lambda*I)^-1 Kbar partitioned
// into (Q, q, q0), the prior pull-through tbar, and the affine residual
// coefficients (A, a, B, b) with posterior scales (S, s).  Residuals of the
// augmented fit at candidate effect u are |A_i u + B_i| / S_i for training
// points and |a u + b| / s for the test point.  Immutable once built.
struct Precomputation {
    MatrixXd Q;
    VectorXd q;
    double q0 = 0.0;
    VectorXd tbar;  // length n+1: (t; t0)
    VectorXd A;     // sign-standardized: A_i >= 0
    double a = 0.0;
    VectorXd B;     // sign-flipped in tandem with A
    double b = 0.0;
    VectorXd S;
    double s = 0.0;
    double lambda = 0.0;
    Index n = 0;
    int tau = 0;
    double alpha = 0.0;

    [[nodiscard]] bool idiocentric() const {
        return ((a / s) > (A.array() / S.array())).all();
    }
};

namespace detail {

// SPD solve of lhs * X = rhs; on a failed factorization add jitter once and
// retry (near-singular Grams from duplicated features).
struct SpdSolver {
    Eigen::LDLT<MatrixXd> ldlt;

    SpdSolver(MatrixXd lhs, double jitter) {
        ldlt.compute(lhs);
        if (ldlt.info() != Eigen::Success) {
            lhs.diagonal().array() += jitter;
            ldlt.compute(lhs);
            if (ldlt.info() != Eigen::Success)
                throw numerical_failure("SPD factorization failed even after jitter");
        }
    }
};

}  // namespace detail

inline int conformal_tau(Index n, double alpha) {
    return static_cast<int>(std::ceil((1.0 - alpha) * static_cast<double>(n + 1)));
}

// Build the Precomputation from a prior bundle and the observed training
// responses (U for noise-free prediction, Y for the meta-analysis
// algorithms).  lambda defaults to max diag Kbar, which guarantees
// idiocentricity; an override below that is accepted only if the
// idiocentricity inequality still verifies.
inline Precomputation precompute(const PriorBundle& pb, const VectorXd& responses, double alpha,
                                 std::optional<double> lambda_override = std::nullopt) {
    Index n = pb.n();
    if (responses.size() != n) throw invalid_input("precompute: responses size mismatch");
    if (!responses.allFinite()) throw invalid_input("precompute: non-finite response");
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("precompute: alpha outside (0,1)");
    if (pb.K.rows() != n || pb.K.cols() != n || pb.k.size() != n)
        throw invalid_input("precompute: inconsistent bundle shapes");

    MatrixXd Kbar = pb.augmented_gram();
    VectorXd Mbar = pb.augmented_mean();
    double lambda_default = Kbar.diagonal().maxCoeff();
    double lambda = lambda_override.value_or(lambda_default);
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw invalid_input("precompute: lambda must be positive and finite");

    MatrixXd lhs = Kbar + lambda * MatrixXd::Identity(n + 1, n + 1);
    detail::SpdSolver solver(lhs, 1e-10 * lambda);
    MatrixXd Qbar = solver.ldlt.solve(Kbar);
    // residual check; re-jitter once if the solve degraded
    double kn = Kbar.norm();
    if ((lhs * Qbar - Kbar).norm() > 1e-8 * std::max(kn, 1e-300)) {
        detail::SpdSolver retry(lhs + (1e-10 * lambda) * MatrixXd::Identity(n + 1, n + 1), 0.0);
        Qbar = retry.ldlt.solve(Kbar);
        if ((lhs * Qbar - Kbar).norm() > 1e-6 * std::max(kn, 1e-300))
            throw numerical_failure("precompute: singular solve even after jitter");
        solver.ldlt = retry.ldlt;
    }
    // (Kbar/lambda + I)^-1 Mbar == lambda * (Kbar + lambda I)^-1 Mbar
    VectorXd tbar = lambda * solver.ldlt.solve(Mbar);

    Precomputation pre;
    pre.Q = Qbar.topLeftCorner(n, n);
    pre.q = Qbar.bottomLeftCorner(1, n).transpose();
    pre.q0 = Qbar(n, n);
    pre.tbar = tbar;
    pre.A = -pre.q;
    pre.a = 1.0 - pre.q0;
    pre.B = responses - pre.Q * responses - tbar.head(n);
    pre.b = -pre.q.dot(responses) - tbar(n);
    // flip signs so A_i >= 0, B_i flipped in tandem; A_i == 0 leaves B_i alone
    for (Index i = 0; i < n; ++i) {
        if (pre.A(i) < 0.0) {
            pre.A(i) = -pre.A(i);
            pre.B(i) = -pre.B(i);
        }
    }
    if (!(pre.q0 > 0.0))
        throw numerical_failure("precompute: degenerate augmented Gram (q0 <= 0)");
    pre.S = (lambda * pre.Q.diagonal().array()).cwiseMax(0.0).sqrt();
    pre.s = std::sqrt(lambda * pre.q0);
    pre.lambda = lambda;
    pre.n = n;
    pre.tau = conformal_tau(n, alpha);
    pre.alpha = alpha;

    if (lambda < lambda_default && !pre.idiocentric())
        throw idiocentricity_violation(
            "precompute: user lambda below max diag Kbar violates idiocentricity");
    return pre;
}

}  // namespace cma
