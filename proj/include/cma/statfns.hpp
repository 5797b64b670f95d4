#pragma once

#include <cmath>
#include <limits>

#include "cma/types.hpp"

// Scalar special functions and distribution quantiles. Quantiles invert the
// corresponding CDF with a safeguarded Newton iteration inside a bracket, so
// accuracy is limited only by the CDF evaluations (series / continued
// fractions run to machine tolerance).

namespace cma::stats {

namespace detail {

inline constexpr int kMaxIter = 500;
inline constexpr double kEps = std::numeric_limits<double>::epsilon();
inline constexpr double kTiny = 1e-300;

// Regularized lower incomplete gamma P(a, x), series branch (x < a + 1).
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < kMaxIter * 10; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x), Lentz continued fraction
// (x >= a + 1).
inline double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter * 10; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw invalid_input("gamma_p: domain");
    if (x == 0.0) return 0.0;
    return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

// Continued fraction for the regularized incomplete beta function.
inline double beta_cf(double x, double a, double b) {
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter * 10; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return h;
}

inline double beta_inc(double x, double a, double b) {
    if (x < 0.0 || x > 1.0) throw invalid_input("beta_inc: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(x, a, b) / a;
    return 1.0 - front * beta_cf(1.0 - x, b, a) / b;
}

// Safeguarded Newton: keeps iterates inside [lo, hi], falls back to bisection
// when a step leaves the bracket or the derivative misbehaves.
template <typename F, typename DF>
double newton_bracketed(F cdf, DF pdf, double target, double lo, double hi, double x0) {
    double x = std::clamp(x0, lo, hi);
    for (int it = 0; it < 200; ++it) {
        double f = cdf(x) - target;
        if (f > 0.0)
            hi = x;
        else
            lo = x;
        double deriv = pdf(x);
        double step = (deriv > 0.0 && std::isfinite(deriv)) ? f / deriv : kInf;
        double xn = x - step;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) <= 1e-15 * (std::abs(x) + 1e-12)) return xn;
        x = xn;
    }
    return x;
}

}  // namespace detail

inline double erfc(double x) { return std::erfc(x); }
inline double erf(double x) { return std::erf(x); }

// Inverse of erfc on (0, 2).
inline double inverfc(double y) {
    if (!(y > 0.0 && y < 2.0)) throw invalid_input("inverfc: y outside (0,2)");
    if (y == 1.0) return 0.0;
    if (y > 1.0) return -inverfc(2.0 - y);
    // bisect to a rough root, then polish with Newton
    double lo = 0.0, hi = 28.0;
    for (int i = 0; i < 40; ++i) {
        double mid = 0.5 * (lo + hi);
        (std::erfc(mid) > y ? lo : hi) = mid;
    }
    double x = 0.5 * (lo + hi);
    constexpr double two_over_sqrt_pi = 1.1283791670955126;
    for (int i = 0; i < 8; ++i) {
        double f = std::erfc(x) - y;
        double df = -two_over_sqrt_pi * std::exp(-x * x);
        double step = f / df;
        if (!std::isfinite(step)) break;
        x -= step;
        if (std::abs(step) <= 1e-16 * (1.0 + std::abs(x))) break;
    }
    return x;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw invalid_input("normal_quantile: p outside (0,1)");
    return -std::sqrt(2.0) * inverfc(2.0 * p);
}

inline double chi2_cdf(double x, int dof) {
    if (dof < 1) throw invalid_input("chi2_cdf: dof < 1");
    if (x <= 0.0) return 0.0;
    return detail::gamma_p(0.5 * dof, 0.5 * x);
}

inline double chi2_pdf(double x, int dof) {
    if (x <= 0.0) return 0.0;
    double a = 0.5 * dof;
    return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a));
}

inline double chi2_quantile(double p, int dof) {
    if (!(p > 0.0 && p < 1.0)) throw invalid_input("chi2_quantile: p outside (0,1)");
    if (dof < 1) throw invalid_input("chi2_quantile: dof < 1");
    // Wilson-Hilferty starting point
    double z = normal_quantile(p);
    double c = 2.0 / (9.0 * dof);
    double guess = dof * std::pow(1.0 - c + z * std::sqrt(c), 3.0);
    if (!(guess > 0.0)) guess = 0.5 * dof;
    double hi = std::max(guess * 4.0, dof + 64.0);
    while (chi2_cdf(hi, dof) < p) hi *= 2.0;
    return detail::newton_bracketed([dof](double x) { return chi2_cdf(x, dof); },
                                    [dof](double x) { return chi2_pdf(x, dof); }, p, 0.0, hi,
                                    guess);
}

inline double t_cdf(double x, int dof) {
    if (dof < 1) throw invalid_input("t_cdf: dof < 1");
    if (x == 0.0) return 0.5;
    double ib = detail::beta_inc(dof / (dof + x * x), 0.5 * dof, 0.5);
    return x > 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

inline double t_pdf(double x, int dof) {
    double v = dof;
    double lognorm = std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) -
                     0.5 * std::log(v * M_PI);
    return std::exp(lognorm - 0.5 * (v + 1.0) * std::log1p(x * x / v));
}

inline double t_quantile(double p, int dof) {
    if (!(p > 0.0 && p < 1.0)) throw invalid_input("t_quantile: p outside (0,1)");
    if (dof < 1) throw invalid_input("t_quantile: dof < 1");
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -t_quantile(1.0 - p, dof);
    double z = normal_quantile(p);
    // Cornish-Fisher style start, good even at small dof
    double guess = z + (z * z * z + z) / (4.0 * dof);
    double hi = std::max(guess * 2.0, 2.0);
    while (t_cdf(hi, dof) < p) hi *= 2.0;
    return detail::newton_bracketed([dof](double x) { return t_cdf(x, dof); },
                                    [dof](double x) { return t_pdf(x, dof); }, p, 0.0, hi, guess);
}

}  // namespace cma::stats
