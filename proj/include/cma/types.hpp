#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <string>

namespace cma {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error taxonomy. The CLI maps invalid_input (and subclasses) to exit code 2
// and numerical_failure (and subclasses) to exit code 3.
struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct invalid_gram : invalid_input {
    using invalid_input::invalid_input;
};
struct infeasible_confidence : invalid_input {
    using invalid_input::invalid_input;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numerical_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct idiocentricity_violation : numerical_failure {
    using numerical_failure::numerical_failure;
};

enum class Method {
    noise_free,
    trial,
    effect,
    clean_effect,
    dersimonian_laird,
    reml_hksj,
    bayes,
    fixed_prior,
};

inline const char* method_name(Method m) {
    switch (m) {
        case Method::noise_free: return "noise-free";
        case Method::trial: return "trial";
        case Method::effect: return "effect";
        case Method::clean_effect: return "clean-effect";
        case Method::dersimonian_laird: return "dl";
        case Method::reml_hksj: return "hksj";
        case Method::bayes: return "bayes";
        case Method::fixed_prior: return "fixed-prior";
    }
    return "?";
}

inline Method parse_method(const std::string& name) {
    if (name == "noise-free") return Method::noise_free;
    if (name == "trial") return Method::trial;
    if (name == "effect" || name == "cma") return Method::effect;
    if (name == "clean-effect" || name == "cma-clean") return Method::clean_effect;
    if (name == "dl") return Method::dersimonian_laird;
    if (name == "hksj") return Method::reml_hksj;
    if (name == "bayes") return Method::bayes;
    if (name == "fixed-prior") return Method::fixed_prior;
    throw invalid_input("unknown method: " + name);
}

// One-dimensional prediction interval with extended-real endpoints.
// Either lower <= upper or the pair is (-inf, +inf).
struct PredictionInterval {
    double lower = -kInf;
    double upper = kInf;
    Method method = Method::noise_free;
    double nominal_alpha = 0.0;
    double effective_confidence = 1.0;

    [[nodiscard]] bool is_finite() const {
        return std::isfinite(lower) && std::isfinite(upper);
    }
    [[nodiscard]] double width() const { return upper - lower; }
    [[nodiscard]] bool contains(double x) const { return lower <= x && x <= upper; }
};

// One trial: feature vector, observed effect, within-trial variance.
struct TrialRecord {
    VectorXd features;
    double y = 0.0;
    double v = 0.0;
};

inline void validate(const TrialRecord& t) {
    if (!std::isfinite(t.y)) throw invalid_input("trial: observed effect must be finite");
    if (!(t.v >= 0.0) || !std::isfinite(t.v))
        throw invalid_input("trial: within-trial variance must be finite and >= 0");
    if (!t.features.allFinite()) throw invalid_input("trial: non-finite feature");
}

enum class KernelKind { gaussian, laplace, precomputed_gram };

struct KernelSpec {
    KernelKind kind = KernelKind::gaussian;
    double lengthscale = 1.0;
    std::string gram_source;  // file path, used when kind == precomputed_gram

    static KernelSpec gaussian(double lengthscale = 1.0) {
        return {KernelKind::gaussian, lengthscale, {}};
    }
    static KernelSpec laplace(double lengthscale = 1.0) {
        return {KernelKind::laplace, lengthscale, {}};
    }
    static KernelSpec gram(std::string path) {
        return {KernelKind::precomputed_gram, 1.0, std::move(path)};
    }
};

}  // namespace cma
