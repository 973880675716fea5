#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdeqml/errors.hpp"
#include "sdeqml/polynomial.hpp"

namespace sdeqml {

/// Ordered model parameters; for CIR/iCIR the ordering is (a, b, sigma).
struct ParamVector {
    std::vector<double> values;

    ParamVector() = default;
    ParamVector(std::initializer_list<double> init) : values(init) {}
    explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}

    double operator[](std::size_t i) const { return values[i]; }
    std::size_t size() const { return values.size(); }
};

/// Conditional first moment and variance of a transition.
struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Drift and diffusion of an SDE evaluated at one state.
struct DriftDiffusion {
    double drift = 0.0;
    double diffusion = 0.0;
};

/**
 * One scalar diffusion model dX = a(X,theta) dt + b(X,theta) dW.
 *
 * Beyond the drift/diffusion evaluators a model may register the
 * coefficients of a(x) and b^2(x) as polynomials in x; models that do are
 * eligible for the exact symbolic generator (generator_apply) and their
 * Euler/Ito-Taylor moment providers share one evaluation path.
 * d_diff_sq is the derivative d/dx[b^2(x)], used by the Fichera check; when
 * absent a central finite difference of diffusion^2 is substituted.
 */
struct ModelSpec {
    std::string name;
    int param_count = 0;
    std::vector<bool> positivity_mask;
    double state_min = -std::numeric_limits<double>::infinity();

    std::function<double(double, const ParamVector&)> drift;
    std::function<double(double, const ParamVector&)> diffusion;
    std::function<double(double, const ParamVector&)> d_diff_sq;  // optional

    std::function<Polynomial(const ParamVector&)> drift_coeffs;    // optional
    std::function<Polynomial(const ParamVector&)> diff_sq_coeffs;  // optional

    bool has_polynomials() const {
        return static_cast<bool>(drift_coeffs) && static_cast<bool>(diff_sq_coeffs);
    }
};

inline void validate_theta(const ModelSpec& model, const ParamVector& theta) {
    if (static_cast<int>(theta.size()) != model.param_count) {
        std::ostringstream os;
        os << "model '" << model.name << "' expects " << model.param_count
           << " parameters, got " << theta.size();
        throw DomainError(os.str());
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (!std::isfinite(theta[i]))
            throw DomainError("non-finite parameter at index " + std::to_string(i));
        if (model.positivity_mask[i] && theta[i] <= 0.0)
            throw DomainError("parameter " + std::to_string(i) + " of model '" + model.name +
                              "' must be > 0, got " + std::to_string(theta[i]));
    }
}

inline void check_state(const ModelSpec& model, double x) {
    if (!(x >= model.state_min)) {
        std::ostringstream os;
        os << "state " << x << " outside domain of model '" << model.name << "' (x >= "
           << model.state_min << ")";
        throw DomainError(os.str());
    }
}

/// (a(x,theta), b(x,theta)); pure and deterministic.
inline DriftDiffusion eval_coefficients(const ModelSpec& model, const ParamVector& theta,
                                        double x) {
    validate_theta(model, theta);
    check_state(model, x);
    return {model.drift(x, theta), model.diffusion(x, theta)};
}

/// b^2(x,theta), through the registered polynomial when one exists so that all
/// moment baselines share a single evaluation path.
inline double diffusion_sq(const ModelSpec& model, const ParamVector& theta, double x) {
    if (model.diff_sq_coeffs) return model.diff_sq_coeffs(theta)(x);
    const double b = model.diffusion(x, theta);
    return b * b;
}

/// d/dx[b^2] at x; analytic when registered, otherwise a central difference
/// with step 1e-6*max(1,|x|) (one-sided at the edge of the state domain).
inline double d_diff_sq_value(const ModelSpec& model, const ParamVector& theta, double x) {
    if (model.d_diff_sq) return model.d_diff_sq(x, theta);
    const double step = 1e-6 * std::max(1.0, std::abs(x));
    const double lo = x - step;
    if (lo >= model.state_min) {
        const double bp = model.diffusion(x + step, theta);
        const double bm = model.diffusion(lo, theta);
        return (bp * bp - bm * bm) / (2.0 * step);
    }
    const double b0 = model.diffusion(x, theta);
    const double bp = model.diffusion(x + step, theta);
    return (bp * bp - b0 * b0) / step;
}

/**
 * Closed-form conditional mean and variance of the CIR model over a gap dt,
 * the standard affine-model results
 *   E[X|x]   = b + (x-b) e^{-a dt}
 *   Var[X|x] = x (s^2/a)(e^{-a dt} - e^{-2 a dt}) + b (s^2/(2a))(1 - e^{-a dt})^2.
 * These textbook formulas are the benchmark oracle for the whole moment
 * pipeline.
 */
inline Moments cir_exact_moments(const ParamVector& theta, double x, double dt) {
    if (theta.size() != 3) throw DomainError("cir_exact_moments expects (a, b, sigma)");
    const double a = theta[0], b = theta[1], s = theta[2];
    if (!(a > 0.0) || !(b > 0.0) || !(s > 0.0))
        throw DomainError("cir_exact_moments requires a, b, sigma > 0");
    if (!(x >= 0.0) || !(dt >= 0.0))
        throw DomainError("cir_exact_moments requires x >= 0 and dt >= 0");
    const double e = std::exp(-a * dt);
    const double mean = b + (x - b) * e;
    const double var =
        x * (s * s / a) * (e - e * e) + b * (s * s / (2.0 * a)) * (1.0 - e) * (1.0 - e);
    return {mean, var};
}

/// L p = a(x) p'(x) + (1/2) b^2(x) p''(x) as exact coefficient arithmetic.
inline Polynomial generator_apply(const ModelSpec& model, const ParamVector& theta,
                                  const Polynomial& p) {
    if (!model.has_polynomials())
        throw std::logic_error("generator_apply: model '" + model.name +
                               "' has no polynomial drift/diffusion^2 registration");
    validate_theta(model, theta);
    const Polynomial drift_p = model.drift_coeffs(theta);
    const Polynomial dsq_p = model.diff_sq_coeffs(theta);
    return drift_p * p.derivative() + dsq_p.scaled(0.5) * p.derivative().derivative();
}

/// Unconstrained -> constrained: exp on entries flagged positive.
inline ParamVector constrain_params(const std::vector<double>& unconstrained,
                                    const std::vector<bool>& mask) {
    std::vector<double> out(unconstrained.size());
    for (std::size_t i = 0; i < unconstrained.size(); ++i) {
        if (!std::isfinite(unconstrained[i]))
            throw DomainError("non-finite unconstrained parameter at index " + std::to_string(i));
        out[i] = (i < mask.size() && mask[i]) ? std::exp(unconstrained[i]) : unconstrained[i];
    }
    return ParamVector(std::move(out));
}

/// Constrained -> unconstrained: log on entries flagged positive.
inline std::vector<double> unconstrain_params(const ParamVector& theta,
                                              const std::vector<bool>& mask) {
    std::vector<double> out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (!std::isfinite(theta[i]))
            throw DomainError("non-finite parameter at index " + std::to_string(i));
        if (i < mask.size() && mask[i]) {
            if (theta[i] <= 0.0)
                throw DomainError("parameter " + std::to_string(i) + " must be > 0 to unconstrain");
            out[i] = std::log(theta[i]);
        } else {
            out[i] = theta[i];
        }
    }
    return out;
}

/// Cox-Ingersoll-Ross: dX = a(b - X) dt + sigma sqrt(X) dW on (0, inf).
inline const ModelSpec& cir_model() {
    static const ModelSpec spec = [] {
        ModelSpec m;
        m.name = "cir";
        m.param_count = 3;
        m.positivity_mask = {true, true, true};
        m.state_min = 0.0;  // x = 0 itself is admitted for boundary diagnostics
        m.drift = [](double x, const ParamVector& th) { return th[0] * (th[1] - x); };
        m.diffusion = [](double x, const ParamVector& th) { return th[2] * std::sqrt(x); };
        m.d_diff_sq = [](double, const ParamVector& th) { return th[2] * th[2]; };
        m.drift_coeffs = [](const ParamVector& th) {
            return Polynomial{th[0] * th[1], -th[0]};
        };
        m.diff_sq_coeffs = [](const ParamVector& th) {
            return Polynomial{0.0, th[2] * th[2]};
        };
        return m;
    }();
    return spec;
}

/// Inverse CIR: dX = [a X + (sigma^2 - a b) X^2] dt - sigma X^{3/2} dW, X = 1/CIR.
inline const ModelSpec& icir_model() {
    static const ModelSpec spec = [] {
        ModelSpec m;
        m.name = "icir";
        m.param_count = 3;
        m.positivity_mask = {true, true, true};
        m.state_min = 0.0;
        m.drift = [](double x, const ParamVector& th) {
            return th[0] * x + (th[2] * th[2] - th[0] * th[1]) * x * x;
        };
        m.diffusion = [](double x, const ParamVector& th) { return th[2] * x * std::sqrt(x); };
        m.d_diff_sq = [](double x, const ParamVector& th) {
            return 3.0 * th[2] * th[2] * x * x;
        };
        m.drift_coeffs = [](const ParamVector& th) {
            return Polynomial{0.0, th[0], th[2] * th[2] - th[0] * th[1]};
        };
        m.diff_sq_coeffs = [](const ParamVector& th) {
            return Polynomial{0.0, 0.0, 0.0, th[2] * th[2]};
        };
        return m;
    }();
    return spec;
}

/// Constant-coefficient test model: dX = a0 dt + sigma dW, theta = (a0, sigma).
inline const ModelSpec& constant_model() {
    static const ModelSpec spec = [] {
        ModelSpec m;
        m.name = "constant";
        m.param_count = 2;
        m.positivity_mask = {false, false};
        m.drift = [](double, const ParamVector& th) { return th[0]; };
        m.diffusion = [](double, const ParamVector& th) { return th[1]; };
        m.d_diff_sq = [](double, const ParamVector&) { return 0.0; };
        m.drift_coeffs = [](const ParamVector& th) { return Polynomial{th[0]}; };
        m.diff_sq_coeffs = [](const ParamVector& th) { return Polynomial{th[1] * th[1]}; };
        return m;
    }();
    return spec;
}

/**
 * Build a custom model from polynomial drift and diffusion^2 coefficient
 * factories; evaluators and the Fichera derivative are derived from the
 * polynomials, so the model works with every moment provider including the
 * exact symbolic generator.
 */
inline ModelSpec make_polynomial_model(
    std::string name, int param_count, std::vector<bool> positivity_mask,
    std::function<Polynomial(const ParamVector&)> drift_coeffs,
    std::function<Polynomial(const ParamVector&)> diff_sq_coeffs,
    double state_min = -std::numeric_limits<double>::infinity()) {
    ModelSpec m;
    m.name = std::move(name);
    m.param_count = param_count;
    m.positivity_mask = std::move(positivity_mask);
    m.state_min = state_min;
    m.drift = [drift_coeffs](double x, const ParamVector& th) { return drift_coeffs(th)(x); };
    m.diffusion = [diff_sq_coeffs](double x, const ParamVector& th) {
        return std::sqrt(std::max(diff_sq_coeffs(th)(x), 0.0));
    };
    m.d_diff_sq = [diff_sq_coeffs](double x, const ParamVector& th) {
        return diff_sq_coeffs(th).derivative()(x);
    };
    m.drift_coeffs = std::move(drift_coeffs);
    m.diff_sq_coeffs = std::move(diff_sq_coeffs);
    return m;
}

namespace detail {
inline std::map<std::string, ModelSpec, std::less<>>& model_registry() {
    static std::map<std::string, ModelSpec, std::less<>> registry;
    return registry;
}
inline std::mutex& model_registry_mutex() {
    static std::mutex mu;
    return mu;
}
}  // namespace detail

/// Register a custom model (typically built from polynomial coefficients).
inline void register_model(ModelSpec model) {
    std::lock_guard lock(detail::model_registry_mutex());
    detail::model_registry()[model.name] = std::move(model);
}

/// Look up a model by its CLI/config name. Throws ConfigError when unknown.
inline const ModelSpec& model_by_name(std::string_view name) {
    if (name == "cir") return cir_model();
    if (name == "icir") return icir_model();
    if (name == "constant") return constant_model();
    std::lock_guard lock(detail::model_registry_mutex());
    auto& reg = detail::model_registry();
    if (auto it = reg.find(name); it != reg.end()) return it->second;
    throw ConfigError("unknown model '" + std::string(name) + "'");
}

}  // namespace sdeqml
