#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sdeqml/errors.hpp"
#include "sdeqml/model.hpp"
#include "sdeqml/moments.hpp"
#include "sdeqml/observation.hpp"

namespace sdeqml {

/// log N(x; mean, var) = -1/2 log(2 pi var) - (x - mean)^2 / (2 var).
inline double gaussian_quasi_loglik(double x, double mean, double var) {
    if (!(var > 0.0)) throw DomainError("gaussian_quasi_loglik: variance must be > 0");
    const double d = x - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

/**
 * Conditional Gaussian quasi-log-likelihood of the series under the provider:
 * sum over k >= 1 of log N(x_k; mean(x_{k-1}, dt_k), var(x_{k-1}, dt_k)).
 * The provider is prefetched with all gaps first, so the backward method pays
 * one plan/surface construction and O(K) spline evaluations; terms are summed
 * in index order regardless of how surfaces were grouped.
 */
inline double qml_objective(const ObservationSeries& series, const MomentProvider& provider) {
    series.validate();
    const std::vector<double> gaps = series.gaps();
    provider.prefetch(gaps);
    double total = 0.0;
    for (std::size_t k = 1; k < series.states.size(); ++k) {
        Moments m;
        try {
            m = provider.moments(series.states[k - 1], gaps[k - 1]);
        } catch (const DomainError& e) {
            throw DomainError("observation " + std::to_string(k - 1) + ": " + e.what());
        }
        total += gaussian_quasi_loglik(series.states[k], m.mean, m.variance);
    }
    return total;
}

struct NelderMeadOptions {
    int max_iter = 2000;
    double x_tol = 1e-6;
    double f_tol = 1e-8;
    double simplex_scale = 0.05;    // relative initial perturbation per coordinate
    double simplex_abs = 0.00025;   // absolute perturbation for zero coordinates
};

enum class TerminationReason { converged, max_iterations };

struct SimplexResult {
    std::vector<double> x;
    double f = 0.0;
    int iterations = 0;
    int function_evals = 0;
    bool converged = false;
    TerminationReason reason = TerminationReason::max_iterations;
};

/**
 * Classical Nelder-Mead simplex maximization over unconstrained reals
 * (reflection 1, expansion 2, contraction 0.5, shrink 0.5). Non-finite
 * objective values are treated as -inf, i.e. rejected vertices. Deterministic
 * given (f, x0, options); termination uses coordinate and value spreads, so
 * the visited simplex sequence is invariant under adding a constant to f.
 */
inline SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& x0,
                                 const NelderMeadOptions& options = {}) {
    const std::size_t n = x0.size();
    if (n == 0) throw DomainError("nelder_mead: empty start point");

    auto eval = [&](const std::vector<double>& x) {
        const double v = f(x);
        return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
    };

    std::vector<std::vector<double>> simplex(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) {
        if (x0[i] != 0.0)
            simplex[i + 1][i] *= 1.0 + options.simplex_scale;
        else
            simplex[i + 1][i] = options.simplex_abs;
    }

    std::vector<double> fv(n + 1);
    int evals = 0;
    for (std::size_t i = 0; i <= n; ++i) {
        fv[i] = eval(simplex[i]);
        ++evals;
    }
    if (!std::isfinite(-fv[0]) && fv[0] == std::numeric_limits<double>::infinity())
        throw DomainError("nelder_mead: objective not finite at start point");

    std::vector<std::size_t> order(n + 1);
    auto sort_simplex = [&] {
        for (std::size_t i = 0; i <= n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> s2(n + 1);
        std::vector<double> f2(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            s2[i] = simplex[order[i]];
            f2[i] = fv[order[i]];
        }
        simplex.swap(s2);
        fv.swap(f2);
    };

    SimplexResult res;
    int iter = 0;
    sort_simplex();
    while (iter < options.max_iter) {
        double xspread = 0.0, fspread = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                xspread = std::max(xspread, std::abs(simplex[i][j] - simplex[0][j]));
            if (std::isfinite(fv[i])) fspread = std::max(fspread, std::abs(fv[i] - fv[0]));
        }
        if (xspread <= options.x_tol && fspread <= options.f_tol) {
            res.converged = true;
            res.reason = TerminationReason::converged;
            break;
        }
        ++iter;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / n;

        auto blend = [&](double coef) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j)
                x[j] = centroid[j] + coef * (centroid[j] - simplex[n][j]);
            return x;
        };

        const std::vector<double> xr = blend(1.0);
        const double fr = eval(xr);
        ++evals;
        if (fr < fv[0]) {
            const std::vector<double> xe = blend(2.0);
            const double fe = eval(xe);
            ++evals;
            if (fe < fr) {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if (fr < fv[n - 1]) {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            bool shrink = false;
            if (fr < fv[n]) {
                const std::vector<double> xc = blend(0.5);
                const double fc = eval(xc);
                ++evals;
                if (fc <= fr) {
                    simplex[n] = xc;
                    fv[n] = fc;
                } else {
                    shrink = true;
                }
            } else {
                const std::vector<double> xc = blend(-0.5);
                const double fc = eval(xc);
                ++evals;
                if (fc < fv[n]) {
                    simplex[n] = xc;
                    fv[n] = fc;
                } else {
                    shrink = true;
                }
            }
            if (shrink) {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t j = 0; j < n; ++j)
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    fv[i] = eval(simplex[i]);
                    ++evals;
                }
            }
        }
        sort_simplex();
    }

    res.x = simplex[0];
    res.f = -fv[0];
    res.iterations = iter;
    res.function_evals = evals;
    return res;
}

struct FitResult {
    ParamVector theta;
    double loglik = 0.0;
    int iterations = 0;
    int function_evals = 0;
    bool converged = false;
    TerminationReason reason = TerminationReason::max_iterations;
    double wall_ms = 0.0;
    std::string method;
};

struct FitOptions {
    std::string method = "backward";
    NelderMeadOptions nm;
    std::optional<BackwardOptions> backward;  // absent: derived from the data
    double auto_margin = 0.5;                 // grid [(1-m) min, (1+m) max]
    int grid_n = 127;
    double base_step_fraction = 1.0 / 16.0;   // base step = min gap * fraction
    double base_step = 0.0;                   // absolute override when > 0
    double exp_tol = 1e-9;
};

/// Data-driven estimation grid: margins around the observed range, clipped
/// below for nonnegative state domains.
inline SpatialGrid auto_estimation_grid(const ObservationSeries& series, const ModelSpec& model,
                                        double margin, int n) {
    const auto [mn_it, mx_it] = std::minmax_element(series.states.begin(), series.states.end());
    double lo = (1.0 - margin) * *mn_it;
    double hi = (1.0 + margin) * *mx_it;
    if (model.state_min >= 0.0) lo = std::max(lo, 1e-6);
    if (*mn_it <= 0.0) {  // the relative margin rule assumes positive data
        const double range = *mx_it - *mn_it;
        lo = *mn_it - margin * std::max(range, 1.0);
        hi = *mx_it + margin * std::max(range, 1.0);
        if (model.state_min >= 0.0) lo = std::max(lo, 1e-6);
    }
    return build_grid(lo, hi, n);
}

/**
 * Maximize the quasi-log-likelihood over log-transformed positive parameters
 * with Nelder-Mead. Numerical failures at a candidate theta (unstable plan,
 * domain violation) count as -inf, i.e. a rejected vertex.
 */
inline FitResult fit_qml(const ObservationSeries& series, const ModelSpec& model,
                         const ParamVector& init, const FitOptions& options = {}) {
    series.validate();
    validate_theta(model, init);

    std::optional<BackwardOptions> backward = options.backward;
    if (options.method == "backward" && !backward) {
        BackwardOptions b;
        b.grid = auto_estimation_grid(series, model, options.auto_margin, options.grid_n);
        const std::vector<double> gaps = series.gaps();
        b.base_step = options.base_step > 0.0
                          ? options.base_step
                          : *std::min_element(gaps.begin(), gaps.end()) *
                                options.base_step_fraction;
        b.exp_tol = options.exp_tol;
        backward = std::move(b);
    }

    auto objective = [&](const std::vector<double>& unconstrained) {
        try {
            const ParamVector theta = constrain_params(unconstrained, model.positivity_mask);
            const auto provider = make_provider(options.method, model, theta, backward);
            return qml_objective(series, *provider);
        } catch (const DomainError&) {
            return -std::numeric_limits<double>::infinity();
        } catch (const NumericalError&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    const auto t0 = std::chrono::steady_clock::now();
    const SimplexResult sr =
        nelder_mead(objective, unconstrain_params(init, model.positivity_mask), options.nm);
    const auto t1 = std::chrono::steady_clock::now();

    FitResult fit;
    fit.theta = constrain_params(sr.x, model.positivity_mask);
    fit.loglik = sr.f;
    fit.iterations = sr.iterations;
    fit.function_evals = sr.function_evals;
    fit.converged = sr.converged;
    fit.reason = sr.reason;
    fit.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    fit.method = options.method;
    return fit;
}

}  // namespace sdeqml
