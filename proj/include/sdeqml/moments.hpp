#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdeqml/errors.hpp"
#include "sdeqml/generator.hpp"
#include "sdeqml/model.hpp"
#include "sdeqml/propagator.hpp"
#include "sdeqml/spline.hpp"

namespace sdeqml {

/**
 * Spline representation of x -> (E[X|x], E[X^2|x]) at one fixed elapsed time.
 * Queries return the interpolated mean and the floored variance u2 - u1^2.
 */
class MomentSurface {
public:
    MomentSurface(SplineCurve mean_spline, SplineCurve raw_second_spline, double elapsed,
                  int multiple)
        : mean_(std::move(mean_spline)),
          raw2_(std::move(raw_second_spline)),
          elapsed_(elapsed),
          multiple_(multiple) {
        // uniform knots: pack both cubics per interval so a query locates the
        // interval once and reads one contiguous cell
        if (mean_.uniform() && mean_.knot_count() >= 2) {
            const auto& knots = mean_.knots();
            x_lo_ = knots.front();
            x_hi_ = knots.back();
            const double h = knots[1] - knots[0];
            inv_h_ = 1.0 / h;
            h_ = h;
            const std::size_t n = knots.size() - 1;
            cells_.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                cells_[i] = {mean_.values()[i],  mean_.interval_b(i), mean_.interval_c(i),
                             mean_.interval_d(i), raw2_.values()[i],  raw2_.interval_b(i),
                             raw2_.interval_c(i), raw2_.interval_d(i)};
            }
        }
    }

    Moments at(double x) const {
        if (!cells_.empty()) {
            if (!(x >= x_lo_ && x <= x_hi_)) {
                std::ostringstream os;
                os << "moment query at " << x << " outside knot range [" << x_lo_ << ", "
                   << x_hi_ << "]";
                throw DomainError(os.str());
            }
            const double* knots = mean_.knots().data();
            std::size_t i = static_cast<std::size_t>(std::max((x - x_lo_) * inv_h_, 0.0));
            if (i >= cells_.size()) i = cells_.size() - 1;
            if (i + 1 < cells_.size() && x >= knots[i + 1])
                ++i;
            else if (i > 0 && x < knots[i])
                --i;
            const Cell& c = cells_[i];
            const double t = x - knots[i];
            const double mean = c.y1 + t * (c.b1 + t * (c.c1 + t * c.d1));
            const double raw2 = c.y2 + t * (c.b2 + t * (c.c2 + t * c.d2));
            const double var = raw2 - mean * mean;
            return {mean, std::max(var, variance_floor(raw2))};
        }
        const double mean = mean_(x);
        const double raw2 = raw2_(x);
        const double var = raw2 - mean * mean;
        return {mean, std::max(var, variance_floor(raw2))};
    }

    double elapsed() const { return elapsed_; }
    int multiple() const { return multiple_; }

private:
    struct Cell {
        double y1, b1, c1, d1, y2, b2, c2, d2;
    };

    SplineCurve mean_;
    SplineCurve raw2_;
    double elapsed_;
    int multiple_;
    std::vector<Cell> cells_;
    double x_lo_ = 0.0, x_hi_ = 0.0, inv_h_ = 0.0, h_ = 0.0;
};

/// Strategy interface: (x, dt) -> conditional (mean, variance) under a fixed theta.
class MomentProvider {
public:
    virtual ~MomentProvider() = default;
    virtual Moments moments(double x, double dt) const = 0;
    /// Batch warm-up hint; the backward provider builds all surfaces in one pass.
    virtual void prefetch(std::span<const double> /*gaps*/) const {}
    virtual const char* kind() const = 0;
};

/// Euler-Maruyama baseline: mean = x + a(x) dt, var = b^2(x) dt.
class EulerProvider final : public MomentProvider {
public:
    EulerProvider(const ModelSpec& model, ParamVector theta)
        : model_(model), theta_(std::move(theta)) {
        validate_theta(model_, theta_);
        if (model_.has_polynomials()) {
            drift_poly_ = model_.drift_coeffs(theta_);
            dsq_poly_ = model_.diff_sq_coeffs(theta_);
            use_poly_ = true;
        }
    }

    Moments moments(double x, double dt) const override {
        if (!(dt >= 0.0)) throw DomainError("euler moments: dt must be >= 0");
        check_state(model_, x);
        double a, dsq;
        if (use_poly_) {
            a = drift_poly_(x);
            dsq = dsq_poly_(x);
        } else {
            a = model_.drift(x, theta_);
            const double b = model_.diffusion(x, theta_);
            dsq = b * b;
        }
        return {x + a * dt, dsq * dt};
    }

    const char* kind() const override { return "euler"; }

private:
    const ModelSpec& model_;
    ParamVector theta_;
    Polynomial drift_poly_, dsq_poly_;
    bool use_poly_ = false;
};

/**
 * Truncated Ito-Taylor moments of order L:
 *   mean      = sum_{l<=L} (L^l x)(x)   dt^l / l!
 *   raw 2nd   = sum_{l<=L} (L^l x^2)(x) dt^l / l!
 *   variance  = raw 2nd minus squared mean with both series truncated at the
 *               same order, assembled in coefficient space.
 * The order-dt variance coefficient is b^2(x) by the exact identity
 * L x^2 - 2x Lx = b^2, stored as the model's diffusion^2 polynomial, so at
 * L = 1 both mean and variance coincide with the Euler baseline bit for bit.
 * Optional substepping iterates the expansion over dt/m.
 */
class ItoTaylorProvider final : public MomentProvider {
public:
    ItoTaylorProvider(const ModelSpec& model, ParamVector theta, int order, int substeps = 1)
        : model_(model), theta_(std::move(theta)), order_(order), substeps_(substeps) {
        if (order_ < 1) throw DomainError("ito-taylor order must be >= 1");
        if (substeps_ < 1) throw DomainError("ito-taylor substeps must be >= 1");
        if (!model_.has_polynomials())
            throw std::logic_error("ito-taylor moments need polynomial model coefficients");
        validate_theta(model_, theta_);

        std::vector<Polynomial> mean_raw(order_ + 1), raw2_raw(order_ + 1);
        mean_raw[0] = Polynomial::identity();
        raw2_raw[0] = Polynomial{0.0, 0.0, 1.0};
        for (int l = 1; l <= order_; ++l) {
            mean_raw[l] = generator_apply(model_, theta_, mean_raw[l - 1]);
            raw2_raw[l] = generator_apply(model_, theta_, raw2_raw[l - 1]);
        }

        std::vector<Polynomial> var_raw(order_ + 1);
        var_raw[0] = Polynomial::zero();
        var_raw[1] = model_.diff_sq_coeffs(theta_);  // L x^2 - 2x Lx = b^2
        for (int n = 2; n <= order_; ++n) {
            Polynomial musq;
            for (int i = 0; i <= n; ++i)
                musq = musq + (mean_raw[i] * mean_raw[n - i]).scaled(binomial(n, i));
            var_raw[n] = raw2_raw[n] - musq;
        }

        double fact = 1.0;
        mean_terms_.resize(order_ + 1);
        raw2_terms_.resize(order_ + 1);
        var_terms_.resize(order_ + 1);
        for (int l = 0; l <= order_; ++l) {
            if (l > 1) fact *= l;
            mean_terms_[l] = mean_raw[l].scaled(1.0 / fact);
            raw2_terms_[l] = raw2_raw[l].scaled(1.0 / fact);
            var_terms_[l] = var_raw[l].scaled(1.0 / fact);
        }
        mean_deriv_terms_.resize(order_ + 1);
        for (int l = 0; l <= order_; ++l) mean_deriv_terms_[l] = mean_terms_[l].derivative();

        kind_ = "ito" + std::to_string(order_);
    }

    Moments moments(double x, double dt) const override {
        if (!(dt >= 0.0)) throw DomainError("ito-taylor moments: dt must be >= 0");
        check_state(model_, x);
        if (substeps_ == 1) return single_step(x, dt);
        const double sub_dt = dt / substeps_;
        double mean = x, var = 0.0;
        for (int k = 0; k < substeps_; ++k) {
            const double slope = horner(mean_deriv_terms_, mean, sub_dt);
            const Moments step = single_step(mean, sub_dt);
            var = var * slope * slope + step.variance;
            mean = step.mean;
        }
        return {mean, var};
    }

    const char* kind() const override { return kind_.c_str(); }

private:
    static double binomial(int n, int k) {
        double r = 1.0;
        for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return r;
    }

    static double horner(const std::vector<Polynomial>& terms, double x, double dt) {
        double acc = terms.back()(x);
        for (std::size_t l = terms.size() - 1; l-- > 0;) acc = acc * dt + terms[l](x);
        return acc;
    }

    Moments single_step(double x, double dt) const {
        const double mean = horner(mean_terms_, x, dt);
        const double raw2 = horner(raw2_terms_, x, dt);
        const double var = horner(var_terms_, x, dt);
        return {mean, std::max(var, variance_floor(raw2))};
    }

    const ModelSpec& model_;
    ParamVector theta_;
    int order_;
    int substeps_;
    std::vector<Polynomial> mean_terms_, raw2_terms_, var_terms_, mean_deriv_terms_;
    std::string kind_;
};

/// Grid, time-quantization and plan parameters for the backward provider.
struct BackwardOptions {
    SpatialGrid grid;
    double base_step = 0.0;
    int max_multiple = 1 << 22;
    double exp_tol = 1e-9;  // constant-preservation defect accepted in exp(dt L)
};

/**
 * Moments from the discretized backward equation.
 *
 * Construction assembles the generator and computes the one matrix
 * exponential exp(base_step * L_h). Elapsed times are quantized to the
 * nearest positive integer multiple of the base step; each multiple's grid
 * solution is wrapped in a spline surface and cached, so repeated queries are
 * pure lookups. Surfaces for a batch of gaps are built in one propagation
 * pass (prefetch). Cache access is serialized; construction happens at most
 * once per multiple.
 */
class BackwardProvider final : public MomentProvider {
public:
    BackwardProvider(const ModelSpec& model, ParamVector theta, BackwardOptions options)
        : model_(model),
          theta_(std::move(theta)),
          options_(std::move(options)),
          generator_(assemble_generator(model_, theta_, options_.grid)),
          plan_(build_plan(generator_, options_.base_step, options_.max_multiple,
                           options_.exp_tol)),
          inv_base_step_(1.0 / plan_.base_step()) {}

    int quantize(double dt) const {
        if (!(dt > 0.0)) throw DomainError("backward moments: dt must be > 0");
        const long long m = round_nonnegative(dt * inv_base_step_);
        if (m > options_.max_multiple)
            throw DomainError("backward moments: elapsed time exceeds max multiple");
        return static_cast<int>(std::max(1LL, m));
    }

    Moments moments(double x, double dt) const override {
        const int m = quantize(dt);
        // lock-free fast path for the common case of repeated gaps: map nodes
        // are stable and surfaces immutable once built
        const MomentSurface* last = last_surface_.load(std::memory_order_acquire);
        if (last != nullptr && last->multiple() == m) return last->at(x);
        return surface(m).at(x);
    }

    const MomentSurface& surface(int multiple) const {
        std::lock_guard lock(mu_);
        ensure_locked({multiple});
        const MomentSurface& s = cache_.at(multiple);
        last_surface_.store(&s, std::memory_order_release);
        return s;
    }

    void prefetch(std::span<const double> gaps) const override {
        // adjacent dedup keeps this pass cheap for the common fixed-gap case;
        // ensure_locked validates, sorts and dedupes whatever remains
        std::vector<int> multiples;
        long long prev = -1;
        for (double g : gaps) {
            const long long m = std::max(1LL, round_nonnegative(g * inv_base_step_));
            if (m != prev) {
                multiples.push_back(static_cast<int>(std::min<long long>(m, 1LL << 30)));
                prev = m;
            }
        }
        std::lock_guard lock(mu_);
        ensure_locked(std::move(multiples));
    }

    const PropagatorPlan& plan() const { return plan_; }
    const DiscretizedGenerator& generator() const { return generator_; }
    const SpatialGrid& grid() const { return options_.grid; }

    const char* kind() const override { return "backward"; }

private:
    // Nearest integer on the nonnegative axis (half-up). Kept inline: the
    // quantization runs once per observation in the likelihood hot loop.
    static long long round_nonnegative(double v) { return static_cast<long long>(v + 0.5); }

    // Advance the shared frontier and spline-fit every missing multiple.
    // Restarting from the initial condition replays the identical
    // floating-point sequence, so cached and recomputed surfaces agree.
    void ensure_locked(std::vector<int> multiples) const {
        std::erase_if(multiples, [&](int m) { return cache_.contains(m); });
        if (multiples.empty()) return;
        std::sort(multiples.begin(), multiples.end());
        multiples.erase(std::unique(multiples.begin(), multiples.end()), multiples.end());
        if (multiples.back() > options_.max_multiple)
            throw DomainError("backward moments: elapsed time exceeds max multiple");

        const auto& nodes = plan_.grid().nodes;
        const int dim = static_cast<int>(nodes.size());
        if (frontier_multiple_ < 0 || multiples.front() <= frontier_multiple_) {
            frontier_.resize(dim, 2);
            for (int i = 0; i < dim; ++i) {
                frontier_(i, 0) = nodes[static_cast<std::size_t>(i)];
                frontier_(i, 1) = frontier_(i, 0) * frontier_(i, 0);
            }
            frontier_multiple_ = 0;
        }
        std::size_t next = 0;
        while (next < multiples.size() && multiples[next] <= frontier_multiple_) ++next;
        for (int step = frontier_multiple_ + 1; next < multiples.size(); ++step) {
            frontier_ = plan_.exp_base() * frontier_;
            frontier_multiple_ = step;
            if (step == multiples[next]) {
                std::span<const double> u1(frontier_.col(0).data(), static_cast<std::size_t>(dim));
                std::span<const double> u2(frontier_.col(1).data(), static_cast<std::size_t>(dim));
                cache_.emplace(step, MomentSurface(spline_fit(nodes, u1), spline_fit(nodes, u2),
                                                   step * plan_.base_step(), step));
                ++next;
            }
        }
    }

    const ModelSpec& model_;
    ParamVector theta_;
    BackwardOptions options_;
    DiscretizedGenerator generator_;
    PropagatorPlan plan_;
    double inv_base_step_;

    mutable std::mutex mu_;
    mutable std::map<int, MomentSurface> cache_;
    mutable std::atomic<const MomentSurface*> last_surface_{nullptr};
    mutable Eigen::MatrixXd frontier_;
    mutable int frontier_multiple_ = -1;
};

/// Provider selection by the CLI/config method string: backward | euler | itoN.
inline std::unique_ptr<MomentProvider> make_provider(
    std::string_view method, const ModelSpec& model, const ParamVector& theta,
    const std::optional<BackwardOptions>& backward = std::nullopt) {
    if (method == "backward") {
        if (!backward) throw ConfigError("method 'backward' needs grid/base-step options");
        return std::make_unique<BackwardProvider>(model, theta, *backward);
    }
    if (method == "euler") return std::make_unique<EulerProvider>(model, theta);
    if (method.starts_with("ito")) {
        const std::string digits(method.substr(3));
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos)
            return std::make_unique<ItoTaylorProvider>(model, theta, std::stoi(digits));
    }
    throw ConfigError("unknown moment method '" + std::string(method) + "'");
}

}  // namespace sdeqml
