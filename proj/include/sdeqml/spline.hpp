#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <vector>

#include "sdeqml/errors.hpp"

namespace sdeqml {

/**
 * Cubic interpolating spline with the not-a-knot boundary rule.
 *
 * Not-a-knot reproduces cubic polynomials exactly, which keeps the O(h^4)
 * interpolation error clean up to the boundary. Evaluation outside the knot
 * range is refused (no extrapolation); callers guarantee domain coverage.
 * Uniformly spaced knots get an O(1) interval lookup.
 */
class SplineCurve {
public:
    SplineCurve() = default;

    double operator()(double x) const {
        if (!(x >= knots_.front() && x <= knots_.back())) {
            std::ostringstream os;
            os << "spline evaluation at " << x << " outside knot range [" << knots_.front()
               << ", " << knots_.back() << "]";
            throw DomainError(os.str());
        }
        std::size_t i;
        if (uniform_) {
            const double pos = (x - knots_.front()) * inv_h_;
            i = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), knots_.size() - 2);
            // rounding in pos can land one interval off; queries at a knot must
            // evaluate the interval starting there so knot values reproduce exactly
            if (i + 2 < knots_.size() && x >= knots_[i + 1])
                ++i;
            else if (i > 0 && x < knots_[i])
                --i;
        } else {
            i = static_cast<std::size_t>(
                    std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin());
            i = std::clamp<std::size_t>(i, 1, knots_.size() - 1) - 1;
        }
        const double t = x - knots_[i];
        return values_[i] + t * (b_[i] + t * (c_[i] + t * d_[i]));
    }

    std::size_t knot_count() const { return knots_.size(); }
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& values() const { return values_; }
    bool uniform() const { return uniform_; }

    // per-interval cubic coefficients s_i(t) = values[i] + b t + c t^2 + d t^3
    double interval_b(std::size_t i) const { return b_[i]; }
    double interval_c(std::size_t i) const { return c_[i]; }
    double interval_d(std::size_t i) const { return d_[i]; }

    /// Second derivative at knot i (used by the C2-continuity checks).
    double second_derivative_at_knot(std::size_t i) const {
        if (i + 1 < knots_.size()) return 2.0 * c_[i];
        const double t = knots_.back() - knots_[i - 1];
        return 2.0 * c_[i - 1] + 6.0 * d_[i - 1] * t;
    }

    friend SplineCurve spline_fit(std::span<const double> knots, std::span<const double> values);

private:
    std::vector<double> knots_, values_;
    std::vector<double> b_, c_, d_;  // per-interval: y + b t + c t^2 + d t^3
    bool uniform_ = false;
    double inv_h_ = 0.0;
};

inline SplineCurve spline_fit(std::span<const double> knots, std::span<const double> values) {
    const std::size_t np = knots.size();
    if (np < 4) throw DomainError("spline_fit: need at least 4 knots");
    if (values.size() != np) throw DomainError("spline_fit: knots/values size mismatch");
    for (std::size_t i = 0; i + 1 < np; ++i)
        if (!(knots[i] < knots[i + 1]))
            throw DomainError("spline_fit: knots must be strictly increasing");
    for (double v : values)
        if (!std::isfinite(v)) throw DomainError("spline_fit: non-finite value");

    const std::size_t n = np - 1;  // intervals
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = knots[i + 1] - knots[i];

    // Solve for second derivatives M_1..M_{n-1}; M_0 and M_n follow from the
    // not-a-knot conditions (third derivative continuous at x_1 and x_{n-1}).
    const std::size_t m = n - 1;
    std::vector<double> lower(m, 0.0), diag(m, 0.0), upper(m, 0.0), rhs(m, 0.0);
    auto r = [&](std::size_t i) {
        return 6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
    };
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = k + 1;
        lower[k] = h[i - 1];
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        upper[k] = h[i];
        rhs[k] = r(i);
    }
    // Fold M_0 = (1 + h0/h1) M_1 - (h0/h1) M_2 into the first equation.
    diag[0] += h[0] * (1.0 + h[0] / h[1]);
    upper[0] -= h[0] * h[0] / h[1];
    // Fold M_n = (1 + h_{n-1}/h_{n-2}) M_{n-1} - (h_{n-1}/h_{n-2}) M_{n-2} into the last.
    diag[m - 1] += h[n - 1] * (1.0 + h[n - 1] / h[n - 2]);
    lower[m - 1] -= h[n - 1] * h[n - 1] / h[n - 2];

    // Thomas algorithm.
    std::vector<double> mvec(np, 0.0);
    {
        std::vector<double> cp(m, 0.0), dp(m, 0.0);
        cp[0] = upper[0] / diag[0];
        dp[0] = rhs[0] / diag[0];
        for (std::size_t k = 1; k < m; ++k) {
            const double w = diag[k] - lower[k] * cp[k - 1];
            cp[k] = upper[k] / w;
            dp[k] = (rhs[k] - lower[k] * dp[k - 1]) / w;
        }
        mvec[m] = dp[m - 1];
        for (std::size_t k = m - 1; k-- > 0;) mvec[k + 1] = dp[k] - cp[k] * mvec[k + 2];
    }
    mvec[0] = (1.0 + h[0] / h[1]) * mvec[1] - (h[0] / h[1]) * mvec[2];
    mvec[n] = (1.0 + h[n - 1] / h[n - 2]) * mvec[n - 1] - (h[n - 1] / h[n - 2]) * mvec[n - 2];

    SplineCurve s;
    s.knots_.assign(knots.begin(), knots.end());
    s.values_.assign(values.begin(), values.end());
    s.b_.resize(n);
    s.c_.resize(n);
    s.d_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.b_[i] = (values[i + 1] - values[i]) / h[i] - h[i] * (2.0 * mvec[i] + mvec[i + 1]) / 6.0;
        s.c_[i] = mvec[i] / 2.0;
        s.d_[i] = (mvec[i + 1] - mvec[i]) / (6.0 * h[i]);
    }

    double hmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) hmax = std::max(hmax, std::abs(h[i] - h[0]));
    s.uniform_ = hmax <= 1e-12 * std::abs(h[0]);
    s.inv_h_ = s.uniform_ ? 1.0 / h[0] : 0.0;
    return s;
}

}  // namespace sdeqml
