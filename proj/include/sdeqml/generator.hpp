#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>

#include "sdeqml/errors.hpp"
#include "sdeqml/grid.hpp"
#include "sdeqml/model.hpp"

namespace sdeqml {

struct BoundaryReport {
    double value = 0.0;
    bool needs_bc = false;
};

/// Well-posedness report for the two grid boundaries.
struct FicheraReport {
    BoundaryReport lower;
    BoundaryReport upper;
};

/**
 * Fichera-type boundary indicator f(x) = a(x) - (1/2) d/dx[b^2(x)], oriented
 * with the inward normal (+1 below, -1 above) so that at a degenerate lower
 * boundary of the CIR model the value reduces to a*b - sigma^2/2, the Feller
 * condition. needs_bc = (value < 0). Report only: assembly embeds the PDE at
 * the boundary rows either way, callers may warn.
 */
inline FicheraReport fichera_check(const ModelSpec& model, const ParamVector& theta,
                                   const SpatialGrid& grid) {
    validate_theta(model, theta);
    auto f = [&](double x) {
        return model.drift(x, theta) - 0.5 * d_diff_sq_value(model, theta, x);
    };
    FicheraReport rep;
    rep.lower.value = f(grid.x_min);
    rep.upper.value = -f(grid.x_max);
    rep.lower.needs_bc = rep.lower.value < 0.0;
    rep.upper.needs_bc = rep.upper.value < 0.0;
    return rep;
}

/**
 * Spatially discretized generator L_h on a uniform grid.
 *
 * Interior rows use second-order central differences; rows 0 and N embed the
 * PDE itself through one-sided stencils (four nonzeros each), so the system
 * has no boundary right-hand side and propagation over an elapsed time dt > 0
 * is exp(dt * L_h). The matrix annihilates constants: every row sums to zero.
 */
class DiscretizedGenerator {
public:
    DiscretizedGenerator(Eigen::MatrixXd matrix, SpatialGrid grid, ParamVector theta,
                         std::string model_name)
        : matrix_(std::move(matrix)),
          grid_(std::move(grid)),
          theta_(std::move(theta)),
          model_name_(std::move(model_name)) {}

    int dim() const { return static_cast<int>(matrix_.rows()); }
    const Eigen::MatrixXd& matrix() const { return matrix_; }
    const SpatialGrid& grid() const { return grid_; }
    const ParamVector& theta() const { return theta_; }
    const std::string& model_name() const { return model_name_; }

    double infinity_norm() const { return matrix_.cwiseAbs().rowwise().sum().maxCoeff(); }

private:
    Eigen::MatrixXd matrix_;
    SpatialGrid grid_;
    ParamVector theta_;
    std::string model_name_;
};

inline DiscretizedGenerator assemble_generator(const ModelSpec& model, const ParamVector& theta,
                                               const SpatialGrid& grid) {
    validate_theta(model, theta);
    const int n = grid.n_intervals;
    const double h = grid.h;
    const double h2 = h * h;

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n + 1, n + 1);

    auto coeffs_at = [&](int i) {
        const double x = grid.nodes[static_cast<std::size_t>(i)];
        const double a = model.drift(x, theta);
        const double d = diffusion_sq(model, theta, x);
        if (!std::isfinite(a) || !std::isfinite(d)) {
            std::ostringstream os;
            os << "assemble_generator: non-finite coefficient at node " << i << " (x = " << x
               << "): drift = " << a << ", diffusion^2 = " << d;
            throw NumericalError(os.str());
        }
        return std::pair{a, d};
    };

    for (int i = 1; i < n; ++i) {
        const auto [a, d] = coeffs_at(i);
        L(i, i - 1) = -a / (2.0 * h) + d / (2.0 * h2);
        L(i, i) = -d / h2;
        L(i, i + 1) = a / (2.0 * h) + d / (2.0 * h2);
    }

    // Lower boundary: u' ~ (-3/2 u0 + 2 u1 - 1/2 u2)/h,
    //                 u'' ~ (2 u0 - 5 u1 + 4 u2 - u3)/h^2.
    {
        const auto [a, d] = coeffs_at(0);
        L(0, 0) = -1.5 * a / h + d / h2;
        L(0, 1) = 2.0 * a / h - 2.5 * d / h2;
        L(0, 2) = -0.5 * a / h + 2.0 * d / h2;
        L(0, 3) = -0.5 * d / h2;
    }
    // Upper boundary mirrors the lower one.
    {
        const auto [a, d] = coeffs_at(n);
        L(n, n) = 1.5 * a / h + d / h2;
        L(n, n - 1) = -2.0 * a / h - 2.5 * d / h2;
        L(n, n - 2) = 0.5 * a / h + 2.0 * d / h2;
        L(n, n - 3) = -0.5 * d / h2;
    }

    return DiscretizedGenerator(std::move(L), grid, theta, model.name);
}

}  // namespace sdeqml
