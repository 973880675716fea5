#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "sdeqml/errors.hpp"
#include "sdeqml/generator.hpp"
#include "sdeqml/matrix_exp.hpp"

namespace sdeqml {

/// Grid values of the first and second raw conditional moments after `elapsed`.
struct MomentVectors {
    Eigen::VectorXd raw_first;   // E[X | X_0 = x_n]
    Eigen::VectorXd raw_second;  // E[X^2 | X_0 = x_n]
    double elapsed = 0.0;
};

/**
 * One precomputed propagation step: exp_base = exp(base_step * L_h).
 *
 * This is the single offline operation of the method; everything downstream
 * is matrix-vector work. The exponential is built through the subiteration
 * identity exp(dt L) = (exp(dt L / m))^m with m chosen so ||dt L / m|| <= 1.
 */
class PropagatorPlan {
public:
    PropagatorPlan(Eigen::MatrixXd exp_base, SpatialGrid grid, double base_step,
                   int max_multiple, double row_sum_deviation)
        : exp_base_(std::move(exp_base)),
          grid_(std::move(grid)),
          base_step_(base_step),
          max_multiple_(max_multiple),
          row_sum_deviation_(row_sum_deviation) {}

    const Eigen::MatrixXd& exp_base() const { return exp_base_; }
    const SpatialGrid& grid() const { return grid_; }
    double base_step() const { return base_step_; }
    int max_multiple() const { return max_multiple_; }

    /// Max deviation of exp_base row sums from 1 (constants are preserved).
    double row_sum_deviation() const { return row_sum_deviation_; }

private:
    Eigen::MatrixXd exp_base_;
    SpatialGrid grid_;
    double base_step_;
    int max_multiple_;
    double row_sum_deviation_;
};

inline PropagatorPlan build_plan(const DiscretizedGenerator& gen, double base_step,
                                 int max_multiple, double row_sum_tol = 1e-9) {
    if (!(base_step > 0.0)) throw DomainError("build_plan: base_step must be > 0");
    if (max_multiple < 1) throw DomainError("build_plan: max_multiple must be >= 1");

    const int m = choose_substeps(gen.infinity_norm(), base_step);
    Eigen::MatrixXd e = matrix_exp(gen.matrix() * (base_step / m));
    for (int k = m; k > 1; k /= 2) e = e * e;

    const double dev = (e.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double scale = std::max(1.0, e.cwiseAbs().rowwise().sum().maxCoeff());
    if (!(dev <= row_sum_tol * scale)) {
        std::ostringstream os;
        os << "build_plan: exp(dt L) does not preserve constants (row-sum deviation " << dev
           << ", ||exp||_inf = " << scale << ")";
        throw NumericalError(os.str());
    }
    return PropagatorPlan(std::move(e), gen.grid(), base_step, max_multiple, dev);
}

/**
 * Propagate the moment initial conditions u1 = x, u2 = x^2 through repeated
 * application of exp_base, recording the requested multiples of the base
 * step. One pass produces every multiple; the cost is max(multiples)
 * matrix-vector products and no further exponentials. Both moments travel as
 * the two columns of a single matrix so they are advanced simultaneously.
 */
inline std::map<int, MomentVectors> propagate_moments(const PropagatorPlan& plan,
                                                      const std::vector<int>& multiples) {
    std::vector<int> wanted(multiples);
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    if (!wanted.empty() && (wanted.front() < 1 || wanted.back() > plan.max_multiple())) {
        std::ostringstream os;
        os << "propagate_moments: multiple outside [1, " << plan.max_multiple() << "]";
        throw DomainError(os.str());
    }

    const auto& nodes = plan.grid().nodes;
    const int dim = static_cast<int>(nodes.size());
    Eigen::MatrixXd u(dim, 2);
    for (int i = 0; i < dim; ++i) {
        u(i, 0) = nodes[static_cast<std::size_t>(i)];
        u(i, 1) = nodes[static_cast<std::size_t>(i)] * nodes[static_cast<std::size_t>(i)];
    }

    std::map<int, MomentVectors> out;
    std::size_t next = 0;
    for (int step = 1; next < wanted.size(); ++step) {
        u = plan.exp_base() * u;
        if (step == wanted[next]) {
            out.emplace(step, MomentVectors{u.col(0), u.col(1), step * plan.base_step()});
            ++next;
        }
    }
    return out;
}

/// Elementwise variance floor: var_n is never reported below this.
inline double variance_floor(double raw_second) {
    return 1e-12 * std::max(1.0, raw_second);
}

struct VarianceResult {
    Eigen::VectorXd values;
    int floored_count = 0;
};

/// Var = u2 - u1^2, floored elementwise; flooring is reported, not fatal.
inline VarianceResult conditional_variance(const MomentVectors& mv) {
    VarianceResult res;
    res.values.resize(mv.raw_first.size());
    for (Eigen::Index i = 0; i < mv.raw_first.size(); ++i) {
        const double floor = variance_floor(mv.raw_second(i));
        const double v = mv.raw_second(i) - mv.raw_first(i) * mv.raw_first(i);
        if (v < floor) {
            res.values(i) = floor;
            ++res.floored_count;
        } else {
            res.values(i) = v;
        }
    }
    return res;
}

}  // namespace sdeqml
