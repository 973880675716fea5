#pragma once

#include <cstddef>
#include <sstream>
#include <vector>

#include "sdeqml/errors.hpp"

namespace sdeqml {

/// Uniform 1-D grid over [x_min, x_max] with n intervals (n+1 nodes).
struct SpatialGrid {
    double x_min = 0.0;
    double x_max = 0.0;
    int n_intervals = 0;
    double h = 0.0;
    std::vector<double> nodes;

    int node_count() const { return n_intervals + 1; }
};

/// The boundary stencils need four distinct points, hence n >= 8.
inline SpatialGrid build_grid(double x_min, double x_max, int n) {
    if (!(x_min < x_max)) {
        std::ostringstream os;
        os << "build_grid: x_min (" << x_min << ") must be < x_max (" << x_max << ")";
        throw DomainError(os.str());
    }
    if (n < 8) throw DomainError("build_grid: need at least 8 intervals, got " + std::to_string(n));
    SpatialGrid g;
    g.x_min = x_min;
    g.x_max = x_max;
    g.n_intervals = n;
    g.h = (x_max - x_min) / static_cast<double>(n);
    g.nodes.resize(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) g.nodes[static_cast<std::size_t>(i)] = x_min + g.h * i;
    return g;
}

}  // namespace sdeqml
