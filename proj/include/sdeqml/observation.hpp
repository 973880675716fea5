#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sdeqml/errors.hpp"

namespace sdeqml {

/// Discretely observed path: strictly increasing times with one state each.
struct ObservationSeries {
    std::vector<double> times;
    std::vector<double> states;

    std::size_t transitions() const { return times.empty() ? 0 : times.size() - 1; }

    std::vector<double> gaps() const {
        std::vector<double> g(transitions());
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = times[k + 1] - times[k];
        return g;
    }

    void validate() const {
        if (times.size() != states.size())
            throw DomainError("observation series: times/states size mismatch");
        if (times.size() < 2) throw DomainError("observation series: need at least 2 points");
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (!std::isfinite(times[k]) || !std::isfinite(states[k]))
                throw DomainError("observation series: non-finite entry at index " +
                                  std::to_string(k));
            if (k > 0 && !(times[k] > times[k - 1]))
                throw DomainError("observation series: times not strictly increasing at index " +
                                  std::to_string(k));
        }
    }
};

}  // namespace sdeqml
