#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sdeqml/errors.hpp"
#include "sdeqml/model.hpp"
#include "sdeqml/observation.hpp"

namespace sdeqml {

/**
 * Deterministic normal sampler: Box-Muller over mt19937_64 (19937-bit state).
 * std::normal_distribution output is implementation-defined, so the transform
 * is spelled out here to make seeded runs reproducible across toolchains.
 */
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    /// Uniform draw in the open interval (0, 1).
    double uniform01() {
        return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u = uniform01();
        const double v = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double angle = 2.0 * std::numbers::pi * v;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Observation-time layout: `count` total observations, the first `burnin` of
/// which are discarded after simulation.
struct SamplingSchedule {
    enum class Kind { fixed, uniform_random };

    Kind kind = Kind::fixed;
    double dt = 0.0;            // fixed
    double dt_lo = 0.0;         // uniform_random
    double dt_hi = 0.0;
    int count = 0;
    int burnin = 0;
    std::vector<double> gaps;   // realized gaps, length `count`
};

inline SamplingSchedule make_fixed_schedule(double dt, int count, int burnin) {
    if (!(dt > 0.0)) throw DomainError("make_fixed_schedule: dt must be > 0");
    if (count < 1) throw DomainError("make_fixed_schedule: count must be >= 1");
    if (burnin < 0 || burnin >= count)
        throw DomainError("make_fixed_schedule: burnin must be in [0, count)");
    SamplingSchedule s;
    s.kind = SamplingSchedule::Kind::fixed;
    s.dt = dt;
    s.count = count;
    s.burnin = burnin;
    s.gaps.assign(static_cast<std::size_t>(count), dt);
    return s;
}

/// Gaps are i.i.d. uniform on [lo, hi] from the schedule's own seeded stream.
inline SamplingSchedule make_uniform_schedule(double lo, double hi, int count, int burnin,
                                              std::uint64_t seed) {
    if (!(lo > 0.0) || !(lo < hi))
        throw DomainError("make_uniform_schedule: need 0 < lo < hi");
    if (count < 1) throw DomainError("make_uniform_schedule: count must be >= 1");
    if (burnin < 0 || burnin >= count)
        throw DomainError("make_uniform_schedule: burnin must be in [0, count)");
    SamplingSchedule s;
    s.kind = SamplingSchedule::Kind::uniform_random;
    s.dt_lo = lo;
    s.dt_hi = hi;
    s.count = count;
    s.burnin = burnin;
    s.gaps.resize(static_cast<std::size_t>(count));
    // Offset keeps the gap stream distinct from a noise stream seeded with the
    // same base seed.
    GaussianSampler stream(seed ^ 0x9e3779b97f4a7c15ULL);
    for (double& g : s.gaps) g = lo + (hi - lo) * stream.uniform01();
    return s;
}

/// Dispatch by config string: "fixed" or "uniform".
inline SamplingSchedule make_schedule(const std::string& kind, double dt_or_lo, double hi,
                                      int count, int burnin, std::uint64_t seed) {
    if (kind == "fixed") return make_fixed_schedule(dt_or_lo, count, burnin);
    if (kind == "uniform") return make_uniform_schedule(dt_or_lo, hi, count, burnin, seed);
    throw ConfigError("unknown schedule kind '" + kind + "'");
}

struct SimConfig {
    const ModelSpec* model = nullptr;
    ParamVector theta;
    double x0 = 0.0;
    int substeps = 256;
    std::uint64_t seed = 0;
};

struct SimResult {
    ObservationSeries series;
    int floor_hits = 0;  // sub-steps clamped at the positivity floor
};

/**
 * Euler-Maruyama path simulation with `substeps` sub-intervals per
 * observation gap. States of nonnegative-domain models are clamped at a
 * reflecting floor of 1e-10 (occurrences counted). The first `burnin`
 * observations are discarded; the retained series starts at the last
 * burned-in state with times rebased to zero. Deterministic for a fixed seed.
 */
inline SimResult simulate_series(const SimConfig& cfg, const SamplingSchedule& schedule) {
    if (cfg.model == nullptr) throw DomainError("simulate_series: no model");
    const ModelSpec& model = *cfg.model;
    validate_theta(model, cfg.theta);
    check_state(model, cfg.x0);
    if (cfg.substeps < 64) throw DomainError("simulate_series: substeps must be >= 64");

    constexpr double kFloor = 1e-10;
    const bool nonnegative = model.state_min >= 0.0;

    GaussianSampler noise(cfg.seed);
    std::vector<double> times(static_cast<std::size_t>(schedule.count) + 1, 0.0);
    std::vector<double> states(static_cast<std::size_t>(schedule.count) + 1, 0.0);
    states[0] = cfg.x0;

    int floor_hits = 0;
    double x = cfg.x0;
    double t = 0.0;
    for (int k = 0; k < schedule.count; ++k) {
        const double gap = schedule.gaps[static_cast<std::size_t>(k)];
        const double dt = gap / cfg.substeps;
        const double sqrt_dt = std::sqrt(dt);
        for (int s = 0; s < cfg.substeps; ++s) {
            const double a = model.drift(x, cfg.theta);
            const double b = model.diffusion(x, cfg.theta);
            x += a * dt + b * sqrt_dt * noise.normal();
            if (nonnegative && x < kFloor) {
                x = kFloor;
                ++floor_hits;
            }
            if (std::abs(x) > 1e12)
                throw NumericalError("simulate_series: path exploded at observation " +
                                     std::to_string(k) + ", substep " + std::to_string(s));
        }
        t += gap;
        times[static_cast<std::size_t>(k) + 1] = t;
        states[static_cast<std::size_t>(k) + 1] = x;
    }

    SimResult out;
    out.floor_hits = floor_hits;
    const std::size_t from = static_cast<std::size_t>(schedule.burnin);
    out.series.times.assign(times.begin() + from, times.end());
    out.series.states.assign(states.begin() + from, states.end());
    const double t0 = out.series.times.front();
    for (double& ti : out.series.times) ti -= t0;
    return out;
}

}  // namespace sdeqml
