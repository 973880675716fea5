#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sdeqml/csv.hpp"
#include "sdeqml/model.hpp"
#include "sdeqml/moments.hpp"
#include "sdeqml/qml.hpp"
#include "sdeqml/simulate.hpp"

namespace sdeqml {

// ---------------------------------------------------------------------------
// Small statistics helpers shared by the experiment runners.

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

inline LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw DomainError("linear_fit: need >= 2 points");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
        syy += ys[i] * ys[i];
    }
    LinearFit fit;
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / n;
    double ss_res = 0.0;
    const double mean_y = sy / n;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double pred = fit.intercept + fit.slope * xs[i];
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
    }
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw DomainError("quantile of empty sample");
    const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.5);
}

inline double interquartile_range(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
}

/// Fan tasks over a fixed-size worker pool; task indices are handed out
/// through an atomic counter, results go into caller-owned slots.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0)
        threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Spatial convergence study (relative RMS error against the grid resolution).

struct ConvergenceConfig {
    ParamVector theta{15.0, 3.0, 2.0};
    double xmin = 0.05;
    double xmax = 0.15;
    double tau = 1.0 / 6.0;
    std::vector<int> n_values{15, 31, 63, 127, 255, 511};
    int n_reference = 2047;  // iCIR mean reference grid
    int multiple = 16;       // tau is reached as `multiple` base steps
    bool include_icir = true;
};

struct ConvergencePoint {
    std::string model;
    int n = 0;
    double h = 0.0;
    double rel_rmse_mean = 0.0;
    double rel_rmse_var = 0.0;  // NaN where no reference is available
    std::string note;           // set when the solve failed at this resolution
};

struct ConvergenceSlope {
    std::string model;
    std::string quantity;
    double slope = 0.0;
    bool monotone = false;
};

struct ConvergenceResult {
    std::vector<ConvergencePoint> points;
    std::vector<ConvergenceSlope> slopes;

    const ConvergenceSlope& slope_for(const std::string& model, const std::string& qty) const {
        for (const auto& s : slopes)
            if (s.model == model && s.quantity == qty) return s;
        throw DomainError("no slope for " + model + "/" + qty);
    }
};

namespace detail {

inline MomentVectors pipeline_moments(const ModelSpec& model, const ParamVector& theta,
                                      double xmin, double xmax, int n, double tau,
                                      int multiple) {
    const SpatialGrid grid = build_grid(xmin, xmax, n);
    const DiscretizedGenerator gen = assemble_generator(model, theta, grid);
    const PropagatorPlan plan = build_plan(gen, tau / multiple, multiple);
    return propagate_moments(plan, {multiple}).at(multiple);
}

inline ConvergenceSlope fit_slope(const std::string& model, const std::string& qty,
                                  const std::vector<int>& ns,
                                  const std::vector<double>& errs) {
    // resolutions where the solve failed carry NaN errors; they are excluded
    // from the fit and void the monotonicity claim
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        if (std::isfinite(errs[i])) {
            lx.push_back(std::log(static_cast<double>(ns[i])));
            ly.push_back(std::log(errs[i]));
        }
    }
    ConvergenceSlope s;
    s.model = model;
    s.quantity = qty;
    if (lx.size() >= 2) {
        s.slope = -linear_fit(lx, ly).slope;  // positive when errors decrease with N
        s.monotone = lx.size() == ns.size();
        for (std::size_t i = 0; i + 1 < errs.size(); ++i)
            if (!(errs[i + 1] < errs[i])) s.monotone = false;
    } else {
        s.slope = std::numeric_limits<double>::quiet_NaN();
        s.monotone = false;
    }
    return s;
}

}  // namespace detail

inline ConvergenceResult run_convergence(const ConvergenceConfig& cfg) {
    ConvergenceResult result;

    // CIR against the closed-form conditional moments
    std::vector<double> cir_mean_err, cir_var_err;
    for (const int n : cfg.n_values) {
        const SpatialGrid grid = build_grid(cfg.xmin, cfg.xmax, n);
        ConvergencePoint p;
        p.model = "cir";
        p.n = n;
        p.h = grid.h;
        try {
            const MomentVectors mv = detail::pipeline_moments(cir_model(), cfg.theta, cfg.xmin,
                                                              cfg.xmax, n, cfg.tau, cfg.multiple);
            const VarianceResult var = conditional_variance(mv);
            double se_mean = 0.0, se_var = 0.0;
            for (int i = 0; i <= n; ++i) {
                const Moments exact = cir_exact_moments(cfg.theta, grid.nodes[i], cfg.tau);
                const double dm = (mv.raw_first(i) - exact.mean) / exact.mean;
                const double dv = (var.values(i) - exact.variance) / exact.variance;
                se_mean += dm * dm;
                se_var += dv * dv;
            }
            p.rel_rmse_mean = std::sqrt(se_mean / (n + 1));
            p.rel_rmse_var = std::sqrt(se_var / (n + 1));
        } catch (const NumericalError& e) {
            p.rel_rmse_mean = std::numeric_limits<double>::quiet_NaN();
            p.rel_rmse_var = std::numeric_limits<double>::quiet_NaN();
            p.note = e.what();
        }
        cir_mean_err.push_back(p.rel_rmse_mean);
        cir_var_err.push_back(p.rel_rmse_var);
        result.points.push_back(std::move(p));
    }
    result.slopes.push_back(detail::fit_slope("cir", "mean", cfg.n_values, cir_mean_err));
    result.slopes.push_back(detail::fit_slope("cir", "var", cfg.n_values, cir_var_err));

    // iCIR mean against the finest-grid reference
    if (cfg.include_icir) {
        std::optional<SplineCurve> ref_mean;
        std::string ref_note;
        try {
            const MomentVectors ref =
                detail::pipeline_moments(icir_model(), cfg.theta, cfg.xmin, cfg.xmax,
                                         cfg.n_reference, cfg.tau, cfg.multiple);
            const SpatialGrid ref_grid = build_grid(cfg.xmin, cfg.xmax, cfg.n_reference);
            std::span<const double> ref_vals(ref.raw_first.data(),
                                             static_cast<std::size_t>(ref.raw_first.size()));
            ref_mean = spline_fit(ref_grid.nodes, ref_vals);
        } catch (const NumericalError& e) {
            ref_note = std::string("reference solve failed: ") + e.what();
        }

        std::vector<double> icir_mean_err;
        for (const int n : cfg.n_values) {
            const SpatialGrid grid = build_grid(cfg.xmin, cfg.xmax, n);
            ConvergencePoint p;
            p.model = "icir";
            p.n = n;
            p.h = grid.h;
            p.rel_rmse_mean = std::numeric_limits<double>::quiet_NaN();
            p.rel_rmse_var = std::numeric_limits<double>::quiet_NaN();
            if (!ref_mean) {
                p.note = ref_note;
            } else {
                try {
                    const MomentVectors mv = detail::pipeline_moments(
                        icir_model(), cfg.theta, cfg.xmin, cfg.xmax, n, cfg.tau, cfg.multiple);
                    double se = 0.0;
                    for (int i = 0; i <= n; ++i) {
                        const double r = (*ref_mean)(grid.nodes[static_cast<std::size_t>(i)]);
                        const double d = (mv.raw_first(i) - r) / r;
                        se += d * d;
                    }
                    p.rel_rmse_mean = std::sqrt(se / (n + 1));
                } catch (const NumericalError& e) {
                    p.note = e.what();
                }
            }
            icir_mean_err.push_back(p.rel_rmse_mean);
            result.points.push_back(std::move(p));
        }
        result.slopes.push_back(detail::fit_slope("icir", "mean", cfg.n_values, icir_mean_err));
    }
    return result;
}

inline void write_convergence_csv(const std::string& points_path, const std::string& slopes_path,
                                  const ConvergenceResult& result, std::uint64_t config_hash,
                                  std::uint64_t seed) {
    CsvWriter points(points_path, config_hash, seed,
                     {"model", "n_x", "h", "rel_rmse_mean", "rel_rmse_var"});
    for (const auto& p : result.points)
        points.row({p.model, static_cast<long long>(p.n), p.h, p.rel_rmse_mean, p.rel_rmse_var});
    CsvWriter slopes(slopes_path, config_hash, seed, {"model", "quantity", "slope", "monotone"});
    for (const auto& s : result.slopes)
        slopes.row({s.model, s.quantity, s.slope, std::string(s.monotone ? "true" : "false")});
}

// ---------------------------------------------------------------------------
// Absolute moment errors across the grid for each method (Fig. 1 analog).

struct MomentErrorConfig {
    ParamVector theta{15.0, 3.0, 2.0};
    double xmin = 0.5;
    double xmax = 6.0;
    int n = 511;
    double tau = 1.0 / 6.0;
    int multiple = 16;
    std::vector<std::string> methods{"euler", "ito1", "ito2", "backward"};
};

struct MomentErrorRow {
    double x = 0.0;
    std::string method;
    double abs_err_mean = 0.0;
    double abs_err_var = 0.0;
};

inline std::vector<MomentErrorRow> run_moment_error(const MomentErrorConfig& cfg) {
    const SpatialGrid grid = build_grid(cfg.xmin, cfg.xmax, cfg.n);
    std::vector<MomentErrorRow> rows;
    rows.reserve(cfg.methods.size() * grid.nodes.size());
    for (const std::string& method : cfg.methods) {
        std::optional<BackwardOptions> opts;
        if (method == "backward")
            opts = BackwardOptions{grid, cfg.tau / cfg.multiple, 4 * cfg.multiple};
        const auto provider = make_provider(method, cir_model(), cfg.theta, opts);
        for (const double x : grid.nodes) {
            const Moments approx = provider->moments(x, cfg.tau);
            const Moments exact = cir_exact_moments(cfg.theta, x, cfg.tau);
            rows.push_back({x, method, std::abs(approx.mean - exact.mean),
                            std::abs(approx.variance - exact.variance)});
        }
    }
    return rows;
}

inline void write_moment_error_csv(const std::string& path,
                                   const std::vector<MomentErrorRow>& rows,
                                   std::uint64_t config_hash, std::uint64_t seed) {
    CsvWriter w(path, config_hash, seed, {"x", "method", "abs_err_mean", "abs_err_var"});
    for (const auto& r : rows) w.row({r.x, r.method, r.abs_err_mean, r.abs_err_var});
}

// ---------------------------------------------------------------------------
// Replicated estimation study (fixed or random sampling).

struct EstimationConfig {
    const ModelSpec* model = &icir_model();
    ParamVector theta_true{15.0, 3.0, 2.0};
    double x0 = 5.0;
    std::string sched_kind = "fixed";  // fixed | uniform
    double dt = 1.0 / 12.0;
    double dt_lo = 1.0 / 252.0;
    double dt_hi = 1.0 / 6.0;
    int count = 1000;
    int burnin = 100;
    int substeps = 256;
    std::vector<std::string> methods{"backward", "euler"};
    bool euler_dense = false;  // extra Euler run on dt = dense_dt data
    double dense_dt = 1.0 / 52.0;
    ParamVector init{10.0, 5.0, 1.0};
    int replications = 20;
    std::uint64_t seed = 1;
    int threads = 0;
    FitOptions fit;  // method field is overridden per run
};

struct EstimationRow {
    int replicate = 0;
    std::string method;
    ParamVector theta;
    double loglik = 0.0;
    int iterations = 0;
    int function_evals = 0;
    bool converged = false;
    double wall_ms = 0.0;
};

struct EstimationSummary {
    std::string method;
    std::string param;
    double median_value = 0.0;
    double iqr = 0.0;
    int n_converged = 0;
};

struct EstimationResult {
    std::vector<EstimationRow> rows;
    std::vector<EstimationSummary> summary;

    double median_for(const std::string& method, const std::string& param) const {
        for (const auto& s : summary)
            if (s.method == method && s.param == param) return s.median_value;
        throw DomainError("no summary for " + method + "/" + param);
    }
};

inline const char* param_name(std::size_t index) {
    static const char* names[] = {"a", "b", "sigma"};
    return index < 3 ? names[index] : "p?";
}

inline EstimationResult run_estimation(const EstimationConfig& cfg) {
    std::vector<std::string> methods = cfg.methods;
    if (cfg.euler_dense) methods.push_back("euler@dense");

    const int total = cfg.replications * static_cast<int>(methods.size());
    std::vector<EstimationRow> rows(static_cast<std::size_t>(total));

    parallel_for(cfg.replications, cfg.threads, [&](int r) {
        const std::uint64_t rep_seed = cfg.seed + static_cast<std::uint64_t>(r);
        SimConfig sim;
        sim.model = cfg.model;
        sim.theta = cfg.theta_true;
        sim.x0 = cfg.x0;
        sim.substeps = cfg.substeps;
        sim.seed = rep_seed;

        const SamplingSchedule schedule =
            cfg.sched_kind == "fixed"
                ? make_fixed_schedule(cfg.dt, cfg.count, cfg.burnin)
                : make_uniform_schedule(cfg.dt_lo, cfg.dt_hi, cfg.count, cfg.burnin, rep_seed);
        const ObservationSeries series = simulate_series(sim, schedule).series;

        // the dense-sampling comparison runs Euler on its own finer data set
        ObservationSeries dense_series;
        if (cfg.euler_dense) {
            const SamplingSchedule dense =
                make_fixed_schedule(cfg.dense_dt, cfg.count, cfg.burnin);
            dense_series = simulate_series(sim, dense).series;
        }

        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            const std::string& method = methods[mi];
            FitOptions fit = cfg.fit;
            fit.method = method == "euler@dense" ? "euler" : method;
            const ObservationSeries& data =
                method == "euler@dense" ? dense_series : series;

            EstimationRow row;
            row.replicate = r;
            row.method = method;
            try {
                const FitResult res = fit_qml(data, *cfg.model, cfg.init, fit);
                row.theta = res.theta;
                row.loglik = res.loglik;
                row.iterations = res.iterations;
                row.function_evals = res.function_evals;
                row.converged = res.converged;
                row.wall_ms = res.wall_ms;
            } catch (const std::exception&) {
                row.converged = false;
                row.theta = cfg.init;
                row.loglik = std::numeric_limits<double>::quiet_NaN();
            }
            rows[static_cast<std::size_t>(r) * methods.size() + mi] = std::move(row);
        }
    });

    EstimationResult result;
    result.rows = std::move(rows);

    // non-converged fits are recorded but excluded from the medians
    for (const std::string& method : methods) {
        for (std::size_t p = 0; p < cfg.theta_true.size(); ++p) {
            std::vector<double> values;
            for (const auto& row : result.rows)
                if (row.method == method && row.converged) values.push_back(row.theta[p]);
            EstimationSummary s;
            s.method = method;
            s.param = param_name(p);
            s.n_converged = static_cast<int>(values.size());
            if (!values.empty()) {
                s.median_value = median(values);
                s.iqr = interquartile_range(values);
            } else {
                s.median_value = std::numeric_limits<double>::quiet_NaN();
                s.iqr = std::numeric_limits<double>::quiet_NaN();
            }
            result.summary.push_back(std::move(s));
        }
    }
    return result;
}

inline void write_estimation_csv(const std::string& rows_path, const std::string& summary_path,
                                 const EstimationResult& result, std::uint64_t config_hash,
                                 std::uint64_t seed) {
    CsvWriter rows(rows_path, config_hash, seed,
                   {"replicate", "method", "a_hat", "b_hat", "sigma_hat", "loglik", "iterations",
                    "function_evals", "converged", "wall_ms"});
    for (const auto& r : result.rows) {
        rows.row({static_cast<long long>(r.replicate), r.method,
                  r.theta.size() > 0 ? r.theta[0] : std::nan(""),
                  r.theta.size() > 1 ? r.theta[1] : std::nan(""),
                  r.theta.size() > 2 ? r.theta[2] : std::nan(""), r.loglik,
                  static_cast<long long>(r.iterations), static_cast<long long>(r.function_evals),
                  std::string(r.converged ? "true" : "false"), r.wall_ms});
    }
    CsvWriter summary(summary_path, config_hash, seed,
                      {"method", "param", "median", "iqr", "n_converged"});
    for (const auto& s : result.summary)
        summary.row({s.method, s.param, s.median_value, s.iqr,
                     static_cast<long long>(s.n_converged)});
}

// ---------------------------------------------------------------------------
// Likelihood-evaluation cost benchmark.

struct BenchConfig {
    const ModelSpec* model = &icir_model();
    ParamVector theta{15.0, 3.0, 2.0};
    double x0 = 5.0;
    double dt = 1.0 / 12.0;
    std::vector<long long> k_values{1000, 10000, 50000, 100000, 200000, 500000,
                                    1000000, 2000000};
    int reps = 3;
    int substeps = 64;
    std::uint64_t seed = 1;
    std::vector<std::string> methods{"backward", "euler"};
    int grid_n = 127;
    double base_step_fraction = 1.0 / 16.0;
};

struct BenchRow {
    long long k = 0;
    std::string method;
    double wall_ms_total = 0.0;
    double wall_ms_per_obs = 0.0;
    double wall_ms_setup = 0.0;
};

struct BenchResult {
    std::vector<BenchRow> rows;

    /// Least-squares fit total_ms = c + m*K over rows of one method with K >= k_min.
    LinearFit time_fit(const std::string& method, long long k_min = 0) const {
        std::vector<double> ks, ts;
        for (const auto& r : rows)
            if (r.method == method && r.k >= k_min) {
                ks.push_back(static_cast<double>(r.k));
                ts.push_back(r.wall_ms_total);
            }
        return linear_fit(ks, ts);
    }
};

inline BenchResult run_bench(const BenchConfig& cfg) {
    const long long k_max = *std::max_element(cfg.k_values.begin(), cfg.k_values.end());

    SimConfig sim;
    sim.model = cfg.model;
    sim.theta = cfg.theta;
    sim.x0 = cfg.x0;
    sim.substeps = cfg.substeps;
    sim.seed = cfg.seed;
    const ObservationSeries full =
        simulate_series(sim, make_fixed_schedule(cfg.dt, static_cast<int>(k_max), 0)).series;

    BackwardOptions backward;
    backward.grid = auto_estimation_grid(full, *cfg.model, 0.5, cfg.grid_n);
    backward.base_step = cfg.dt * cfg.base_step_fraction;

    BenchResult result;
    for (const std::string& method : cfg.methods) {
        // the offline part (plan plus surfaces) does not depend on K; it is
        // measured separately so the per-K rows share one constant
        const std::vector<double> full_gaps = full.gaps();
        std::unique_ptr<MomentProvider> provider;
        double setup_ms = 0.0;
        for (int rep = 0; rep < cfg.reps; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            provider = make_provider(method, *cfg.model, cfg.theta,
                                     method == "backward"
                                         ? std::optional<BackwardOptions>(backward)
                                         : std::nullopt);
            provider->prefetch(full_gaps);
            const auto t1 = std::chrono::steady_clock::now();
            setup_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        setup_ms /= cfg.reps;

        for (const long long k : cfg.k_values) {
            ObservationSeries prefix;
            prefix.times.assign(full.times.begin(), full.times.begin() + k + 1);
            prefix.states.assign(full.states.begin(), full.states.begin() + k + 1);

            double eval_ms = 0.0;
            for (int rep = 0; rep < cfg.reps; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                volatile double sink = qml_objective(prefix, *provider);
                (void)sink;
                const auto t1 = std::chrono::steady_clock::now();
                eval_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
            }
            eval_ms /= cfg.reps;
            BenchRow row;
            row.k = k;
            row.method = method;
            row.wall_ms_setup = setup_ms;
            row.wall_ms_total = setup_ms + eval_ms;
            row.wall_ms_per_obs = eval_ms / static_cast<double>(k);
            result.rows.push_back(std::move(row));
        }
    }
    return result;
}

inline void write_bench_csv(const std::string& path, const BenchResult& result,
                            std::uint64_t config_hash, std::uint64_t seed) {
    CsvWriter w(path, config_hash, seed,
                {"k", "method", "wall_ms_total", "wall_ms_per_obs", "wall_ms_setup"});
    for (const auto& r : result.rows)
        w.row({r.k, r.method, r.wall_ms_total, r.wall_ms_per_obs, r.wall_ms_setup});
}

}  // namespace sdeqml
