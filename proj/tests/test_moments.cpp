#include <catch2/catch.hpp>
#include <cmath>
#include <thread>

#include "sdeqml/moments.hpp"

using namespace sdeqml;

namespace {

BackwardOptions standard_options(double lo, double hi, int n, double base_step) {
    BackwardOptions opt;
    opt.grid = build_grid(lo, hi, n);
    opt.base_step = base_step;
    return opt;
}

}  // namespace

TEST_CASE("euler moments") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const EulerProvider euler(cir_model(), theta);

    const Moments m0 = euler.moments(2.0, 0.0);
    CHECK(m0.mean == 2.0);
    CHECK(m0.variance == 0.0);

    const Moments m = euler.moments(2.0, 1.0 / 12.0);
    CHECK(m.mean == Approx(3.25));
    CHECK(m.variance == Approx(4.0 * 2.0 / 12.0));

    // drift-free model: mean = x for any dt
    const EulerProvider flat(constant_model(), ParamVector{0.0, 1.3});
    for (double dt : {0.01, 0.5, 3.0}) CHECK(flat.moments(0.7, dt).mean == 0.7);
}

TEST_CASE("ito-taylor L=1 equals euler exactly for affine drift") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const EulerProvider euler(cir_model(), theta);
    const ItoTaylorProvider ito1(cir_model(), theta, 1);
    for (double x : {0.07, 0.5, 1.0, 2.0, 3.0, 5.5}) {
        for (double dt : {1.0 / 252.0, 1.0 / 12.0, 1.0 / 6.0}) {
            const Moments a = euler.moments(x, dt);
            const Moments b = ito1.moments(x, dt);
            CHECK(a.mean == b.mean);          // bitwise
            CHECK(a.variance == b.variance);  // bitwise
        }
    }
    // and also at a non-representable theta
    const ParamVector odd{7.3112, 2.9001, 1.7321};
    const EulerProvider e2(cir_model(), odd);
    const ItoTaylorProvider i2(cir_model(), odd, 1);
    for (double x : {0.31, 1.234, 4.0}) {
        const Moments a = e2.moments(x, 0.13);
        const Moments b = i2.moments(x, 0.13);
        CHECK(a.mean == b.mean);
        CHECK(a.variance == b.variance);
    }
}

TEST_CASE("ito-taylor L=2 mean matches the hand expansion") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const ItoTaylorProvider ito2(cir_model(), theta, 2);
    // mean = x + a(b-x)(dt - a dt^2/2) at x=2, dt=1/12 -> 2.46875
    CHECK(ito2.moments(2.0, 1.0 / 12.0).mean == Approx(2.46875).epsilon(1e-12));
    // L=2 separates the mean from the Euler baseline
    const EulerProvider euler(cir_model(), theta);
    CHECK(ito2.moments(2.0, 1.0 / 12.0).mean != euler.moments(2.0, 1.0 / 12.0).mean);
}

TEST_CASE("ito-taylor approaches the exact CIR moments as L grows at small dt") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const double x = 2.0, dt = 1e-4;
    const Moments exact = cir_exact_moments(theta, x, dt);
    const ItoTaylorProvider ito6(cir_model(), theta, 6);
    CHECK(ito6.moments(x, dt).mean == Approx(exact.mean).epsilon(1e-10));
    CHECK(ito6.moments(x, dt).variance == Approx(exact.variance).epsilon(1e-8));
}

TEST_CASE("ito-taylor substepping tightens the mean at large dt") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const double x = 2.0, dt = 1.0 / 6.0;
    const Moments exact = cir_exact_moments(theta, x, dt);
    const ItoTaylorProvider plain(cir_model(), theta, 2);
    const ItoTaylorProvider sub(cir_model(), theta, 2, 16);
    CHECK(std::abs(sub.moments(x, dt).mean - exact.mean) <
          std::abs(plain.moments(x, dt).mean - exact.mean));
}

TEST_CASE("backward moments match the CIR closed forms") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const BackwardProvider backward(cir_model(), theta,
                                    standard_options(0.5, 6.0, 511, (1.0 / 6.0) / 16.0));
    const Moments m = backward.moments(2.0, 1.0 / 6.0);
    const Moments exact = cir_exact_moments(theta, 2.0, 1.0 / 6.0);
    CHECK(m.mean == Approx(exact.mean).epsilon(1e-3));
    CHECK(m.variance == Approx(exact.variance).epsilon(1e-3));
}

TEST_CASE("backward moments at a grid node and one base step have no interpolation error") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const BackwardOptions opt = standard_options(0.5, 6.0, 64, 1.0 / 252.0);
    const BackwardProvider backward(cir_model(), theta, opt);

    const auto vectors = propagate_moments(backward.plan(), {1});
    const int node = 20;
    const double x = opt.grid.nodes[node];
    const Moments m = backward.moments(x, 1.0 / 252.0);
    CHECK(m.mean == vectors.at(1).raw_first(node));  // knot exactness, bitwise
    const double raw2 = vectors.at(1).raw_second(node);
    CHECK(m.variance == std::max(raw2 - m.mean * m.mean, variance_floor(raw2)));
}

TEST_CASE("backward provider quantizes elapsed times") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const BackwardProvider backward(cir_model(), theta,
                                    standard_options(0.5, 6.0, 32, 1.0 / 192.0));
    CHECK(backward.quantize(1.0 / 12.0) == 16);
    CHECK(backward.quantize(1.0 / 192.0) == 1);
    CHECK(backward.quantize(1e-9) == 1);                 // floors at one step
    CHECK(backward.quantize(0.0801) == 15);              // nearest multiple
    CHECK_THROWS_AS(backward.quantize(0.0), DomainError);
}

TEST_CASE("repeated identical queries are bit-identical and thread-safe") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const BackwardProvider backward(cir_model(), theta,
                                    standard_options(0.5, 6.0, 64, 1.0 / 192.0));
    const Moments first = backward.moments(1.234, 0.07);

    std::vector<Moments> results(8);
    std::vector<std::thread> workers;
    for (int t = 0; t < 8; ++t)
        workers.emplace_back([&, t] { results[t] = backward.moments(1.234, 0.07); });
    for (auto& w : workers) w.join();
    for (const Moments& r : results) {
        CHECK(r.mean == first.mean);
        CHECK(r.variance == first.variance);
    }
}

TEST_CASE("backward provider rejects states outside the grid") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const BackwardProvider backward(cir_model(), theta,
                                    standard_options(0.5, 6.0, 32, 1.0 / 192.0));
    CHECK_THROWS_WITH(backward.moments(6.5, 0.1), Catch::Contains("outside knot range"));
}

TEST_CASE("providers converge to (x, 0) as dt -> 0 and differ at O(dt^2) in mean") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const EulerProvider euler(cir_model(), theta);
    const ItoTaylorProvider ito2(cir_model(), theta, 2);
    const BackwardProvider backward(cir_model(), theta,
                                    standard_options(0.5, 6.0, 255, 1e-4 / 4.0));
    const double x = 2.0;
    double prev_gap = 0.0;
    for (double dt : {1e-3, 1e-4}) {
        const Moments me = euler.moments(x, dt);
        const Moments mb = backward.moments(x, dt);
        CHECK(me.mean == Approx(x).margin(0.05));
        CHECK(mb.mean == Approx(x).margin(0.05));
        CHECK(me.variance == Approx(0.0).margin(0.01));
        const double gap = std::abs(me.mean - ito2.moments(x, dt).mean);
        if (prev_gap != 0.0) CHECK(gap * 50.0 < prev_gap);  // O(dt^2): 100x per decade
        prev_gap = gap;
    }
}

TEST_CASE("backward beats euler by 10x against the exact CIR moments at tau = 1/6") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const SpatialGrid grid = build_grid(0.5, 6.0, 511);
    const BackwardProvider backward(cir_model(), theta,
                                    standard_options(0.5, 6.0, 511, (1.0 / 6.0) / 16.0));
    const EulerProvider euler(cir_model(), theta);
    const double dt = 1.0 / 6.0;
    const int lo = 51, hi = 460;  // mid-80%
    for (int i = lo; i <= hi; i += 7) {
        const double x = grid.nodes[i];
        const Moments exact = cir_exact_moments(theta, x, dt);
        const Moments mb = backward.moments(x, dt);
        const Moments me = euler.moments(x, dt);
        CHECK(std::abs(mb.mean - exact.mean) * 10.0 <= std::abs(me.mean - exact.mean));
        CHECK(std::abs(mb.variance - exact.variance) * 10.0 <=
              std::abs(me.variance - exact.variance));
    }
}

TEST_CASE("custom polynomial model runs the full backward pipeline") {
    // mean-reverting model with constant diffusion: dX = a(b - X) dt + s dW;
    // its conditional moments are closed-form and independent of this library
    const ModelSpec vasicek = make_polynomial_model(
        "vasicek", 3, {true, true, true},
        [](const ParamVector& th) { return Polynomial{th[0] * th[1], -th[0]}; },
        [](const ParamVector& th) { return Polynomial{th[2] * th[2]}; });
    register_model(vasicek);
    CHECK(model_by_name("vasicek").name == "vasicek");

    const ParamVector theta{2.0, 1.0, 0.4};
    const double dt = 0.25;
    BackwardOptions opt;
    opt.grid = build_grid(-0.5, 2.5, 255);
    opt.base_step = dt / 8.0;
    const BackwardProvider backward(vasicek, theta, opt);
    const double e = std::exp(-2.0 * dt);
    const double exact_var = 0.16 / 4.0 * (1.0 - e * e);
    for (double x : {0.2, 0.9, 1.7}) {
        const Moments m = backward.moments(x, dt);
        CHECK(m.mean == Approx(1.0 + (x - 1.0) * e).epsilon(1e-6));
        CHECK(m.variance == Approx(exact_var).epsilon(1e-5));
    }

    // generator_apply works off the registered polynomials
    const Polynomial lx = generator_apply(vasicek, theta, Polynomial::identity());
    CHECK(lx == Polynomial{2.0, -2.0});
}

TEST_CASE("make_provider dispatches on the method string") {
    const ParamVector theta{15.0, 3.0, 2.0};
    CHECK(std::string(make_provider("euler", cir_model(), theta)->kind()) == "euler");
    CHECK(std::string(make_provider("ito1", cir_model(), theta)->kind()) == "ito1");
    CHECK(std::string(make_provider("ito2", cir_model(), theta)->kind()) == "ito2");
    const auto opt = standard_options(0.5, 6.0, 32, 0.01);
    CHECK(std::string(make_provider("backward", cir_model(), theta, opt)->kind()) == "backward");
    CHECK_THROWS_AS(make_provider("backward", cir_model(), theta), ConfigError);
    CHECK_THROWS_AS(make_provider("hermite", cir_model(), theta), ConfigError);
}
