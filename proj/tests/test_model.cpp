#include <catch2/catch.hpp>
#include <cmath>

#include "sdeqml/model.hpp"

using namespace sdeqml;

TEST_CASE("eval_coefficients on CIR and iCIR") {
    const ParamVector theta{15.0, 3.0, 2.0};

    auto cir3 = eval_coefficients(cir_model(), theta, 3.0);
    CHECK(cir3.drift == 0.0);  // drift vanishes at x = b
    CHECK(cir3.diffusion == Approx(2.0 * std::sqrt(3.0)));

    auto cir2 = eval_coefficients(cir_model(), theta, 2.0);
    CHECK(cir2.drift == Approx(15.0));
    CHECK(cir2.diffusion == Approx(2.0 * std::sqrt(2.0)));

    auto ic = eval_coefficients(icir_model(), theta, 0.5);
    CHECK(ic.drift == Approx(-2.75));
    CHECK(ic.diffusion == Approx(0.7071067811865476));

    CHECK_THROWS_AS(eval_coefficients(cir_model(), theta, -0.1), DomainError);
    CHECK_THROWS_AS(eval_coefficients(cir_model(), ParamVector{-1.0, 3.0, 2.0}, 1.0),
                    DomainError);
}

TEST_CASE("cir_exact_moments closed forms") {
    const ParamVector theta{15.0, 3.0, 2.0};

    // x = b is the fixed point of the mean.
    for (double dt : {0.01, 1.0 / 12.0, 0.5}) {
        CHECK(cir_exact_moments(theta, 3.0, dt).mean == Approx(3.0));
    }

    const Moments m = cir_exact_moments(theta, 2.0, 1.0 / 12.0);
    CHECK(m.mean == Approx(2.71349520313981).epsilon(1e-12));
    CHECK(m.variance == Approx(0.3126540543540961).epsilon(1e-12));

    const Moments degenerate = cir_exact_moments(theta, 2.0, 0.0);
    CHECK(degenerate.mean == 2.0);
    CHECK(degenerate.variance == 0.0);
}

TEST_CASE("cir_exact_moments are affine in x for fixed (theta, dt)") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const double dt = 1.0 / 6.0;
    const double xs[] = {0.5, 1.7, 4.1};
    Moments m0 = cir_exact_moments(theta, xs[0], dt);
    Moments m1 = cir_exact_moments(theta, xs[1], dt);
    Moments m2 = cir_exact_moments(theta, xs[2], dt);
    // collinearity: slope between first two matches slope between last two
    const double mean_slope_a = (m1.mean - m0.mean) / (xs[1] - xs[0]);
    const double mean_slope_b = (m2.mean - m1.mean) / (xs[2] - xs[1]);
    CHECK(mean_slope_a == Approx(mean_slope_b).epsilon(1e-12));
    const double var_slope_a = (m1.variance - m0.variance) / (xs[1] - xs[0]);
    const double var_slope_b = (m2.variance - m1.variance) / (xs[2] - xs[1]);
    CHECK(var_slope_a == Approx(var_slope_b).epsilon(1e-12));
}

TEST_CASE("generator_apply on CIR polynomials") {
    const ParamVector theta{15.0, 3.0, 2.0};

    // L x = a(b - x) = 45 - 15x
    const Polynomial lx = generator_apply(cir_model(), theta, Polynomial::identity());
    CHECK(lx == Polynomial{45.0, -15.0});

    // L x^2 = (2ab + s^2) x - 2a x^2 = 94x - 30x^2
    const Polynomial lx2 = generator_apply(cir_model(), theta, Polynomial{0.0, 0.0, 1.0});
    CHECK(lx2 == Polynomial{0.0, 94.0, -30.0});

    CHECK(generator_apply(cir_model(), theta, Polynomial{7.0}).is_zero());

    ModelSpec no_poly = cir_model();
    no_poly.drift_coeffs = nullptr;
    CHECK_THROWS_AS(generator_apply(no_poly, theta, Polynomial::identity()), std::logic_error);
}

TEST_CASE("generator_apply is linear and degree-bounded") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const Polynomial p{1.0, 2.0, 0.5};
    const Polynomial q{0.0, -1.0, 0.0, 2.0};
    const double alpha = 2.5, beta = -0.75;

    const Polynomial lhs =
        generator_apply(cir_model(), theta, p.scaled(alpha) + q.scaled(beta));
    const Polynomial rhs = generator_apply(cir_model(), theta, p).scaled(alpha) +
                           generator_apply(cir_model(), theta, q).scaled(beta);
    CHECK(lhs == rhs);

    // deg L x^d <= d + max(deg a - 1, deg b^2 - 2)
    for (const ModelSpec* model : {&cir_model(), &icir_model()}) {
        const int bound = std::max(model->drift_coeffs(theta).degree() - 1,
                                   model->diff_sq_coeffs(theta).degree() - 2);
        for (int d = 1; d <= 4; ++d) {
            std::vector<double> mono(static_cast<std::size_t>(d) + 1, 0.0);
            mono.back() = 1.0;
            const Polynomial lp = generator_apply(*model, theta, Polynomial(mono));
            CHECK(lp.degree() <= d + bound);
        }
    }
}

TEST_CASE("d_diff_sq matches finite differences of diffusion^2") {
    const ParamVector theta{15.0, 3.0, 2.0};
    for (const ModelSpec* model : {&cir_model(), &icir_model()}) {
        for (double x : {0.2, 0.7, 1.9, 4.0}) {
            const double step = 1e-6 * std::max(1.0, std::abs(x));
            const double bp = model->diffusion(x + step, theta);
            const double bm = model->diffusion(x - step, theta);
            const double fd = (bp * bp - bm * bm) / (2.0 * step);
            CHECK(d_diff_sq_value(*model, theta, x) == Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("parameter transform round trips") {
    const std::vector<bool> mask{true, true, true};

    const ParamVector ones = constrain_params({0.0, 0.0, 0.0}, mask);
    CHECK(ones[0] == 1.0);
    CHECK(ones[1] == 1.0);
    CHECK(ones[2] == 1.0);

    const ParamVector theta =
        constrain_params({std::log(15.0), std::log(3.0), std::log(2.0)}, mask);
    CHECK(theta[0] == Approx(15.0).epsilon(1e-14));
    CHECK(theta[1] == Approx(3.0).epsilon(1e-14));
    CHECK(theta[2] == Approx(2.0).epsilon(1e-14));

    const ParamVector original{10.0, 5.0, 1.0};
    const ParamVector round = constrain_params(unconstrain_params(original, mask), mask);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(round[i] == Approx(original[i]).epsilon(1e-12));

    CHECK_THROWS_AS(constrain_params({std::nan("")}, {true}), DomainError);
}

TEST_CASE("model registry lookup") {
    CHECK(model_by_name("cir").name == "cir");
    CHECK(model_by_name("icir").name == "icir");
    CHECK_THROWS_AS(model_by_name("heston"), ConfigError);

    ModelSpec custom = constant_model();
    custom.name = "custom-bm";
    register_model(custom);
    CHECK(model_by_name("custom-bm").name == "custom-bm");
}
