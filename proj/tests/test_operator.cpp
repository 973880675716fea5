#include <catch2/catch.hpp>
#include <cmath>

#include "sdeqml/generator.hpp"
#include "sdeqml/grid.hpp"

using namespace sdeqml;

TEST_CASE("build_grid") {
    const SpatialGrid g = build_grid(0.05, 0.15, 15);
    CHECK(g.h == Approx(0.1 / 15.0).epsilon(1e-14));
    CHECK(g.node_count() == 16);
    CHECK(g.nodes.front() == 0.05);
    CHECK(g.nodes.back() == Approx(0.15).epsilon(1e-12));

    const SpatialGrid unit = build_grid(0.0, 1.0, 10);
    for (int i = 0; i <= 10; ++i) CHECK(unit.nodes[i] == Approx(0.1 * i).margin(1e-15));

    CHECK(build_grid(0.05, 0.15, 511).h == Approx(0.00019569471624266145).epsilon(1e-13));

    CHECK_THROWS_AS(build_grid(0.0, 1.0, 7), DomainError);
    CHECK_THROWS_AS(build_grid(1.0, 1.0, 16), DomainError);
}

TEST_CASE("fichera check reproduces the Feller condition") {
    const SpatialGrid g = build_grid(0.0, 1.0, 16);

    const FicheraReport feller_ok = fichera_check(cir_model(), {15.0, 3.0, 2.0}, g);
    CHECK(feller_ok.lower.value == Approx(43.0));
    CHECK_FALSE(feller_ok.lower.needs_bc);

    const FicheraReport feller_bad = fichera_check(cir_model(), {1.0, 0.5, 2.0}, g);
    CHECK(feller_bad.lower.value == Approx(-1.5));
    CHECK(feller_bad.lower.needs_bc);

    // constant coefficients: f == 0 at both ends, no boundary condition needed
    const FicheraReport flat = fichera_check(constant_model(), {0.0, 1.0}, g);
    CHECK(flat.lower.value == 0.0);
    CHECK(flat.upper.value == 0.0);
    CHECK_FALSE(flat.lower.needs_bc);
    CHECK_FALSE(flat.upper.needs_bc);
}

TEST_CASE("assembled interior row matches the hand-computed entries") {
    // CIR theta=(15,3,2), h=0.01, at x_i = 0.1: a=43.5, b^2=0.4
    const SpatialGrid g = build_grid(0.05, 0.25, 20);
    REQUIRE(g.h == Approx(0.01).epsilon(1e-14));
    const DiscretizedGenerator gen = assemble_generator(cir_model(), {15.0, 3.0, 2.0}, g);
    const int i = 5;  // x = 0.1
    REQUIRE(g.nodes[i] == Approx(0.1).epsilon(1e-14));
    CHECK(gen.matrix()(i, i - 1) == Approx(-175.0).epsilon(1e-10));
    CHECK(gen.matrix()(i, i) == Approx(-4000.0).epsilon(1e-10));
    CHECK(gen.matrix()(i, i + 1) == Approx(4175.0).epsilon(1e-10));
}

TEST_CASE("pure diffusion interior stencil is the Laplacian") {
    // a = 0, b = sqrt(2), h = 1 -> interior row (1, -2, 1)
    const SpatialGrid g = build_grid(0.0, 16.0, 16);
    const DiscretizedGenerator gen =
        assemble_generator(constant_model(), {0.0, std::sqrt(2.0)}, g);
    CHECK(gen.matrix()(8, 7) == Approx(1.0));
    CHECK(gen.matrix()(8, 8) == Approx(-2.0));
    CHECK(gen.matrix()(8, 9) == Approx(1.0));
}

TEST_CASE("operator exactness properties", "[operator]") {
    const ParamVector thetas[] = {{15.0, 3.0, 2.0}, {4.0, 1.5, 0.8}};
    for (const ModelSpec* model : {&cir_model(), &icir_model()}) {
        for (const ParamVector& theta : thetas) {
            const SpatialGrid g = build_grid(0.3, 2.3, 64);
            const DiscretizedGenerator gen = assemble_generator(*model, theta, g);
            const Eigen::MatrixXd& L = gen.matrix();
            const int n = g.n_intervals;

            // row sums vanish relative to the largest entry in the row
            for (int i = 0; i <= n; ++i) {
                const double scale = L.row(i).cwiseAbs().maxCoeff();
                CHECK(std::abs(L.row(i).sum()) <= 1e-12 * scale);
            }

            // bandwidth: interior tridiagonal, boundary rows exactly 4 nonzeros
            for (int i = 1; i < n; ++i) {
                for (int j = 0; j <= n; ++j)
                    if (std::abs(j - i) > 1) CHECK(L(i, j) == 0.0);
            }
            CHECK((L.row(0).array() != 0.0).count() == 4);
            CHECK((L.row(n).array() != 0.0).count() == 4);
            for (int j = 4; j <= n; ++j) CHECK(L(0, j) == 0.0);
            for (int j = 0; j <= n - 4; ++j) CHECK(L(n, j) == 0.0);

            // L_h applied to x reproduces the drift at every row
            Eigen::VectorXd x(n + 1), x2(n + 1);
            for (int i = 0; i <= n; ++i) {
                x(i) = g.nodes[i];
                x2(i) = g.nodes[i] * g.nodes[i];
            }
            const Eigen::VectorXd lx = L * x;
            for (int i = 0; i <= n; ++i) {
                const double a = model->drift(g.nodes[i], theta);
                CHECK(lx(i) == Approx(a).epsilon(1e-10));
            }

            // interior rows: L_h x^2 = 2 x a(x) + b^2(x)
            const Eigen::VectorXd lx2 = L * x2;
            for (int i = 1; i < n; ++i) {
                const double expect = 2.0 * g.nodes[i] * model->drift(g.nodes[i], theta) +
                                      diffusion_sq(*model, theta, g.nodes[i]);
                CHECK(lx2(i) == Approx(expect).epsilon(1e-10));
            }

            // constants in the kernel
            const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n + 1);
            CHECK((L * ones).cwiseAbs().maxCoeff() <= 1e-12 * L.cwiseAbs().maxCoeff());
        }
    }
}

TEST_CASE("entries rescale as 1/h and 1/h^2 when N doubles") {
    const ParamVector theta{15.0, 3.0, 2.0};
    const SpatialGrid g1 = build_grid(0.5, 2.5, 32);
    const SpatialGrid g2 = build_grid(0.5, 2.5, 64);
    const auto gen1 = assemble_generator(cir_model(), theta, g1);
    const auto gen2 = assemble_generator(cir_model(), theta, g2);
    // node x = 1.5 is index 16 on g1, index 32 on g2
    const double x = g1.nodes[16];
    REQUIRE(g2.nodes[32] == Approx(x).epsilon(1e-14));
    const double a = cir_model().drift(x, theta);
    const double d = diffusion_sq(cir_model(), theta, x);
    // split each entry into its 1/h and 1/h^2 parts and check both scalings
    const double off1 = gen1.matrix()(16, 17), off2 = gen2.matrix()(32, 33);
    CHECK(off1 == Approx(a / (2 * g1.h) + d / (2 * g1.h * g1.h)).epsilon(1e-12));
    CHECK(off2 == Approx(a / (2 * g2.h) + d / (2 * g2.h * g2.h)).epsilon(1e-12));
    CHECK(gen2.matrix()(32, 32) == Approx(4.0 * gen1.matrix()(16, 16)).epsilon(1e-12));
}

TEST_CASE("assembly reports non-finite coefficients with the node") {
    ModelSpec bad = cir_model();
    bad.name = "bad";
    bad.diff_sq_coeffs = nullptr;
    bad.drift = [](double x, const ParamVector&) {
        return x > 0.6 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
    };
    const SpatialGrid g = build_grid(0.5, 0.7, 16);
    CHECK_THROWS_WITH(assemble_generator(bad, {15.0, 3.0, 2.0}, g),
                      Catch::Contains("non-finite coefficient at node"));
}
