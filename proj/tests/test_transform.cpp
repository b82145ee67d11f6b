#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "bpskit/bps.hpp"
#include "bpskit/math.hpp"
#include "bpskit/rng.hpp"
#include "bpskit/transform.hpp"

using namespace bpskit;
using Eigen::Vector2d;

TEST_CASE("radial map values on both branches") {
    const auto poly = IsotropicTransform::polynomial(1.0, 3);
    auto r2 = poly.radial(2.0);
    CHECK(r2.f == Catch::Approx(3.0));
    CHECK(r2.df == Catch::Approx(4.0));
    CHECK(r2.ddf == Catch::Approx(6.0));
    auto r05 = poly.radial(0.5);
    CHECK(r05.f == 0.5);
    CHECK(r05.df == 1.0);
    CHECK(r05.ddf == 0.0);

    const auto expo = IsotropicTransform::exponential(1.0);
    const double join = 2.0 * std::numbers::e / 3.0;
    CHECK(expo.radial(1.0).f == Catch::Approx(join).epsilon(1e-14));
    CHECK(expo.radial(1.0 + 1e-12).f == Catch::Approx(join).epsilon(1e-11));
}

TEST_CASE("radial joins are C2 to numerical precision") {
    for (const auto& h : {IsotropicTransform::exponential(1.3),
                          IsotropicTransform::polynomial(0.7, 3),
                          IsotropicTransform::polynomial(1.0, 5)}) {
        const double r = h.branch_radius();
        const double eps = 1e-9;
        const auto lo = h.radial(r - eps);
        const auto hi = h.radial(r + eps);
        CHECK(std::abs(lo.f - hi.f) < 1e-8);
        CHECK(std::abs(lo.df - hi.df) < 1e-8);
        CHECK(std::abs(lo.ddf - hi.ddf) < 1e-6 * (1.0 + std::abs(hi.ddf)));
    }
}

TEST_CASE("apply and invert") {
    const auto poly = IsotropicTransform::polynomial(1.0, 3);
    CHECK(poly.apply(Vector2d(0, 0)).norm() == 0.0);
    CHECK((poly.apply(Vector2d(0.3, 0.4)) - Vector2d(0.3, 0.4)).norm() == 0.0);
    CHECK((poly.apply(Vector2d(2, 0)) - Vector2d(3, 0)).norm() < 1e-14);

    CHECK((poly.invert(Vector2d(3, 0)) - Vector2d(2, 0)).norm() < 1e-10);
    CHECK(poly.invert(Vector2d(0, 0)).norm() == 0.0);

    RngStream rng(21);
    for (const auto& h : {IsotropicTransform::exponential(1.0),
                          IsotropicTransform::polynomial(1.0, 5)}) {
        for (int i = 0; i < 1000; ++i) {
            const VectorXd x = 20.0 * rng.uniform01() * rng.unit_sphere(2);
            CHECK((h.apply(h.invert(x)) - x).norm() <= 1e-10 * (1.0 + x.norm()));
        }
    }
}

TEST_CASE("jacobian of the isotropic map") {
    const auto poly = IsotropicTransform::polynomial(1.0, 3);
    CHECK((poly.jacobian(Vector2d(0.2, 0.4)) - MatrixXd::Identity(2, 2)).norm() == 0.0);

    MatrixXd expected(2, 2);
    expected << 4.0, 0.0, 0.0, 1.5;  // f' radially, f/|y| tangentially
    CHECK((poly.jacobian(Vector2d(2, 0)) - expected).norm() < 1e-13);

    // finite differences of h at points away from the branch radius
    RngStream rng(22);
    for (const auto& h : {IsotropicTransform::exponential(1.0),
                          IsotropicTransform::polynomial(1.0, 3)}) {
        for (int i = 0; i < 50; ++i) {
            VectorXd y;
            do {
                y = 5.0 * rng.uniform01() * rng.unit_sphere(2);
            } while (y.norm() < 0.05 || std::abs(y.norm() - h.branch_radius()) < 0.05);
            const double step = 1e-6 * (1.0 + y.norm());
            MatrixXd fd(2, 2);
            for (int c = 0; c < 2; ++c) {
                VectorXd e = y;
                e[c] = y[c] + step;
                const VectorXd up = h.apply(e);
                e[c] = y[c] - step;
                const VectorXd dn = h.apply(e);
                fd.col(c) = (up - dn) / (2.0 * step);
            }
            const MatrixXd jac = h.jacobian(y);
            CHECK((jac - fd).norm() <= 1e-5 * std::max(1.0, jac.norm()));
        }
    }
}

TEST_CASE("log-determinant value and gradient") {
    const auto poly = IsotropicTransform::polynomial(1.0, 3);
    const auto ld = poly.log_det_jacobian(Vector2d(2, 0));
    CHECK(ld.value == Catch::Approx(std::log(6.0)).epsilon(1e-14));
    // f''/f' + (f'/f - 1/|y|) = 6/4 + 4/3 - 1/2
    CHECK(ld.gradient[0] == Catch::Approx(6.0 / 4.0 + 4.0 / 3.0 - 0.5).epsilon(1e-13));
    CHECK(ld.gradient[1] == 0.0);

    const auto inside = poly.log_det_jacobian(Vector2d(0.3, -0.2));
    CHECK(inside.value == 0.0);
    CHECK(inside.gradient.norm() == 0.0);

    RngStream rng(23);
    for (const auto& h : {IsotropicTransform::exponential(1.0),
                          IsotropicTransform::polynomial(1.0, 5)}) {
        for (int i = 0; i < 50; ++i) {
            VectorXd y;
            do {
                y = 5.0 * rng.uniform01() * rng.unit_sphere(2);
            } while (y.norm() < 0.05 || std::abs(y.norm() - h.branch_radius()) < 0.05);
            const double step = 1e-6 * (1.0 + y.norm());
            VectorXd fd(2);
            for (int c = 0; c < 2; ++c) {
                VectorXd e = y;
                e[c] = y[c] + step;
                const double up = h.log_det_jacobian(e).value;
                e[c] = y[c] - step;
                const double dn = h.log_det_jacobian(e).value;
                fd[c] = (up - dn) / (2.0 * step);
            }
            const VectorXd grad = h.log_det_jacobian(y).gradient;
            CHECK((grad - fd).norm() <= 1e-5 * std::max(1.0, grad.norm()));
        }
    }
}

TEST_CASE("transformed potential and gradient") {
    const auto base = make_target({"student_t", 2, 1.0, 1.0, {}});
    const auto expo = IsotropicTransform::exponential(1.0);
    TransformedTarget pulled(base, expo);

    CHECK_FALSE(pulled.has_hessian());
    CHECK_THROWS_AS(pulled.hessian(Vector2d(1, 1)), UnsupportedError);
    CHECK(pulled.nonsmooth_radii().size() == 1);

    // identity region of the polynomial map: U_h = U, grad U_h = grad U
    const auto poly = IsotropicTransform::polynomial(1.0, 3);
    TransformedTarget pulled_poly(base, poly);
    const Vector2d inside(0.3, 0.4);
    CHECK(pulled_poly.potential(inside) == Catch::Approx(base->potential(inside)).epsilon(1e-14));
    CHECK((pulled_poly.grad(inside) - base->grad(inside)).norm() < 1e-14);

    RngStream rng(24);
    for (int i = 0; i < 60; ++i) {
        const VectorXd y = (2.0 + 8.0 * rng.uniform01()) * rng.unit_sphere(2);
        const double step = 1e-5 * (1.0 + y.norm());
        const VectorXd g = pulled.grad(y);
        CHECK((g - fd_gradient(pulled, y, step)).norm() <= 1e-5 * std::max(1.0, g.norm()));
    }
}

TEST_CASE("change of variables preserves the normaliser") {
    const auto base = make_target({"student_t", 2, 1.0, 1.0, {}});
    const auto expo = IsotropicTransform::exponential(1.0);
    TransformedTarget pulled(base, expo);

    // isotropy reduces both integrals to 1-D radial quadrature in d = 2
    auto radial_mass = [&](const Target& t, double upper) {
        return 2.0 * std::numbers::pi *
               math::adaptive_gauss_legendre(
                   [&](double r) {
                       return r * std::exp(-t.potential(r * Vector2d(1, 0)));
                   },
                   0.0, upper, 1e-12);
    };
    // the base density tail is ~1/R, so the cutoff must be far out
    const double base_mass = radial_mass(*base, 1e7);      // exact value 2 pi
    const double pulled_mass = radial_mass(pulled, 60.0);  // e^{-U_h} ~ e^{-r} tail
    CHECK(base_mass == Catch::Approx(2.0 * std::numbers::pi).epsilon(1e-6));
    CHECK(pulled_mass == Catch::Approx(base_mass).epsilon(1e-6));
}

TEST_CASE("transformed targets land in the advertised regimes") {
    // thick-i: t-target through the exponential map has exponential tails,
    // so |grad U_h| is bounded away from 0 and infinity on [10, 1000]
    const auto t_target = make_target({"student_t", 2, 1.0, 1.0, {}});
    TransformedTarget expo_pulled(t_target, IsotropicTransform::exponential(1.0));
    std::vector<double> norms;
    for (double r : {10.0, 31.6, 100.0, 316.0, 1000.0}) {
        norms.push_back(expo_pulled.grad(r * Vector2d(0.6, 0.8)).norm());
    }
    double level = 0.0;
    for (double g : norms) level += g / double(norms.size());
    for (double g : norms) {
        CHECK(g > 0.1 * level);
        CHECK(g < 10.0 * level);
    }

    // thick-ii: |x|^{1/2} through the polynomial map with beta p = 2.5 > 2 is
    // thin-tailed: |grad U_h(y)|/|y| increases along 10, 100, 1000
    const auto heavy = make_target({"gen_gaussian", 2, 0.5, 1.0, {}});
    TransformedTarget poly_pulled(heavy, IsotropicTransform::polynomial(1.0, 5));
    double prev = 0.0;
    for (double r : {10.0, 100.0, 1000.0}) {
        const double ratio = poly_pulled.grad(r * Vector2d(1, 0)).norm() / r;
        CHECK(ratio > prev);
        prev = ratio;
    }
}

TEST_CASE("map_trajectory interpolates then maps") {
    const auto poly = IsotropicTransform::polynomial(1.0, 3);
    Trajectory traj;
    traj.duration = 2.0;
    const Vector2d v(1.0, 0.0);
    traj.events.push_back({0.0, EventKind::Init, Vector2d(0.0, 0.2), v});
    traj.events.push_back({1.0, EventKind::Refresh, Vector2d(1.0, 0.2), v});
    traj.events.push_back({2.0, EventKind::Final, Vector2d(2.0, 0.2), v});

    const auto mapped = map_trajectory(poly, traj, {0.0, 0.25, 0.5, 1.0, 1.75, 2.0});
    // inside the identity region the path is unchanged
    CHECK((mapped[1].second - Vector2d(0.25, 0.2)).norm() < 1e-14);
    // event times map exactly: x(t_k) = h(y(t_k))
    CHECK((mapped[3].second - poly.apply(Vector2d(1.0, 0.2))).norm() == 0.0);
    CHECK((mapped[5].second - poly.apply(Vector2d(2.0, 0.2))).norm() == 0.0);
    // isotropy: |x(t)| = f(|y(t)|)
    for (const auto& [t, x] : mapped) {
        const Vector2d y(t, 0.2);
        CHECK(x.norm() == Catch::Approx(poly.radial(y.norm()).f).epsilon(1e-13));
    }
    CHECK_THROWS_AS(map_trajectory(poly, traj, {2.5}), NumericalError);
}
