#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "qhedge/disc.hpp"
#include "qhedge/errors.hpp"

using namespace qhedge;

namespace {

double integrate(const std::function<double(double)>& f, double a, double b) {
    boost::math::quadrature::tanh_sinh<double> ts;
    return ts.integrate(f, a, b, 1e-13);
}

// int_0^b v^2 g(v) dv with g(v) ~ v^{-1-alpha}, substituting v = b s^{1/(2-alpha)}.
double second_moment_from_zero(const std::function<double(double)>& g, double b, double alpha) {
    const double k = 1.0 / (2.0 - alpha);
    return integrate(
        [&](double s) {
            const double v = b * std::pow(s, k);
            return v > 1e-80 ? v * v * g(v) * b * k * std::pow(s, k - 1.0) : 0.0;
        },
        0.0, 1.0);
}

}  // namespace

TEST_CASE("grid construction and validation") {
    const auto g = SpaceTimeGrid::make(10.0, 200, 7.0, 100);
    CHECK(g.dz == doctest::Approx(0.05));
    CHECK(g.dt == doctest::Approx(0.07));
    CHECK(g.I == 40);
    CHECK(g.nodes() == 401);
    CHECK(g.z(-200) == doctest::Approx(-10.0));
    CHECK(g.horizon() == doctest::Approx(7.0));
    CHECK(g.domain_margin(0.1) == doctest::Approx(160 * 0.05 - 0.7));
    CHECK_THROWS_AS(SpaceTimeGrid::make(10.0, 10, 1.0, 10, 10), ConfigError);
    CHECK_THROWS_AS(SpaceTimeGrid::make(10.0, 10, 1.0, 10, 3, 3), ConfigError);
    CHECK_THROWS_AS(SpaceTimeGrid::make(10.0, 10, 1.0, 10, 3, -1), ConfigError);
    CHECK_THROWS_AS(SpaceTimeGrid::make(10.0, 10, 0.0, 10), ConfigError);
    CHECK_THROWS_AS(SpaceTimeGrid::make(-1.0, 10, 1.0, 10), ConfigError);
}

TEST_CASE("additive stencil weights equal nu-integrals over the cells") {
    const double C = 0.3, G = 2.0, M = 3.5, Y = 1.6;
    const auto meas = LevyMeasure::cgmy(C, G, M, Y);
    const double mu0 = 0.05;
    const auto model = synthetic_model(mu0, meas, 1.0);
    const auto grid = SpaceTimeGrid::make(4.0, 37, 1.0, 50, 20, 2);
    const double dz = grid.dz;
    const auto s = build_stencil(*model, 0.0, 0.0, grid);

    const double edge0 = (grid.kappa + 0.5) * dz;
    auto nu = [&](double y) { return y != 0 ? meas.density(y) : 0.0; };
    const double D = second_moment_from_zero(nu, edge0, Y) +
                     second_moment_from_zero([&](double v) { return nu(-v); }, edge0, Y);
    CHECK(s.D == doctest::Approx(D).epsilon(1e-8));

    double flux = 0.0;
    for (int l = -grid.I; l <= grid.I; ++l) {
        const double w = s.omega[l + grid.I];
        if (std::abs(l) <= grid.kappa) {
            CHECK(w == 0.0);
            continue;
        }
        const double lo = (std::abs(l) - 0.5) * dz, hi = (std::abs(l) + 0.5) * dz;
        const int sgn = l > 0 ? 1 : -1;
        // cells centred below y = 1 are weighted by gamma^2 / (l dz)^2, the rest carry plain nu-mass
        const double expect = std::abs(l) * dz < 1.0
                                  ? integrate([&](double v) { return v * v * nu(sgn * v); }, lo, hi) / ((l * dz) * (l * dz))
                                  : integrate([&](double v) { return nu(sgn * v); }, lo, hi);
        CHECK(w == doctest::Approx(expect).epsilon(1e-7));
        CHECK(w >= 0.0);
        flux += w * l * dz;
    }
    CHECK(s.mu_hat == doctest::Approx(mu0 - flux).epsilon(1e-12));
    CHECK(s.chi + s.ups == doctest::Approx(s.D / (dz * dz) + (s.upwind ? std::abs(s.mu_hat) / dz : 0.0)));
}

TEST_CASE("symmetric measure without drift gives a symmetric stencil") {
    const auto model = synthetic_model(0.0, LevyMeasure::cgmy(0.2, 1.5, 1.5, 1.4), 1.0);
    const auto grid = SpaceTimeGrid::make(5.0, 50, 1.0, 20, 25, 1);
    const auto s = build_stencil(*model, 0.0, 0.3, grid);
    CHECK(s.chi == doctest::Approx(s.ups).epsilon(1e-10));
    for (int l = 1; l <= grid.I; ++l)
        CHECK(s.omega[l + grid.I] == doctest::Approx(s.omega[-l + grid.I]).epsilon(1e-10));
}

TEST_CASE("transition probabilities and the CFL limit") {
    const auto model = synthetic_model(0.1, LevyMeasure::cgmy(0.2, 1.5, 2.5, 1.7), 1.0);
    const auto grid = SpaceTimeGrid::make(5.0, 50, 1.0, 20, 25, 1);
    const auto s = build_stencil(*model, 0.0, 0.0, grid);
    const double dt_max = 1.0 / s.total_rate();
    const auto p = s.probabilities(0.9 * dt_max);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    for (double x : p) CHECK(x >= 0.0);
    CHECK_THROWS_AS(s.probabilities(1.1 * dt_max), CflViolation);

    const auto rep = cfl_bound(*model, grid, {0});
    CHECK(rep.explicit_dt == doctest::Approx(dt_max).epsilon(1e-10));
    CHECK(rep.imex_dt == doctest::Approx(1.0 / s.jump_rate()).epsilon(1e-10));
    CHECK(rep.imex_dt > rep.explicit_dt);
    REQUIRE(rep.apriori_dt.has_value());
    CHECK(*rep.apriori_dt > 0.0);
}

TEST_CASE("generator reproduces the drift of linear functions") {
    const auto model = synthetic_model(0.3, LevyMeasure::cgmy(0.2, 1.5, 2.5, 1.7), 1.0);
    const auto grid = SpaceTimeGrid::make(5.0, 50, 1.0, 20, 25, 1);
    const auto s = build_stencil(*model, 0.0, 0.0, grid);
    if (!s.upwind) {
        const double g = generator_apply(s, [&](int k) { return k * grid.dz; }, 0);
        CHECK(g == doctest::Approx(0.3).epsilon(1e-10));
    }
    const double c = generator_apply(s, [](int) { return 1.0; }, 0);
    CHECK(c == 0.0);
}

TEST_CASE("electricity lattice stencils agree with direct construction") {
    const ElectricityModel m(ForwardCurve::example_week(), 0.1, 0.01, LevyMeasure::cgmy(0.01, 1.1, 1.1, 1.9), false);
    const auto grid = SpaceTimeGrid::make(10.0, 100, 7.0, 50, 20, 1, m.reference_z());
    const double t = grid.t(10);
    const auto level = build_level(m, grid, t);
    for (int j : {-80, -3, 0, 5, 79}) {
        const auto direct = build_stencil(m, t, grid.z(j), grid);
        const auto lat = level.node(j);
        CHECK(lat.D == doctest::Approx(direct.D).epsilon(1e-9));
        CHECK(lat.mu_hat == doctest::Approx(direct.mu_hat).epsilon(1e-7));
        for (int l = -grid.I; l <= grid.I; ++l) {
            CHECK(lat.omega[l + grid.I] == doctest::Approx(direct.omega[l + grid.I]).epsilon(1e-9));
            CHECK(direct.omega[l + grid.I] >= 0.0);
        }
        CHECK(level.total_rate(j) == doctest::Approx(direct.total_rate()).epsilon(1e-9));
    }
}

TEST_CASE("stencil CSV has one row per node") {
    const auto model = synthetic_model(0.0, LevyMeasure::cgmy(0.2, 1.5, 1.5, 1.4), 1.0);
    const auto grid = SpaceTimeGrid::make(5.0, 10, 1.0, 4, 3, 1);
    std::ostringstream os;
    write_stencil_csv(os, build_level(*model, grid, 0.0), 0, grid);
    const std::string out = os.str();
    CHECK(std::count(out.begin(), out.end(), '\n') == 1 + grid.nodes());
    CHECK(out.rfind("level,node,z,D,mu_hat,chi,ups", 0) == 0);
}
