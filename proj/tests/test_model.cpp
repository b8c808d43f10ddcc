#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "qhedge/errors.hpp"
#include "qhedge/model.hpp"

using namespace qhedge;

namespace {

const LevyMeasure& cgmy198() {
    static const auto m = LevyMeasure::cgmy(0.01, 1.1, 1.1, 1.98);
    return m;
}

ElectricityModel week_model(bool martingale = false, const LevyMeasure& m = cgmy198()) {
    return ElectricityModel(ForwardCurve::example_week(), 0.1, 0.01, m, martingale);
}

// log((1/d) int psi(s) exp(e^{-cs} A) ds), integrated piece by piece.
double phi_oracle(const ForwardCurve& curve, double c, double A) {
    boost::math::quadrature::tanh_sinh<double> ts;
    double sum = 0.0;
    for (const auto& p : curve.pieces())
        sum += p.price * ts.integrate([&](double s) { return std::exp(std::exp(-c * s) * A); }, p.s_start, p.s_end);
    return std::log(sum / curve.delivery_length());
}

// int_0^b f(v) dv for f(v) ~ v^{1-alpha} at 0, after v = b s^{1/(2-alpha)} removes the singularity.
template <class F>
double integrate_from_zero(F f, double b, double alpha) {
    boost::math::quadrature::tanh_sinh<double> ts;
    const double k = 1.0 / (2.0 - alpha);
    return ts.integrate(
        [&](double s) {
            const double v = b * std::pow(s, k);
            return v > 1e-80 ? f(v) * b * k * std::pow(s, k - 1.0) : 0.0;
        },
        0.0, 1.0, 1e-12);
}

// e^g - 1 - g without cancellation for small g.
double exp_excess(double g) {
    if (std::abs(g) > 1e-2) return std::expm1(g) - g;
    double term = g * g / 2, sum = 0.0;
    for (int k = 3; k < 10; ++k) {
        sum += term;
        term *= g / k;
    }
    return sum;
}

// int (e^{gamma(y)} - 1 - gamma(y)) nu(dy) over the real line. Below eps the integrand is replaced by its
// leading term (g0 y)^2 / 2 times the small-jump asymptote of nu.
double jump_term(const std::function<double(double)>& gamma, double g0, const LevyMeasure& nu) {
    boost::math::quadrature::tanh_sinh<double> ts;
    const double eps = 1e-8, alpha = nu.blumenthal_getoor();
    double total = 0.0;
    for (int sgn : {-1, 1}) {
        const Side side = sgn > 0 ? Side::Positive : Side::Negative;
        auto f = [&](double w) { return exp_excess(gamma(sgn * w)) * nu.density(sgn * w); };
        total += 0.5 * g0 * g0 * nu.small_jump_constant(side) * std::pow(eps, 2 - alpha) / (2 - alpha);
        total += integrate_from_zero([&](double v) { return f(eps + v); }, 1.0 - eps, alpha);
        total += ts.integrate(f, 1.0, 80.0, 1e-12);  // the tail beyond 80 is below 1e-15 for these measures
    }
    return total;
}

// gamma(t, z, y) = Phi(A + y e^{ct}) - Phi(A) with z = Phi(A); a Taylor expansion avoids the cancellation
// for tiny y.
double electricity_jump_term(const ElectricityModel& m, double t, double z) {
    const double A = m.phi_inverse(z, t), e = std::exp(m.mean_reversion() * t);
    const double phiA = m.phi(A, t);
    const auto d = m.phi_all(A, t);
    auto gamma = [&](double y) {
        const double x = y * e;
        if (std::abs(x) < 1e-4) return d.d1 * x + d.d2 * x * x / 2 + d.d3 * x * x * x / 6;
        return m.phi(A + x, t) - phiA;
    };
    return jump_term(gamma, d.d1 * e, m.measure());
}

}  // namespace

TEST_CASE("forward curve loading and checks") {
    const auto week = ForwardCurve::example_week();
    CHECK(week.delivery_start() == 7.0);
    CHECK(week.delivery_length() == 7.0);
    CHECK(week.average_price() == doctest::Approx(540.0 / 7.0));

    const auto csv = ForwardCurve::load_csv(std::string(QHEDGE_SOURCE_DIR) + "/data/forward_curve_week.csv");
    REQUIRE(csv.pieces().size() == week.pieces().size());
    for (std::size_t i = 0; i < csv.pieces().size(); ++i) {
        CHECK(csv.pieces()[i].s_start == week.pieces()[i].s_start);
        CHECK(csv.pieces()[i].price == week.pieces()[i].price);
    }
    CHECK_THROWS_AS(ForwardCurve({}), ConfigError);
    CHECK_THROWS_AS(ForwardCurve({{7, 8, 80}, {8.5, 9, 80}}), ConfigError);
    CHECK_THROWS_AS(ForwardCurve({{7, 8, -1}}), ConfigError);
    CHECK_THROWS_AS(ForwardCurve({{0, 8, 10}}), ConfigError);
    CHECK_THROWS_AS(ForwardCurve::load_csv("/nonexistent/curve.csv"), ConfigError);
}

TEST_CASE("Phi matches direct integration of the curve") {
    const auto m = week_model();
    CHECK(m.phi(0.0) == doctest::Approx(std::log(540.0 / 7.0)).epsilon(1e-14));
    CHECK(m.reference_z() == doctest::Approx(std::log(540.0 / 7.0)).epsilon(1e-14));
    for (double A : {-20.0, -3.0, 0.5, 4.0, 15.0})
        CHECK(m.phi(A) == doctest::Approx(phi_oracle(m.curve(), 0.1, A)).epsilon(1e-12));
}

TEST_CASE("Phi derivatives agree with finite differences") {
    const auto m = week_model();
    for (double A : {-5.0, 0.0, 2.0, 10.0}) {
        const double h = 1e-4;
        const double d1 = (m.phi(A + h) - m.phi(A - h)) / (2 * h);
        const double d2 = (m.phi(A + h) - 2 * m.phi(A) + m.phi(A - h)) / (h * h);
        CHECK(m.phi_derivative(A) == doctest::Approx(d1).epsilon(1e-8));
        CHECK(m.phi_second(A) == doctest::Approx(d2).epsilon(1e-4));
        const auto all = m.phi_all(A);
        CHECK(all.d1 == doctest::Approx(m.phi_derivative(A)));
        const double d3 = (m.phi_second(A + h) - m.phi_second(A - h)) / (2 * h);
        CHECK(all.d3 == doctest::Approx(d3).epsilon(1e-6));
        // Phi' lies between the smallest and largest l(s) = e^{-cs}
        CHECK(all.d1 > std::exp(-0.1 * 14.0));
        CHECK(all.d1 < std::exp(-0.1 * 7.0));
    }
}

TEST_CASE("phi_inverse round-trips") {
    const auto m = week_model();
    for (double A : {-40.0, -2.0, 0.0, 1.5, 30.0}) CHECK(m.phi_inverse(m.phi(A)) == doctest::Approx(A).epsilon(1e-8));
    CHECK_THROWS_AS(m.phi_inverse(std::nan("")), RangeError);
}

TEST_CASE("electricity jump size and its inverse") {
    const auto m = week_model();
    const double z = m.reference_z();
    for (double t : {0.0, 3.5}) {
        CHECK(m.gamma(t, z, 0.0) == doctest::Approx(0.0).scale(1.0));
        for (double y : {-2.0, -0.1, 0.05, 1.0, 3.0}) {
            const double g = m.gamma(t, z, y);
            CHECK(m.gamma_inverse(t, z, g) == doctest::Approx(y).epsilon(1e-8));
            const double h = 1e-5;
            CHECK(m.gamma_y(t, z, y) ==
                  doctest::Approx((m.gamma(t, z, y + h) - m.gamma(t, z, y - h)) / (2 * h)).epsilon(1e-7));
            CHECK(std::abs(g) <= m.tau(y));
            CHECK(g * y > 0);
        }
    }
}

TEST_CASE("mu_tilde equals mu plus the jump integral") {
    const auto m = week_model();
    for (double z : {m.reference_z() - 0.5, m.reference_z(), m.reference_z() + 1.0}) {
        const double t = 2.0;
        CHECK(m.mu_tilde(t, z) == doctest::Approx(m.mu(t, z) + electricity_jump_term(m, t, z)).epsilon(1e-6));
    }
}

TEST_CASE("martingale mode removes the drift of the futures price") {
    for (const auto& meas : {cgmy198(), LevyMeasure::cgmy(0.01, 1.1, 1.1, 1.2), LevyMeasure::nig(6.23, 0.06, 0.1027)}) {
        const auto m = week_model(true, meas);
        for (double t : {0.0, 3.0, 6.9})
            for (double dz : {-1.0, 0.0, 0.7}) {
                const double z = m.reference_z() + dz;
                CHECK(std::abs(m.mu_tilde(t, z)) < 1e-8);
            }
    }
    const auto plain = week_model(false);
    CHECK(plain.mu_tilde(0.0, plain.reference_z()) > 1e-3);
}

TEST_CASE("martingale drift vanishes at t = 0 and is smooth") {
    const auto m = week_model(true);
    CHECK(m.martingale_drift(0.0, 10.0) == 0.0);
    const double h = 1e-4, t = 2.0, s = 10.0;
    const double u = std::exp(-0.1 * (s - t));
    const double deriv = (m.martingale_drift(t + h, s) - m.martingale_drift(t - h, s)) / (2 * h);
    CHECK(deriv == doctest::Approx(-(m.zeta() * u + cgmy198().cumulant(u))).epsilon(1e-6));
    CHECK_THROWS_AS(m.martingale_drift(-1.0, s), DomainError);
}

TEST_CASE("synthetic model") {
    const auto meas = LevyMeasure::cgmy(0.5, 2.0, 3.0, 1.5);
    const auto m = synthetic_model(0.2, meas, 1.0);
    CHECK(m->mu_tilde(0.3, 0.1) == doctest::Approx(0.2 + meas.cumulant(1.0)).epsilon(1e-10));
    CHECK(m->mu_tilde(0.3, 0.1) == doctest::Approx(0.2 + jump_term([](double y) { return y; }, 1.0, meas)).epsilon(1e-7));
    CHECK(m->gamma(0, 0, 0.37) == 0.37);
    CHECK_THROWS_AS(synthetic_model(0.0, meas, 0.0), ConfigError);
}
