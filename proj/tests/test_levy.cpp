#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "doctest.h"
#include "qhedge/errors.hpp"
#include "qhedge/levy.hpp"

using namespace qhedge;
using boost::math::tgamma;

namespace {

// int_a^b f(w) dw on the positive half-line by double-exponential rules.
template <class F>
double integrate(F f, double a, double b) {
    boost::math::quadrature::tanh_sinh<double> ts;
    return ts.integrate(f, a, b, 1e-13);
}

template <class F>
double integrate_to_inf(F f, double a) {
    boost::math::quadrature::exp_sinh<double> es;
    return es.integrate([&](double w) { return f(w); }, a, std::numeric_limits<double>::infinity(), 1e-13);
}

// int_0^b f(v) dv for f(v) ~ v^{p-1-alpha} at 0, after v = b s^{1/(p-alpha)} removes the singularity.
template <class F>
double integrate_from_zero(F f, double b, double p, double alpha) {
    const double k = 1.0 / (p - alpha);
    return integrate(
        [&](double s) {
            const double v = b * std::pow(s, k);
            return v > 1e-80 ? f(v) * b * k * std::pow(s, k - 1.0) : 0.0;
        },
        0.0, 1.0);
}

double cgmy_density(double C, double G, double M, double Y, double y) {
    return y > 0 ? C * std::exp(-M * y) / std::pow(y, 1 + Y) : C * std::exp(G * y) / std::pow(-y, 1 + Y);
}

double nig_density(double a, double b, double d, double y) {
    return a * d / (M_PI * std::abs(y)) * boost::math::cyl_bessel_k(1, a * std::abs(y)) * std::exp(b * y);
}

}  // namespace

TEST_CASE("CGMY density matches the closed form") {
    const auto m = LevyMeasure::cgmy(0.01, 1.1, 1.3, 1.9);
    for (double y : {-3.0, -0.5, -1e-4, 2e-5, 0.3, 4.0})
        CHECK(m.density(y) == doctest::Approx(cgmy_density(0.01, 1.1, 1.3, 1.9, y)).epsilon(1e-13));
    CHECK(m.blumenthal_getoor() == 1.9);
    CHECK(m.within_theory());
    CHECK_THROWS_AS(m.density(0.0), DomainError);
}

TEST_CASE("NIG density matches the Bessel form") {
    const auto m = LevyMeasure::nig(6.23, 0.06, 0.1027);
    for (double y : {-2.0, -0.01, 1e-5, 0.7, 3.0})
        CHECK(m.density(y) == doctest::Approx(nig_density(6.23, 0.06, 0.1027, y)).epsilon(1e-12));
    CHECK(m.blumenthal_getoor() == 1.0);
    CHECK_FALSE(m.within_theory());
    CHECK(m.small_jump_constant(Side::Positive) == doctest::Approx(0.1027 / M_PI).epsilon(1e-10));
}

TEST_CASE("invalid parameters are rejected") {
    CHECK_THROWS_AS(LevyMeasure::cgmy(0.0, 1, 1, 1.5), DomainError);
    CHECK_THROWS_AS(LevyMeasure::cgmy(1, 1, 1, 2.0), DomainError);
    CHECK_THROWS_AS(LevyMeasure::cgmy(1, -1, 1, 1.5), DomainError);
    CHECK_THROWS_AS(LevyMeasure::nig(1.0, 1.5, 0.1), DomainError);
    CHECK_THROWS_AS(LevyMeasure::nig(1.0, 0.1, 0.0), DomainError);
    CHECK_THROWS_AS(LevyMeasure::cgmy(0.01, 1.1, 1.1, 1.9).nig_params(), UnsupportedError);
}

TEST_CASE("second moment and cumulant of CGMY match Gamma-function forms") {
    const double C = 0.01, G = 1.1, M = 1.3, Y = 1.9;
    const auto m = LevyMeasure::cgmy(C, G, M, Y);
    const double m2 = C * tgamma(2 - Y) * (std::pow(M, Y - 2) + std::pow(G, Y - 2));
    CHECK(m.second_moment() == doctest::Approx(m2).epsilon(1e-10));
    for (double u : {-0.8, 0.3, 1.0}) {
        const double k = C * tgamma(-Y) *
                         (std::pow(M - u, Y) - std::pow(M, Y) + u * Y * std::pow(M, Y - 1) + std::pow(G + u, Y) -
                          std::pow(G, Y) - u * Y * std::pow(G, Y - 1));
        CHECK(m.cumulant(u) == doctest::Approx(k).epsilon(1e-9));
    }
    CHECK(m.compensator_drift() ==
          doctest::Approx(C * tgamma(1 - Y) * (std::pow(M, Y - 1) - std::pow(G, Y - 1))).epsilon(1e-12));
    CHECK(LevyMeasure::cgmy(C, 1.1, 1.1, Y).compensator_drift() == doctest::Approx(0.0));
    CHECK_THROWS_AS(m.cumulant(M + 0.1), DomainError);
}

TEST_CASE("NIG cumulant matches the square-root form") {
    const double a = 6.23, b = 0.06, d = 0.1027;
    const auto m = LevyMeasure::nig(a, b, d);
    const double s = std::sqrt(a * a - b * b);
    for (double u : {-1.0, 0.2, 2.0}) {
        const double k = d * (s - std::sqrt(a * a - (b + u) * (b + u))) - u * d * b / s;
        CHECK(m.cumulant(u) == doctest::Approx(k).epsilon(1e-9));
    }
    CHECK(m.compensator_drift() == doctest::Approx(b * d / s).epsilon(1e-12));
}

TEST_CASE("tabulated cumulatives agree with direct quadrature") {
    for (const auto& m : {LevyMeasure::cgmy(0.01, 1.1, 1.1, 1.9), LevyMeasure::cgmy(0.01, 1.1, 1.3, 1.2),
                          LevyMeasure::nig(6.23, 0.06, 0.1027)}) {
        const auto& tab = m.table();
        for (Side s : {Side::Positive, Side::Negative}) {
            auto nu = [&](double w) { return w > 0 ? m.side_density(s, w) : 0.0; };
            for (double w : {1e-3, 0.05, 0.4, 1.5}) {
                const double tail = integrate(nu, w, 1.0 + w) + integrate_to_inf(nu, 1.0 + w);
                CHECK(tab.tail_mass(s, w) == doctest::Approx(tail).epsilon(1e-8));
                for (int p : {2, 3, 4}) {
                    const double below =
                        integrate_from_zero([&](double v) { return std::pow(v, p) * nu(v); }, w, p, m.blumenthal_getoor());
                    CHECK(tab.moment_below(s, p, w) == doctest::Approx(below).epsilon(1e-8));
                }
            }
            // cell moments from differences of the cumulative keep absolute accuracy
            const double lo = 0.8, hi = 0.85;
            const double cell = integrate([&](double v) { return v * v * nu(v); }, lo, hi);
            CHECK(tab.cumulative_moment(s, 2, hi) - tab.cumulative_moment(s, 2, lo) ==
                  doctest::Approx(cell).epsilon(1e-8));
        }
    }
}

TEST_CASE("tau^4 tail of CGMY with M < 4 is flagged divergent") {
    const auto m = LevyMeasure::cgmy(0.01, 1.1, 1.1, 1.9);
    auto tau2 = [](double y) {
        const double t = std::max(std::abs(y), std::abs(std::expm1(y)));
        return t * t;
    };
    CHECK(m.tail_error_integral(1.0, tau2).divergent);
    const auto nig = LevyMeasure::nig(6.23, 0.06, 0.1027);
    const auto ti = nig.tail_error_integral(1.0, tau2);
    CHECK_FALSE(ti.divergent);
    CHECK(ti.value > 0);
}
