#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "qhedge/bench.hpp"
#include "qhedge/errors.hpp"

using namespace qhedge;

TEST_CASE("order of an exact power law") {
    std::vector<std::pair<double, double>> e;
    for (double r : {100.0, 200.0, 400.0, 800.0}) e.emplace_back(r, 3.0 / (r * r));
    const auto fit = order_fit(e);
    CHECK_FALSE(fit.oscillating);
    CHECK(fit.valid_rows == 4);
    CHECK_FALSE(fit.pairwise[0].has_value());
    for (int i = 1; i < 4; ++i) {
        REQUIRE(fit.pairwise[i].has_value());
        CHECK(*fit.pairwise[i] == doctest::Approx(2.0));
    }
    REQUIRE(fit.slope.has_value());
    CHECK(*fit.slope == doctest::Approx(2.0));
}

TEST_CASE("zero and non-finite errors are skipped") {
    const std::vector<std::pair<double, double>> e = {
        {10, -0.4}, {20, 0.0}, {40, -0.1}, {80, std::nan("")}, {160, -0.025}};
    const auto fit = order_fit(e);
    CHECK(fit.valid_rows == 3);
    CHECK_FALSE(fit.pairwise[1].has_value());
    CHECK_FALSE(fit.pairwise[3].has_value());
    REQUIRE(fit.pairwise[2].has_value());
    CHECK(*fit.pairwise[2] == doctest::Approx(1.0));  // 10 -> 40 divides the error by 4
    CHECK(*fit.pairwise[4] == doctest::Approx(1.0));
}

TEST_CASE("pairs without a meaningful order") {
    // equal resolutions, growing error, sign change
    const auto same = order_fit({{10, 0.1}, {10, 0.05}});
    CHECK_FALSE(same.pairwise[1].has_value());
    const auto grow = order_fit({{10, 0.1}, {20, 0.2}});
    CHECK_FALSE(grow.pairwise[1].has_value());
    const auto flip = order_fit({{10, 0.1}, {20, -0.01}});
    CHECK_FALSE(flip.oscillating);
    CHECK_FALSE(flip.pairwise[1].has_value());
}

TEST_CASE("alternating signs suppress the orders") {
    const auto fit = order_fit({{10, 0.1}, {20, -0.05}, {40, 0.02}, {80, -0.01}});
    CHECK(fit.oscillating);
    for (const auto& k : fit.pairwise) CHECK_FALSE(k.has_value());
    CHECK_FALSE(fit.slope.has_value());
}

TEST_CASE("least-squares order is robust to small noise") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<std::pair<double, double>> e;
    for (double r = 50; r <= 6400; r *= 2) e.emplace_back(r, std::pow(r, -1.5) * (1.0 + noise(rng)));
    const auto fit = order_fit(e);
    REQUIRE(fit.slope.has_value());
    CHECK(*fit.slope == doctest::Approx(1.5).epsilon(0.1 / 1.5));
    for (std::size_t i = 1; i < e.size(); ++i) {
        REQUIRE(fit.pairwise[i].has_value());
        CHECK(std::abs(*fit.pairwise[i] - 1.5) < 0.1);
    }
}

TEST_CASE("sweeps mark infeasible rows and are reproducible") {
    const auto model = synthetic_model(0.0, LevyMeasure::cgmy(0.3, 2.0, 3.0, 1.5), 0.5);
    SweepSpec spec;
    spec.half_width = 3.0;
    spec.horizon = 0.5;
    spec.N = 40;
    spec.NT = 40;
    spec.solve.scheme = Scheme::Explicit;
    spec.solve.payoff = call_payoff(1.0);
    const auto t1 = run_sweep(*model, spec, Axis::Time, {200, 2, 50, 100});
    REQUIRE(t1.rows.size() == 4);
    CHECK(t1.rows[0].resolution == 2);
    CHECK_FALSE(t1.rows[0].feasible);
    CHECK(t1.rows[0].note.find("CFL") != std::string::npos);
    CHECK(t1.reference == 200);
    CHECK(t1.pinned == 40);
    for (std::size_t i = 1; i < 4; ++i) CHECK(t1.rows[i].feasible);
    // first order in time
    REQUIRE(t1.rows[2].k_a.has_value());
    CHECK(*t1.rows[2].k_a > 0.5);

    const auto t2 = run_sweep(*model, spec, Axis::Time, {2, 50, 100, 200});
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(t2.rows[i].a == t1.rows[i].a);
        CHECK(t2.rows[i].x_star == t1.rows[i].x_star);
    }

    CHECK_THROWS_AS(run_sweep(*model, spec, Axis::Time, {1, 2}), CflViolation);
    CHECK_THROWS_AS(run_sweep(*model, spec, Axis::Time, {50}), ConfigError);

    std::ostringstream csv, txt;
    write_table_csv(csv, t1);
    write_table_text(txt, t1);
    const auto s = csv.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 5);
    CHECK(txt.str().find("infeasible") != std::string::npos);
}

TEST_CASE("space sweep grids keep the jump reach proportional") {
    SweepSpec spec;
    spec.half_width = 10.0;
    spec.NT = 50;
    spec.origin = 4.0;
    const auto g = sweep_grid(spec, Axis::Space, 400);
    CHECK(g.N == 400);
    CHECK(g.NT == 50);
    CHECK(g.I == 80);
    CHECK(g.dz == doctest::Approx(0.025));
    CHECK(g.origin == 4.0);
}
