#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "qhedge/config.hpp"
#include "qhedge/errors.hpp"

using namespace qhedge;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

const char* small_synthetic = R"(
[model]
kind = synthetic
measure = cgmy
C = 0.3
G = 2.0
M = 5.0
Y = 1.5
mu0 = 0.0
horizon = 0.5

[grid]
half_width = 3
N = 60
NT = 20
I = 12

[solve]
scheme = imex
payoff = call
strike = 1
)";

std::string write_temp(const std::string& name, const std::string& text) {
    const auto dir = fs::temp_directory_path() / "qhedge_config_test";
    fs::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p.string();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(QHEDGE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("parsing fills every section") {
    const auto c = parse(small_synthetic);
    CHECK(c.kind == "synthetic");
    CHECK(c.Y == 1.5);
    CHECK(c.N == 60);
    CHECK_FALSE(c.dz.has_value());
    CHECK(c.NT == 20);
    CHECK(c.I == 12);
    CHECK(c.scheme == Scheme::Imex);
    CHECK(c.strike == 1.0);
    CHECK_FALSE(c.moneyness.has_value());
}

TEST_CASE("malformed configurations are rejected") {
    CHECK_THROWS_AS(parse("[model]\nkind = other\n[grid]\nN = 10\nNT = 10\n[solve]\nstrike = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[modle]\nkind = synthetic\n"), ConfigError);
    CHECK_THROWS_AS(parse("[model]\nkindd = synthetic\n"), ConfigError);
    CHECK_THROWS_AS(parse("[grid]\nN = 10\ndz = 0.1\nNT = 10\n[solve]\nstrike = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[grid]\nN = 10\n[solve]\nstrike = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[grid]\nN = 10\nNT = 10\n[solve]\nstrike = 1\nmoneyness = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[grid]\nN = ten\nNT = 10\n[solve]\nstrike = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[grid]\nN = 10\nNT = 10\n[solve]\nstrike = 1\nscheme = rk4\n"), ConfigError);
    CHECK_THROWS_AS(parse("[grid]\nN = 10\nNT = 10\n[solve]\nstrike = 1\nmollify = maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse("[grid]\nN = 10\nNT = 10\n[solve]\nstrike = 1\n[output]\nformat = xml\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/run.ini"), ConfigError);
    // payoff none needs no strike
    CHECK_NOTHROW(parse("[grid]\nN = 10\nNT = 10\n[solve]\npayoff = none\n"));
}

TEST_CASE("grid from spacings rounds the count up") {
    auto c = parse("[model]\nkind = synthetic\nhorizon = 1\n[grid]\nhalf_width = 1\ndz = 0.03\ndt = 0.3\n"
                   "[solve]\nstrike = 1\n");
    const auto m = make_model(c);
    const auto g = make_grid(c, *m);
    CHECK(g.N == 34);
    CHECK(g.dz == doctest::Approx(1.0 / 34));
    CHECK(g.NT == 4);
    CHECK(g.I == 34 / 5);
}

TEST_CASE("electricity strike from moneyness and hashing") {
    auto c = load_config(std::string(QHEDGE_SOURCE_DIR) + "/configs/cgmy_y1.98.ini");
    const auto m = make_model(c);
    CHECK(m->reference_z() == doctest::Approx(std::log(540.0 / 7.0)));
    CHECK(resolved_strike(c, *m) == doctest::Approx(540.0 / 7.0));
    const auto g = make_grid(c, *m);
    CHECK(g.origin == doctest::Approx(std::log(540.0 / 7.0)));
    CHECK(g.horizon() == doctest::Approx(7.0));

    const auto text = canonical_text(c, *m, g);
    const auto h = config_hash(text);
    CHECK(h.size() == 64);
    CHECK(h == config_hash(canonical_text(c, *m, g)));
    c.seed += 1;
    CHECK(config_hash(canonical_text(c, *m, g)) != h);
    // SHA-256 of the empty string
    CHECK(config_hash("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("synthetic compensation makes e^Z a martingale") {
    auto c = parse(small_synthetic);
    c.compensate = true;
    const auto m = make_model(c);
    CHECK(std::abs(m->mu_tilde(0.0, 0.0)) < 1e-12);
}

TEST_CASE("environment overrides") {
    auto c = parse(small_synthetic);
    ::setenv("QHEDGE_OUT_DIR", "/tmp/qhedge_env_out", 1);
    ::setenv("QHEDGE_THREADS", "3", 1);
    apply_env_overrides(c);
    CHECK(c.out_dir == "/tmp/qhedge_env_out");
    CHECK(c.threads == 3);
    ::setenv("QHEDGE_THREADS", "zero", 1);
    CHECK_THROWS_AS(apply_env_overrides(c), ConfigError);
    ::unsetenv("QHEDGE_OUT_DIR");
    ::unsetenv("QHEDGE_THREADS");
}

TEST_CASE("shipped configurations parse and resolve") {
    for (const auto& e : fs::directory_iterator(std::string(QHEDGE_SOURCE_DIR) + "/configs")) {
        if (e.path().extension() != ".ini") continue;
        CAPTURE(e.path().string());
        const auto c = load_config(e.path().string());
        const auto m = make_model(c);
        const auto g = make_grid(c, *m);
        CHECK_NOTHROW(make_solve_config(c, *m, g));
    }
}

TEST_CASE("validation flags out-of-theory inputs and blocks on hard failures") {
    auto c = parse(small_synthetic);
    auto m = make_model(c);
    auto g = make_grid(c, *m);
    auto rep = validate(c, *m, g);
    CHECK_FALSE(rep.blocked());
    for (const auto& ch : rep.checks) CHECK(ch.status == CheckStatus::Pass);

    // explicit scheme at this step size breaks the CFL condition
    c.scheme = Scheme::Explicit;
    rep = validate(c, *m, g);
    CHECK(rep.blocked());

    // with M < 4 the bound tau(y) >= e^y - 1 has a divergent fourth moment
    c.scheme = Scheme::Imex;
    c.M = 3.0;
    m = make_model(c);
    rep = validate(c, *m, g);
    for (const auto& ch : rep.checks)
        if (ch.name == "tau^4 tail integrability") CHECK(ch.status == CheckStatus::OutOfTheory);
    CHECK_FALSE(rep.blocked());

    // NIG has index 1, outside the covered range; reported, not blocked
    auto e = load_config(std::string(QHEDGE_SOURCE_DIR) + "/configs/nig.ini");
    e.N = 200;
    e.NT = 100;
    auto em = make_model(e);
    auto eg = make_grid(e, *em);
    rep = validate(e, *em, eg);
    bool index_flag = false;
    for (const auto& ch : rep.checks)
        if (ch.name == "index range") index_flag = ch.status == CheckStatus::OutOfTheory;
    CHECK(index_flag);
    CHECK_FALSE(rep.blocked());
    std::ostringstream os;
    write_validation(os, rep);
    CHECK(os.str().find("out-of-theory") != std::string::npos);
}

TEST_CASE("command-line exit codes") {
    const auto good = write_temp("good.ini", small_synthetic);
    std::string bad_cfl = small_synthetic;
    bad_cfl.replace(bad_cfl.find("scheme = imex"), 13, "scheme = explicit");
    const auto cfl = write_temp("cfl.ini", bad_cfl);
    const auto broken = write_temp("broken.ini", "[model]\nkind = nonsense\n");
    const auto out = (fs::temp_directory_path() / "qhedge_config_test" / "out").string();

    CHECK(run_cli("validate --config " + good + " --out " + out) == 0);
    CHECK(run_cli("solve --config " + good + " --out " + out) == 0);
    CHECK(fs::exists(fs::path(out) / "surfaces.csv"));
    CHECK(run_cli("price --config " + good + " --out " + out + " --z 0.1") == 0);
    CHECK(run_cli("solve --config " + cfl + " --out " + out) == 4);
    CHECK(run_cli("validate --config " + cfl + " --out " + out) == 4);
    CHECK(run_cli("solve --config " + broken + " --out " + out) == 2);
    CHECK(run_cli("solve --config /nonexistent.ini") == 2);
    CHECK(run_cli("frobnicate") == 2);
}
