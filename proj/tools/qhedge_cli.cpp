// qhedge: quadratic hedging of electricity futures options under jump models.
//
// Exit codes: 0 ok, 1 other error, 2 configuration, 3 validation, 4 CFL, 5 numerical degeneracy.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "qhedge/bench.hpp"
#include "qhedge/config.hpp"
#include "qhedge/errors.hpp"
#include "qhedge/simul.hpp"

using namespace qhedge;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Validation: return 3;
        case ErrorKind::Cfl: return 4;
        case ErrorKind::Degenerate: return 5;
        default: return 1;
    }
}

void log(const std::string& msg) { std::cerr << "[qhedge] " << msg << '\n'; }

struct Context {
    RunConfig cfg;
    ModelPtr model;
    SpaceTimeGrid grid;
    std::string canonical;
    std::string hash;
};

struct Flags {
    std::string config;
    std::string out;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    std::string format;
};

Context load(const Flags& f) {
    Context c;
    c.cfg = load_config(f.config);
    apply_env_overrides(c.cfg);
    if (!f.out.empty()) c.cfg.out_dir = f.out;
    if (f.threads > 0) c.cfg.threads = f.threads;
    if (f.seed) c.cfg.seed = *f.seed;
    if (!f.format.empty()) {
        if (f.format != "csv" && f.format != "json" && f.format != "both")
            throw ConfigError("--format must be csv, json or both");
        c.cfg.format = f.format;
    }
    c.model = make_model(c.cfg);
    c.grid = make_grid(c.cfg, *c.model);
    c.canonical = canonical_text(c.cfg, *c.model, c.grid);
    c.hash = config_hash(c.canonical);
    fs::create_directories(c.cfg.out_dir);
    log(fmt::format("config {} (hash {})", f.config, c.hash.substr(0, 16)));
    log(fmt::format("grid N={} dz={:.6g} NT={} dt={:.6g} I={} kappa={}", c.grid.N, c.grid.dz, c.grid.NT, c.grid.dt,
                    c.grid.I, c.grid.kappa));
    return c;
}

bool want_csv(const Context& c) { return c.cfg.format != "json"; }
bool want_json(const Context& c) { return c.cfg.format != "csv"; }

std::string out_path(const Context& c, const std::string& name) { return (fs::path(c.cfg.out_dir) / name).string(); }

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    return os;
}

// Artifact header for CSV files: units, hash and the resolved config as comment lines.
void csv_header(std::ostream& os, const Context& c) {
    os << "# qhedge artifact; money in EUR, time in days\n# config_hash = " << c.hash << '\n';
    std::istringstream is(c.canonical);
    for (std::string line; std::getline(is, line);) os << "# " << line << '\n';
}

json json_header(const Context& c) {
    return {{"config_hash", c.hash}, {"config", c.canonical}, {"units", {{"money", "EUR"}, {"time", "days"}}}};
}

void run_validation_gate(const Context& c) {
    const ValidationReport rep = validate(c.cfg, *c.model, c.grid);
    std::ostringstream os;
    write_validation(os, rep);
    std::istringstream is(os.str());
    for (std::string line; std::getline(is, line);) log(line);
    for (const auto& ch : rep.checks) {
        if (ch.hard && ch.status == CheckStatus::Fail) {
            if (ch.name == "CFL margin") {
                const bool expl = c.cfg.scheme == Scheme::Explicit;
                throw CflViolation(ch.detail, 0, expl ? rep.cfl.explicit_node : rep.cfl.imex_node,
                                   expl ? rep.cfl.explicit_dt : rep.cfl.imex_dt);
            }
            throw ValidationError(ch.name + ": " + ch.detail);
        }
    }
}

std::optional<SolveResult> read_cache(const Context& c, const std::string& tag) {
    const std::string key = c.hash + ":" + tag;
    const std::string path = out_path(c, "surfaces_" + tag + "_" + c.hash.substr(0, 16) + ".bin");
    auto r = read_surfaces_binary(path, key);
    if (r) log("loaded cached surfaces " + path);
    return r;
}

SolveResult solve_true(const Context& c, KeepLevels keep, bool use_cache) {
    SolveConfig sc = make_solve_config(c.cfg, *c.model, c.grid);
    sc.keep = keep;
    const std::string tag = keep == KeepLevels::Ends ? "ends" : "full";
    if (use_cache) {
        if (auto r = read_cache(c, tag)) return *r;
        if (keep == KeepLevels::Ends)
            if (auto r = read_cache(c, "full")) return *r;
    }
    log("solving " + c.model->name());
    SolveResult r = solve(*c.model, c.grid, sc);
    write_surfaces_binary(out_path(c, "surfaces_" + tag + "_" + c.hash.substr(0, 16) + ".bin"), r, c.hash + ":" + tag);
    return r;
}

int cmd_validate(const Flags& f) {
    const Context c = load(f);
    const ValidationReport rep = validate(c.cfg, *c.model, c.grid);
    write_validation(std::cout, rep);
    if (want_json(c)) {
        json j = json_header(c);
        for (const auto& ch : rep.checks)
            j["checks"].push_back({{"name", ch.name}, {"status", to_string(ch.status)}, {"hard", ch.hard},
                                   {"detail", ch.detail}});
        j["cfl"] = {{"explicit_dt", rep.cfl.explicit_dt}, {"imex_dt", rep.cfl.imex_dt},
                    {"conservative_dt", rep.cfl.conservative_dt}, {"mu_bar", rep.cfl.mu_bar}};
        if (rep.cfl.apriori_dt) j["cfl"]["apriori_dt"] = *rep.cfl.apriori_dt;
        open_out(out_path(c, "validation.json")) << j.dump(2) << '\n';
    }
    for (const auto& ch : rep.checks)
        if (ch.hard && ch.status == CheckStatus::Fail) return ch.name == "CFL margin" ? 4 : 3;
    return 0;
}

int cmd_solve(const Flags& f, bool keep_all) {
    const Context c = load(f);
    run_validation_gate(c);
    const SolveResult r = solve_true(c, keep_all ? KeepLevels::All : KeepLevels::Ends, false);
    const int j0 = 0;
    if (want_csv(c)) {
        auto os = open_out(out_path(c, "surfaces.csv"));
        csv_header(os, c);
        write_surfaces_csv(os, r);
    }
    json j = json_header(c);
    j["atm"] = {{"z", c.grid.z(j0)}, {"a", r.a(0, j0)}, {"b", r.b(0, j0)}, {"abs_b", std::abs(r.b(0, j0))},
                {"c", r.c(0, j0)}, {"x_star", r.x_star(0, j0)}};
    const auto& d = r.diagnostics;
    j["diagnostics"] = {{"scheme", d.scheme},           {"node_updates", d.node_updates},
                        {"clamp_count", d.clamp_count}, {"min_G", d.min_G},
                        {"max_dt_rate", d.max_dt_rate}, {"mu_bar", d.mu_bar},
                        {"boundary_influence_atm", d.boundary_influence[j0 + c.grid.N]}};
    if (want_json(c)) open_out(out_path(c, "solve.json")) << j.dump(2) << '\n';
    std::cout << fmt::format("a = {:.6f}  b = {:.6f}  c = {:.6f}  x* = {:.6f} EUR at t = 0, z = {:.6f}\n",
                             r.a(0, j0), r.b(0, j0), r.c(0, j0), r.x_star(0, j0), c.grid.z(j0));
    return 0;
}

int cmd_price(const Flags& f, double t, std::optional<double> z, std::optional<double> F) {
    const Context c = load(f);
    run_validation_gate(c);
    const bool at_start = std::abs(t) < 1e-12;
    const SolveResult r = solve_true(c, at_start ? KeepLevels::Ends : KeepLevels::All, true);
    const double zz = z ? *z : F ? std::log(*F) : c.grid.origin;
    const int n = static_cast<int>(std::lround(t / c.grid.dt));
    const int j = static_cast<int>(std::lround((zz - c.grid.origin) / c.grid.dz));
    if (n < 0 || n > c.grid.NT || j < -c.grid.N || j > c.grid.N) throw DomainError("(t, z) outside the grid");
    if (!r.a.has(n)) throw DomainError("level not stored");
    const double bi = r.diagnostics.boundary_influence.empty() ? std::nan("")
                                                               : r.diagnostics.boundary_influence[j + c.grid.N];
    std::cout << fmt::format(
        "t = {:.6g} (level {}), z = {:.6f} (node {}), F = {:.4f} EUR\n"
        "x* = {:.6f} EUR  a = {:.6f}  b = {:.6f}  c = {:.6f}\nboundary influence (1+|z|)/margin = {:.4g}\n",
        c.grid.t(n), n, c.grid.z(j), j, std::exp(c.grid.z(j)), r.x_star(n, j), r.a(n, j), r.b(n, j), r.c(n, j), bi);
    return 0;
}

int cmd_backtest(const Flags& f, const std::string& which, bool dump_pnl) {
    const Context c = load(f);
    run_validation_gate(c);
    const bool do_true = which == "true" || which == "both";
    const bool do_mart = which == "martingale" || which == "both";
    if (!do_true && !do_mart) throw ConfigError("--strategy must be true, martingale or both");
    SolveConfig sc = make_solve_config(c.cfg, *c.model, c.grid);
    sc.keep = KeepLevels::Controls;
    std::vector<BacktestReport> reports;

    PathOptions po;
    po.n_paths = c.cfg.n_paths;
    po.seed = c.cfg.seed;
    po.substeps = c.cfg.substeps;
    po.threads = c.cfg.threads;
    log(fmt::format("simulating {} chain paths (seed {})", po.n_paths, po.seed));
    const PathBatch paths = simulate_paths(*c.model, c.grid, po);
    log(fmt::format("{} substeps per level, {} paths left the grid", paths.substeps, paths.exit_count()));
    BacktestConfig bc;
    bc.payoff = sc.payoff;

    if (do_true) {
        log("solving the true model");
        const SolveResult r = solve(*c.model, c.grid, sc);
        reports.push_back(backtest(paths, r, Strategy::True, bc));
    }
    if (do_mart) {
        log("solving the martingale model (a = 1)");
        const ModelPtr mm = make_model(c.cfg, true);
        SolveConfig ms = sc;
        ms.assume_unit_a = true;
        const SolveResult r = solve(*mm, c.grid, ms);
        reports.push_back(backtest(paths, r, Strategy::Martingale, bc));
    }
    for (const auto& r : reports)
        std::cout << fmt::format("{:<10} price {:.4f} EUR  efficiency {:.4f} EUR (+-{:.4f})  excluded {:.2f}%\n",
                                 to_string(r.strategy), r.price_used, r.efficiency, r.confidence_halfwidth,
                                 100 * r.excluded_fraction);
    std::optional<PairedComparison> cmp;
    if (reports.size() == 2) {
        cmp = compare(reports[0], reports[1]);
        std::cout << fmt::format(
            "std ratio change {:.2f}% [{:.2f}, {:.2f}]  variance reduction {:.2f}% [{:.2f}, {:.2f}]\n",
            cmp->std_ratio_pct, cmp->std_ratio_lo, cmp->std_ratio_hi, cmp->variance_reduction_pct,
            cmp->variance_reduction_lo, cmp->variance_reduction_hi);
    }
    if (want_json(c)) {
        std::ostringstream os;
        if (cmp) write_comparison_json(os, reports[0], reports[1], *cmp);
        else write_report_json(os, reports[0]);
        json j = json_header(c);
        j["report"] = json::parse(os.str());
        open_out(out_path(c, "backtest.json")) << j.dump(2) << '\n';
    }
    if (want_csv(c)) {
        auto os = open_out(out_path(c, "backtest.csv"));
        csv_header(os, c);
        write_reports_csv(os, reports);
    }
    if (dump_pnl) {
        auto os = open_out(out_path(c, "pnl.csv"));
        csv_header(os, c);
        write_pnl_csv(os, reports);
    }
    return 0;
}

int cmd_sweep(const Flags& f, const std::string& axis_s, const std::vector<int>& res) {
    const Context c = load(f);
    const Axis axis = axis_s == "space" ? Axis::Space : axis_s == "time" ? Axis::Time
                                                                          : throw ConfigError("--axis must be space or time");
    SweepSpec spec;
    spec.half_width = c.cfg.half_width;
    spec.horizon = c.model->horizon();
    spec.origin = c.grid.origin;
    spec.N = c.grid.N;
    spec.NT = c.grid.NT;
    spec.I_ratio = static_cast<double>(c.grid.I) / c.grid.N;
    spec.kappa = c.grid.kappa;
    spec.solve = make_solve_config(c.cfg, *c.model, c.grid);
    const ConvergenceTable t = run_sweep(*c.model, spec, axis, res);
    write_table_text(std::cout, t);
    if (want_csv(c)) {
        auto os = open_out(out_path(c, "sweep_" + axis_s + ".csv"));
        csv_header(os, c);
        write_table_csv(os, t);
    }
    auto os = open_out(out_path(c, "sweep_" + axis_s + ".txt"));
    write_table_text(os, t);
    return 0;
}

int cmd_dump_stencil(const Flags& f, int level) {
    const Context c = load(f);
    if (level < 0 || level > c.grid.NT) throw ConfigError("--level outside 0..NT");
    const LevelKernel k = build_level(*c.model, c.grid, c.grid.t(level), c.cfg.threads);
    auto os = open_out(out_path(c, fmt::format("stencil_level{}.csv", level)));
    csv_header(os, c);
    write_stencil_csv(os, k, level, c.grid);
    log("wrote " + out_path(c, fmt::format("stencil_level{}.csv", level)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quadratic hedging of electricity futures options under jump models"};
    app.require_subcommand(1);
    Flags flags;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "INI run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", flags.out, "output directory (overrides the config)");
        sub->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", flags.seed, "random seed override");
        sub->add_option("--format", flags.format, "artifact format: csv, json or both");
    };

    auto* solve_cmd = app.add_subcommand("solve", "solve a, b, c and the price surface");
    add_common(solve_cmd);
    bool keep_all = false;
    solve_cmd->add_flag("--all-levels", keep_all, "write every time level to surfaces.csv");

    auto* price_cmd = app.add_subcommand("price", "print x* at (t, z) with the boundary-influence diagnostic");
    add_common(price_cmd);
    double t = 0.0;
    std::optional<double> z, F;
    price_cmd->add_option("--t", t, "time in days");
    auto* zopt = price_cmd->add_option("--z", z, "log futures price");
    price_cmd->add_option("--F", F, "futures price in EUR")->excludes(zopt);

    auto* bt_cmd = app.add_subcommand("backtest", "hedging backtest on chain paths");
    add_common(bt_cmd);
    std::string strategy = "both";
    bool dump_pnl = false;
    bt_cmd->add_option("--strategy", strategy, "true, martingale or both");
    bt_cmd->add_flag("--dump-pnl", dump_pnl, "write per-path P&L to pnl.csv");

    auto* sweep_cmd = app.add_subcommand("sweep", "convergence table against the finest resolution");
    add_common(sweep_cmd);
    std::string axis = "space";
    std::vector<int> res;
    sweep_cmd->add_option("--axis", axis, "space or time");
    sweep_cmd->add_option("--resolutions", res, "N (space) or NT (time) values; the largest is the reference")
        ->delimiter(',')
        ->required();

    auto* dump_cmd = app.add_subcommand("dump-stencil", "write the stencils of one time level as CSV");
    add_common(dump_cmd);
    int level = 0;
    dump_cmd->add_option("--level", level, "time level index");

    auto* val_cmd = app.add_subcommand("validate", "run the assumption and CFL checks");
    add_common(val_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*solve_cmd) return cmd_solve(flags, keep_all);
        if (*price_cmd) return cmd_price(flags, t, z, F);
        if (*bt_cmd) return cmd_backtest(flags, strategy, dump_pnl);
        if (*sweep_cmd) return cmd_sweep(flags, axis, res);
        if (*dump_cmd) return cmd_dump_stencil(flags, level);
        if (*val_cmd) return cmd_validate(flags);
    } catch (const CflViolation& e) {
        log(fmt::format("CFL failure: {} (level {}, node {}, suggested dt {:.6g})", e.what(), e.level, e.node,
                        e.suggested_dt));
        return exit_code(e.kind());
    } catch (const Error& e) {
        log(std::string("error: ") + e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        log(std::string("error: ") + e.what());
        return 1;
    }
    return 1;
}
