#include "qhedge/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "qhedge/errors.hpp"

namespace qhedge {

std::string to_string(Axis a) { return a == Axis::Space ? "space" : "time"; }

OrderFit order_fit(const std::vector<std::pair<double, double>>& errors) {
    OrderFit fit;
    fit.pairwise.assign(errors.size(), std::nullopt);
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (std::isfinite(errors[i].second) && errors[i].second != 0.0 && errors[i].first > 0) valid.push_back(i);
    fit.valid_rows = static_cast<int>(valid.size());
    int sign_changes = 0;
    for (std::size_t k = 1; k < valid.size(); ++k)
        if ((errors[valid[k]].second > 0) != (errors[valid[k - 1]].second > 0)) ++sign_changes;
    // Alternating signs over at least two consecutive pairs: the error is not in its asymptotic regime.
    fit.oscillating = valid.size() >= 3 && sign_changes >= 2;
    if (fit.oscillating) return fit;
    for (std::size_t k = 1; k < valid.size(); ++k) {
        const auto [r0, e0] = errors[valid[k - 1]];
        const auto [r1, e1] = errors[valid[k]];
        if (r1 == r0 || (e0 > 0) != (e1 > 0) || std::abs(e1) >= std::abs(e0)) continue;
        fit.pairwise[valid[k]] = std::log(std::abs(e0) / std::abs(e1)) / std::log(r1 / r0);
    }
    if (valid.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(valid.size());
        for (std::size_t i : valid) {
            const double x = std::log(errors[i].first), y = std::log(std::abs(errors[i].second));
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double den = n * sxx - sx * sx;
        if (den > 1e-300) fit.slope = -(n * sxy - sx * sy) / den;
    }
    return fit;
}

SpaceTimeGrid sweep_grid(const SweepSpec& spec, Axis axis, int resolution) {
    const int N = axis == Axis::Space ? resolution : spec.N;
    const int NT = axis == Axis::Time ? resolution : spec.NT;
    const int I = std::max(spec.kappa + 1, static_cast<int>(std::lround(spec.I_ratio * N)));
    return SpaceTimeGrid::make(spec.half_width, N, spec.horizon, NT, I, spec.kappa, spec.origin);
}

ConvergenceTable run_sweep(const JumpModel& model, const SweepSpec& spec, Axis axis, std::vector<int> resolutions) {
    if (resolutions.size() < 2) throw ConfigError("a sweep needs at least two resolutions");
    std::sort(resolutions.begin(), resolutions.end());
    ConvergenceTable table;
    table.axis = axis;
    table.pinned = axis == Axis::Space ? spec.NT : spec.N;
    table.reference = resolutions.back();

    SolveConfig cfg = spec.solve;
    cfg.keep = KeepLevels::Ends;
    for (int res : resolutions) {
        SweepRow row;
        row.resolution = res;
        const SpaceTimeGrid g = sweep_grid(spec, axis, res);
        const int probe = static_cast<int>(std::lround(spec.probe_offset / g.dz));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const SolveResult r = solve(model, g, cfg);
            row.a = r.a(0, probe);
            row.b = r.b(0, probe);
            row.x_star = r.x_star(0, probe);
        } catch (const CflViolation& e) {
            row.feasible = false;
            row.note = e.what();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        table.rows.push_back(row);
    }
    const SweepRow& ref = table.rows.back();
    if (!ref.feasible) throw CflViolation("reference run is CFL-infeasible: " + ref.note, -1, 0, 0.0);
    std::vector<std::pair<double, double>> ea, eb, ex;
    for (auto& row : table.rows) {
        const bool is_ref = &row == &table.rows.back();
        if (row.feasible && !is_ref) {
            row.err_a = row.a - ref.a;
            row.err_b = row.b - ref.b;
            row.err_x = row.x_star - ref.x_star;
        }
        const double nan = std::nan("");
        const bool use = row.feasible && !is_ref;
        ea.emplace_back(row.resolution, use ? row.err_a : nan);
        eb.emplace_back(row.resolution, use ? row.err_b : nan);
        ex.emplace_back(row.resolution, use ? row.err_x : nan);
    }
    table.fit_a = order_fit(ea);
    table.fit_b = order_fit(eb);
    table.fit_x = order_fit(ex);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        table.rows[i].k_a = table.fit_a.pairwise[i];
        table.rows[i].k_b = table.fit_b.pairwise[i];
        table.rows[i].k_x = table.fit_x.pairwise[i];
    }
    return table;
}

namespace {

std::string opt(const std::optional<double>& v, const char* fmt_spec = "{:.4g}") {
    return v ? fmt::format(fmt::runtime(fmt_spec), *v) : std::string();
}

}  // namespace

void write_table_csv(std::ostream& os, const ConvergenceTable& t) {
    os << "axis,resolution,feasible,a,err_a,k_a,b,err_b,k_b,x_star,err_x,k_x,seconds\n";
    for (const auto& r : t.rows) {
        const bool ref = r.resolution == t.reference && &r == &t.rows.back();
        os << fmt::format("{},{},{},{:.10g},{},{},{:.10g},{},{},{:.10g},{},{},{:.3f}\n", to_string(t.axis),
                          r.resolution, r.feasible ? 1 : 0, r.a, ref || !r.feasible ? "" : fmt::format("{:.6g}", r.err_a),
                          opt(r.k_a), r.b, ref || !r.feasible ? "" : fmt::format("{:.6g}", r.err_b), opt(r.k_b),
                          r.x_star, ref || !r.feasible ? "" : fmt::format("{:.6g}", r.err_x), opt(r.k_x), r.seconds);
    }
}

void write_table_text(std::ostream& os, const ConvergenceTable& t) {
    const bool space = t.axis == Axis::Space;
    os << fmt::format("{} convergence ({} = {}, reference {} = {})\n", space ? "Space" : "Time",
                      space ? "NT" : "N", t.pinned, space ? "N" : "NT", t.reference);
    auto line = [&](const std::string& label, auto&& cell, bool always = false) {
        os << fmt::format("{:<10}", label);
        for (const auto& r : t.rows)
            os << fmt::format("{:>12}", r.feasible || always ? cell(r) : std::string("infeasible"));
        os << '\n';
    };
    const auto& last = t.rows.back();
    auto err = [&](const SweepRow& r, double e) { return &r == &last ? std::string("-") : fmt::format("{:.5f}", e); };
    auto k = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("-"); };
    line(space ? "N" : "NT", [](const SweepRow& r) { return std::to_string(r.resolution); }, true);
    line("a", [](const SweepRow& r) { return fmt::format("{:.5f}", r.a); });
    line("error", [&](const SweepRow& r) { return err(r, r.err_a); });
    line("k_a", [&](const SweepRow& r) { return k(r.k_a); });
    line("b", [](const SweepRow& r) { return fmt::format("{:.4f}", r.b); });
    line("error", [&](const SweepRow& r) { return err(r, r.err_b); });
    line("k_b", [&](const SweepRow& r) { return k(r.k_b); });
    line("x*", [](const SweepRow& r) { return fmt::format("{:.4f}", r.x_star); });
    line("error", [&](const SweepRow& r) { return err(r, r.err_x); });
    line("k_x", [&](const SweepRow& r) { return k(r.k_x); });
    if (t.fit_a.oscillating) os << "a: error signs oscillate, orders suppressed\n";
    if (t.fit_b.oscillating) os << "b: error signs oscillate, orders suppressed\n";
    if (t.fit_a.slope) os << fmt::format("least-squares order a: {:.3f}\n", *t.fit_a.slope);
    if (t.fit_b.slope) os << fmt::format("least-squares order b: {:.3f}\n", *t.fit_b.slope);
}

}  // namespace qhedge
