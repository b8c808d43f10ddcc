#include "qhedge/simul.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "parallel.hpp"
#include "qhedge/errors.hpp"

namespace qhedge {

StencilFn model_stencils(const JumpModel& model, const SpaceTimeGrid& grid) {
    return [&model, grid](int n, int j) { return build_stencil(model, grid.t(n), grid.z(j), grid); };
}

StencilFn kernel_stencils(KernelSource kernels) {
    struct Cache {
        std::mutex m;
        int level = -1;
        std::shared_ptr<const LevelKernel> k;
    };
    auto cache = std::make_shared<Cache>();
    return [kernels = std::move(kernels), cache](int n, int j) {
        std::shared_ptr<const LevelKernel> k;
        {
            std::lock_guard<std::mutex> lock(cache->m);
            if (cache->level != n) {
                cache->k = std::make_shared<const LevelKernel>(kernels(n));
                cache->level = n;
            }
            k = cache->k;
        }
        return k->node(j);
    };
}

int PathBatch::exit_count() const {
    return static_cast<int>(std::count_if(exit_level.begin(), exit_level.end(), [](int e) { return e >= 0; }));
}

int auto_substeps(const JumpModel& model, const SpaceTimeGrid& grid, int threads) {
    const CflReport rep = cfl_bound(model, grid, {0, std::max(grid.NT - 1, 0)}, threads);
    if (!(rep.explicit_dt < std::numeric_limits<double>::infinity())) return 1;
    return std::max(1, static_cast<int>(std::ceil(grid.dt / rep.explicit_dt * (1.0 - 1e-12))));
}

namespace {

std::mt19937_64 path_rng(std::uint64_t seed, int p) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(p)};
    return std::mt19937_64(seq);
}

}  // namespace

PathBatch simulate_paths(const StencilFn& stencils, const SpaceTimeGrid& grid, const PathOptions& opt) {
    grid.validate();
    if (opt.n_paths <= 0) throw ConfigError("n_paths must be positive");
    if (opt.start_node < -grid.N || opt.start_node > grid.N) throw ConfigError("start node outside the grid");
    const int N = grid.N, I = grid.I, P = opt.n_paths;
    const int m = std::max(1, opt.substeps);
    const double h = grid.dt / m;

    PathBatch batch;
    batch.grid = grid;
    batch.n_paths = P;
    batch.start_node = opt.start_node;
    batch.substeps = m;
    batch.nodes.assign(static_cast<std::size_t>(grid.NT + 1) * P, opt.start_node);
    batch.exit_level.assign(P, -1);

    std::vector<std::mt19937_64> rng;
    rng.reserve(P);
    for (int p = 0; p < P; ++p) rng.push_back(path_rng(opt.seed, p));

    std::vector<int> cur(P, opt.start_node);
    // Cumulative transition probabilities of node j at the current level, index j + N; empty if not built.
    std::vector<std::vector<double>> cdf(2 * N + 1);
    std::vector<char> needed(2 * N + 1);
    for (int n = 0; n < grid.NT; ++n) {
        for (auto& c : cdf) c.clear();
        for (int s = 0; s < m; ++s) {
            std::fill(needed.begin(), needed.end(), 0);
            for (int p = 0; p < P; ++p)
                if (batch.exit_level[p] < 0 && cdf[cur[p] + N].empty()) needed[cur[p] + N] = 1;
            std::vector<int> todo;
            for (int r = 0; r < 2 * N + 1; ++r)
                if (needed[r]) todo.push_back(r - N);
            detail::parallel_for(0, static_cast<int>(todo.size()), opt.threads, [&](int k) {
                const int j = todo[k];
                NodeStencil st = stencils(n, j);
                std::vector<double> prob;
                try {
                    prob = st.probabilities(h);
                } catch (const CflViolation&) {
                    throw CflViolation("chain step violates the CFL condition at level " + std::to_string(n) +
                                           ", node " + std::to_string(j) + "; use more substeps",
                                       n, j, 1.0 / st.total_rate());
                }
                std::partial_sum(prob.begin(), prob.end(), prob.begin());
                cdf[j + N] = std::move(prob);
            });
            detail::parallel_for(0, P, opt.threads, [&](int p) {
                if (batch.exit_level[p] >= 0) return;
                const auto& c = cdf[cur[p] + N];
                const double u = std::generate_canonical<double, 53>(rng[p]) * c.back();
                const int idx = static_cast<int>(std::upper_bound(c.begin(), c.end(), u) - c.begin());
                const int l = std::min(idx, 2 * I) - I;
                const int next = cur[p] + l;
                if (next < -N || next > N) {
                    batch.exit_level[p] = n + 1;
                } else {
                    cur[p] = next;
                }
            });
        }
        std::int32_t* row = batch.nodes.data() + static_cast<std::size_t>(n + 1) * P;
        for (int p = 0; p < P; ++p) row[p] = cur[p];
    }
    return batch;
}

PathBatch simulate_paths(const JumpModel& model, const SpaceTimeGrid& grid, const PathOptions& opt) {
    PathOptions o = opt;
    if (o.substeps <= 0) o.substeps = auto_substeps(model, grid, o.threads);
    return simulate_paths(kernel_stencils(model_kernels(model, grid, o.threads)), grid, o);
}

std::string to_string(Strategy s) { return s == Strategy::True ? "True" : "Martingale"; }

namespace {

// Mean and variance by Neumaier-compensated sums over the finite entries.
struct Moments {
    int n = 0;
    double mean = 0.0, var = 0.0;
};

double compensated_sum(const std::vector<double>& v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
        const double t = s + x;
        c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    return s + c;
}

Moments moments(const std::vector<double>& x) {
    std::vector<double> v;
    v.reserve(x.size());
    for (double e : x)
        if (std::isfinite(e)) v.push_back(e);
    Moments m;
    m.n = static_cast<int>(v.size());
    if (m.n == 0) return m;
    m.mean = compensated_sum(v) / m.n;
    for (double& e : v) e = (e - m.mean) * (e - m.mean);
    m.var = m.n > 1 ? compensated_sum(v) / (m.n - 1) : 0.0;
    return m;
}

// Wealth path of one trajectory; returns NaN if the path exited.
double terminal_pnl(const PathBatch& paths, int p, const Payoff& payoff, const Policy& policy, double x0) {
    if (paths.exited(p)) return std::numeric_limits<double>::quiet_NaN();
    const auto& g = paths.grid;
    double x = x0;
    for (int n = 0; n < g.NT; ++n) {
        const int j = paths.node(n, p), k = paths.node(n + 1, p);
        if (j == k) continue;
        const double theta = policy(n, j, x);
        x += theta * (std::exp(g.z(k)) - std::exp(g.z(j)));
    }
    return payoff(g.z(paths.node(g.NT, p))) - x;
}

}  // namespace

Policy solved_policy(const SolveResult& r, double pi_scale) {
    for (int n = 0; n < r.grid.NT; ++n)
        if (!r.pi_star.has(n) || !r.vartheta.has(n))
            throw DomainError("the solve result does not hold the controls on every level");
    return [&r, pi_scale](int n, int j, double x) {
        // Nodes on the outer rim have no hedge ratio; the path is within a step of leaving the grid.
        const int jj = std::clamp(j, -r.grid.N + 1, r.grid.N - 1);
        return std::exp(-r.grid.z(j)) * (pi_scale * r.pi_star(n, jj) * x + r.vartheta(n, jj));
    };
}

BacktestReport backtest(const PathBatch& paths, const SolveResult& r, Strategy strategy, const BacktestConfig& cfg) {
    const auto& g = paths.grid;
    if (g.N != r.grid.N || g.NT != r.grid.NT) throw DomainError("path batch and solve result use different grids");
    BacktestReport rep;
    rep.strategy = strategy;
    rep.n_paths = paths.n_paths;
    rep.rebalancing_steps = g.NT;
    rep.substeps = paths.substeps;
    rep.price_used = r.x_star(0, paths.start_node);
    const Payoff payoff = cfg.payoff ? cfg.payoff : Payoff([](double) { return 0.0; });
    const Policy policy = solved_policy(r);
    std::vector<double> pnl(paths.n_paths);
    for (int p = 0; p < paths.n_paths; ++p) pnl[p] = terminal_pnl(paths, p, payoff, policy, rep.price_used);
    const Moments m = moments(pnl);
    rep.n_used = m.n;
    rep.n_excluded = paths.n_paths - m.n;
    rep.excluded_fraction = static_cast<double>(rep.n_excluded) / paths.n_paths;
    if (rep.excluded_fraction > cfg.max_excluded_fraction) {
        throw ValidationError(std::to_string(rep.n_excluded) + " of " + std::to_string(paths.n_paths) +
                              " paths left the grid (limit " + std::to_string(cfg.max_excluded_fraction * 100) +
                              "%)");
    }
    rep.pnl_mean = m.mean;
    rep.pnl_variance = m.var;
    rep.efficiency = std::sqrt(m.var);
    if (m.n > 1 && m.var > 0) {
        std::vector<double> d;
        d.reserve(m.n);
        for (double e : pnl)
            if (std::isfinite(e)) d.push_back((e - m.mean) * (e - m.mean));
        const Moments q = moments(d);
        // sd(s) ~ sd((x - mean)^2) / (2 s sqrt(n))
        rep.confidence_halfwidth = 1.959963984540054 * std::sqrt(q.var / m.n) / (2.0 * rep.efficiency);
    }
    if (cfg.keep_pnl) rep.pnl = std::move(pnl);
    return rep;
}

PairedComparison compare(const BacktestReport& truth, const BacktestReport& mart) {
    if (truth.pnl.size() != mart.pnl.size() || truth.pnl.empty())
        throw DomainError("paired comparison needs per-path P&L of the same batch");
    std::vector<double> a, b;
    for (std::size_t i = 0; i < truth.pnl.size(); ++i) {
        if (std::isfinite(truth.pnl[i]) && std::isfinite(mart.pnl[i])) {
            a.push_back(truth.pnl[i]);
            b.push_back(mart.pnl[i]);
        }
    }
    PairedComparison c;
    c.n_pairs = static_cast<int>(a.size());
    const Moments ma = moments(a), mb = moments(b);
    c.eff_true = std::sqrt(ma.var);
    c.eff_mart = std::sqrt(mb.var);
    if (c.n_pairs < 2 || !(ma.var > 0) || !(mb.var > 0)) throw DomainError("paired comparison needs positive variances");
    // Delta method on log(Va / Vb) with influence (x - m)^2 / V - 1 for each variance.
    std::vector<double> infl(c.n_pairs);
    for (int i = 0; i < c.n_pairs; ++i)
        infl[i] = (a[i] - ma.mean) * (a[i] - ma.mean) / ma.var - (b[i] - mb.mean) * (b[i] - mb.mean) / mb.var;
    const double se_log_v = std::sqrt(moments(infl).var / c.n_pairs);
    const double z = 1.959963984540054;
    const double log_v = std::log(ma.var / mb.var);
    c.variance_reduction_pct = (std::exp(log_v) - 1.0) * 100.0;
    c.variance_reduction_lo = (std::exp(log_v - z * se_log_v) - 1.0) * 100.0;
    c.variance_reduction_hi = (std::exp(log_v + z * se_log_v) - 1.0) * 100.0;
    c.std_ratio_pct = (std::exp(0.5 * log_v) - 1.0) * 100.0;
    c.std_ratio_lo = (std::exp(0.5 * (log_v - z * se_log_v)) - 1.0) * 100.0;
    c.std_ratio_hi = (std::exp(0.5 * (log_v + z * se_log_v)) - 1.0) * 100.0;
    return c;
}

McEstimate mc_value_check(const PathBatch& paths, const Payoff& payoff, const Policy& policy, double x0) {
    const Payoff f = payoff ? payoff : Payoff([](double) { return 0.0; });
    std::vector<double> sq(paths.n_paths);
    for (int p = 0; p < paths.n_paths; ++p) {
        const double e = terminal_pnl(paths, p, f, policy, x0);
        sq[p] = e * e;
    }
    const Moments m = moments(sq);
    McEstimate est;
    est.mean = m.mean;
    est.n_used = m.n;
    est.n_excluded = paths.n_paths - m.n;
    est.std_error = m.n > 0 ? std::sqrt(m.var / m.n) : 0.0;
    return est;
}

namespace {

nlohmann::json report_json(const BacktestReport& r) {
    return {{"strategy", to_string(r.strategy)},
            {"n_paths", r.n_paths},
            {"n_used", r.n_used},
            {"n_excluded", r.n_excluded},
            {"excluded_fraction", r.excluded_fraction},
            {"rebalancing_steps", r.rebalancing_steps},
            {"substeps", r.substeps},
            {"price_used_eur", r.price_used},
            {"pnl_mean_eur", r.pnl_mean},
            {"pnl_variance_eur2", r.pnl_variance},
            {"efficiency_eur", r.efficiency},
            {"confidence_halfwidth_eur", r.confidence_halfwidth},
            {"path_source", r.path_source}};
}

}  // namespace

void write_report_json(std::ostream& os, const BacktestReport& r) { os << report_json(r).dump(2) << '\n'; }

void write_comparison_json(std::ostream& os, const BacktestReport& truth, const BacktestReport& mart,
                           const PairedComparison& c) {
    nlohmann::json j;
    j["true"] = report_json(truth);
    j["martingale"] = report_json(mart);
    j["paired"] = {{"n_pairs", c.n_pairs},
                   {"std_ratio_pct", c.std_ratio_pct},
                   {"std_ratio_ci95_pct", {c.std_ratio_lo, c.std_ratio_hi}},
                   {"variance_reduction_pct", c.variance_reduction_pct},
                   {"variance_reduction_ci95_pct", {c.variance_reduction_lo, c.variance_reduction_hi}}};
    os << j.dump(2) << '\n';
}

void write_reports_csv(std::ostream& os, const std::vector<BacktestReport>& reports) {
    os << "strategy,n_paths,n_used,excluded_fraction,rebalancing_steps,substeps,price_used_eur,pnl_mean_eur,"
          "pnl_variance_eur2,efficiency_eur,confidence_halfwidth_eur\n";
    os.precision(12);
    for (const auto& r : reports) {
        os << to_string(r.strategy) << ',' << r.n_paths << ',' << r.n_used << ',' << r.excluded_fraction << ','
           << r.rebalancing_steps << ',' << r.substeps << ',' << r.price_used << ',' << r.pnl_mean << ','
           << r.pnl_variance << ',' << r.efficiency << ',' << r.confidence_halfwidth << '\n';
    }
}

void write_pnl_csv(std::ostream& os, const std::vector<BacktestReport>& reports) {
    os << "path";
    for (const auto& r : reports) os << ',' << to_string(r.strategy);
    os << '\n';
    os.precision(12);
    const std::size_t n = reports.empty() ? 0 : reports.front().pnl.size();
    for (std::size_t p = 0; p < n; ++p) {
        os << p;
        for (const auto& r : reports) os << ',' << (p < r.pnl.size() ? r.pnl[p] : std::nan(""));
        os << '\n';
    }
}

}  // namespace qhedge
