#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "qhedge/solve.hpp"

namespace qhedge {

/// Stencil of node j at level n, used to draw chain transitions.
using StencilFn = std::function<NodeStencil(int n, int j)>;

/// Stencils built on demand from the model (no level cache).
StencilFn model_stencils(const JumpModel& model, const SpaceTimeGrid& grid);
/// Stencils read from level kernels; keeps the most recent level.
StencilFn kernel_stencils(KernelSource kernels);

struct PathOptions {
    int n_paths = 1000;
    std::uint64_t seed = 1;
    int start_node = 0;
    /// Chain steps per time level; 0 picks ceil(dt * max total rate) from levels 0 and NT-1.
    int substeps = 0;
    int threads = 1;
};

/// Node-index trajectories of the approximating chain, level-major.
/// Path p uses its own mt19937_64 seeded with seed_seq{seed low, seed high, p}.
struct PathBatch {
    SpaceTimeGrid grid;
    int n_paths = 0;
    int start_node = 0;
    int substeps = 1;
    std::vector<std::int32_t> nodes;  ///< (NT+1) x n_paths; frozen after exit
    std::vector<std::int32_t> exit_level;  ///< first level at which the path left -N..N, or -1

    int node(int n, int p) const { return nodes[static_cast<std::size_t>(n) * n_paths + p]; }
    bool exited(int p) const { return exit_level[p] >= 0; }
    int exit_count() const;
};

/// Number of chain substeps per level so that dt/m times the largest total rate of levels 0 and NT-1 is <= 1.
int auto_substeps(const JumpModel& model, const SpaceTimeGrid& grid, int threads = 1);

PathBatch simulate_paths(const StencilFn& stencils, const SpaceTimeGrid& grid, const PathOptions& opt);
/// Draws from full level kernels of the model (one level build per time level).
PathBatch simulate_paths(const JumpModel& model, const SpaceTimeGrid& grid, const PathOptions& opt);

enum class Strategy { True, Martingale };
std::string to_string(Strategy s);

struct BacktestConfig {
    Payoff payoff;  ///< f(z) = H(e^z)
    double max_excluded_fraction = 0.01;
    bool keep_pnl = true;
};

struct BacktestReport {
    Strategy strategy = Strategy::True;
    int n_paths = 0;
    int n_used = 0;
    int n_excluded = 0;
    double excluded_fraction = 0.0;
    int rebalancing_steps = 0;
    int substeps = 1;
    double price_used = 0.0;     ///< EUR
    double pnl_mean = 0.0;       ///< EUR
    double pnl_variance = 0.0;   ///< EUR^2
    double efficiency = 0.0;     ///< sqrt(pnl_variance), EUR
    double confidence_halfwidth = 0.0;  ///< 95% on efficiency, delta method
    std::string path_source = "approximating Markov chain";
    std::vector<double> pnl;     ///< per path, NaN for excluded paths
};

/// Replays the strategy of `r` along every path: X <- X + theta (F_{n+1} - F_n) with theta from hedge_ratio
/// at the level-n node, starting from X = x*(0, start). P&L = f(z_T) - X_T. `r` must hold pi* and vartheta
/// on every level and x* at level 0. Paths that leave the grid are excluded.
BacktestReport backtest(const PathBatch& paths, const SolveResult& r, Strategy strategy, const BacktestConfig& cfg);

/// Paired comparison of two backtests on the same path batch.
struct PairedComparison {
    int n_pairs = 0;
    double eff_true = 0.0, eff_mart = 0.0;
    /// (eff_true / eff_mart - 1) * 100, the ratio of standard deviations.
    double std_ratio_pct = 0.0, std_ratio_lo = 0.0, std_ratio_hi = 0.0;
    /// (eff_true^2 / eff_mart^2 - 1) * 100.
    double variance_reduction_pct = 0.0, variance_reduction_lo = 0.0, variance_reduction_hi = 0.0;
};

PairedComparison compare(const BacktestReport& truth, const BacktestReport& mart);

/// theta(n, j, x): futures held over [t_n, t_{n+1}).
using Policy = std::function<double(int n, int j, double x)>;

/// hedge_ratio of r with pi* multiplied by pi_scale.
Policy solved_policy(const SolveResult& r, double pi_scale = 1.0);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int n_used = 0;
    int n_excluded = 0;
};

/// Estimates E[(f(Z_T) - X_T)^2] along the paths from X_0 = x0 under `policy`.
McEstimate mc_value_check(const PathBatch& paths, const Payoff& payoff, const Policy& policy, double x0);

void write_report_json(std::ostream& os, const BacktestReport& r);
void write_comparison_json(std::ostream& os, const BacktestReport& truth, const BacktestReport& mart,
                           const PairedComparison& cmp);
/// One row per report: strategy,n_paths,n_used,excluded_fraction,steps,substeps,price,mean,variance,efficiency,ci
void write_reports_csv(std::ostream& os, const std::vector<BacktestReport>& reports);
void write_pnl_csv(std::ostream& os, const std::vector<BacktestReport>& reports);

}  // namespace qhedge
