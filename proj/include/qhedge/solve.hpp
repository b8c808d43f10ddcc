#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qhedge/disc.hpp"

namespace qhedge {

enum class Scheme { Explicit, Imex };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

using Payoff = std::function<double(double z)>;
using BoundaryFn = std::function<double(double t, double z)>;

/// f(z) = (e^z - K)^+.
Payoff call_payoff(double strike);
/// f(z) = (K - e^z)^+.
Payoff put_payoff(double strike);
/// Payoff averaged over [z - w/2, z + w/2] with a 16-point Gauss rule.
Payoff mollified(Payoff f, double width);

/// Which levels are stored: everything, only t_0 and T, or only the controls pi* and vartheta on every level.
enum class KeepLevels { All, Ends, Controls };

struct SolveConfig {
    Scheme scheme = Scheme::Imex;
    double pi_bar = 1e6;
    Payoff payoff;           ///< empty means f = 0
    BoundaryFn boundary_a;   ///< default 1
    BoundaryFn boundary_b;   ///< default -2 f(z)
    BoundaryFn boundary_c;   ///< default f(z)^2
    /// Martingale strategy: a is taken to be 1 and pi* = 0; only b and c are solved.
    bool assume_unit_a = false;
    KeepLevels keep = KeepLevels::All;
    int threads = 1;
    /// IMEX negative-a clamps tolerated, as a fraction of node updates.
    double max_clamp_fraction = 1e-3;
};

/// Values on nodes -N..N for a subset of time levels.
class Surface {
public:
    Surface() = default;
    Surface(int N, int NT, const std::vector<int>& levels);

    int N() const { return N_; }
    int NT() const { return static_cast<int>(slot_.size()) - 1; }
    bool has(int n) const { return n >= 0 && n < static_cast<int>(slot_.size()) && slot_[n] >= 0; }
    const std::vector<int>& levels() const { return levels_; }
    double operator()(int n, int j) const { return data_[index(n, j)]; }
    double& at(int n, int j) { return data_[index(n, j)]; }
    std::span<const double> row(int n) const;
    std::span<double> row(int n);
    bool empty() const { return data_.empty(); }

private:
    std::size_t index(int n, int j) const;
    int N_ = 0;
    std::vector<int> slot_, levels_;
    std::vector<double> data_;
};

struct SolveDiagnostics {
    std::string scheme;
    long long node_updates = 0;
    long long clamp_count = 0;
    double min_G = 0.0;            ///< smallest G a over interior updates
    double max_dt_rate = 0.0;      ///< largest dt * (rate sum used by the CFL of the scheme)
    double mu_bar = 0.0;           ///< largest |mu_hat| seen
    /// (1 + |z_j|) / ((N - I) dz - mu_bar T) at level 0, per node.
    std::vector<double> boundary_influence;
};

struct SolveResult {
    SpaceTimeGrid grid;
    Surface a, b, c;
    Surface pi_star;   ///< optimal fraction, levels 0..NT-1 (zero at NT)
    Surface vartheta;  ///< additive hedge amount -Qb / (2 Ga), levels 0..NT-1
    Surface x_star;
    SolveDiagnostics diagnostics;
};

/// Supplies the generator of level n (time t_n).
using KernelSource = std::function<LevelKernel(int n)>;

KernelSource model_kernels(const JumpModel& model, const SpaceTimeGrid& grid, int threads = 1);

/// clip(-Q/G, -pi_bar, pi_bar); DegenerateNode if G <= 0.
double optimal_pi(double Q_hat, double G_hat, double pi_bar);

/// Backward pass computing a, b, c, pi*, vartheta and x* together.
SolveResult solve(const JumpModel& model, const SpaceTimeGrid& grid, const SolveConfig& cfg);
SolveResult solve_kernels(const KernelSource& kernels, const SpaceTimeGrid& grid, const SolveConfig& cfg);

/// Pure-investment problem only: a and pi*.
SolveResult solve_a(const KernelSource& kernels, const SpaceTimeGrid& grid, const SolveConfig& cfg);
/// Linear recursion b^n = E[b^{n+1}(1 + pi* R)] for a given pi* surface (all levels).
Surface solve_b(const KernelSource& kernels, const SpaceTimeGrid& grid, const SolveConfig& cfg,
                const Surface& pi_star);
/// c^n = E[c^{n+1}] - dt (Qb)^2 / (4 Ga) from given a and b surfaces (all levels).
Surface solve_c(const KernelSource& kernels, const SpaceTimeGrid& grid, const SolveConfig& cfg, const Surface& a,
                const Surface& b);

/// x* = -b / (2a) on every stored level; DegenerateNode if a <= 0.
Surface price(const Surface& a, const Surface& b);

/// theta = e^{-z_j} (pi*(n, j) x + vartheta(n, j)), the number of futures held over [t_n, t_{n+1}).
double hedge_ratio(const SolveResult& r, int n, int j, double x);

/// Value function a x^2 + b x + c at (n, j).
double value_at(const SolveResult& r, int n, int j, double x);

/// CSV rows: level,node,z,a,b,c,pi_star,x_star
void write_surfaces_csv(std::ostream& os, const SolveResult& r);
/// Compact binary cache tagged with a key (the config hash).
void write_surfaces_binary(const std::string& path, const SolveResult& r, const std::string& key);
/// Reads a cache written by write_surfaces_binary; nullopt if missing or the key differs.
std::optional<SolveResult> read_surfaces_binary(const std::string& path, const std::string& key);

}  // namespace qhedge
