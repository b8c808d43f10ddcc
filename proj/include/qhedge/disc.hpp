#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "qhedge/model.hpp"

namespace qhedge {

/// Uniform grid z_j = origin + j dz, -N <= j <= N, and t_n = n dt, 0 <= n <= NT.
struct SpaceTimeGrid {
    double dz = 0.0;
    int N = 0;
    double dt = 0.0;
    int NT = 0;
    int I = 0;      ///< jump stencil half-width in nodes
    int kappa = 1;  ///< small-jump cutoff in nodes
    double origin = 0.0;

    /// Grid on [origin - half_width, origin + half_width] with I = N / 5 unless given.
    static SpaceTimeGrid make(double half_width, int N, double horizon, int NT, int I = -1, int kappa = 1,
                              double origin = 0.0);

    double z(int j) const { return origin + j * dz; }
    double t(int n) const { return n * dt; }
    double horizon() const { return NT * dt; }
    int nodes() const { return 2 * N + 1; }
    /// Throws ConfigError unless 0 <= kappa < I < N, dz > 0, dt > 0.
    void validate() const;
    /// N dz - I dz - mu_bar T; the domain margin must be positive.
    double domain_margin(double mu_bar) const { return (N - I) * dz - mu_bar * horizon(); }
};

/// Discrete generator at one node: rates to z + l dz for 0 < |l| <= I.
struct NodeStencil {
    int I = 0, kappa = 0;
    double t = 0.0, z = 0.0;
    std::vector<double> y;       ///< y_i for i = -I..I at index i + I
    std::vector<double> omega;   ///< jump weights at index l + I, zero for |l| <= kappa
    int zeta_pos = 0;            ///< first i > 0 with y_i >= 1 (I + 1 if none)
    int zeta_neg = 0;            ///< first i > 0 with y_{-i} <= -1 (I + 1 if none)
    double D = 0.0;              ///< int over Omega_0 of gamma^2 nu
    double drift = 0.0;          ///< mu (direct models) or the driver drift
    double small_jump_drift = 0;  ///< int over Omega_0 of (gamma - g0 y) nu, driver models only
    double mu_hat = 0.0;
    double chi = 0.0, ups = 0.0;
    bool upwind = false;

    double rate(int l) const;
    double total_rate() const;
    /// sum of omega over |l| > kappa
    double jump_rate() const;
    /// Transition probabilities at index l + I (stay at index I). Throws CflViolation if stay < 0.
    std::vector<double> probabilities(double dt) const;
};

/// Stencil rates of one time level for all nodes -N..N, stored densely.
struct LevelKernel {
    int N = 0, I = 0, kappa = 0;
    double t = 0.0;
    std::vector<double> omega;  ///< (2N+1) x (2I+1), row j + N, column l + I
    std::vector<double> chi, ups, D, mu_hat, jump_sum;

    const double* omega_row(int j) const { return omega.data() + static_cast<std::size_t>(j + N) * (2 * I + 1); }
    double* omega_row(int j) { return omega.data() + static_cast<std::size_t>(j + N) * (2 * I + 1); }
    double rate(int j, int l) const;
    double total_rate(int j) const;
    /// Copies node j into a NodeStencil (without integration points).
    NodeStencil node(int j) const;
    /// Kernel with all weights zero, for hand-set test chains.
    static LevelKernel zeros(int N, int I, int kappa, double t = 0.0);
};

/// Integration points y_i, i = -I..I, at index i + I; from the model's half-lattice inverse.
std::vector<double> integration_points(const JumpModel& model, double t, double z, const SpaceTimeGrid& grid);

/// Stencil at an arbitrary (t, z).
NodeStencil build_stencil(const JumpModel& model, double t, double z, const SpaceTimeGrid& grid);
/// Stencil at lattice node j; uses the model's level cache if prepare_level was called for t.
NodeStencil build_lattice_stencil(const JumpModel& model, const SpaceTimeGrid& grid, double t, int j);

/// Builds all stencils of level t for nodes jmin..jmax (default all), using `threads` workers.
LevelKernel build_level(const JumpModel& model, const SpaceTimeGrid& grid, double t, int threads = 1);

/// Generator applied to values on nodes j - I..j + I; `values(k)` returns phi at node k.
template <class F>
double generator_apply(const NodeStencil& s, F&& values, int j) {
    const double v0 = values(j);
    double acc = s.chi * (values(j + 1) - v0) + s.ups * (values(j - 1) - v0);
    for (int l = -s.I; l <= s.I; ++l) {
        const double w = s.omega[l + s.I];
        if (w != 0.0) acc += w * (values(j + l) - v0);
    }
    return acc;
}

struct CflReport {
    double explicit_dt = 0.0;       ///< 1 / max total rate: largest dt with non-negative probabilities
    int explicit_node = 0;
    double explicit_level_t = 0.0;
    double conservative_dt = 0.0;   ///< 1 / max(D/dz^2 + |mu_hat|/dz + sum |i| omega_i + sum omega_i)
    double imex_dt = 0.0;           ///< 1 / max sum of jump weights
    int imex_node = 0;
    double mu_bar = 0.0;            ///< largest |mu_hat| over the scanned levels
    std::optional<double> apriori_dt;  ///< dz^alpha / (C1 + C2 dz^(alpha-1)) when the constants exist
    double C1 = 0.0, C2 = 0.0;
};

/// Scans the given levels (all nodes) and nodes; levels are indices into the grid's time axis.
CflReport cfl_bound(const JumpModel& model, const SpaceTimeGrid& grid, const std::vector<int>& levels,
                    int threads = 1);

/// A-priori constants of the time-step bound; nullopt when alpha is outside (1, 2) or constants are missing.
std::optional<std::pair<double, double>> apriori_constants(const JumpModel& model, int kappa, double mu_bar);

/// CSV rows: level,node,z,D,mu_hat,chi,ups,omega_-I..omega_I
void write_stencil_csv(std::ostream& os, const LevelKernel& k, int level, const SpaceTimeGrid& grid,
                       bool header = true);

}  // namespace qhedge
