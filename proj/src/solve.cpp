#include "qhedge/solve.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "parallel.hpp"
#include "qhedge/errors.hpp"

namespace qhedge {

std::string to_string(Scheme s) { return s == Scheme::Explicit ? "explicit" : "imex"; }

Scheme scheme_from_string(const std::string& s) {
    if (s == "explicit") return Scheme::Explicit;
    if (s == "imex") return Scheme::Imex;
    throw ConfigError("unknown scheme '" + s + "' (expected explicit or imex)");
}

Payoff call_payoff(double strike) {
    return [strike](double z) { return std::max(std::exp(z) - strike, 0.0); };
}

Payoff put_payoff(double strike) {
    return [strike](double z) { return std::max(strike - std::exp(z), 0.0); };
}

Payoff mollified(Payoff f, double width) {
    if (!(width > 0)) return f;
    return [f = std::move(f), width](double z) {
        // 16-point Gauss-Legendre on [-1/2, 1/2]
        static const double x[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                                    0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                                    0.9445750230732326, 0.9894009349916499};
        static const double w[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                                    0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                                    0.0622535239386479, 0.0271524594117541};
        double s = 0.0;
        for (int k = 0; k < 8; ++k) s += w[k] * (f(z + 0.5 * width * x[k]) + f(z - 0.5 * width * x[k]));
        return 0.5 * s;
    };
}

// ---------------------------------------------------------------------------

Surface::Surface(int N, int NT, const std::vector<int>& levels) : N_(N), slot_(NT + 1, -1), levels_(levels) {
    std::sort(levels_.begin(), levels_.end());
    levels_.erase(std::unique(levels_.begin(), levels_.end()), levels_.end());
    for (std::size_t k = 0; k < levels_.size(); ++k) {
        if (levels_[k] < 0 || levels_[k] > NT) throw DomainError("surface level out of range");
        slot_[levels_[k]] = static_cast<int>(k);
    }
    data_.assign(levels_.size() * (2 * N + 1), 0.0);
}

std::size_t Surface::index(int n, int j) const {
    if (!has(n)) throw DomainError("surface level " + std::to_string(n) + " is not stored");
    if (j < -N_ || j > N_) throw DomainError("surface node out of range");
    return static_cast<std::size_t>(slot_[n]) * (2 * N_ + 1) + (j + N_);
}

std::span<const double> Surface::row(int n) const { return {data_.data() + index(n, -N_), std::size_t(2 * N_ + 1)}; }
std::span<double> Surface::row(int n) { return {data_.data() + index(n, -N_), std::size_t(2 * N_ + 1)}; }

// ---------------------------------------------------------------------------

double optimal_pi(double Q_hat, double G_hat, double pi_bar) {
    if (!(G_hat > 0)) throw DegenerateNode("G <= 0 in the control minimization", -1, 0);
    return std::clamp(-Q_hat / G_hat, -pi_bar, pi_bar);
}

KernelSource model_kernels(const JumpModel& model, const SpaceTimeGrid& grid, int threads) {
    return [&model, grid, threads](int n) { return build_level(model, grid, grid.t(n), threads); };
}

namespace {

struct Boundaries {
    BoundaryFn a, b, c;
    Payoff f;
};

Boundaries resolve_boundaries(const SolveConfig& cfg) {
    Boundaries bd;
    bd.f = cfg.payoff ? cfg.payoff : Payoff([](double) { return 0.0; });
    bd.a = cfg.boundary_a ? cfg.boundary_a : BoundaryFn([](double, double) { return 1.0; });
    const Payoff f = bd.f;
    bd.b = cfg.boundary_b ? cfg.boundary_b : BoundaryFn([f](double, double z) { return -2.0 * f(z); });
    bd.c = cfg.boundary_c ? cfg.boundary_c : BoundaryFn([f](double, double z) {
        const double v = f(z);
        return v * v;
    });
    return bd;
}

std::vector<int> kept_levels(const SpaceTimeGrid& g, KeepLevels keep, bool controls = false) {
    std::vector<int> lv;
    if (keep == KeepLevels::All || (controls && keep == KeepLevels::Controls)) {
        for (int n = 0; n <= g.NT; ++n) lv.push_back(n);
    } else {
        lv = {0, g.NT};
    }
    return lv;
}

// Next-level values on the extended index range -(N+I)..N+I; outside -N..N from the boundary.
struct Extended {
    int N = 0, I = 0;
    std::vector<double> v;
    void fill(const std::vector<double>& interior, const BoundaryFn& bnd, const SpaceTimeGrid& g, double t) {
        N = g.N;
        I = g.I;
        v.resize(2 * (N + I) + 1);
        for (int j = -(N + I); j <= N + I; ++j)
            v[j + N + I] = (j < -N || j > N) ? bnd(t, g.z(j)) : interior[j + N];
    }
    double operator[](int j) const { return v[j + N + I]; }
};

// Growth factors e^{l dz} - 1 and their squares for l = -I..I.
struct Growth {
    std::vector<double> R, R2;
    Growth(int I, double dz) : R(2 * I + 1), R2(2 * I + 1) {
        for (int l = -I; l <= I; ++l) {
            R[l + I] = std::expm1(l * dz);
            R2[l + I] = R[l + I] * R[l + I];
        }
    }
};

struct NodeSums {
    double Ea = 0, Eb = 0, Ec = 0;  // explicit parts: x_j + dt sum_l r_l (x_{j+l} - x_j)
    double Qa = 0, Ga = 0, Qb = 0;
    double rate_total = 0, jump_total = 0;
};

// Sums for node j. `full` includes chi/ups in the explicit expectation (explicit scheme).
NodeSums node_sums(const LevelKernel& k, int j, const Extended& a, const Extended* b, const Extended* c,
                   const Growth& g, double dt, bool full) {
    NodeSums s;
    const double* om = k.omega_row(j);
    const int I = k.I;
    const double a0 = a[j], b0 = b ? (*b)[j] : 0.0, c0 = c ? (*c)[j] : 0.0;
    double da = 0, db = 0, dc = 0;
    for (int l = -I; l <= I; ++l) {
        double w = om[l + I];
        if (w == 0.0 && std::abs(l) != 1) continue;
        s.jump_total += w;
        double r = w;
        if (l == 1) r += k.chi[j + k.N];
        if (l == -1) r += k.ups[j + k.N];
        if (r == 0.0) continue;
        const double e = full ? r : w;
        const double al = a[j + l];
        da += e * (al - a0);
        s.Qa += r * al * g.R[l + I];
        s.Ga += r * al * g.R2[l + I];
        if (b) {
            const double bl = (*b)[j + l];
            db += e * (bl - b0);
            s.Qb += r * bl * g.R[l + I];
        }
        if (c) dc += e * ((*c)[j + l] - c0);
        s.rate_total += r;
    }
    s.Ea = a0 + dt * da;
    s.Eb = b0 + dt * db;
    s.Ec = c0 + dt * dc;
    return s;
}

void check_cfl(const LevelKernel& k, int n, int j, const NodeSums& s, double dt, Scheme scheme) {
    const double rate = scheme == Scheme::Explicit ? s.rate_total : s.jump_total;
    if (1.0 - dt * rate < -1e-14) {
        throw CflViolation("time step violates the " + to_string(scheme) + " CFL condition at level " +
                               std::to_string(n) + ", node " + std::to_string(j),
                           n, j, 1.0 / rate);
    }
    (void)k;
}

// Solves (1 + dt(chi+ups)) u_j - dt chi u_{j+1} - dt ups u_{j-1} = rhs_j for `nrhs` columns of B
// (column-major, length 2N+1 each). Neighbours outside -N..N come from `outer` (values at j = -N-1 and N+1).
void imex_solve(const LevelKernel& k, double dt, std::vector<double>& B, int nrhs,
                const std::vector<std::pair<double, double>>& outer) {
    const int N = k.N, n = 2 * N + 1;
    std::vector<double> dl(n - 1), d(n), du(n - 1);
    for (int j = -N; j <= N; ++j) {
        const int r = j + N;
        d[r] = 1.0 + dt * (k.chi[r] + k.ups[r]);
        if (r > 0) dl[r - 1] = -dt * k.ups[r];
        if (r < n - 1) du[r] = -dt * k.chi[r];
    }
    for (int col = 0; col < nrhs; ++col) {
        B[static_cast<std::size_t>(col) * n] += dt * k.ups[0] * outer[col].first;
        B[static_cast<std::size_t>(col) * n + n - 1] += dt * k.chi[n - 1] * outer[col].second;
    }
    const lapack_int info = LAPACKE_dgtsv(LAPACK_COL_MAJOR, n, nrhs, dl.data(), d.data(), du.data(), B.data(), n);
    if (info != 0) throw DegenerateNode("tridiagonal solve failed (info " + std::to_string(info) + ")", -1, 0);
}

void finish_diagnostics(SolveResult& r, const SpaceTimeGrid& g, double mu_bar) {
    auto& d = r.diagnostics;
    d.mu_bar = mu_bar;
    d.boundary_influence.resize(2 * g.N + 1);
    const double margin = g.domain_margin(mu_bar);
    for (int j = -g.N; j <= g.N; ++j)
        d.boundary_influence[j + g.N] =
            margin > 0 ? (1.0 + std::abs(g.z(j) - g.origin)) / margin : std::numeric_limits<double>::infinity();
}

}  // namespace

SolveResult solve_kernels(const KernelSource& kernels, const SpaceTimeGrid& grid, const SolveConfig& cfg) {
    grid.validate();
    const Boundaries bd = resolve_boundaries(cfg);
    const int N = grid.N, n_nodes = 2 * N + 1;
    const double dt = grid.dt;
    const bool unit_a = cfg.assume_unit_a;

    SolveResult res;
    res.grid = grid;
    const auto lv = kept_levels(grid, cfg.keep);
    res.a = Surface(N, grid.NT, lv);
    res.b = Surface(N, grid.NT, lv);
    res.c = Surface(N, grid.NT, lv);
    const auto clv = kept_levels(grid, cfg.keep, true);
    res.pi_star = Surface(N, grid.NT, clv);
    res.vartheta = Surface(N, grid.NT, clv);
    res.diagnostics.scheme = to_string(cfg.scheme);
    res.diagnostics.min_G = std::numeric_limits<double>::infinity();

    std::vector<double> a(n_nodes), b(n_nodes), c(n_nodes);
    for (int j = -N; j <= N; ++j) {
        const double f = bd.f(grid.z(j));
        a[j + N] = 1.0;
        b[j + N] = -2.0 * f;
        c[j + N] = f * f;
    }
    auto store = [&](int n) {
        if (!res.a.has(n)) return;
        std::copy(a.begin(), a.end(), res.a.row(n).begin());
        std::copy(b.begin(), b.end(), res.b.row(n).begin());
        std::copy(c.begin(), c.end(), res.c.row(n).begin());
    };
    store(grid.NT);

    const Growth growth(grid.I, grid.dz);
    Extended ea, eb, ec;
    std::vector<double> pi(n_nodes), th(n_nodes), Gv(n_nodes), B(3 * static_cast<std::size_t>(n_nodes));
    std::vector<char> clamped(n_nodes);
    double mu_bar = 0.0;

    for (int n = grid.NT - 1; n >= 0; --n) {
        const LevelKernel k = kernels(n);
        if (k.N != N || k.I != grid.I) throw DomainError("kernel shape does not match the grid");
        const double t1 = grid.t(n + 1), t0 = grid.t(n);
        ea.fill(a, unit_a ? BoundaryFn([](double, double) { return 1.0; }) : bd.a, grid, t1);
        eb.fill(b, bd.b, grid, t1);
        ec.fill(c, bd.c, grid, t1);
        const bool full = cfg.scheme == Scheme::Explicit;
        double level_dt_rate = 0.0;

        detail::parallel_for(-N, N + 1, cfg.threads, [&](int j) {
            const int r = j + N;
            const NodeSums s = node_sums(k, j, ea, &eb, &ec, growth, dt, full);
            check_cfl(k, n, j, s, dt, cfg.scheme);
            Gv[r] = s.Ga;
            double p = 0.0, theta = 0.0, na, nb, nc;
            if (s.Ga > 0.0) {
                p = unit_a ? 0.0 : std::clamp(-s.Qa / s.Ga, -cfg.pi_bar, cfg.pi_bar);
                theta = -0.5 * s.Qb / s.Ga;
            } else if (s.rate_total > 0.0 || s.Ga < 0.0) {
                throw DegenerateNode("G a <= 0 at level " + std::to_string(n) + ", node " + std::to_string(j), n, j);
            }
            if (unit_a) {
                na = 1.0;
                nb = s.Eb;
            } else {
                na = s.Ea + dt * (2.0 * p * s.Qa + p * p * s.Ga);
                nb = s.Eb + dt * (p * s.Qb + 2.0 * theta * (s.Qa + p * s.Ga));
            }
            nc = s.Ec + dt * (theta * s.Qb + theta * theta * s.Ga);
            pi[r] = p;
            th[r] = theta;
            B[r] = na;
            B[n_nodes + r] = nb;
            B[2 * n_nodes + r] = nc;
        });
        for (int j = -N; j <= N; ++j) {
            const int r = j + N;
            res.diagnostics.min_G = std::min(res.diagnostics.min_G, Gv[r]);
            mu_bar = std::max(mu_bar, std::abs(k.mu_hat[r]));
            const double rate = full ? k.total_rate(j) : k.jump_sum[r];
            level_dt_rate = std::max(level_dt_rate, dt * rate);
        }
        res.diagnostics.max_dt_rate = std::max(res.diagnostics.max_dt_rate, level_dt_rate);

        if (cfg.scheme == Scheme::Imex) {
            const double za = grid.z(-N - 1), zb = grid.z(N + 1);
            std::vector<std::pair<double, double>> outer = {
                {unit_a ? 1.0 : bd.a(t0, za), unit_a ? 1.0 : bd.a(t0, zb)},
                {bd.b(t0, za), bd.b(t0, zb)},
                {bd.c(t0, za), bd.c(t0, zb)}};
            imex_solve(k, dt, B, 3, outer);
            if (unit_a) std::fill(B.begin(), B.begin() + n_nodes, 1.0);
        }
        long long clamps = 0;
        for (int r = 0; r < n_nodes; ++r) {
            double na = B[r];
            if (cfg.scheme == Scheme::Imex && na < 0.0) {
                na = 0.0;
                ++clamps;
            }
            a[r] = na;
            b[r] = B[n_nodes + r];
            c[r] = B[2 * n_nodes + r];
        }
        res.diagnostics.clamp_count += clamps;
        res.diagnostics.node_updates += n_nodes;
        if (res.pi_star.has(n)) {
            std::copy(pi.begin(), pi.end(), res.pi_star.row(n).begin());
            std::copy(th.begin(), th.end(), res.vartheta.row(n).begin());
        }
        store(n);
    }
    if (res.diagnostics.node_updates > 0 &&
        static_cast<double>(res.diagnostics.clamp_count) >
            cfg.max_clamp_fraction * static_cast<double>(res.diagnostics.node_updates)) {
        throw DegenerateNode("too many negative-a clamps (" + std::to_string(res.diagnostics.clamp_count) + " of " +
                                 std::to_string(res.diagnostics.node_updates) + " node updates)",
                             -1, 0);
    }
    res.x_star = price(res.a, res.b);
    finish_diagnostics(res, grid, mu_bar);
    return res;
}

SolveResult solve(const JumpModel& model, const SpaceTimeGrid& grid, const SolveConfig& cfg) {
    return solve_kernels(model_kernels(model, grid, cfg.threads), grid, cfg);
}

SolveResult solve_a(const KernelSource& kernels, const SpaceTimeGrid& grid, const SolveConfig& cfg) {
    SolveConfig c = cfg;
    c.payoff = nullptr;
    c.boundary_b = nullptr;
    c.boundary_c = nullptr;
    return solve_kernels(kernels, grid, c);
}

Surface solve_b(const KernelSource& kernels, const SpaceTimeGrid& grid, const SolveConfig& cfg,
                const Surface& pi_star) {
    grid.validate();
    const Boundaries bd = resolve_boundaries(cfg);
    const int N = grid.N, n_nodes = 2 * N + 1;
    const double dt = grid.dt;
    for (int n = 0; n < grid.NT; ++n)
        if (!pi_star.has(n)) throw DomainError("solve_b needs pi* on every level");
    Surface out(N, grid.NT, kept_levels(grid, cfg.keep));
    std::vector<double> b(n_nodes), B(n_nodes);
    for (int j = -N; j <= N; ++j) b[j + N] = -2.0 * bd.f(grid.z(j));
    if (out.has(grid.NT)) std::copy(b.begin(), b.end(), out.row(grid.NT).begin());
    const Growth growth(grid.I, grid.dz);
    Extended eb;
    const bool full = cfg.scheme == Scheme::Explicit;
    for (int n = grid.NT - 1; n >= 0; --n) {
        const LevelKernel k = kernels(n);
        eb.fill(b, bd.b, grid, grid.t(n + 1));
        detail::parallel_for(-N, N + 1, cfg.threads, [&](int j) {
            // Reuse the a-slot of node_sums for b: E[b] and Q b.
            const NodeSums s = node_sums(k, j, eb, nullptr, nullptr, growth, dt, full);
            check_cfl(k, n, j, s, dt, cfg.scheme);
            B[j + N] = s.Ea + dt * pi_star(n, j) * s.Qa;
        });
        if (cfg.scheme == Scheme::Imex) {
            const double t0 = grid.t(n);
            imex_solve(k, dt, B, 1, {{bd.b(t0, grid.z(-N - 1)), bd.b(t0, grid.z(N + 1))}});
        }
        b = B;
        if (out.has(n)) std::copy(b.begin(), b.end(), out.row(n).begin());
    }
    return out;
}

Surface solve_c(const KernelSource& kernels, const SpaceTimeGrid& grid, const SolveConfig& cfg, const Surface& a,
                const Surface& b) {
    grid.validate();
    const Boundaries bd = resolve_boundaries(cfg);
    const int N = grid.N, n_nodes = 2 * N + 1;
    const double dt = grid.dt;
    for (int n = 1; n <= grid.NT; ++n)
        if (!a.has(n) || !b.has(n)) throw DomainError("solve_c needs a and b on every level");
    Surface out(N, grid.NT, kept_levels(grid, cfg.keep));
    std::vector<double> c(n_nodes), B(n_nodes), an(n_nodes), bn(n_nodes);
    for (int j = -N; j <= N; ++j) {
        const double f = bd.f(grid.z(j));
        c[j + N] = f * f;
    }
    if (out.has(grid.NT)) std::copy(c.begin(), c.end(), out.row(grid.NT).begin());
    const Growth growth(grid.I, grid.dz);
    Extended ea, eb, ec;
    const bool full = cfg.scheme == Scheme::Explicit;
    for (int n = grid.NT - 1; n >= 0; --n) {
        const LevelKernel k = kernels(n);
        const double t1 = grid.t(n + 1);
        std::copy(a.row(n + 1).begin(), a.row(n + 1).end(), an.begin());
        std::copy(b.row(n + 1).begin(), b.row(n + 1).end(), bn.begin());
        ea.fill(an, bd.a, grid, t1);
        eb.fill(bn, bd.b, grid, t1);
        ec.fill(c, bd.c, grid, t1);
        detail::parallel_for(-N, N + 1, cfg.threads, [&](int j) {
            const NodeSums s = node_sums(k, j, ea, &eb, &ec, growth, dt, full);
            check_cfl(k, n, j, s, dt, cfg.scheme);
            double src = 0.0;
            if (s.Ga > 0.0) {
                src = 0.25 * s.Qb * s.Qb / s.Ga;
            } else if (s.rate_total > 0.0 || s.Ga < 0.0) {
                throw DegenerateNode("G a <= 0 at level " + std::to_string(n) + ", node " + std::to_string(j), n, j);
            }
            B[j + N] = s.Ec - dt * src;
        });
        if (cfg.scheme == Scheme::Imex) {
            const double t0 = grid.t(n);
            imex_solve(k, dt, B, 1, {{bd.c(t0, grid.z(-N - 1)), bd.c(t0, grid.z(N + 1))}});
        }
        c = B;
        if (out.has(n)) std::copy(c.begin(), c.end(), out.row(n).begin());
    }
    return out;
}

Surface price(const Surface& a, const Surface& b) {
    Surface x(a.N(), a.NT(), a.levels());
    for (int n : a.levels()) {
        for (int j = -a.N(); j <= a.N(); ++j) {
            const double av = a(n, j);
            if (!(av > 0)) throw DegenerateNode("a <= 0 in the price formula", n, j);
            x.at(n, j) = -b(n, j) / (2.0 * av);
        }
    }
    return x;
}

double hedge_ratio(const SolveResult& r, int n, int j, double x) {
    if (n < 0 || n >= r.grid.NT) throw DomainError("hedge ratio needs 0 <= n < NT");
    if (j <= -r.grid.N || j >= r.grid.N) throw DomainError("hedge ratio at a boundary node would extrapolate");
    return std::exp(-r.grid.z(j)) * (r.pi_star(n, j) * x + r.vartheta(n, j));
}

double value_at(const SolveResult& r, int n, int j, double x) {
    return r.a(n, j) * x * x + r.b(n, j) * x + r.c(n, j);
}

void write_surfaces_csv(std::ostream& os, const SolveResult& r) {
    os << "level,node,z,a,b,c,pi_star,x_star\n";
    os.precision(17);
    for (int n : r.a.levels()) {
        for (int j = -r.grid.N; j <= r.grid.N; ++j) {
            os << n << ',' << j << ',' << r.grid.z(j) << ',' << r.a(n, j) << ',' << r.b(n, j) << ',' << r.c(n, j)
               << ',' << (r.pi_star.has(n) ? r.pi_star(n, j) : 0.0) << ',' << r.x_star(n, j) << '\n';
        }
    }
}

}  // namespace qhedge
