#include "qhedge/disc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "parallel.hpp"
#include "qhedge/errors.hpp"

namespace qhedge {

SpaceTimeGrid SpaceTimeGrid::make(double half_width, int N, double horizon, int NT, int I, int kappa,
                                  double origin) {
    if (!(half_width > 0) || N <= 0 || !(horizon > 0) || NT <= 0)
        throw ConfigError("grid needs positive half width, N, horizon and NT");
    SpaceTimeGrid g;
    g.N = N;
    g.dz = half_width / N;
    g.NT = NT;
    g.dt = horizon / NT;
    g.I = I < 0 ? N / 5 : I;
    g.kappa = kappa;
    g.origin = origin;
    g.validate();
    return g;
}

void SpaceTimeGrid::validate() const {
    if (!(dz > 0) || !(dt > 0) || N <= 0 || NT <= 0) throw ConfigError("grid spacings must be positive");
    if (kappa < 0) throw ConfigError("kappa must be non-negative");
    if (!(kappa < I)) throw ConfigError("kappa must be smaller than I");
    if (!(I < N)) throw ConfigError("I must be smaller than N");
}

// ---------------------------------------------------------------------------

double NodeStencil::rate(int l) const {
    if (l == 0 || std::abs(l) > I) return 0.0;
    double r = omega[l + I];
    if (l == 1) r += chi;
    if (l == -1) r += ups;
    return r;
}

double NodeStencil::jump_rate() const {
    double s = 0.0;
    for (double w : omega) s += w;
    return s;
}

double NodeStencil::total_rate() const { return chi + ups + jump_rate(); }

std::vector<double> NodeStencil::probabilities(double dt) const {
    std::vector<double> p(2 * I + 1, 0.0);
    double total = 0.0;
    for (int l = -I; l <= I; ++l) {
        if (l == 0) continue;
        p[l + I] = dt * rate(l);
        total += p[l + I];
    }
    const double stay = 1.0 - total;
    if (stay < 0.0) throw CflViolation("negative stay probability", -1, 0, 1.0 / total_rate());
    p[I] = stay;
    return p;
}

double LevelKernel::rate(int j, int l) const {
    if (l == 0 || std::abs(l) > I) return 0.0;
    double r = omega_row(j)[l + I];
    if (l == 1) r += chi[j + N];
    if (l == -1) r += ups[j + N];
    return r;
}

double LevelKernel::total_rate(int j) const { return chi[j + N] + ups[j + N] + jump_sum[j + N]; }

NodeStencil LevelKernel::node(int j) const {
    NodeStencil s;
    s.I = I;
    s.kappa = kappa;
    s.t = t;
    s.omega.assign(omega_row(j), omega_row(j) + 2 * I + 1);
    s.D = D[j + N];
    s.mu_hat = mu_hat[j + N];
    s.chi = chi[j + N];
    s.ups = ups[j + N];
    return s;
}

LevelKernel LevelKernel::zeros(int N, int I, int kappa, double t) {
    LevelKernel k;
    k.N = N;
    k.I = I;
    k.kappa = kappa;
    k.t = t;
    const std::size_t n = 2 * N + 1;
    k.omega.assign(n * (2 * I + 1), 0.0);
    k.chi.assign(n, 0.0);
    k.ups.assign(n, 0.0);
    k.D.assign(n, 0.0);
    k.mu_hat.assign(n, 0.0);
    k.jump_sum.assign(n, 0.0);
    return k;
}

// ---------------------------------------------------------------------------

namespace {

struct Quadratic {
    double c0, c1, c2;
};

// Interpolating quadratic through three points, in monomial form.
Quadratic through(double x0, double f0, double x1, double f1, double x2, double f2) {
    const double d01 = (f1 - f0) / (x1 - x0);
    const double d12 = (f2 - f1) / (x2 - x1);
    const double d012 = (d12 - d01) / (x2 - x0);
    return {f0 - d01 * x0 + d012 * x0 * x1, d01 - d012 * (x0 + x1), d012};
}

struct CoreOut {
    double D = 0.0, small = 0.0, mu_hat = 0.0, chi = 0.0, ups = 0.0, jump_sum = 0.0;
    bool upwind = false;
    int zeta_pos = 0, zeta_neg = 0;
};

// Fills omega[l + I] for |l| <= I from the half-lattice yh[m + 2I + 1], m = -(2I+1)..(2I+1),
// with gamma(yh[m]) = m dz / 2.
CoreOut stencil_core(const LevyMeasure& measure, DriftMode mode, const NodeGeometry& g, const double* yh, double dz,
                     int I, int kappa, double* omega) {
    const MeasureTable& tab = measure.table();
    const int H = 2 * I + 1;
    CoreOut out;
    std::fill(omega, omega + 2 * I + 1, 0.0);
    double flux = 0.0;  // sum omega_i * (i dz) for direct models, sum omega_i * y_i for driver models

    thread_local std::vector<double> C2, C3, C4, T;
    for (int sgn = -1; sgn <= 1; sgn += 2) {
        const Side side = sgn > 0 ? Side::Positive : Side::Negative;
        auto w = [&](int m) { return sgn * yh[H + sgn * m]; };
        int zeta = I + 1;
        for (int i = 1; i <= I; ++i) {
            if (w(2 * i) >= 1.0) {
                zeta = i;
                break;
            }
        }
        (sgn > 0 ? out.zeta_pos : out.zeta_neg) = zeta;

        // Cumulative moments at edges e_k = w(2k + 1) for the cells that need them.
        const int kmom = std::min(std::max(zeta - 1, kappa), I);
        C2.resize(kmom + 1);
        C3.resize(kmom + 1);
        C4.resize(kmom + 1);
        for (int k = 0; k <= kmom; ++k) {
            const double e = w(2 * k + 1);
            C2[k] = tab.cumulative_moment(side, 2, e);
            C3[k] = tab.cumulative_moment(side, 3, e);
            C4[k] = tab.cumulative_moment(side, 4, e);
        }

        // Cell 0, [0, w(1)]: h = (gamma / w)^2 with h(0) = g0^2 and h'(0) = 2 sgn g0 q0,
        // r = sgn (|gamma| - g0 w) / w^2 with r(0) = q0.
        {
            const double w1 = w(1), gam = 0.5 * dz;
            const double h0 = g.g0 * g.g0, h1 = 2.0 * sgn * g.g0 * g.q0;
            const double hw = (gam / w1) * (gam / w1);
            const double h2 = (hw - h0 - h1 * w1) / (w1 * w1);
            out.D += h0 * C2[0] + h1 * C3[0] + h2 * C4[0];
            if (mode == DriftMode::Driver) {
                const double rw = sgn * (gam - g.g0 * w1) / (w1 * w1);
                out.small += g.q0 * C2[0] + (rw - g.q0) / w1 * C3[0];
            }
        }
        for (int i = 1; i <= std::min(I, std::max(kappa, zeta - 1)); ++i) {
            const double x0 = w(2 * i - 1), x1 = w(2 * i), x2 = w(2 * i + 1);
            const double g0v = (2 * i - 1) * 0.5 * dz, g1v = i * dz, g2v = (2 * i + 1) * 0.5 * dz;
            const Quadratic h = through(x0, (g0v / x0) * (g0v / x0), x1, (g1v / x1) * (g1v / x1), x2,
                                        (g2v / x2) * (g2v / x2));
            const double M2 = C2[i] - C2[i - 1], M3 = C3[i] - C3[i - 1], M4 = C4[i] - C4[i - 1];
            const double gamma2 = h.c0 * M2 + h.c1 * M3 + h.c2 * M4;
            if (i <= kappa) {
                out.D += gamma2;
                if (mode == DriftMode::Driver) {
                    const Quadratic r =
                        through(x0, sgn * (g0v - g.g0 * x0) / (x0 * x0), x1, sgn * (g1v - g.g0 * x1) / (x1 * x1), x2,
                                sgn * (g2v - g.g0 * x2) / (x2 * x2));
                    out.small += r.c0 * M2 + r.c1 * M3 + r.c2 * M4;
                }
            } else {
                omega[sgn * i + I] = gamma2 / (g1v * g1v);
            }
        }
        // Omega_2: plain nu-mass of the cell.
        const int first2 = std::max(zeta, kappa + 1);
        if (first2 <= I) {
            T.resize(I + 1);
            for (int k = first2 - 1; k <= I; ++k) T[k] = tab.tail_mass(side, w(2 * k + 1));
            for (int i = first2; i <= I; ++i) omega[sgn * i + I] = T[i - 1] - T[i];
        }
        for (int i = kappa + 1; i <= I; ++i) {
            const double om = omega[sgn * i + I];
            out.jump_sum += om;
            flux += mode == DriftMode::Direct ? om * sgn * i * dz : om * sgn * w(2 * i);
        }
    }

    out.mu_hat = mode == DriftMode::Direct ? g.drift - flux : g.drift + out.small - g.g0 * flux;
    const double diff = out.D / (2.0 * dz * dz), adv = out.mu_hat / (2.0 * dz);
    if (diff + adv >= 0.0 && diff - adv >= 0.0) {
        out.chi = diff + adv;
        out.ups = diff - adv;
    } else {
        out.upwind = true;
        out.chi = diff + std::max(0.0, out.mu_hat / dz);
        out.ups = diff + std::max(0.0, -out.mu_hat / dz);
    }
    return out;
}

NodeStencil stencil_from(const JumpModel& model, const NodeGeometry& g, const std::vector<double>& yh, double t,
                         double z, const SpaceTimeGrid& grid) {
    NodeStencil s;
    s.I = grid.I;
    s.kappa = grid.kappa;
    s.t = t;
    s.z = z;
    s.omega.assign(2 * grid.I + 1, 0.0);
    s.y.resize(2 * grid.I + 1);
    const int H = 2 * grid.I + 1;
    for (int i = -grid.I; i <= grid.I; ++i) s.y[i + grid.I] = yh[H + 2 * i];
    const CoreOut c =
        stencil_core(model.measure(), model.drift_mode(), g, yh.data(), grid.dz, grid.I, grid.kappa, s.omega.data());
    s.zeta_pos = c.zeta_pos;
    s.zeta_neg = c.zeta_neg;
    s.D = c.D;
    s.drift = g.drift;
    s.small_jump_drift = c.small;
    s.mu_hat = c.mu_hat;
    s.chi = c.chi;
    s.ups = c.ups;
    s.upwind = c.upwind;
    return s;
}

}  // namespace

std::vector<double> integration_points(const JumpModel& model, double t, double z, const SpaceTimeGrid& grid) {
    std::vector<double> yh(2 * (2 * grid.I + 1) + 1);
    model.node_geometry(t, z, grid.dz, grid.I, yh);
    std::vector<double> y(2 * grid.I + 1);
    const int H = 2 * grid.I + 1;
    for (int i = -grid.I; i <= grid.I; ++i) y[i + grid.I] = yh[H + 2 * i];
    return y;
}

NodeStencil build_stencil(const JumpModel& model, double t, double z, const SpaceTimeGrid& grid) {
    std::vector<double> yh(2 * (2 * grid.I + 1) + 1);
    const NodeGeometry g = model.node_geometry(t, z, grid.dz, grid.I, yh);
    return stencil_from(model, g, yh, t, z, grid);
}

NodeStencil build_lattice_stencil(const JumpModel& model, const SpaceTimeGrid& grid, double t, int j) {
    std::vector<double> yh(2 * (2 * grid.I + 1) + 1);
    const NodeGeometry g = model.lattice_geometry(t, grid.origin, grid.dz, j, grid.I, yh);
    return stencil_from(model, g, yh, t, grid.z(j), grid);
}

LevelKernel build_level(const JumpModel& model, const SpaceTimeGrid& grid, double t, int threads) {
    LevelKernel k = LevelKernel::zeros(grid.N, grid.I, grid.kappa, t);
    model.prepare_level(t, grid.origin, grid.dz, -grid.N, grid.N, grid.I);
    const LevyMeasure& measure = model.measure();
    measure.table();
    const DriftMode mode = model.drift_mode();
    detail::parallel_for(-grid.N, grid.N + 1, threads, [&](int j) {
        thread_local std::vector<double> yh;
        yh.resize(2 * (2 * grid.I + 1) + 1);
        const NodeGeometry g = model.lattice_geometry(t, grid.origin, grid.dz, j, grid.I, yh);
        const CoreOut c = stencil_core(measure, mode, g, yh.data(), grid.dz, grid.I, grid.kappa, k.omega_row(j));
        const int r = j + grid.N;
        k.chi[r] = c.chi;
        k.ups[r] = c.ups;
        k.D[r] = c.D;
        k.mu_hat[r] = c.mu_hat;
        k.jump_sum[r] = c.jump_sum;
    });
    return k;
}

// ---------------------------------------------------------------------------

std::optional<std::pair<double, double>> apriori_constants(const JumpModel& model, int kappa, double mu_bar) {
    const ModelConstants mc = model.constants();
    const LevyMeasure& m = model.measure();
    const double alpha = m.blumenthal_getoor();
    if (!mc.available || !(alpha > 1.0 && alpha < 2.0) || !(mc.m1 > 0)) return std::nullopt;
    const double k = kappa, kh = kappa + 0.5, Mg = mc.Mg, y0 = mc.y0;
    const double lip = 1.0 + mc.m2 * y0;
    const double ratio = (k + 2.0) * (k + 2.0) / ((k + 1.0) * (k + 1.0));
    const double C1 = 2.0 * Mg * lip * lip / (2.0 - alpha) * std::pow(kh / mc.m1, 2.0 - alpha) +
                      2.0 * ratio * kh * Mg / (alpha - 1.0) * std::pow(kh / lip, -alpha);
    const double inf = std::numeric_limits<double>::infinity();
    double tail = 0.0;
    try {
        tail = mc.gamma_lipschitz *
               (m.side_integral(Side::Positive, y0, inf, 1.0) + m.side_integral(Side::Negative, y0, inf, 1.0));
    } catch (const Error&) {
        return std::nullopt;
    }
    const double C2 = mu_bar + 2.0 * ratio * tail;
    return std::make_pair(C1, C2);
}

CflReport cfl_bound(const JumpModel& model, const SpaceTimeGrid& grid, const std::vector<int>& levels, int threads) {
    CflReport rep;
    double max_total = 0.0, max_cons = 0.0, max_jump = 0.0, mu_bar = 0.0;
    for (int n : levels) {
        const double t = grid.t(std::clamp(n, 0, grid.NT));
        const LevelKernel k = build_level(model, grid, t, threads);
        for (int j = -grid.N; j <= grid.N; ++j) {
            const int r = j + grid.N;
            const double total = k.total_rate(j);
            if (total > max_total) {
                max_total = total;
                rep.explicit_node = j;
                rep.explicit_level_t = t;
            }
            double abs_i = 0.0;
            const double* om = k.omega_row(j);
            for (int l = -grid.I; l <= grid.I; ++l) abs_i += std::abs(l) * om[l + grid.I];
            const double cons = k.D[r] / (grid.dz * grid.dz) + std::abs(k.mu_hat[r]) / grid.dz + abs_i + k.jump_sum[r];
            max_cons = std::max(max_cons, cons);
            if (k.jump_sum[r] > max_jump) {
                max_jump = k.jump_sum[r];
                rep.imex_node = j;
            }
            mu_bar = std::max(mu_bar, std::abs(k.mu_hat[r]));
        }
    }
    const double inf = std::numeric_limits<double>::infinity();
    rep.explicit_dt = max_total > 0 ? 1.0 / max_total : inf;
    rep.conservative_dt = max_cons > 0 ? 1.0 / max_cons : inf;
    rep.imex_dt = max_jump > 0 ? 1.0 / max_jump : inf;
    rep.mu_bar = mu_bar;
    if (auto c = apriori_constants(model, grid.kappa, mu_bar)) {
        rep.C1 = c->first;
        rep.C2 = c->second;
        const double alpha = model.measure().blumenthal_getoor();
        rep.apriori_dt = std::pow(grid.dz, alpha) / (rep.C1 + rep.C2 * std::pow(grid.dz, alpha - 1.0));
    }
    return rep;
}

void write_stencil_csv(std::ostream& os, const LevelKernel& k, int level, const SpaceTimeGrid& grid, bool header) {
    if (header) {
        os << "level,node,z,D,mu_hat,chi,ups";
        for (int l = -k.I; l <= k.I; ++l) os << ",omega_" << l;
        os << '\n';
    }
    os.precision(17);
    for (int j = -k.N; j <= k.N; ++j) {
        const int r = j + k.N;
        os << level << ',' << j << ',' << grid.z(j) << ',' << k.D[r] << ',' << k.mu_hat[r] << ',' << k.chi[r] << ','
           << k.ups[r];
        const double* om = k.omega_row(j);
        for (int l = -k.I; l <= k.I; ++l) os << ',' << om[l + k.I];
        os << '\n';
    }
}

}  // namespace qhedge
