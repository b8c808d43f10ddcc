#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "model_detail.hpp"
#include "qhedge/errors.hpp"
#include "qhedge/model.hpp"
#include "quadrature.hpp"

namespace qhedge {

namespace {

double compensator_or_zero(const LevyMeasure& m) {
    return m.kind() == MeasureKind::Custom ? 0.0 : m.compensator_drift();
}

}  // namespace

ElectricityModel::ElectricityModel(ForwardCurve curve, double c, double trend, LevyMeasure measure,
                                   bool martingale_mode, int nodes_per_piece)
    : curve_(std::move(curve)),
      c_(c),
      trend_(trend),
      zeta_(trend + compensator_or_zero(measure)),
      measure_(std::move(measure)),
      martingale_(martingale_mode) {
    if (!(c > 0)) throw ConfigError("mean reversion c must be positive");
    if (martingale_ && measure_.kind() == MeasureKind::Custom)
        throw UnsupportedError("martingale mode needs a CGMY or NIG measure");
    if (nodes_per_piece != 20) throw ConfigError("only the 20-node rule per curve piece is provided");
    const auto& rule = detail::gauss20();
    const double d = curve_.delivery_length();
    for (const auto& p : curve_.pieces()) {
        const double half = 0.5 * (p.s_end - p.s_start), mid = 0.5 * (p.s_end + p.s_start);
        for (std::size_t k = 0; k < rule.x.size(); ++k) {
            const double s = mid + half * rule.x[k];
            s_.push_back(s);
            l_.push_back(std::exp(-c_ * s));
            base_logc_.push_back(std::log(rule.w[k] * half * p.price / d));
        }
    }
}

std::string ElectricityModel::name() const {
    std::ostringstream os;
    os << "electricity(c=" << c_ << ", trend=" << trend_ << ", " << measure_.describe()
       << (martingale_ ? ", martingale" : "") << ")";
    return os.str();
}

double ElectricityModel::martingale_drift(double t, double s) const {
    if (measure_.kind() == MeasureKind::Custom)
        throw UnsupportedError("martingale drift needs a CGMY or NIG measure");
    if (!(t >= 0.0)) throw DomainError("martingale drift needs t >= 0");
    if (t == 0.0) return 0.0;
    auto psi = [&](double r) {
        const double u = std::exp(-c_ * (s - r));
        return zeta_ * u + measure_.cumulant(u);
    };
    return -detail::gauss_integrate(detail::gauss20(), psi, 0.0, t);
}

std::shared_ptr<const ElectricityModel::Coefs> ElectricityModel::build_coefs(double t) const {
    auto c = std::make_shared<Coefs>();
    c->t = t;
    c->logc = base_logc_;
    if (martingale_) {
        c->kappa.resize(s_.size());
        for (std::size_t q = 0; q < s_.size(); ++q) {
            c->logc[q] += martingale_drift(t, s_[q]);
            c->kappa[q] = measure_.cumulant(l_[q] * std::exp(c_ * t));
        }
    }
    return c;
}

std::shared_ptr<const ElectricityModel::Coefs> ElectricityModel::coefs_at(double t) const {
    if (!martingale_) t = 0.0;
    std::lock_guard<std::mutex> lock(coef_mutex_);
    for (const auto& c : coef_cache_)
        if (c && c->t == t) return c;
    auto c = build_coefs(t);
    coef_cache_[coef_next_] = c;
    coef_next_ = 1 - coef_next_;
    return c;
}

PhiValue ElectricityModel::eval(const Coefs& c, double A) const {
    const std::size_t n = l_.size();
    double emax = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> e;
    e.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
        e[q] = c.logc[q] + l_[q] * A;
        emax = std::max(emax, e[q]);
    }
    double S = 0.0, s1 = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        e[q] = std::exp(e[q] - emax);
        S += e[q];
        s1 += e[q] * l_[q];
    }
    PhiValue v;
    v.value = emax + std::log(S);
    const double m1 = s1 / S;
    double c2 = 0, c3 = 0, c4 = 0, r2 = 0, r3 = 0, r4 = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double p = e[q] / S, dl = l_[q] - m1, l2 = l_[q] * l_[q];
        const double dl2 = dl * dl;
        c2 += p * dl2;
        c3 += p * dl2 * dl;
        c4 += p * dl2 * dl2;
        r2 += p * l2;
        r3 += p * l2 * l_[q];
        r4 += p * l2 * l2;
    }
    v.d1 = m1;
    v.d2 = c2;
    v.d3 = c3;
    v.d4 = c4 - 3.0 * c2 * c2;
    v.m2 = r2;
    v.m3 = r3;
    v.m4 = r4;
    return v;
}

double ElectricityModel::inverse(const Coefs& c, double z, double guess) const {
    if (!std::isfinite(z)) throw RangeError("phi_inverse: non-finite target");
    auto f = [&](double A) { return eval(c, A).value - z; };
    const double tol = 1e-12 * std::max(1.0, std::abs(z));
    // Newton from the guess; phi is convex and increasing, so Newton from the right never overshoots.
    double A = guess;
    PhiValue v = eval(c, A);
    for (int it = 0; it < 8; ++it) {
        const double r = v.value - z;
        if (std::abs(r) <= tol) return A;
        const double An = A - r / v.d1;
        if (!std::isfinite(An)) break;
        A = An;
        v = eval(c, A);
    }
    if (std::abs(v.value - z) <= tol) return A;
    // Safeguarded fallback: bracket by expansion, then Newton steps kept inside the bracket.
    double lo = A, hi = A, flo = v.value - z, fhi = flo;
    double step = std::max(1.0, std::abs(flo) / std::max(v.d1, 1e-300));
    int expansions = 0;
    while (flo > 0) {
        hi = lo;
        fhi = flo;
        lo -= step;
        step *= 2.0;
        flo = f(lo);
        if (++expansions > 200) throw RangeError("phi_inverse: target below the reachable range");
    }
    while (fhi < 0) {
        lo = hi;
        flo = fhi;
        hi += step;
        step *= 2.0;
        fhi = f(hi);
        if (++expansions > 200) throw RangeError("phi_inverse: target above the reachable range");
    }
    A = 0.5 * (lo + hi);
    for (int it = 0; it < 300; ++it) {
        v = eval(c, A);
        const double r = v.value - z;
        if (std::abs(r) <= tol) return A;
        if (r < 0)
            lo = A;
        else
            hi = A;
        double An = A - r / v.d1;
        if (!(An > lo && An < hi)) An = 0.5 * (lo + hi);
        if (hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(A))) return A;
        A = An;
    }
    return A;
}

double ElectricityModel::phi(double A, double t) const { return eval(*coefs_at(t), A).value; }
double ElectricityModel::phi_derivative(double A, double t) const { return eval(*coefs_at(t), A).d1; }
double ElectricityModel::phi_second(double A, double t) const { return eval(*coefs_at(t), A).d2; }
PhiValue ElectricityModel::phi_all(double A, double t) const { return eval(*coefs_at(t), A); }

double ElectricityModel::phi_inverse(double z, double t) const {
    const auto c = coefs_at(t);
    // Linear start from the value and slope at A = 0.
    const PhiValue v0 = eval(*c, 0.0);
    return inverse(*c, z, (z - v0.value) / v0.d1);
}

double ElectricityModel::phi_inverse(double z, double t, double guess) const {
    return inverse(*coefs_at(t), z, guess);
}

double ElectricityModel::gamma(double t, double z, double y) const {
    const auto c = coefs_at(t);
    const double A = phi_inverse(z, t);
    return eval(*c, A + y * std::exp(c_ * t)).value - z;
}

double ElectricityModel::gamma_y(double t, double z, double y) const {
    const double e = std::exp(c_ * t);
    return e * eval(*coefs_at(t), phi_inverse(z, t) + y * e).d1;
}

double ElectricityModel::gamma_yy(double t, double z, double y) const {
    const double e = std::exp(c_ * t);
    return e * e * eval(*coefs_at(t), phi_inverse(z, t) + y * e).d2;
}

double ElectricityModel::gamma_inverse(double t, double z, double w) const {
    if (w == 0.0) return 0.0;
    const auto c = coefs_at(t);
    const double A = phi_inverse(z, t);
    const PhiValue v = eval(*c, A);
    const double A1 = inverse(*c, z + w, A + w / v.d1);
    return std::exp(-c_ * t) * (A1 - A);
}

double ElectricityModel::tau(double y) const {
    return std::exp(c_ * curve_.delivery_length()) * std::max(std::abs(y), std::abs(std::expm1(y)));
}

double ElectricityModel::driver_drift_at(const Coefs& c, double t, double A) const {
    if (!martingale_) return zeta_ * std::exp(c_ * t) * eval(c, A).d1;
    // d/dt of Phi_t through M(t, s) cancels the trend term; what remains is -E_w[kappa(l e^{ct})].
    const std::size_t n = l_.size();
    double emax = -std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < n; ++q) emax = std::max(emax, c.logc[q] + l_[q] * A);
    double S = 0.0, K = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        const double p = std::exp(c.logc[q] + l_[q] * A - emax);
        S += p;
        K += p * c.kappa[q];
    }
    return -K / S;
}

double ElectricityModel::driver_drift(double t, double z) const {
    const auto c = coefs_at(t);
    return driver_drift_at(*c, t, phi_inverse(z, t));
}

// The drift integrands below are written through expm1(x) - x of centred or raw
// exponents under the tilted weights, so they carry no cancellation near y = 0.

double ElectricityModel::mu(double t, double z) const {
    const auto c = coefs_at(t);
    const double A = phi_inverse(z, t);
    const double e = std::exp(c_ * t);
    const PhiValue v = eval(*c, A);
    std::vector<double> p(l_.size()), d(l_.size());
    {
        double emax = -std::numeric_limits<double>::infinity(), S = 0.0;
        for (std::size_t q = 0; q < l_.size(); ++q) emax = std::max(emax, c->logc[q] + l_[q] * A);
        for (std::size_t q = 0; q < l_.size(); ++q) S += p[q] = std::exp(c->logc[q] + l_[q] * A - emax);
        for (std::size_t q = 0; q < l_.size(); ++q) {
            p[q] /= S;
            d[q] = l_[q] - v.d1;
        }
    }
    // Phi(A + x) - Phi(A) - x Phi'(A) = log E_p[exp((l - m1) x)].
    auto h = [&](double y) {
        const double x = y * e;
        double u = 0.0;
        for (std::size_t q = 0; q < p.size(); ++q) u += p[q] * detail::expm1_minus_x(d[q] * x);
        return std::log1p(u);
    };
    const double inf = std::numeric_limits<double>::infinity();
    const double pos = measure_.side_weighted(Side::Positive, 0.0, inf, h);
    const double neg = measure_.side_weighted(Side::Negative, 0.0, inf, [&](double w) { return h(-w); });
    return driver_drift_at(*c, t, A) + pos + neg;
}

double ElectricityModel::mu_tilde(double t, double z) const {
    const auto c = coefs_at(t);
    const double A = phi_inverse(z, t);
    const double e = std::exp(c_ * t);
    std::vector<double> p(l_.size());
    {
        double emax = -std::numeric_limits<double>::infinity(), S = 0.0;
        for (std::size_t q = 0; q < l_.size(); ++q) emax = std::max(emax, c->logc[q] + l_[q] * A);
        for (std::size_t q = 0; q < l_.size(); ++q) S += p[q] = std::exp(c->logc[q] + l_[q] * A - emax);
        for (auto& x : p) x /= S;
    }
    // e^{gamma} - 1 - x Phi'(A) = E_p[exp(l x) - 1 - l x].
    auto h = [&](double y) {
        const double x = y * e;
        double u = 0.0;
        for (std::size_t q = 0; q < p.size(); ++q) u += p[q] * detail::expm1_minus_x(l_[q] * x);
        return u;
    };
    const double inf = std::numeric_limits<double>::infinity();
    const double pos = measure_.side_weighted(Side::Positive, 0.0, inf, h);
    const double neg = measure_.side_weighted(Side::Negative, 0.0, inf, [&](double w) { return h(-w); });
    return driver_drift_at(*c, t, A) + pos + neg;
}

ModelConstants ElectricityModel::constants() const {
    const double T = curve_.delivery_start(), d = curve_.delivery_length();
    ModelConstants k;
    k.available = true;
    k.m1 = std::exp(-c_ * (T + d));
    k.m2 = 1.0 - std::exp(-2.0 * c_ * d);
    k.y0 = 1.0;
    k.Mg = detail::measure_sup_g(measure_, k.y0);
    k.gamma_lipschitz = 1.0;
    return k;
}

NodeGeometry ElectricityModel::node_geometry(double t, double z, double dz, int I, std::span<double> y) const {
    const int half = 2 * I + 1;
    if (static_cast<int>(y.size()) != 2 * half + 1) throw DomainError("node_geometry: wrong buffer size");
    const auto c = coefs_at(t);
    const double e = std::exp(c_ * t);
    double A0;
    try {
        A0 = phi_inverse(z, t);
    } catch (const RangeError& err) {
        throw StencilError(err.what(), t, z, 0);
    }
    const PhiValue v = eval(*c, A0);
    y[half] = 0.0;
    for (int dir = -1; dir <= 1; dir += 2) {
        double A = A0, d1 = v.d1;
        for (int m = 1; m <= half; ++m) {
            const double target = z + dir * 0.5 * m * dz;
            try {
                A = inverse(*c, target, A + dir * 0.5 * dz / d1);
            } catch (const RangeError& err) {
                throw StencilError(err.what(), t, z, dir * m);
            }
            d1 = eval(*c, A).d1;
            y[half + dir * m] = (A - A0) / e;
        }
    }
    NodeGeometry g;
    g.g0 = e * v.d1;
    g.q0 = 0.5 * e * e * v.d2;
    g.drift = driver_drift_at(*c, t, A0);
    return g;
}

void ElectricityModel::prepare_level(double t, double origin, double dz, int jmin, int jmax, int I) const {
    const double tk = martingale_ ? t : 0.0;
    const int kmin = 2 * jmin - (2 * I + 1), kmax = 2 * jmax + (2 * I + 1);
    std::lock_guard<std::mutex> lock(lattice_mutex_);
    auto& L = lattice_;
    if (L.valid && L.t == tk && L.origin == origin && L.dz == dz && L.kmin <= kmin && L.kmax >= kmax) return;
    const auto c = coefs_at(tk);
    const bool warm = L.valid && L.origin == origin && L.dz == dz && L.kmin == kmin && L.kmax == kmax;
    std::vector<double> prevA;
    if (warm) prevA = L.A;
    const int n = kmax - kmin + 1;
    L.valid = false;
    L.A.assign(n, 0.0);
    L.d1.assign(n, 0.0);
    L.d2.assign(n, 0.0);
    // Start at the node closest to phi's value at A = 0 and sweep outward with warm starts.
    const PhiValue v0 = eval(*c, 0.0);
    int k0 = static_cast<int>(std::lround((v0.value - origin) / (0.5 * dz)));
    k0 = std::clamp(k0, kmin, kmax);
    auto solve_at = [&](int k, double guess) {
        const double z = origin + 0.5 * k * dz;
        double A;
        try {
            A = inverse(*c, z, warm ? prevA[k - kmin] : guess);
        } catch (const RangeError& err) {
            throw StencilError(err.what(), t, z, 0);
        }
        const PhiValue v = eval(*c, A);
        L.A[k - kmin] = A;
        L.d1[k - kmin] = v.d1;
        L.d2[k - kmin] = v.d2;
    };
    solve_at(k0, (origin + 0.5 * k0 * dz - v0.value) / v0.d1);
    for (int k = k0 + 1; k <= kmax; ++k)
        solve_at(k, L.A[k - 1 - kmin] + 0.5 * dz / L.d1[k - 1 - kmin]);
    for (int k = k0 - 1; k >= kmin; --k)
        solve_at(k, L.A[k + 1 - kmin] - 0.5 * dz / L.d1[k + 1 - kmin]);
    L.t = tk;
    L.origin = origin;
    L.dz = dz;
    L.kmin = kmin;
    L.kmax = kmax;
    L.coefs = c;
    L.valid = true;
}

NodeGeometry ElectricityModel::lattice_geometry(double t, double origin, double dz, int j, int I,
                                                std::span<double> y) const {
    const int half = 2 * I + 1;
    const double tk = martingale_ ? t : 0.0;
    const auto& L = lattice_;
    const int k = 2 * j;
    if (!L.valid || L.t != tk || L.origin != origin || L.dz != dz || k - half < L.kmin || k + half > L.kmax)
        return node_geometry(t, origin + j * dz, dz, I, y);
    if (static_cast<int>(y.size()) != 2 * half + 1) throw DomainError("lattice_geometry: wrong buffer size");
    const double e = std::exp(c_ * t), inv_e = 1.0 / e;
    const double A0 = L.A[k - L.kmin];
    for (int m = -half; m <= half; ++m) y[m + half] = (L.A[k + m - L.kmin] - A0) * inv_e;
    y[half] = 0.0;
    NodeGeometry g;
    g.g0 = e * L.d1[k - L.kmin];
    g.q0 = 0.5 * e * e * L.d2[k - L.kmin];
    g.drift = driver_drift_at(*L.coefs, t, A0);
    return g;
}

}  // namespace qhedge
