#include "qhedge/levy.hpp"

#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>

#include <boost/math/special_functions/bessel.hpp>

#include "qhedge/errors.hpp"
#include "quadrature.hpp"

namespace qhedge {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Neumaier compensated summation.
struct Accumulator {
    double sum = 0.0, comp = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + comp; }
};

// e^x - 1 - x without cancellation for small |x|.
double expm1_minus_x(double x) {
    if (std::abs(x) < 1e-3) {
        const double x2 = x * x;
        return x2 * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)));
    }
    return std::expm1(x) - x;
}

}  // namespace

struct LevyMeasure::Impl {
    MeasureKind kind = MeasureKind::Custom;
    CgmyParams cgmy{};
    NigParams nig{};
    std::function<double(double)> custom;
    double index = 1.5;
    std::string label;
    double g0_pos = 0.0, g0_neg = 0.0;
    // Scale on which g(y) departs from g(0); sets where the small-jump asymptotics take over.
    double variation_rate = 1.0;

    std::once_flag table_once;
    std::unique_ptr<MeasureTable> table;
};

LevyMeasure::LevyMeasure(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

LevyMeasure LevyMeasure::cgmy(double C, double G, double M, double Y) {
    if (!(C > 0) || !(G > 0) || !(M > 0) || !(Y > 0 && Y < 2))
        throw DomainError("CGMY parameters require C, G, M > 0 and Y in (0, 2)");
    auto p = std::make_shared<Impl>();
    p->kind = MeasureKind::CGMY;
    p->cgmy = {C, G, M, Y};
    p->index = Y;
    p->g0_pos = p->g0_neg = C;
    p->variation_rate = std::max({G, M, 1.0});
    std::ostringstream os;
    os << "CGMY(C=" << C << ", G=" << G << ", M=" << M << ", Y=" << Y << ")";
    p->label = os.str();
    return LevyMeasure(p);
}

LevyMeasure LevyMeasure::nig(double alpha, double beta, double delta) {
    if (!(alpha > 0) || !(std::abs(beta) < alpha) || !(delta > 0))
        throw DomainError("NIG parameters require alpha > 0, |beta| < alpha, delta > 0");
    auto p = std::make_shared<Impl>();
    p->kind = MeasureKind::NIG;
    p->nig = {alpha, beta, delta};
    p->index = 1.0;
    p->g0_pos = p->g0_neg = delta / kPi;
    p->variation_rate = std::max(alpha, 1.0);
    std::ostringstream os;
    os << "NIG(alpha=" << alpha << ", beta=" << beta << ", delta=" << delta << ")";
    p->label = os.str();
    return LevyMeasure(p);
}

LevyMeasure LevyMeasure::custom(std::function<double(double)> density, double blumenthal_getoor,
                                std::string label) {
    if (!density) throw DomainError("custom measure needs a density");
    if (!(blumenthal_getoor > 0 && blumenthal_getoor < 2))
        throw DomainError("custom measure index must lie in (0, 2)");
    auto p = std::make_shared<Impl>();
    p->kind = MeasureKind::Custom;
    p->custom = std::move(density);
    p->index = blumenthal_getoor;
    p->label = std::move(label);
    const double d = 1e-12;
    p->g0_pos = p->custom(d) * std::pow(d, 1.0 + blumenthal_getoor);
    p->g0_neg = p->custom(-d) * std::pow(d, 1.0 + blumenthal_getoor);
    return LevyMeasure(p);
}

MeasureKind LevyMeasure::kind() const { return impl_->kind; }
std::string LevyMeasure::describe() const { return impl_->label; }
double LevyMeasure::blumenthal_getoor() const { return impl_->index; }
bool LevyMeasure::within_theory() const { return impl_->index > 1.0 && impl_->index < 2.0; }

const CgmyParams& LevyMeasure::cgmy_params() const {
    if (impl_->kind != MeasureKind::CGMY) throw UnsupportedError("measure is not CGMY");
    return impl_->cgmy;
}

const NigParams& LevyMeasure::nig_params() const {
    if (impl_->kind != MeasureKind::NIG) throw UnsupportedError("measure is not NIG");
    return impl_->nig;
}

double LevyMeasure::side_density(Side s, double w) const {
    const Impl& m = *impl_;
    switch (m.kind) {
        case MeasureKind::CGMY: {
            const double rate = s == Side::Positive ? m.cgmy.M : m.cgmy.G;
            return m.cgmy.C * std::exp(-rate * w - (1.0 + m.cgmy.Y) * std::log(w));
        }
        case MeasureKind::NIG: {
            const double x = m.nig.alpha * w;
            const double y = s == Side::Positive ? w : -w;
            // exp(-x) K1 scaling keeps the product finite for large arguments.
            if (x > 600.0) {
                const double k1_scaled = std::sqrt(kPi / (2.0 * x)) * (1.0 + 3.0 / (8.0 * x));
                return m.nig.alpha * m.nig.delta / (kPi * w) * k1_scaled * std::exp(m.nig.beta * y - x);
            }
            return m.nig.alpha * m.nig.delta / (kPi * w) * boost::math::cyl_bessel_k(1, x) *
                   std::exp(m.nig.beta * y);
        }
        case MeasureKind::Custom:
            return m.custom(s == Side::Positive ? w : -w);
    }
    return 0.0;
}

double LevyMeasure::density(double y) const {
    if (y == 0.0 || !std::isfinite(y)) throw DomainError("density is undefined at y = 0");
    return y > 0 ? side_density(Side::Positive, y) : side_density(Side::Negative, -y);
}

double LevyMeasure::small_jump_constant(Side s) const {
    return s == Side::Positive ? impl_->g0_pos : impl_->g0_neg;
}

namespace {

// Integral over (0, c] of weight(w) nu(w) by geometric panels plus the
// small-jump asymptotic g0 w^{-1-alpha} on the last sliver.
double near_zero_integral(const LevyMeasure& m, Side s, double c,
                          const std::function<double(double)>& weight, double q, double rate) {
    const double alpha = m.blumenthal_getoor();
    Accumulator acc;
    double hi = c;
    auto f = [&](double u) {
        const double w = std::exp(u);
        return weight(w) * m.side_density(s, w) * w;
    };
    for (int k = 0; k < 200 && hi * rate > 1e-15; ++k) {
        const double lo = 0.5 * hi;
        acc.add(detail::refined_trapezoid(f, std::log(lo), std::log(hi), 1e-14));
        hi = lo;
    }
    const double wq = weight(hi) / std::pow(hi, q);
    acc.add(wq * m.small_jump_constant(s) * std::pow(hi, q - alpha) / (q - alpha));
    return acc.value();
}

// Integral over [a, inf) with a > 0; flags divergence instead of throwing.
TailIntegral upper_tail(const LevyMeasure& m, Side s, double a,
                        const std::function<double(double)>& weight) {
    auto f = [&](double u) {
        const double w = std::exp(u);
        return weight(w) * m.side_density(s, w) * w;
    };
    Accumulator acc;
    double u = std::log(a);
    const double u0 = u;
    TailIntegral out;
    double prev = 0.0;
    for (int k = 0; k < 4000; ++k) {
        const double step = 0.25;
        const double v = detail::refined_trapezoid(f, u, u + step, 1e-14);
        if (!std::isfinite(v)) {
            out.divergent = true;
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
        acc.add(v);
        u += step;
        const double w = std::exp(u);
        const double last = prev;
        prev = v;
        const double tot = std::abs(acc.value());
        if (u - u0 > 1.0 && std::abs(v) <= 1e-17 * tot) break;
        if (tot == 0.0 && u - u0 > 1.0 && w > 1e3) break;
        // a non-decreasing panel far out means the integrand does not decay
        if (w > 200.0 && u - u0 > 1.0 && std::abs(v) > 1e-12 * tot && std::abs(v) >= std::abs(last)) {
            out.divergent = true;
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
    }
    out.value = acc.value();
    return out;
}

}  // namespace

double LevyMeasure::side_weighted(Side s, double a, double b, const std::function<double(double)>& weight,
                                  double order_at_zero) const {
    if (!(a >= 0.0)) throw DomainError("side integral needs a >= 0");
    if (!(b > a)) return 0.0;
    Accumulator acc;
    if (a == 0.0) {
        if (!(order_at_zero > impl_->index))
            throw DomainError("integrand is not integrable at the origin against this measure");
        const double c = std::min(b, 1.0);
        acc.add(near_zero_integral(*this, s, c, weight, order_at_zero, impl_->variation_rate));
        a = c;
        if (!(b > a)) return acc.value();
    }
    if (std::isinf(b)) {
        const TailIntegral t = upper_tail(*this, s, a, weight);
        if (t.divergent) throw DomainError("divergent tail integral");
        acc.add(t.value);
        return acc.value();
    }
    auto f = [&](double u) {
        const double w = std::exp(u);
        return weight(w) * side_density(s, w) * w;
    };
    const double ua = std::log(a), ub = std::log(b);
    const int panels = std::max(1, static_cast<int>(std::ceil((ub - ua) / 0.5)));
    const double du = (ub - ua) / panels;
    for (int k = 0; k < panels; ++k) {
        const double lo = ua + k * du;
        const double hi = (k + 1 == panels) ? ub : lo + du;
        acc.add(detail::refined_trapezoid(f, lo, hi, 1e-14));
    }
    return acc.value();
}

double LevyMeasure::side_integral(Side s, double a, double b, double p) const {
    return side_weighted(s, a, b, [p](double w) { return std::pow(w, p); }, p);
}

double LevyMeasure::interval_integral(double lo, double hi, int power, bool is_signed) const {
    if (power < 0 || power > 2) throw DomainError("power must be 0, 1 or 2");
    if (!(lo < hi)) throw DomainError("interval_integral needs lo < hi");
    const double p = power;
    if (lo < 0.0 && hi > 0.0) {
        if (power < 2) throw DomainError("interval straddles the origin with power < 2");
        return side_integral(Side::Negative, 0.0, -lo, p) + side_integral(Side::Positive, 0.0, hi, p);
    }
    if (lo >= 0.0) {
        if (lo == 0.0 && power < 2) throw DomainError("interval touches the origin with power < 2");
        return side_integral(Side::Positive, lo, hi, p);
    }
    if (hi == 0.0 && power < 2) throw DomainError("interval touches the origin with power < 2");
    const double v = side_integral(Side::Negative, -hi, -lo, p);
    return (is_signed && (power % 2 == 1)) ? -v : v;
}

TailIntegral LevyMeasure::tail_error_integral(double cutoff, const std::function<double(double)>& tau) const {
    if (!(cutoff > 0)) throw DomainError("cutoff must be positive");
    TailIntegral out;
    for (Side s : {Side::Positive, Side::Negative}) {
        const double sign = s == Side::Positive ? 1.0 : -1.0;
        auto weight = [&](double w) {
            const double t = tau(sign * w);
            return 1.0 + w + t + t * t;
        };
        const TailIntegral part = upper_tail(*this, s, cutoff, weight);
        if (part.divergent) return part;
        out.value += part.value;
    }
    return out;
}

double LevyMeasure::compensator_drift() const {
    const Impl& m = *impl_;
    if (m.kind == MeasureKind::CGMY) {
        const auto& c = m.cgmy;
        if (c.Y == 1.0) throw DomainError("CGMY compensator undefined for Y = 1");
        return c.C * std::tgamma(1.0 - c.Y) * (std::pow(c.M, c.Y - 1.0) - std::pow(c.G, c.Y - 1.0));
    }
    if (m.kind == MeasureKind::NIG) {
        const auto& n = m.nig;
        return n.beta * n.delta / std::sqrt(n.alpha * n.alpha - n.beta * n.beta);
    }
    throw UnsupportedError("compensator drift is not available for custom measures");
}

double LevyMeasure::cumulant(double u) const {
    const Impl& m = *impl_;
    if (m.kind == MeasureKind::CGMY) {
        const auto& c = m.cgmy;
        if (!(u < c.M && u > -c.G)) throw DomainError("CGMY cumulant needs -G < u < M");
        if (c.Y == 1.0) throw DomainError("CGMY cumulant closed form undefined for Y = 1");
        const double k = c.C * std::tgamma(-c.Y);
        return k * (std::pow(c.M - u, c.Y) - std::pow(c.M, c.Y) + std::pow(c.G + u, c.Y) - std::pow(c.G, c.Y)) +
               u * k * c.Y * (std::pow(c.M, c.Y - 1.0) - std::pow(c.G, c.Y - 1.0));
    }
    if (m.kind == MeasureKind::NIG) {
        const auto& n = m.nig;
        const double bu = n.beta + u;
        if (!(std::abs(bu) < n.alpha)) throw DomainError("NIG cumulant needs |beta + u| < alpha");
        const double r0 = std::sqrt(n.alpha * n.alpha - n.beta * n.beta);
        const double r1 = std::sqrt(n.alpha * n.alpha - bu * bu);
        return -n.delta * (r1 - r0) - u * n.beta * n.delta / r0;
    }
    const double pos =
        side_weighted(Side::Positive, 0.0, std::numeric_limits<double>::infinity(),
                      [u](double w) { return expm1_minus_x(u * w); });
    const double neg =
        side_weighted(Side::Negative, 0.0, std::numeric_limits<double>::infinity(),
                      [u](double w) { return expm1_minus_x(-u * w); });
    return pos + neg;
}

double LevyMeasure::second_moment() const {
    const Impl& m = *impl_;
    if (m.kind == MeasureKind::CGMY) {
        const auto& c = m.cgmy;
        return c.C * std::tgamma(2.0 - c.Y) * (std::pow(c.M, c.Y - 2.0) + std::pow(c.G, c.Y - 2.0));
    }
    if (m.kind == MeasureKind::NIG) {
        const auto& n = m.nig;
        const double r2 = n.alpha * n.alpha - n.beta * n.beta;
        return n.delta * n.alpha * n.alpha / (r2 * std::sqrt(r2));
    }
    const double inf = std::numeric_limits<double>::infinity();
    return side_integral(Side::Positive, 0.0, inf, 2.0) + side_integral(Side::Negative, 0.0, inf, 2.0);
}

const MeasureTable& LevyMeasure::table() const {
    std::call_once(impl_->table_once, [this] { impl_->table = std::make_unique<MeasureTable>(*this); });
    return *impl_->table;
}

// ---------------------------------------------------------------------------

MeasureTable::MeasureTable(const LevyMeasure& m) : alpha_(m.blumenthal_getoor()) {
    u_lo_ = std::log(w_lo_);
    const double inf = std::numeric_limits<double>::infinity();
    const auto& rule = detail::gauss8();

    for (Side s : {Side::Positive, Side::Negative}) {
        SideData& d = s == Side::Positive ? pos_ : neg_;
        d.g0 = m.small_jump_constant(s);

        double u_hi = 0.0;
        while (u_hi < std::log(1e5)) {
            const double w = std::exp(u_hi);
            if (std::pow(w, 6.0) * m.side_density(s, w) < 1e-250) break;
            u_hi += 0.25;
        }
        d.n = static_cast<int>(std::ceil((u_hi - u_lo_) / h_));
        d.u_hi = u_lo_ + d.n * h_;
        const int n = d.n;

        // Panel integrals of w^p nu for p = 0, 2, 3, 4.
        const double powers[4] = {0.0, 2.0, 3.0, 4.0};
        std::vector<std::array<double, 4>> panel(n);
        for (int k = 0; k < n; ++k) {
            const double a = u_lo_ + k * h_;
            std::array<double, 4> v{};
            for (std::size_t q = 0; q < rule.x.size(); ++q) {
                const double u = a + 0.5 * h_ * (1.0 + rule.x[q]);
                const double w = std::exp(u);
                const double base = rule.w[q] * 0.5 * h_ * m.side_density(s, w) * w;
                for (int p = 0; p < 4; ++p) v[p] += base * std::pow(w, powers[p]);
            }
            panel[k] = v;
        }

        auto nodes_w = [&](int k) { return std::exp(u_lo_ + k * h_); };
        auto store = [&](Curve& c, const std::vector<double>& vals, double p, double sign) {
            c.f.resize(n + 1);
            c.df.resize(n + 1);
            for (int k = 0; k <= n; ++k) {
                const double w = nodes_w(k);
                const double v = std::max(vals[k], 1e-300);
                c.f[k] = std::log(v);
                c.df[k] = vals[k] > 1e-300 ? sign * std::pow(w, p + 1.0) * m.side_density(s, w) / v : 0.0;
            }
        };

        // Tail mass from the top down.
        {
            std::vector<double> vals(n + 1);
            Accumulator acc;
            acc.add(m.side_integral(s, nodes_w(n), inf, 0.0));
            vals[n] = acc.value();
            for (int k = n - 1; k >= 0; --k) {
                acc.add(panel[k][0]);
                vals[k] = acc.value();
            }
            store(d.tail0, vals, 0.0, -1.0);
        }
        std::vector<double> below2, above2;
        for (int p = 2; p <= 4; ++p) {
            std::vector<double> lo(n + 1), hi(n + 1);
            Accumulator acc;
            acc.add(m.side_integral(s, 0.0, w_lo_, p));
            lo[0] = acc.value();
            for (int k = 0; k < n; ++k) {
                acc.add(panel[k][p - 1]);
                lo[k + 1] = acc.value();
            }
            Accumulator acc2;
            acc2.add(m.side_integral(s, nodes_w(n), inf, p));
            hi[n] = acc2.value();
            for (int k = n - 1; k >= 0; --k) {
                acc2.add(panel[k][p - 1]);
                hi[k] = acc2.value();
            }
            store(d.below[p - 2], lo, p, 1.0);
            store(d.above[p - 2], hi, p, -1.0);
            if (p == 2) {
                below2 = lo;
                above2 = hi;
            }
        }
        d.split = nodes_w(n);
        for (int k = 0; k <= n; ++k) {
            if (below2[k] >= above2[k]) {
                d.split = nodes_w(k);
                break;
            }
        }
        const double us = std::log(d.split);
        for (int p = 0; p < 3; ++p) d.at_split[p] = eval(d, d.below[p], us) + eval(d, d.above[p], us);
    }
}

double MeasureTable::eval(const SideData& d, const Curve& c, double u) const {
    double x = (u - u_lo_) / h_;
    int k = static_cast<int>(x);
    if (k >= d.n) k = d.n - 1;
    if (k < 0) k = 0;
    const double t = x - k;
    const double t2 = t * t, s1 = 1.0 - t, s2 = s1 * s1;
    const double v = (1.0 + 2.0 * t) * s2 * c.f[k] + t * s2 * h_ * c.df[k] + t2 * (3.0 - 2.0 * t) * c.f[k + 1] -
                     t2 * s1 * h_ * c.df[k + 1];
    return std::exp(v);
}

double MeasureTable::tail_mass(Side s, double w) const {
    if (!(w > 0)) throw DomainError("tail_mass needs w > 0");
    const SideData& d = side(s);
    const double u = std::log(w);
    if (u < u_lo_) {
        return eval(d, d.tail0, u_lo_) + d.g0 * (std::pow(w, -alpha_) - std::pow(w_lo_, -alpha_)) / alpha_;
    }
    if (u >= d.u_hi) return 0.0;
    return eval(d, d.tail0, u);
}

double MeasureTable::moment_below(Side s, int p, double w) const {
    if (p < 2 || p > 4) throw DomainError("tabulated moments cover p = 2, 3, 4");
    if (w <= 0.0) return 0.0;
    const SideData& d = side(s);
    const double u = std::log(w);
    if (u < u_lo_) return d.g0 * std::pow(w, p - alpha_) / (p - alpha_);
    if (u >= d.u_hi) return eval(d, d.below[p - 2], d.u_hi);
    return eval(d, d.below[p - 2], u);
}

double MeasureTable::moment_above(Side s, int p, double w) const {
    if (p < 2 || p > 4) throw DomainError("tabulated moments cover p = 2, 3, 4");
    const SideData& d = side(s);
    if (w <= 0.0) return eval(d, d.above[p - 2], u_lo_) + eval(d, d.below[p - 2], u_lo_);
    const double u = std::log(w);
    if (u < u_lo_) {
        return eval(d, d.above[p - 2], u_lo_) + eval(d, d.below[p - 2], u_lo_) -
               d.g0 * std::pow(w, p - alpha_) / (p - alpha_);
    }
    if (u >= d.u_hi) return 0.0;
    return eval(d, d.above[p - 2], u);
}

double MeasureTable::mass(Side s, double lo, double hi) const { return tail_mass(s, lo) - tail_mass(s, hi); }

double MeasureTable::moment(Side s, int p, double lo, double hi) const {
    const double w = side(s).split;
    if (hi <= w) return moment_below(s, p, hi) - moment_below(s, p, lo);
    if (lo >= w) return moment_above(s, p, lo) - moment_above(s, p, hi);
    return (moment_below(s, p, w) - moment_below(s, p, lo)) + (moment_above(s, p, w) - moment_above(s, p, hi));
}

double MeasureTable::cumulative_moment(Side s, int p, double w) const {
    const SideData& d = side(s);
    if (w <= d.split) return moment_below(s, p, w);
    return d.at_split[p - 2] - moment_above(s, p, w);
}

}  // namespace qhedge
