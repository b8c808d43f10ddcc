#include "qhedge/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "qhedge/errors.hpp"
#include "model_detail.hpp"

namespace qhedge {

ForwardCurve::ForwardCurve(std::vector<CurvePiece> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw ConfigError("forward curve has no pieces");
    std::sort(pieces_.begin(), pieces_.end(),
              [](const CurvePiece& a, const CurvePiece& b) { return a.s_start < b.s_start; });
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
        const auto& p = pieces_[k];
        if (!(p.s_end > p.s_start)) throw ConfigError("forward curve piece with s_end <= s_start");
        if (!(p.price > 0)) throw ConfigError("forward curve prices must be positive");
        if (k > 0 && std::abs(pieces_[k - 1].s_end - p.s_start) > 1e-9)
            throw ConfigError("forward curve pieces must partition the delivery window");
    }
    if (!(delivery_start() > 0)) throw ConfigError("delivery must start after t = 0");
}

ForwardCurve ForwardCurve::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open forward curve file " + path);
    std::vector<CurvePiece> pieces;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream is(line);
        CurvePiece p{};
        if (!(is >> p.s_start >> p.s_end >> p.price)) {
            if (pieces.empty()) continue;  // header
            throw ConfigError("malformed forward curve row: " + line);
        }
        pieces.push_back(p);
    }
    return ForwardCurve(std::move(pieces));
}

ForwardCurve ForwardCurve::example_week() {
    const double prices[7] = {80, 90, 70, 90, 80, 70, 60};
    std::vector<CurvePiece> p;
    for (int k = 0; k < 7; ++k) p.push_back({7.0 + k, 8.0 + k, prices[k]});
    return ForwardCurve(std::move(p));
}

double ForwardCurve::average_price() const {
    double s = 0.0;
    for (const auto& p : pieces_) s += p.price * (p.s_end - p.s_start);
    return s / delivery_length();
}

// ---------------------------------------------------------------------------

using detail::expm1_minus_x;

double JumpModel::gamma_yy(double t, double z, double y) const {
    const double h = 1e-5 * std::max(1.0, std::abs(y));
    return (gamma_y(t, z, y + h) - gamma_y(t, z, y - h)) / (2.0 * h);
}

double JumpModel::gamma_inverse(double t, double z, double w) const {
    if (w == 0.0) return 0.0;
    const double sgn = w > 0 ? 1.0 : -1.0;
    double lo = 0.0, hi = sgn * std::abs(w);
    int expansions = 0;
    while ((gamma(t, z, hi) - w) * sgn < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++expansions > 200) throw StencilError("gamma_inverse: bracket expansion failed", t, z, 0);
    }
    if (lo > hi) std::swap(lo, hi);
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (gamma(t, z, mid) < w)
            lo = mid;
        else
            hi = mid;
    }
    double y = 0.5 * (lo + hi);
    const double d = gamma_y(t, z, y);
    if (d > 0 && std::isfinite(d)) {
        const double yn = y - (gamma(t, z, y) - w) / d;
        if (yn >= lo && yn <= hi) y = yn;
    }
    return y;
}

double JumpModel::mu_tilde(double t, double z) const {
    const double inf = std::numeric_limits<double>::infinity();
    const auto& m = measure();
    const double pos =
        m.side_weighted(Side::Positive, 0.0, inf, [&](double w) { return expm1_minus_x(gamma(t, z, w)); });
    const double neg =
        m.side_weighted(Side::Negative, 0.0, inf, [&](double w) { return expm1_minus_x(gamma(t, z, -w)); });
    return mu(t, z) + pos + neg;
}

NodeGeometry JumpModel::node_geometry(double t, double z, double dz, int I, std::span<double> y) const {
    const int half = 2 * I + 1;
    if (static_cast<int>(y.size()) != 2 * half + 1) throw DomainError("node_geometry: wrong buffer size");
    for (int m = -half; m <= half; ++m) {
        try {
            y[m + half] = gamma_inverse(t, z, 0.5 * m * dz);
        } catch (const StencilError& e) {
            throw StencilError(e.what(), t, z, m);
        }
    }
    NodeGeometry g;
    g.g0 = gamma_y(t, z, 0.0);
    g.q0 = 0.5 * gamma_yy(t, z, 0.0);
    g.drift = drift_mode() == DriftMode::Direct ? mu(t, z) : driver_drift(t, z);
    return g;
}

void JumpModel::prepare_level(double, double, double, int, int, int) const {}

NodeGeometry JumpModel::lattice_geometry(double t, double origin, double dz, int j, int I,
                                         std::span<double> y) const {
    return node_geometry(t, origin + j * dz, dz, I, y);
}

// ---------------------------------------------------------------------------

SyntheticModel::SyntheticModel(double mu0, LevyMeasure measure, double horizon)
    : mu0_(mu0), measure_(std::move(measure)), horizon_(horizon) {
    if (!(horizon > 0)) throw ConfigError("horizon must be positive");
}

std::string SyntheticModel::name() const {
    std::ostringstream os;
    os << "synthetic(mu0=" << mu0_ << ", " << measure_.describe() << ")";
    return os.str();
}

double SyntheticModel::tau(double y) const { return std::max(std::abs(y), std::abs(std::expm1(y))); }

double SyntheticModel::mu_tilde(double, double) const {
    if (measure_.kind() == MeasureKind::Custom) return JumpModel::mu_tilde(0.0, 0.0);
    return mu0_ + measure_.cumulant(1.0);
}

double detail::measure_sup_g(const LevyMeasure& m, double y0) {
    const double a = m.blumenthal_getoor();
    double best = std::max(m.small_jump_constant(Side::Positive), m.small_jump_constant(Side::Negative));
    for (int k = 1; k <= 400; ++k) {
        const double w = y0 * k / 400.0;
        best = std::max(best, m.side_density(Side::Positive, w) * std::pow(w, 1.0 + a));
        best = std::max(best, m.side_density(Side::Negative, w) * std::pow(w, 1.0 + a));
    }
    return best;
}

ModelConstants SyntheticModel::constants() const {
    ModelConstants c;
    c.available = true;
    c.m1 = 1.0;
    c.m2 = 0.0;
    c.y0 = 1.0;
    c.Mg = detail::measure_sup_g(measure_, c.y0);
    c.gamma_lipschitz = 1.0;
    return c;
}

NodeGeometry SyntheticModel::node_geometry(double, double, double dz, int I, std::span<double> y) const {
    const int half = 2 * I + 1;
    if (static_cast<int>(y.size()) != 2 * half + 1) throw DomainError("node_geometry: wrong buffer size");
    for (int m = -half; m <= half; ++m) y[m + half] = 0.5 * m * dz;
    return NodeGeometry{1.0, 0.0, mu0_};
}

NodeGeometry SyntheticModel::lattice_geometry(double t, double, double dz, int, int I, std::span<double> y) const {
    return node_geometry(t, 0.0, dz, I, y);
}

ModelPtr synthetic_model(double mu0, const LevyMeasure& measure, double horizon) {
    return std::make_shared<SyntheticModel>(mu0, measure, horizon);
}

}  // namespace qhedge
