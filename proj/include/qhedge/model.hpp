#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "qhedge/levy.hpp"

namespace qhedge {

struct CurvePiece {
    double s_start, s_end, price;
};

/// Piecewise-constant forward curve psi(0, s) over the delivery window [T, T + d] (days, EUR).
class ForwardCurve {
public:
    explicit ForwardCurve(std::vector<CurvePiece> pieces);
    /// CSV with header and columns s_start, s_end, price.
    static ForwardCurve load_csv(const std::string& path);
    /// Seven daily prices 80, 90, 70, 90, 80, 70, 60 delivered over days [7, 14].
    static ForwardCurve example_week();

    const std::vector<CurvePiece>& pieces() const { return pieces_; }
    double delivery_start() const { return pieces_.front().s_start; }
    double delivery_length() const { return pieces_.back().s_end - pieces_.front().s_start; }
    double average_price() const;

private:
    std::vector<CurvePiece> pieces_;
};

enum class DriftMode {
    Direct,  ///< mu is available in closed form
    Driver,  ///< mu = driver drift + int (gamma - y gamma_y(0)) nu, the integral taken on the stencil
};

/// Local quantities the discretizer needs besides the integration points.
struct NodeGeometry {
    double g0 = 1.0;     ///< gamma_y(t, z, 0)
    double q0 = 0.0;     ///< gamma_yy(t, z, 0) / 2
    double drift = 0.0;  ///< mu (Direct) or the driver drift (Driver)
};

/// Constants of the regularity assumptions used by the a-priori time-step bound.
struct ModelConstants {
    bool available = false;
    double m1 = 0.0;  ///< inf |gamma_y| near y = 0
    double m2 = 0.0;  ///< sup |gamma_yy| near y = 0
    double y0 = 1.0;
    double Mg = 0.0;             ///< sup of g(y) = nu(y)|y|^{1+alpha} on |y| <= y0
    double gamma_lipschitz = 1;  ///< sup |gamma(t,z,y)| <= gamma_lipschitz |y|
};

/// Pure-jump Markov model dZ = mu dt + int gamma(t, Z-, y) (J - nu)(dy dt).
/// Implementations are immutable apart from the per-level lattice cache, which is
/// written only by prepare_level and must not be refreshed while other threads read it.
class JumpModel {
public:
    virtual ~JumpModel() = default;

    virtual std::string name() const = 0;
    virtual double horizon() const = 0;
    virtual const LevyMeasure& measure() const = 0;

    virtual double mu(double t, double z) const = 0;
    virtual double gamma(double t, double z, double y) const = 0;
    virtual double gamma_y(double t, double z, double y) const = 0;
    virtual double gamma_yy(double t, double z, double y) const;
    /// y with gamma(t, z, y) = w, by bracketing and bisection with a Newton polish.
    virtual double gamma_inverse(double t, double z, double w) const;
    virtual double tau(double y) const = 0;
    /// mu + int (e^gamma - 1 - gamma) nu.
    virtual double mu_tilde(double t, double z) const;

    /// Natural grid centre (log of the at-the-money level).
    virtual double reference_z() const { return 0.0; }
    virtual DriftMode drift_mode() const { return DriftMode::Direct; }
    virtual double driver_drift(double t, double z) const { return mu(t, z); }
    virtual ModelConstants constants() const { return {}; }

    /// Integration points y(m) with gamma(t, z, y(m)) = m dz / 2 for m = -(2I+1)..(2I+1),
    /// written to y[m + 2I + 1].
    virtual NodeGeometry node_geometry(double t, double z, double dz, int I, std::span<double> y) const;
    /// Prepares a cache for nodes z_j = origin + j dz, jmin <= j <= jmax, at time t.
    virtual void prepare_level(double t, double origin, double dz, int jmin, int jmax, int I) const;
    /// node_geometry at lattice node j; valid after prepare_level with matching arguments.
    virtual NodeGeometry lattice_geometry(double t, double origin, double dz, int j, int I,
                                          std::span<double> y) const;
};

using ModelPtr = std::shared_ptr<const JumpModel>;

/// Additive model gamma = y, mu = mu0.
class SyntheticModel final : public JumpModel {
public:
    SyntheticModel(double mu0, LevyMeasure measure, double horizon);

    std::string name() const override;
    double horizon() const override { return horizon_; }
    const LevyMeasure& measure() const override { return measure_; }
    double mu(double, double) const override { return mu0_; }
    double gamma(double, double, double y) const override { return y; }
    double gamma_y(double, double, double) const override { return 1.0; }
    double gamma_yy(double, double, double) const override { return 0.0; }
    double gamma_inverse(double, double, double w) const override { return w; }
    double tau(double y) const override;
    double mu_tilde(double t, double z) const override;
    ModelConstants constants() const override;
    NodeGeometry node_geometry(double t, double z, double dz, int I, std::span<double> y) const override;
    void prepare_level(double, double, double, int, int, int) const override {}
    NodeGeometry lattice_geometry(double t, double origin, double dz, int j, int I,
                                  std::span<double> y) const override;

private:
    double mu0_;
    LevyMeasure measure_;
    double horizon_;
};

ModelPtr synthetic_model(double mu0, const LevyMeasure& measure, double horizon = 1.0);

/// Value and derivatives of Phi at one point; Phi is the cumulant generating
/// function of l(s) = e^{-cs} under the curve weights, so derivatives are cumulants.
struct PhiValue {
    double value = 0.0;
    double d1 = 0.0, d2 = 0.0, d3 = 0.0, d4 = 0.0;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;  ///< raw moments of l under the tilted weights
};

/// Electricity futures model: Z = log F with F = (1/d) int psi(0,s) exp(M(t,s) + e^{-cs} A_t) ds and
/// A an OU factor driven by a Levy process. M = 0 unless martingale_mode.
class ElectricityModel final : public JumpModel {
public:
    ElectricityModel(ForwardCurve curve, double c, double trend, LevyMeasure measure, bool martingale_mode,
                     int nodes_per_piece = 20);

    std::string name() const override;
    double horizon() const override { return curve_.delivery_start(); }
    const LevyMeasure& measure() const override { return measure_; }
    double mu(double t, double z) const override;
    double gamma(double t, double z, double y) const override;
    double gamma_y(double t, double z, double y) const override;
    double gamma_yy(double t, double z, double y) const override;
    double gamma_inverse(double t, double z, double w) const override;
    double tau(double y) const override;
    double mu_tilde(double t, double z) const override;
    double reference_z() const override { return phi(0.0); }
    DriftMode drift_mode() const override { return DriftMode::Driver; }
    double driver_drift(double t, double z) const override;
    ModelConstants constants() const override;
    NodeGeometry node_geometry(double t, double z, double dz, int I, std::span<double> y) const override;
    void prepare_level(double t, double origin, double dz, int jmin, int jmax, int I) const override;
    NodeGeometry lattice_geometry(double t, double origin, double dz, int j, int I,
                                  std::span<double> y) const override;

    const ForwardCurve& curve() const { return curve_; }
    double mean_reversion() const { return c_; }
    bool martingale_mode() const { return martingale_; }
    /// Total drift of the driver: trend plus the measure's compensator constant.
    double zeta() const { return zeta_; }

    double phi(double A, double t = 0.0) const;
    double phi_derivative(double A, double t = 0.0) const;
    double phi_second(double A, double t = 0.0) const;
    PhiValue phi_all(double A, double t = 0.0) const;
    /// A with |phi(A, t) - z| <= 1e-10; RangeError after 200 bracket expansions.
    double phi_inverse(double z, double t = 0.0) const;
    double phi_inverse(double z, double t, double guess) const;
    /// M(t, s) = -int_0^t psi_L(e^{-c(s-r)}) dr with psi_L(u) = zeta u + kappa(u).
    double martingale_drift(double t, double s) const;

private:
    struct Coefs {
        double t = 0.0;
        std::vector<double> logc;   // log(weight * price / d) + M(t, s_q)
        std::vector<double> kappa;  // kappa(l_q e^{ct}), martingale drift terms
    };
    std::shared_ptr<const Coefs> coefs_at(double t) const;
    std::shared_ptr<const Coefs> build_coefs(double t) const;
    PhiValue eval(const Coefs& c, double A) const;
    double inverse(const Coefs& c, double z, double guess) const;
    double driver_drift_at(const Coefs& c, double t, double A) const;

    ForwardCurve curve_;
    double c_, trend_, zeta_;
    LevyMeasure measure_;
    bool martingale_;
    std::vector<double> s_, l_, base_logc_;

    mutable std::mutex coef_mutex_;
    mutable std::shared_ptr<const Coefs> coef_cache_[2];
    mutable int coef_next_ = 0;

    struct LatticeCache {
        bool valid = false;
        double t = 0.0, origin = 0.0, dz = 0.0;
        int kmin = 0, kmax = 0;
        std::shared_ptr<const Coefs> coefs;
        std::vector<double> A, d1, d2;  // indexed by half-step k - kmin
    };
    mutable LatticeCache lattice_;
    mutable std::mutex lattice_mutex_;
};

}  // namespace qhedge
