#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace qhedge {

enum class MeasureKind { CGMY, NIG, Custom };

/// Half-line of the jump axis. Integrals on the negative side are written in w = -y > 0.
enum class Side { Positive, Negative };

struct CgmyParams {
    double C, G, M, Y;
};

struct NigParams {
    double alpha, beta, delta;
};

struct TailIntegral {
    double value = 0.0;
    bool divergent = false;
};

class MeasureTable;

/// Levy measure nu(dy) = g(y)|y|^{-(1+alpha)} dy. Cheap to copy; instances share
/// immutable state, including the lazily built cumulative table.
class LevyMeasure {
public:
    static LevyMeasure cgmy(double C, double G, double M, double Y);
    static LevyMeasure nig(double alpha, double beta, double delta);
    /// Custom density on y != 0. The index must be declared; it is not estimated.
    static LevyMeasure custom(std::function<double(double)> density, double blumenthal_getoor,
                              std::string label = "custom");

    MeasureKind kind() const;
    std::string describe() const;
    double blumenthal_getoor() const;
    /// True when the index lies in (1, 2), the range covered by the convergence theory.
    bool within_theory() const;
    const CgmyParams& cgmy_params() const;
    const NigParams& nig_params() const;

    double density(double y) const;
    /// nu(w) on the positive side, nu(-w) on the negative side, for w > 0.
    double side_density(Side s, double w) const;
    /// lim_{w -> 0} w^{1+alpha} nu(+-w).
    double small_jump_constant(Side s) const;

    /// Integral of y^power (signed) or |y|^power against nu over [lo, hi].
    double interval_integral(double lo, double hi, int power, bool is_signed) const;
    /// Integral of w^p nu(+-w) over [a, b] with 0 <= a < b <= inf. a = 0 requires p > alpha.
    double side_integral(Side s, double a, double b, double p) const;
    /// Integral of weight(w) nu(+-w) over [a, b]; weight(w) ~ w^order near 0 when a = 0.
    double side_weighted(Side s, double a, double b, const std::function<double(double)>& weight,
                         double order_at_zero = 2.0) const;
    /// Integral of (1 + |y| + tau + tau^2) nu over |y| >= cutoff.
    TailIntegral tail_error_integral(double cutoff, const std::function<double(double)>& tau) const;
    /// Constant completing the driver drift (C Gamma(1-Y)(M^{Y-1}-G^{Y-1}) or beta delta / sqrt(alpha^2-beta^2)).
    double compensator_drift() const;
    /// kappa(u) = int (e^{uy} - 1 - uy) nu(dy).
    double cumulant(double u) const;
    /// int y^2 nu(dy) over the real line.
    double second_moment() const;

    const MeasureTable& table() const;

    struct Impl;

private:
    explicit LevyMeasure(std::shared_ptr<Impl> impl);
    std::shared_ptr<Impl> impl_;
};

/// Cumulative integrals of nu tabulated on a uniform grid in log|y| and
/// interpolated by cubic Hermite splines of their logarithms.
class MeasureTable {
public:
    explicit MeasureTable(const LevyMeasure& m);

    /// int_w^inf nu(+-v) dv.
    double tail_mass(Side s, double w) const;
    /// int_0^w v^p nu(+-v) dv for p in {2, 3, 4}.
    double moment_below(Side s, int p, double w) const;
    /// int_w^inf v^p nu(+-v) dv for p in {2, 3, 4}.
    double moment_above(Side s, int p, double w) const;

    /// nu-mass of [lo, hi] on one side, 0 < lo < hi.
    double mass(Side s, double lo, double hi) const;
    /// int_lo^hi v^p nu(+-v) dv, 0 <= lo < hi, picking the cumulative with less cancellation.
    double moment(Side s, int p, double lo, double hi) const;
    /// Additive cumulative of v^p nu(+-v) from 0 to w: cell moments are differences of
    /// two calls. Below the split point it is moment_below; above it switches to the
    /// upper cumulative so that differences of large-w values keep absolute accuracy.
    double cumulative_moment(Side s, int p, double w) const;

    double min_abscissa() const { return w_lo_; }

private:
    struct Curve {
        std::vector<double> f, df;  // log value and its derivative in u = log w
    };
    struct SideData {
        double g0 = 0.0;
        double u_hi = 0.0;
        int n = 0;
        double split = 0.0;
        double at_split[3] = {0.0, 0.0, 0.0};  // below + above at the split point
        Curve tail0;
        Curve below[3];
        Curve above[3];
    };
    double eval(const SideData& d, const Curve& c, double u) const;
    const SideData& side(Side s) const { return s == Side::Positive ? pos_ : neg_; }

    double alpha_ = 1.5;
    double w_lo_ = 1e-10, u_lo_ = 0.0, h_ = 1.0 / 256.0;
    SideData pos_, neg_;
};

}  // namespace qhedge
