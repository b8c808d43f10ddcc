#pragma once

// Internal quadrature helpers shared by levy and model.

#include <array>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace qhedge::detail {

/// Gauss-Legendre rule on [-1, 1] expanded from boost's half-range tables.
struct GaussRule {
    std::vector<double> x, w;
};

template <unsigned N>
GaussRule make_gauss_rule() {
    using G = boost::math::quadrature::gauss<double, N>;
    const auto& a = G::abscissa();
    const auto& wt = G::weights();
    GaussRule r;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k] == 0.0) {
            r.x.push_back(0.0);
            r.w.push_back(wt[k]);
        } else {
            r.x.push_back(-a[k]);
            r.w.push_back(wt[k]);
            r.x.push_back(a[k]);
            r.w.push_back(wt[k]);
        }
    }
    return r;
}

inline const GaussRule& gauss8() {
    static const GaussRule r = make_gauss_rule<8>();
    return r;
}

inline const GaussRule& gauss20() {
    static const GaussRule r = make_gauss_rule<20>();
    return r;
}

template <class F>
double gauss_integrate(const GaussRule& rule, F&& f, double a, double b) {
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t k = 0; k < rule.x.size(); ++k) s += rule.w[k] * f(mid + half * rule.x[k]);
    return s * half;
}

/// Five-point trapezoid over [a, b]: h/4 (f0/2 + f1 + f2 + f3 + f4/2) with h = b - a.
template <class F>
double five_point_trapezoid(F&& f, double a, double b) {
    const double q = 0.25 * (b - a);
    return q * (0.5 * f(a) + f(a + q) + f(a + 2 * q) + f(a + 3 * q) + 0.5 * f(b));
}

/// Dyadic refinement of the five-point trapezoid with Richardson extrapolation.
/// Stops when successive extrapolated estimates differ by less than rel_tol.
template <class F>
double refined_trapezoid(F&& f, double a, double b, double rel_tol = 1e-13, int max_levels = 20) {
    constexpr int kMax = 24;
    std::array<double, kMax> prev{}, cur{};
    int n = 4;
    double h = (b - a) / n;
    const double ends = 0.5 * (f(a) + f(b));
    double inner = f(a + h) + f(a + 2 * h) + f(a + 3 * h);
    prev[0] = h * (ends + inner);
    if (max_levels > kMax - 1) max_levels = kMax - 1;
    for (int k = 1; k <= max_levels; ++k) {
        h *= 0.5;
        double add = 0.0;
        for (int i = 0; i < n; ++i) add += f(a + (2 * i + 1) * h);
        inner += add;
        n *= 2;
        cur[0] = h * (ends + inner);
        double p4 = 1.0;
        for (int m = 1; m <= k; ++m) {
            p4 *= 4.0;
            cur[m] = cur[m - 1] + (cur[m - 1] - prev[m - 1]) / (p4 - 1.0);
        }
        const double diff = std::abs(cur[k] - prev[k - 1]);
        if (k >= 2 && diff <= rel_tol * std::abs(cur[k]) + 1e-300) return cur[k];
        prev = cur;
    }
    return prev[max_levels];
}

}  // namespace qhedge::detail
