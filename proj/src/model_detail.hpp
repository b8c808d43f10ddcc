#pragma once

// Internal helpers shared by the model implementations.

#include <cmath>

#include "qhedge/levy.hpp"

namespace qhedge::detail {

inline double expm1_minus_x(double x) {
    if (std::abs(x) < 1e-3) {
        const double x2 = x * x;
        return x2 * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x / 120.0)));
    }
    return std::expm1(x) - x;
}

/// Sampled sup of nu(y)|y|^{1+alpha} over 0 < |y| <= y0.
double measure_sup_g(const LevyMeasure& m, double y0);

}  // namespace qhedge::detail
