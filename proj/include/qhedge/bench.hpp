#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qhedge/solve.hpp"

namespace qhedge {

enum class Axis { Space, Time };
std::string to_string(Axis a);

/// Pairwise orders k_i = log(|e_{i-1}| / |e_i|) / log(r_i / r_{i-1}) and a least-squares slope.
struct OrderFit {
    std::vector<std::optional<double>> pairwise;  ///< one entry per input row; first is always empty
    std::optional<double> slope;                  ///< -d log|e| / d log r over the valid rows
    bool oscillating = false;                     ///< error signs alternate; orders suppressed
    int valid_rows = 0;
};

/// Rows with zero or non-finite error are skipped. A pair gets an order only when both errors are nonzero,
/// have the same sign and decrease in magnitude, and the resolutions differ.
OrderFit order_fit(const std::vector<std::pair<double, double>>& errors);

struct SweepSpec {
    double half_width = 10.0;
    double horizon = 7.0;
    double origin = 0.0;
    int N = 800;           ///< pinned for time sweeps
    int NT = 800;          ///< pinned for space sweeps
    double I_ratio = 0.2;  ///< I = round(I_ratio N)
    int kappa = 1;
    double probe_offset = 0.0;  ///< probe z minus origin, rounded to the nearest node
    SolveConfig solve;
};

struct SweepRow {
    int resolution = 0;
    bool feasible = true;
    std::string note;
    double a = 0.0, b = 0.0, x_star = 0.0;
    double err_a = 0.0, err_b = 0.0, err_x = 0.0;  ///< value minus reference
    std::optional<double> k_a, k_b, k_x;
    double seconds = 0.0;
};

struct ConvergenceTable {
    Axis axis = Axis::Space;
    int pinned = 0;      ///< NT for space sweeps, N for time sweeps
    int reference = 0;   ///< resolution of the reference run
    std::vector<SweepRow> rows;  ///< ascending, reference last
    OrderFit fit_a, fit_b, fit_x;
};

SpaceTimeGrid sweep_grid(const SweepSpec& spec, Axis axis, int resolution);

/// Solves at every resolution and at the reference (the largest), reporting the probe node at t = 0.
/// Runs failing the CFL condition are marked infeasible; the sweep continues.
ConvergenceTable run_sweep(const JumpModel& model, const SweepSpec& spec, Axis axis, std::vector<int> resolutions);

/// Columns: axis,resolution,feasible,a,err_a,k_a,b,err_b,k_b,x_star,err_x,k_x,seconds
void write_table_csv(std::ostream& os, const ConvergenceTable& t);
void write_table_text(std::ostream& os, const ConvergenceTable& t);

}  // namespace qhedge
