#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qhedge/disc.hpp"
#include "qhedge/model.hpp"
#include "qhedge/solve.hpp"

namespace qhedge {

/// Fully resolved run description. Monetary values in EUR, times in days.
struct RunConfig {
    // [model]
    std::string kind = "electricity";  ///< electricity | synthetic
    std::string measure = "cgmy";      ///< cgmy | nig
    double C = 0.01, G = 1.1, M = 1.1, Y = 1.9;
    double nig_alpha = 6.23, nig_beta = 0.06, nig_delta = 0.1027;
    std::string curve = "example_week";  ///< "example_week" or a CSV path
    double c = 0.1;
    double trend = 0.01;
    bool martingale_mode = false;
    double mu0 = 0.0;      ///< synthetic drift
    bool compensate = false;  ///< synthetic: mu0 = -int (e^y - 1 - y) nu, so e^Z is a martingale
    double horizon = 7.0;  ///< synthetic horizon; electricity uses the delivery start

    // [grid]
    double half_width = 10.0;
    std::optional<int> N;
    std::optional<double> dz;
    std::optional<int> NT;
    std::optional<double> dt;
    std::optional<int> I;
    int kappa = 1;

    // [solve]
    Scheme scheme = Scheme::Imex;
    double pi_bar = 1e6;
    std::string payoff = "call";  ///< call | put | none
    std::optional<double> moneyness;
    std::optional<double> strike;
    bool mollify = false;

    // [simul]
    int n_paths = 10000;
    std::uint64_t seed = 1;
    int substeps = 0;

    // [output]
    std::string out_dir = "out";
    std::string format = "both";  ///< csv | json | both
    int threads = 1;

    std::string source_path;  ///< file the config was read from, for relative paths
};

/// INI text with sections [model] [grid] [solve] [simul] [output]. Unknown keys are a ConfigError.
RunConfig parse_config(std::istream& is, const std::string& source_path = "");
RunConfig load_config(const std::string& path);
/// QHEDGE_OUT_DIR and QHEDGE_THREADS override the output directory and the thread count.
void apply_env_overrides(RunConfig& cfg);

ModelPtr make_model(const RunConfig& cfg, bool martingale = false);
/// Exactly one of N, dz and one of NT, dt must be set; the derived value is rounded up to a whole count.
SpaceTimeGrid make_grid(const RunConfig& cfg, const JumpModel& model);
/// Strike in EUR: the given strike, or moneyness times the at-the-money futures price e^{Phi(0)}.
double resolved_strike(const RunConfig& cfg, const JumpModel& model);
SolveConfig make_solve_config(const RunConfig& cfg, const JumpModel& model, const SpaceTimeGrid& grid);

/// Canonical key = value listing of every resolved field, grid and strike included.
std::string canonical_text(const RunConfig& cfg, const JumpModel& model, const SpaceTimeGrid& grid);
/// Hex SHA-256 of canonical_text.
std::string config_hash(const std::string& canonical);

enum class CheckStatus { Pass, Fail, OutOfTheory };
std::string to_string(CheckStatus s);

struct ValidationCheck {
    std::string name;
    CheckStatus status = CheckStatus::Pass;
    bool hard = false;  ///< a failure blocks solve commands
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    CflReport cfl;
    bool blocked() const;
};

/// Sampled assumption checks: gamma monotone in y, Phi' bounds, tau^4 tail integrability, the index range,
/// the CFL margin of the configured scheme and the domain margin (N - I) dz - mu_bar T > 0.
ValidationReport validate(const RunConfig& cfg, const JumpModel& model, const SpaceTimeGrid& grid);
void write_validation(std::ostream& os, const ValidationReport& r);

}  // namespace qhedge
