#include "qhedge/config.hpp"

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "qhedge/errors.hpp"

namespace qhedge {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"model",
         {"kind", "measure", "C", "G", "M", "Y", "alpha", "beta", "delta", "curve", "c", "trend", "martingale_mode",
          "mu0", "compensate", "horizon"}},
        {"grid", {"half_width", "N", "dz", "NT", "dt", "I", "kappa"}},
        {"solve", {"scheme", "pi_bar", "payoff", "moneyness", "strike", "mollify"}},
        {"simul", {"n_paths", "seed", "substeps"}},
        {"output", {"dir", "format", "threads"}},
    };
    return keys;
}

template <class T>
void read(const pt::ptree& tree, const std::string& key, T& out) {
    if (auto v = tree.get_optional<std::string>(key)) {
        try {
            out = tree.get<T>(key);
        } catch (const pt::ptree_bad_data&) {
            throw ConfigError("bad value '" + *v + "' for " + key);
        }
    }
}

template <class T>
void read(const pt::ptree& tree, const std::string& key, std::optional<T>& out) {
    T v{};
    if (tree.get_optional<std::string>(key)) {
        read(tree, key, v);
        out = v;
    }
}

void read_bool(const pt::ptree& tree, const std::string& key, bool& out) {
    if (auto v = tree.get_optional<std::string>(key)) {
        if (*v == "true" || *v == "1" || *v == "yes") out = true;
        else if (*v == "false" || *v == "0" || *v == "no") out = false;
        else throw ConfigError("bad boolean '" + *v + "' for " + key);
    }
}

}  // namespace

RunConfig parse_config(std::istream& is, const std::string& source_path) {
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("cannot parse config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        auto it = known_keys().find(section);
        if (it == known_keys().end()) throw ConfigError("unknown section [" + section + "]");
        for (const auto& [key, _] : body)
            if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }
    RunConfig c;
    c.source_path = source_path;
    read(tree, "model.kind", c.kind);
    read(tree, "model.measure", c.measure);
    read(tree, "model.C", c.C);
    read(tree, "model.G", c.G);
    read(tree, "model.M", c.M);
    read(tree, "model.Y", c.Y);
    read(tree, "model.alpha", c.nig_alpha);
    read(tree, "model.beta", c.nig_beta);
    read(tree, "model.delta", c.nig_delta);
    read(tree, "model.curve", c.curve);
    read(tree, "model.c", c.c);
    read(tree, "model.trend", c.trend);
    read_bool(tree, "model.martingale_mode", c.martingale_mode);
    read(tree, "model.mu0", c.mu0);
    read_bool(tree, "model.compensate", c.compensate);
    read(tree, "model.horizon", c.horizon);

    read(tree, "grid.half_width", c.half_width);
    read(tree, "grid.N", c.N);
    read(tree, "grid.dz", c.dz);
    read(tree, "grid.NT", c.NT);
    read(tree, "grid.dt", c.dt);
    read(tree, "grid.I", c.I);
    read(tree, "grid.kappa", c.kappa);

    std::string scheme = to_string(c.scheme);
    read(tree, "solve.scheme", scheme);
    c.scheme = scheme_from_string(scheme);
    read(tree, "solve.pi_bar", c.pi_bar);
    read(tree, "solve.payoff", c.payoff);
    read(tree, "solve.moneyness", c.moneyness);
    read(tree, "solve.strike", c.strike);
    read_bool(tree, "solve.mollify", c.mollify);

    read(tree, "simul.n_paths", c.n_paths);
    read(tree, "simul.seed", c.seed);
    read(tree, "simul.substeps", c.substeps);

    read(tree, "output.dir", c.out_dir);
    read(tree, "output.format", c.format);
    read(tree, "output.threads", c.threads);

    if (c.kind != "electricity" && c.kind != "synthetic") throw ConfigError("model.kind must be electricity or synthetic");
    if (c.measure != "cgmy" && c.measure != "nig") throw ConfigError("model.measure must be cgmy or nig");
    if (c.N.has_value() == c.dz.has_value()) throw ConfigError("give exactly one of grid.N and grid.dz");
    if (c.NT.has_value() == c.dt.has_value()) throw ConfigError("give exactly one of grid.NT and grid.dt");
    if (c.payoff != "call" && c.payoff != "put" && c.payoff != "none")
        throw ConfigError("solve.payoff must be call, put or none");
    if (c.payoff != "none" && c.moneyness.has_value() == c.strike.has_value())
        throw ConfigError("give exactly one of solve.moneyness and solve.strike");
    if (c.format != "csv" && c.format != "json" && c.format != "both")
        throw ConfigError("output.format must be csv, json or both");
    if (c.n_paths <= 0) throw ConfigError("simul.n_paths must be positive");
    if (c.threads <= 0) throw ConfigError("output.threads must be positive");
    if (!(c.half_width > 0)) throw ConfigError("grid.half_width must be positive");
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    return parse_config(is, path);
}

void apply_env_overrides(RunConfig& cfg) {
    if (const char* d = std::getenv("QHEDGE_OUT_DIR"); d && *d) cfg.out_dir = d;
    if (const char* t = std::getenv("QHEDGE_THREADS"); t && *t) {
        try {
            cfg.threads = std::stoi(t);
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad QHEDGE_THREADS '") + t + "'");
        }
        if (cfg.threads <= 0) throw ConfigError("QHEDGE_THREADS must be positive");
    }
}

namespace {

LevyMeasure make_measure(const RunConfig& c) {
    if (c.measure == "cgmy") return LevyMeasure::cgmy(c.C, c.G, c.M, c.Y);
    return LevyMeasure::nig(c.nig_alpha, c.nig_beta, c.nig_delta);
}

ForwardCurve make_curve(const RunConfig& c) {
    if (c.curve == "example_week") return ForwardCurve::example_week();
    std::filesystem::path p(c.curve);
    if (p.is_relative() && !c.source_path.empty()) p = std::filesystem::path(c.source_path).parent_path() / p;
    return ForwardCurve::load_csv(p.string());
}

}  // namespace

ModelPtr make_model(const RunConfig& c, bool martingale) {
    const LevyMeasure m = make_measure(c);
    if (c.kind == "synthetic") {
        const double mu0 = (martingale || c.compensate) ? -m.cumulant(1.0) : c.mu0;
        return synthetic_model(mu0, m, c.horizon);
    }
    return std::make_shared<ElectricityModel>(make_curve(c), c.c, c.trend, m, martingale || c.martingale_mode);
}

SpaceTimeGrid make_grid(const RunConfig& c, const JumpModel& model) {
    const int N = c.N ? *c.N : static_cast<int>(std::ceil(c.half_width / *c.dz - 1e-9));
    const double T = model.horizon();
    const int NT = c.NT ? *c.NT : static_cast<int>(std::ceil(T / *c.dt - 1e-9));
    if (N <= 0 || NT <= 0) throw ConfigError("grid sizes must be positive");
    SpaceTimeGrid g = SpaceTimeGrid::make(c.half_width, N, T, NT, c.I ? *c.I : -1, c.kappa, model.reference_z());
    g.validate();
    return g;
}

double resolved_strike(const RunConfig& c, const JumpModel& model) {
    if (c.strike) return *c.strike;
    return c.moneyness.value_or(1.0) * std::exp(model.reference_z());
}

SolveConfig make_solve_config(const RunConfig& c, const JumpModel& model, const SpaceTimeGrid& grid) {
    SolveConfig s;
    s.scheme = c.scheme;
    s.pi_bar = c.pi_bar;
    s.threads = c.threads;
    if (c.payoff != "none") {
        const double K = resolved_strike(c, model);
        s.payoff = c.payoff == "call" ? call_payoff(K) : put_payoff(K);
        if (c.mollify) s.payoff = mollified(s.payoff, 2.0 * grid.dz);
    }
    return s;
}

std::string canonical_text(const RunConfig& c, const JumpModel& model, const SpaceTimeGrid& g) {
    std::ostringstream os;
    auto kv = [&](const std::string& k, const auto& v) { os << k << " = " << fmt::format("{}", v) << '\n'; };
    os << "[model]\n";
    kv("kind", c.kind);
    kv("name", model.name());
    kv("measure", model.measure().describe());
    if (c.kind == "electricity") {
        kv("curve", c.curve);
        kv("c", c.c);
        kv("trend", c.trend);
        kv("martingale_mode", c.martingale_mode);
    } else {
        kv("mu0", c.mu0);
        kv("compensate", c.compensate);
    }
    kv("horizon_days", model.horizon());
    os << "[grid]\n";
    kv("half_width", c.half_width);
    kv("N", g.N);
    kv("dz", g.dz);
    kv("NT", g.NT);
    kv("dt", g.dt);
    kv("I", g.I);
    kv("kappa", g.kappa);
    kv("origin", g.origin);
    os << "[solve]\n";
    kv("scheme", to_string(c.scheme));
    kv("pi_bar", c.pi_bar);
    kv("payoff", c.payoff);
    if (c.payoff != "none") kv("strike_eur", resolved_strike(c, model));
    kv("mollify", c.mollify);
    os << "[simul]\n";
    kv("n_paths", c.n_paths);
    kv("seed", c.seed);
    kv("substeps", c.substeps);
    return os.str();
}

std::string config_hash(const std::string& canonical) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
    return hex;
}

std::string to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "pass";
        case CheckStatus::Fail: return "fail";
        case CheckStatus::OutOfTheory: return "out-of-theory";
    }
    return "?";
}

bool ValidationReport::blocked() const {
    for (const auto& c : checks)
        if (c.hard && c.status == CheckStatus::Fail) return true;
    return false;
}

ValidationReport validate(const RunConfig& cfg, const JumpModel& model, const SpaceTimeGrid& grid) {
    ValidationReport rep;
    const LevyMeasure& nu = model.measure();
    const double T = grid.horizon();
    std::vector<double> ts = {0.0, 0.5 * T, T};
    std::vector<double> zs;
    for (int k = -4; k <= 4; ++k) zs.push_back(grid.origin + k * 0.2 * grid.N * grid.dz);

    {
        ValidationCheck ch{"index range", CheckStatus::Pass, false, ""};
        const double a = nu.blumenthal_getoor();
        ch.detail = fmt::format("alpha = {}", a);
        if (!nu.within_theory()) {
            ch.status = CheckStatus::OutOfTheory;
            ch.detail += ", outside (1, 2): the convergence results do not apply formally";
        }
        rep.checks.push_back(ch);
    }
    {
        ValidationCheck ch{"gamma monotone in y", CheckStatus::Pass, false, ""};
        int bad = 0, total = 0;
        for (double t : ts)
            for (double z : zs)
                for (int k = -40; k <= 40; ++k) {
                    if (k == 0) continue;
                    const double y = k * 0.05;
                    ++total;
                    try {
                        if (!(model.gamma_y(t, z, y) > 0)) ++bad;
                    } catch (const Error&) {
                        ++bad;
                    }
                }
        ch.detail = fmt::format("{} of {} samples with gamma_y <= 0", bad, total);
        if (bad) ch.status = CheckStatus::Fail;
        rep.checks.push_back(ch);
    }
    if (const auto* em = dynamic_cast<const ElectricityModel*>(&model)) {
        ValidationCheck ch{"Phi' bounds", CheckStatus::Pass, false, ""};
        const auto& curve = em->curve();
        const double c = em->mean_reversion();
        const double lo = std::exp(-c * (curve.delivery_start() + curve.delivery_length()));
        const double hi = std::exp(-c * curve.delivery_start());
        double mn = 1e300, mx = -1e300;
        for (double z : zs) {
            const double d = em->phi_derivative(em->phi_inverse(z));
            mn = std::min(mn, d);
            mx = std::max(mx, d);
        }
        ch.detail = fmt::format("Phi' in [{:.4g}, {:.4g}], bounds [{:.4g}, {:.4g}]", mn, mx, lo, hi);
        if (mn < lo * (1 - 1e-9) || mx > hi * (1 + 1e-9)) ch.status = CheckStatus::Fail;
        rep.checks.push_back(ch);
    }
    {
        ValidationCheck ch{"tau^4 tail integrability", CheckStatus::Pass, false, ""};
        const TailIntegral ti = nu.tail_error_integral(1.0, [&](double y) {
            const double tv = model.tau(y);
            return tv * tv;
        });
        if (ti.divergent) {
            ch.status = CheckStatus::OutOfTheory;
            ch.detail = "int_{|y|>1} tau^4 nu diverges; jumps beyond the stencil are truncated";
        } else {
            ch.detail = fmt::format("int_{{|y|>1}} (1 + |y| + tau^2 + tau^4) nu = {:.6g}", ti.value);
        }
        rep.checks.push_back(ch);
    }
    rep.cfl = cfl_bound(model, grid, {0, std::max(grid.NT - 1, 0)}, cfg.threads);
    {
        ValidationCheck ch{"CFL margin", CheckStatus::Pass, true, ""};
        const bool expl = cfg.scheme == Scheme::Explicit;
        const double bound = expl ? rep.cfl.explicit_dt : rep.cfl.imex_dt;
        const int node = expl ? rep.cfl.explicit_node : rep.cfl.imex_node;
        ch.detail = fmt::format("{} scheme: dt = {:.6g}, bound {:.6g} (binding node {})", to_string(cfg.scheme),
                                grid.dt, bound, node);
        if (grid.dt > bound) ch.status = CheckStatus::Fail;
        rep.checks.push_back(ch);
    }
    {
        ValidationCheck ch{"domain margin", CheckStatus::Pass, true, ""};
        const double m = grid.domain_margin(rep.cfl.mu_bar);
        ch.detail = fmt::format("(N - I) dz - mu_bar T = {:.6g} (mu_bar = {:.6g})", m, rep.cfl.mu_bar);
        if (!(m > 0)) ch.status = CheckStatus::Fail;
        rep.checks.push_back(ch);
    }
    return rep;
}

void write_validation(std::ostream& os, const ValidationReport& r) {
    for (const auto& c : r.checks)
        os << fmt::format("{:<26} {:<14} {}{}\n", c.name, to_string(c.status), c.detail,
                          c.hard && c.status == CheckStatus::Fail ? " [blocking]" : "");
    if (r.cfl.apriori_dt) os << fmt::format("a-priori time-step bound: {:.6g}\n", *r.cfl.apriori_dt);
}

}  // namespace qhedge
