#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "qhedge/errors.hpp"
#include "qhedge/solve.hpp"

namespace qhedge {

namespace {

constexpr char kMagic[8] = {'Q', 'H', 'S', 'U', 'R', 'F', '0', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool get(std::istream& is, T& v) {
    return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

void put_surface(std::ostream& os, const Surface& s) {
    for (int n : s.levels()) {
        auto r = s.row(n);
        os.write(reinterpret_cast<const char*>(r.data()), static_cast<std::streamsize>(r.size() * sizeof(double)));
    }
}

bool get_surface(std::istream& is, Surface& s) {
    for (int n : s.levels()) {
        auto r = s.row(n);
        if (!is.read(reinterpret_cast<char*>(r.data()), static_cast<std::streamsize>(r.size() * sizeof(double))))
            return false;
    }
    return true;
}

}  // namespace

void write_surfaces_binary(const std::string& path, const SolveResult& r, const std::string& key) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.write(kMagic, sizeof kMagic);
    put(os, static_cast<std::uint32_t>(key.size()));
    os.write(key.data(), static_cast<std::streamsize>(key.size()));
    const auto& g = r.grid;
    put(os, g.dz);
    put(os, static_cast<std::int32_t>(g.N));
    put(os, g.dt);
    put(os, static_cast<std::int32_t>(g.NT));
    put(os, static_cast<std::int32_t>(g.I));
    put(os, static_cast<std::int32_t>(g.kappa));
    put(os, g.origin);
    const auto& lv = r.a.levels();
    put(os, static_cast<std::uint32_t>(lv.size()));
    for (int n : lv) put(os, static_cast<std::int32_t>(n));
    const auto& plv = r.pi_star.levels();
    put(os, static_cast<std::uint32_t>(plv.size()));
    for (int n : plv) put(os, static_cast<std::int32_t>(n));
    for (const Surface* s : {&r.a, &r.b, &r.c, &r.x_star, &r.pi_star, &r.vartheta}) put_surface(os, *s);
    const auto& d = r.diagnostics;
    put(os, d.node_updates);
    put(os, d.clamp_count);
    put(os, d.min_G);
    put(os, d.max_dt_rate);
    put(os, d.mu_bar);
    put(os, static_cast<std::uint8_t>(d.scheme == "explicit" ? 0 : 1));
    if (!os) throw std::runtime_error("failed writing " + path);
}

std::optional<SolveResult> read_surfaces_binary(const std::string& path, const std::string& key) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8];
    if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) return std::nullopt;
    std::uint32_t klen = 0;
    if (!get(is, klen) || klen > 4096) return std::nullopt;
    std::string k(klen, '\0');
    if (!is.read(k.data(), klen) || k != key) return std::nullopt;
    SolveResult r;
    std::int32_t N, NT, I, kappa;
    auto& g = r.grid;
    if (!get(is, g.dz) || !get(is, N) || !get(is, g.dt) || !get(is, NT) || !get(is, I) || !get(is, kappa) ||
        !get(is, g.origin))
        return std::nullopt;
    g.N = N;
    g.NT = NT;
    g.I = I;
    g.kappa = kappa;
    auto read_levels = [&](std::vector<int>& lv) {
        std::uint32_t cnt = 0;
        if (!get(is, cnt) || cnt > static_cast<std::uint32_t>(NT) + 1) return false;
        lv.resize(cnt);
        for (auto& n : lv) {
            std::int32_t v;
            if (!get(is, v)) return false;
            n = v;
        }
        return true;
    };
    std::vector<int> lv, plv;
    if (!read_levels(lv) || !read_levels(plv)) return std::nullopt;
    r.a = Surface(N, NT, lv);
    r.b = Surface(N, NT, lv);
    r.c = Surface(N, NT, lv);
    r.x_star = Surface(N, NT, lv);
    r.pi_star = Surface(N, NT, plv);
    r.vartheta = Surface(N, NT, plv);
    for (Surface* s : {&r.a, &r.b, &r.c, &r.x_star, &r.pi_star, &r.vartheta})
        if (!get_surface(is, *s)) return std::nullopt;
    auto& d = r.diagnostics;
    std::uint8_t sch = 0;
    if (!get(is, d.node_updates) || !get(is, d.clamp_count) || !get(is, d.min_G) || !get(is, d.max_dt_rate) ||
        !get(is, d.mu_bar) || !get(is, sch))
        return std::nullopt;
    d.scheme = sch == 0 ? "explicit" : "imex";
    const double margin = g.domain_margin(d.mu_bar);
    d.boundary_influence.resize(2 * g.N + 1);
    for (int j = -g.N; j <= g.N; ++j)
        d.boundary_influence[j + g.N] = margin > 0 ? (1.0 + std::abs(g.z(j) - g.origin)) / margin : HUGE_VAL;
    return r;
}

}  // namespace qhedge
