#pragma once

#include "pglo/core.hpp"
#include "pglo/problems.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pglo {

// Full experiment parameterization. Relative quantities (a, M_min) are
// resolved against the problem box at load time so the echoed config is
// self-contained.
struct RunConfig {
    std::string problem = "sun";
    int dim = 2;
    double noise_pct = 0.01;  // suite problems only; sun's noise is analytic

    int K = 4;           // local regions
    std::int64_t T = 1500;  // total budget, replications
    int n0 = 20;         // initial design points
    int r = 5;           // replications per new point
    int n_max = 40;      // local-stage points per iteration
    int q = 1;           // worker processors
    int m = 20;          // inducing points

    double v = 3.0;                  // penalty parameter
    double a = 0.0;                  // neighborhood radius (absolute)
    double mesh_min = 0.0;           // M_min (absolute)
    double kappa_slope = 0.05;
    double allocation_fraction = 0.30;
    double mesh_init_factor = 0.1;
    double success_rel_err = 0.01;
    int restart_cap = 3;
    int fit_starts = 5;
    bool exact_noise = true;   // use the problem's analytic noise variance
    double latency_seconds = 0.0;
    std::uint64_t seed = 0;

    Problem make() const {
        Problem p = make_problem(problem, dim, noise_pct);
        p.latency_seconds = latency_seconds;
        return p;
    }

    void resolve_and_validate() {
        Problem p = make_problem(problem, dim, noise_pct);
        dim = p.box.dim();
        if (n0 <= 0) n0 = 10 * dim;
        if (m <= 0) m = std::min(20, n0);
        if (a <= 0.0) a = 0.05 * p.box.diameter();
        if (mesh_min <= 0.0) mesh_min = 1e-3 * p.box.diameter();

        if (K < 1) throw ConfigError("config: K must be >= 1");
        if (q < 1) throw ConfigError("config: q must be >= 1");
        if (r < 1) throw ConfigError("config: r must be >= 1");
        if (n0 < K) throw ConfigError("config: n_0 must be >= K");
        if (static_cast<std::int64_t>(n0) * r > T)
            throw ConfigError("config: initial design n_0*r exceeds the total budget T");
        if (n_max < q) throw ConfigError("config: n_max must be >= q");
        if (m < K) throw ConfigError("config: m must be >= K");
        if (m > n0) throw ConfigError("config: m must be <= n_0");
        if (kappa_slope < 0.0) throw ConfigError("config: kappa_slope must be >= 0");
        if (allocation_fraction < 0.0 || allocation_fraction > 1.0)
            throw ConfigError("config: allocation_fraction must lie in [0, 1]");
    }
};

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const std::string& key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "problem", "dim", "noise_pct", "K", "T", "n_0", "r", "n_max", "q", "m", "v", "a",
        "M_min", "kappa_slope", "allocation_fraction", "mesh_init_factor",
        "success_rel_err", "restart_cap", "fit_starts", "exact_noise", "latency_seconds",
        "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("config: unknown key '" + it.key() + "'");
    }

    RunConfig c;
    c.n0 = 0;  // sentinel: resolve from dim
    c.m = 0;
    detail::read_field(j, "problem", c.problem);
    detail::read_field(j, "dim", c.dim);
    detail::read_field(j, "noise_pct", c.noise_pct);
    detail::read_field(j, "K", c.K);
    detail::read_field(j, "T", c.T);
    detail::read_field(j, "n_0", c.n0);
    detail::read_field(j, "r", c.r);
    detail::read_field(j, "n_max", c.n_max);
    detail::read_field(j, "q", c.q);
    detail::read_field(j, "m", c.m);
    detail::read_field(j, "v", c.v);
    detail::read_field(j, "a", c.a);
    detail::read_field(j, "M_min", c.mesh_min);
    detail::read_field(j, "kappa_slope", c.kappa_slope);
    detail::read_field(j, "allocation_fraction", c.allocation_fraction);
    detail::read_field(j, "mesh_init_factor", c.mesh_init_factor);
    detail::read_field(j, "success_rel_err", c.success_rel_err);
    detail::read_field(j, "restart_cap", c.restart_cap);
    detail::read_field(j, "fit_starts", c.fit_starts);
    detail::read_field(j, "exact_noise", c.exact_noise);
    detail::read_field(j, "latency_seconds", c.latency_seconds);
    detail::read_field(j, "seed", c.seed);
    c.resolve_and_validate();
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["problem"] = c.problem;
    j["dim"] = c.dim;
    j["noise_pct"] = c.noise_pct;
    j["K"] = c.K;
    j["T"] = c.T;
    j["n_0"] = c.n0;
    j["r"] = c.r;
    j["n_max"] = c.n_max;
    j["q"] = c.q;
    j["m"] = c.m;
    j["v"] = c.v;
    j["a"] = c.a;
    j["M_min"] = c.mesh_min;
    j["kappa_slope"] = c.kappa_slope;
    j["allocation_fraction"] = c.allocation_fraction;
    j["mesh_init_factor"] = c.mesh_init_factor;
    j["success_rel_err"] = c.success_rel_err;
    j["restart_cap"] = c.restart_cap;
    j["fit_starts"] = c.fit_starts;
    j["exact_noise"] = c.exact_noise;
    j["latency_seconds"] = c.latency_seconds;
    j["seed"] = c.seed;
    return j;
}

// Apply `--set key=value` overrides on top of a parsed JSON object. Values
// parse as JSON scalars, falling back to strings.
inline nlohmann::json apply_overrides(nlohmann::json j,
                                      const std::vector<std::string>& overrides) {
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        nlohmann::json parsed = nlohmann::json::parse(val, nullptr, false);
        if (parsed.is_discarded()) parsed = val;
        j[key] = parsed;
    }
    return j;
}

inline RunConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {}) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open '" + path + "'");
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: malformed JSON in '" + path + "': " + e.what());
        }
    }
    return config_from_json(apply_overrides(std::move(j), overrides));
}

}  // namespace pglo
