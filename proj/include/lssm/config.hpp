#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lssm/integrate.hpp"

namespace lssm {

using Json = nlohmann::ordered_json;

/// Full run description. Physical parameters have no silent defaults; only
/// numerics and output knobs are defaulted. The echoed form materializes
/// every field so that echo(parse(echo(c))) is a fixed point.
struct RunConfig {
    int n = 0;
    double ell = 0.0;

    double nu = 0.0;
    double nu_bar = 0.0;
    double r = 2.0;

    ForcingSpec forcing;

    bool noise_enabled = false;
    NoiseMode noise_mode = NoiseMode::additive;
    double sigma0 = 0.0;
    double alpha = 0.0;
    int kmax = 0;
    Modulation modulation;

    bool dt_fixed = false;
    double dt = 0.0;
    double dt_max = 0.1;
    double c_adv = 0.4;
    double c_visc = 0.3;
    double horizon = 0.0;
    double burn_in = 0.0;

    enum class InitType { zero, mode, random };
    InitType init_type = InitType::zero;
    std::array<int, 3> init_kappa{0, 1, 0};
    std::array<double, 3> init_amp{0.0, 0.0, 0.0};
    double init_phase = 0.0;
    int init_kmax = 1;
    double init_energy = 0.0;

    std::uint64_t cadence = 1;          // CSV row emission stride (steps)
    std::uint64_t snapshot_stride = 0;  // field snapshot stride (steps), 0 = off

    int ensemble_m = 1;
    int parallel_width = 1;

    std::uint64_t seed = 0;
};

namespace detail {

inline void require_keys(const Json& obj, const std::string& where,
                         const std::set<std::string>& allowed) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key()))
            throw ConfigError("unknown key \"" + (where.empty() ? item.key()
                                                                : where + "." + item.key()) +
                              "\"");
    }
}

inline const Json& need(const Json& obj, const std::string& where, const std::string& key) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw ConfigError("missing key \"" + (where.empty() ? key : where + "." + key) + "\"");
    return *it;
}

template <typename T>
inline T get_or(const Json& obj, const std::string& key, T fallback) {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : it->get<T>();
}

} // namespace detail

inline RunConfig parse_config_json(const Json& j) {
    using detail::get_or;
    using detail::need;
    using detail::require_keys;

    require_keys(j, "", {"grid", "flow", "forcing", "noise", "time", "init", "output",
                         "ensemble", "seed"});
    RunConfig c;

    const Json& grid = need(j, "", "grid");
    require_keys(grid, "grid", {"n", "ell"});
    c.n = need(grid, "grid", "n").get<int>();
    c.ell = need(grid, "grid", "ell").get<double>();
    if (c.n < 4 || c.n % 2 != 0) throw ConfigError("grid.n must be even and >= 4");
    if (!(c.ell > 0.0)) throw ConfigError("grid.ell must be positive");

    const Json& flow = need(j, "", "flow");
    require_keys(flow, "flow", {"nu", "nu_bar", "r"});
    c.nu = need(flow, "flow", "nu").get<double>();
    c.nu_bar = need(flow, "flow", "nu_bar").get<double>();
    c.r = need(flow, "flow", "r").get<double>();
    if (!(c.nu > 0.0)) throw ConfigError("flow.nu must be positive");
    if (!(c.nu_bar >= 0.0)) throw ConfigError("flow.nu_bar must be >= 0");
    if (!(c.r >= 2.0)) throw ConfigError("flow.r must be >= 2");

    if (j.contains("forcing")) {
        const Json& forcing = j["forcing"];
        require_keys(forcing, "forcing", {"type", "entries", "path"});
        const std::string type = need(forcing, "forcing", "type").get<std::string>();
        if (type == "none") {
            c.forcing.type = ForcingSpec::Type::none;
        } else if (type == "modes") {
            c.forcing.type = ForcingSpec::Type::modes;
            for (const Json& e : need(forcing, "forcing", "entries")) {
                require_keys(e, "forcing.entries[]", {"kappa", "amp", "phase"});
                ForcingSpec::ModeEntry me;
                const auto kv = need(e, "forcing.entries[]", "kappa");
                const auto av = need(e, "forcing.entries[]", "amp");
                if (kv.size() != 3 || av.size() != 3)
                    throw ConfigError("forcing.entries[].kappa/amp must have 3 components");
                for (int d = 0; d < 3; ++d) {
                    me.kappa[d] = kv[d].get<int>();
                    me.amp[d] = av[d].get<double>();
                }
                me.phase = get_or(e, "phase", 0.0);
                c.forcing.modes.push_back(me);
            }
        } else if (type == "file") {
            c.forcing.type = ForcingSpec::Type::file;
            c.forcing.path = need(forcing, "forcing", "path").get<std::string>();
        } else {
            throw ConfigError("forcing.type must be none|modes|file");
        }
    }

    if (j.contains("noise")) {
        const Json& noise = j["noise"];
        require_keys(noise, "noise", {"mode", "sigma0", "alpha", "kmax", "modulation"});
        const std::string mode = need(noise, "noise", "mode").get<std::string>();
        if (mode == "additive")
            c.noise_mode = NoiseMode::additive;
        else if (mode == "multiplicative")
            c.noise_mode = NoiseMode::multiplicative;
        else
            throw ConfigError("noise.mode must be additive|multiplicative");
        c.sigma0 = need(noise, "noise", "sigma0").get<double>();
        c.kmax = need(noise, "noise", "kmax").get<int>();
        c.alpha = get_or(noise, "alpha", 0.0);
        if (!(c.sigma0 >= 0.0)) throw ConfigError("noise.sigma0 must be >= 0");
        if (c.kmax < 0) throw ConfigError("noise.kmax must be >= 0");
        if (!(c.alpha >= 0.0)) throw ConfigError("noise.alpha must be >= 0");
        c.noise_enabled = c.kmax > 0;
        if (noise.contains("modulation")) {
            const Json& mod = noise["modulation"];
            require_keys(mod, "noise.modulation", {"type", "value", "offset", "amplitude", "omega"});
            const std::string mt = need(mod, "noise.modulation", "type").get<std::string>();
            try {
                if (mt == "constant")
                    c.modulation = Modulation::constant(
                        detail::need(mod, "noise.modulation", "value").get<double>());
                else if (mt == "sinusoid")
                    c.modulation = Modulation::sinusoid(
                        detail::need(mod, "noise.modulation", "offset").get<double>(),
                        detail::need(mod, "noise.modulation", "amplitude").get<double>(),
                        detail::need(mod, "noise.modulation", "omega").get<double>());
                else
                    throw ConfigError("noise.modulation.type must be constant|sinusoid");
            } catch (const ParameterError& e) {
                throw ConfigError(std::string("noise.modulation: ") + e.what());
            }
        }
    }

    const Json& time = need(j, "", "time");
    require_keys(time, "time", {"dt_policy", "dt", "dt_max", "c_adv", "c_visc", "T", "burn_in"});
    const std::string policy = get_or<std::string>(time, "dt_policy", "cfl");
    if (policy == "fixed") {
        c.dt_fixed = true;
        c.dt = need(time, "time", "dt").get<double>();
        if (!(c.dt > 0.0)) throw ConfigError("time.dt must be positive");
    } else if (policy == "cfl") {
        c.dt_fixed = false;
    } else {
        throw ConfigError("time.dt_policy must be fixed|cfl");
    }
    c.dt_max = get_or(time, "dt_max", 0.1);
    c.c_adv = get_or(time, "c_adv", 0.4);
    c.c_visc = get_or(time, "c_visc", 0.3);
    c.horizon = need(time, "time", "T").get<double>();
    c.burn_in = get_or(time, "burn_in", 0.0);
    if (!(c.horizon >= 0.0)) throw ConfigError("time.T must be >= 0");
    if (!(c.burn_in >= 0.0) || c.burn_in > c.horizon)
        throw ConfigError("time.burn_in must lie in [0, T]");
    if (!(c.dt_max > 0.0)) throw ConfigError("time.dt_max must be positive");

    if (j.contains("init")) {
        const Json& init = j["init"];
        require_keys(init, "init", {"type", "kappa", "amp", "phase", "kmax", "energy"});
        const std::string type = need(init, "init", "type").get<std::string>();
        if (type == "zero") {
            c.init_type = RunConfig::InitType::zero;
        } else if (type == "mode") {
            c.init_type = RunConfig::InitType::mode;
            const auto kv = need(init, "init", "kappa");
            const auto av = need(init, "init", "amp");
            if (kv.size() != 3 || av.size() != 3)
                throw ConfigError("init.kappa/amp must have 3 components");
            for (int d = 0; d < 3; ++d) {
                c.init_kappa[d] = kv[d].get<int>();
                c.init_amp[d] = av[d].get<double>();
            }
            c.init_phase = get_or(init, "phase", 0.0);
        } else if (type == "random") {
            c.init_type = RunConfig::InitType::random;
            c.init_kmax = need(init, "init", "kmax").get<int>();
            c.init_energy = need(init, "init", "energy").get<double>();
            if (!(c.init_energy >= 0.0)) throw ConfigError("init.energy must be >= 0");
        } else {
            throw ConfigError("init.type must be zero|mode|random");
        }
    }

    if (j.contains("output")) {
        const Json& output = j["output"];
        require_keys(output, "output", {"cadence", "snapshot_stride"});
        c.cadence = get_or<std::uint64_t>(output, "cadence", 1);
        c.snapshot_stride = get_or<std::uint64_t>(output, "snapshot_stride", 0);
        if (c.cadence == 0) throw ConfigError("output.cadence must be >= 1");
    }

    if (j.contains("ensemble")) {
        const Json& ens = j["ensemble"];
        require_keys(ens, "ensemble", {"m", "parallel_width"});
        c.ensemble_m = get_or(ens, "m", 1);
        c.parallel_width = get_or(ens, "parallel_width", 1);
        if (c.ensemble_m < 1) throw ConfigError("ensemble.m must be >= 1");
        if (c.parallel_width < 1) throw ConfigError("ensemble.parallel_width must be >= 1");
    }

    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    return c;
}

/// Canonical echo with every field materialized.
inline Json config_echo(const RunConfig& c) {
    Json j;
    j["grid"] = {{"n", c.n}, {"ell", c.ell}};
    j["flow"] = {{"nu", c.nu}, {"nu_bar", c.nu_bar}, {"r", c.r}};
    switch (c.forcing.type) {
    case ForcingSpec::Type::none:
        j["forcing"] = {{"type", "none"}};
        break;
    case ForcingSpec::Type::modes: {
        Json entries = Json::array();
        for (const auto& m : c.forcing.modes)
            entries.push_back({{"kappa", m.kappa}, {"amp", m.amp}, {"phase", m.phase}});
        j["forcing"] = {{"type", "modes"}, {"entries", entries}};
        break;
    }
    case ForcingSpec::Type::file:
        j["forcing"] = {{"type", "file"}, {"path", c.forcing.path}};
        break;
    }
    Json mod;
    if (c.modulation.type == Modulation::Type::constant)
        mod = {{"type", "constant"}, {"value", c.modulation.a}};
    else
        mod = {{"type", "sinusoid"}, {"offset", c.modulation.a},
               {"amplitude", c.modulation.b}, {"omega", c.modulation.omega}};
    j["noise"] = {{"mode", c.noise_mode == NoiseMode::additive ? "additive" : "multiplicative"},
                  {"sigma0", c.sigma0},
                  {"alpha", c.alpha},
                  {"kmax", c.kmax},
                  {"modulation", mod}};
    Json time = {{"dt_policy", c.dt_fixed ? "fixed" : "cfl"}};
    if (c.dt_fixed) time["dt"] = c.dt;
    time["dt_max"] = c.dt_max;
    time["c_adv"] = c.c_adv;
    time["c_visc"] = c.c_visc;
    time["T"] = c.horizon;
    time["burn_in"] = c.burn_in;
    j["time"] = time;
    switch (c.init_type) {
    case RunConfig::InitType::zero:
        j["init"] = {{"type", "zero"}};
        break;
    case RunConfig::InitType::mode:
        j["init"] = {{"type", "mode"}, {"kappa", c.init_kappa}, {"amp", c.init_amp},
                     {"phase", c.init_phase}};
        break;
    case RunConfig::InitType::random:
        j["init"] = {{"type", "random"}, {"kmax", c.init_kmax}, {"energy", c.init_energy}};
        break;
    }
    j["output"] = {{"cadence", c.cadence}, {"snapshot_stride", c.snapshot_stride}};
    j["ensemble"] = {{"m", c.ensemble_m}, {"parallel_width", c.parallel_width}};
    j["seed"] = c.seed;
    return j;
}

inline RunConfig parse_config_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        return parse_config_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config type error: ") + e.what());
    }
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// FNV-1a over the canonical echo; embedded in every artifact.
inline std::string config_hash(const RunConfig& c) {
    const std::string s = config_echo(c).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

/// Apply a dotted-path override "flow.nu=0.05" onto raw config JSON.
inline void apply_override(Json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like section.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    Json* node = &j;
    std::size_t pos = 0;
    for (;;) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (key.empty()) throw ConfigError("override has an empty path segment: " + assignment);
        if (dot == std::string::npos) {
            Json parsed = Json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? Json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

// ---------------------------------------------------------------------------
// Builders from a parsed config

inline Grid make_grid(const RunConfig& c) { return Grid(c.n, c.ell); }

inline FlowParams make_flow(const RunConfig& c) {
    FlowParams p;
    p.nu = c.nu;
    p.nu_bar = c.nu_bar;
    p.r = c.r;
    p.forcing = c.forcing;
    p.validate();
    return p;
}

inline NoiseSpec make_noise(const RunConfig& c, const Grid& g) {
    if (!c.noise_enabled)
        return NoiseSpec::power_law(g, c.noise_mode, 0.0, 0.0, 0, c.modulation);
    return NoiseSpec::power_law(g, c.noise_mode, c.sigma0, c.alpha, c.kmax, c.modulation);
}

inline StepPolicy make_policy(const RunConfig& c) {
    StepPolicy pol;
    pol.dt_max = c.dt_max;
    pol.c_adv = c.c_adv;
    pol.c_visc = c.c_visc;
    pol.fixed_dt = c.dt_fixed ? c.dt : 0.0;
    pol.validate();
    return pol;
}

/// Initial condition; random draws consume the trajectory's stream so the
/// whole trajectory remains a function of (master seed, stream index).
inline SpectralVelocity make_initial(const RunConfig& c, const Grid& g, RngStream& rng) {
    switch (c.init_type) {
    case RunConfig::InitType::zero:
        return SpectralVelocity(g);
    case RunConfig::InitType::mode: {
        ForcingSpec fs;
        fs.type = ForcingSpec::Type::modes;
        fs.modes.push_back({c.init_kappa, c.init_amp, c.init_phase});
        return forcing_field(fs, g);
    }
    case RunConfig::InitType::random:
        return random_solenoidal(g, c.init_kmax, c.init_energy, rng);
    }
    throw ConfigError("unreachable init type");
}

inline TrajectorySetup make_setup(const RunConfig& c, RngStream& rng) {
    const Grid g = make_grid(c);
    return TrajectorySetup(g, make_flow(c), make_noise(c, g), make_policy(c), c.horizon,
                           c.burn_in, make_initial(c, g, rng));
}

} // namespace lssm
