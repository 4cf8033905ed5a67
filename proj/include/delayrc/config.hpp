#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "mask.hpp"
#include "reservoir.hpp"

namespace delayrc {

// ---------------------------------------------------------------------------
// generic key-value config text:  [section] headers, "key = value" lines,
// '#' comments. Keys are reported as "section.key".
// ---------------------------------------------------------------------------

struct RawConfig {
    struct Entry {
        std::string value;
        int line = 0;
    };
    std::map<std::string, Entry> entries;
    std::vector<std::string> order;  // keys in file order

    bool has(const std::string& key) const { return entries.count(key) != 0; }
    const Entry* find(const std::string& key) const {
        auto it = entries.find(key);
        return it == entries.end() ? nullptr : &it->second;
    }
};

namespace detail {

inline bool is_key_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] inline void parse_fail(const std::string& origin, int line, int col,
                                    const std::string& msg) {
    throw ParseError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
}

}  // namespace detail

inline RawConfig parse_config_text(const std::string& text, const std::string& origin) {
    RawConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;

        if (body.front() == '[') {
            if (body.back() != ']')
                detail::parse_fail(origin, line_no, static_cast<int>(line.size()),
                                   "unterminated section header");
            section = detail::trim(body.substr(1, body.size() - 2));
            for (char c : section)
                if (!detail::is_key_char(c))
                    detail::parse_fail(origin, line_no, static_cast<int>(line.find(c)) + 1,
                                       "invalid character in section name");
            if (section.empty()) detail::parse_fail(origin, line_no, 1, "empty section name");
            continue;
        }

        const auto eq = body.find('=');
        if (eq == std::string::npos)
            detail::parse_fail(origin, line_no, static_cast<int>(line.find(body[0])) + 1,
                               "expected 'key = value'");
        const std::string key = detail::trim(body.substr(0, eq));
        const std::string value = detail::trim(body.substr(eq + 1));
        if (key.empty()) detail::parse_fail(origin, line_no, 1, "empty key");
        for (char c : key)
            if (!detail::is_key_char(c))
                detail::parse_fail(origin, line_no, static_cast<int>(line.find(c)) + 1,
                                   "invalid character in key");
        if (value.empty())
            detail::parse_fail(origin, line_no, static_cast<int>(eq) + 2, "empty value");

        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.has(full))
            detail::parse_fail(origin, line_no, 1, "duplicate key '" + full + "'");
        cfg.entries[full] = RawConfig::Entry{value, line_no};
        cfg.order.push_back(full);
    }
    return cfg;
}

inline RawConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

// ---------------------------------------------------------------------------
// experiment schema
// ---------------------------------------------------------------------------

struct SweepAxis {
    std::string name;
    std::vector<double> values;
};

struct ExperimentConfig {
    // reservoir
    int n_nodes = 50;
    int desync_k = 1;
    double delta_tau_s = 1.0;
    double t_response_s = 0.02;  // delta_tau/T_R = 50 by default (instantaneous regime)
    double beta = 0.8;
    double mu = 1.0;
    double rho = 0.5;
    double phi0 = 0.2 * kPi;
    Nonlinearity nonlinearity = Nonlinearity::SinSquared;
    EngineMode engine = EngineMode::DiscreteMap;
    Scheme scheme = Scheme::RK4;
    MaskSpec mask;
    int edm_sublayers = 1;
    double xi = 0.0;
    SamplingRule sampling = SamplingRule::EndOfSlot;
    std::optional<double> nu_ro_hz;  // adds the second delay tap when set

    // task
    std::string task = "narma10";
    int length = 5000;
    double snr_db = 28.0;
    std::string data_path;
    std::optional<double> train_fraction;

    // training
    double lambda = -1.0;  // < 0: scale-relative default
    int folds = 1;
    int washout = -1;  // < 0: reservoir default rule
    bool with_bias = true;

    // memory capacity
    int mc_max_lag = -1;
    int mc_train_steps = 10000;
    int mc_test_steps = 2000;

    std::vector<SweepAxis> sweep;

    std::string out_dir;
    std::string log_file;
    std::uint64_t master_seed = 1;

    std::size_t grid_size() const {
        std::size_t n = 1;
        for (const auto& axis : sweep) n *= axis.values.size();
        return n;
    }
};

namespace detail {

inline double parse_double(const RawConfig::Entry& e, const std::string& key) {
    if (e.value == "inf" || e.value == "+inf") return INFINITY;
    std::size_t consumed = 0;
    double v = 0.0;
    try {
        v = std::stod(e.value, &consumed);
    } catch (const std::exception&) {
        throw ConfigError("field '" + key + "' (line " + std::to_string(e.line) +
                          "): expected a number, got '" + e.value + "'");
    }
    if (consumed != e.value.size())
        throw ConfigError("field '" + key + "' (line " + std::to_string(e.line) +
                          "): trailing characters in '" + e.value + "'");
    return v;
}

inline long long parse_int(const RawConfig::Entry& e, const std::string& key) {
    const double v = parse_double(e, key);
    if (std::floor(v) != v)
        throw ConfigError("field '" + key + "' (line " + std::to_string(e.line) +
                          "): expected an integer");
    return static_cast<long long>(v);
}

inline bool parse_bool(const RawConfig::Entry& e, const std::string& key) {
    if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
    if (e.value == "false" || e.value == "no" || e.value == "0") return false;
    throw ConfigError("field '" + key + "' (line " + std::to_string(e.line) +
                      "): expected true or false");
}

// "a:b:c" inclusive range, "[x, y, z]" list, or a single number
inline std::vector<double> parse_value_list(const RawConfig::Entry& e, const std::string& key) {
    std::vector<double> out;
    const std::string& v = e.value;
    auto number = [&](const std::string& s) {
        return parse_double(RawConfig::Entry{trim(s), e.line}, key);
    };
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']')
            throw ConfigError("field '" + key + "' (line " + std::to_string(e.line) +
                              "): unterminated list");
        std::string inner = v.substr(1, v.size() - 2);
        std::istringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(number(item));
    } else if (v.find(':') != std::string::npos) {
        std::istringstream ss(v);
        std::string lo_s, hi_s, step_s;
        if (!std::getline(ss, lo_s, ':') || !std::getline(ss, hi_s, ':') ||
            !std::getline(ss, step_s))
            throw ConfigError("field '" + key + "' (line " + std::to_string(e.line) +
                              "): expected start:stop:step");
        const double lo = number(lo_s), hi = number(hi_s), step = number(step_s);
        if (step <= 0.0 || hi < lo)
            throw ConfigError("field '" + key + "' (line " + std::to_string(e.line) +
                              "): range needs stop >= start and step > 0");
        for (double x = lo; x <= hi + 1e-9 * step; x += step) out.push_back(x);
    } else {
        out.push_back(number(v));
    }
    if (out.empty())
        throw ConfigError("field '" + key + "' (line " + std::to_string(e.line) +
                          "): empty value list");
    return out;
}

struct UnitFamily {
    const char* base;
    std::vector<std::pair<const char*, double>> suffixes;
};

inline const std::vector<std::pair<const char*, double>>& time_suffixes() {
    static const std::vector<std::pair<const char*, double>> s = {
        {"_s", 1.0}, {"_ms", 1e-3}, {"_us", 1e-6}, {"_ns", 1e-9}, {"_ps", 1e-12}};
    return s;
}

inline const std::vector<std::pair<const char*, double>>& freq_suffixes() {
    static const std::vector<std::pair<const char*, double>> s = {
        {"_hz", 1.0}, {"_khz", 1e3}, {"_mhz", 1e6}, {"_ghz", 1e9}};
    return s;
}

// reads "<section>.<base><suffix>" with exactly one unit suffix present
inline std::optional<double> read_with_unit(const RawConfig& raw, const std::string& section,
                                            const std::string& base,
                                            const std::vector<std::pair<const char*, double>>& sfx,
                                            std::set<std::string>& known) {
    std::optional<double> result;
    std::string found;
    for (const auto& [suffix, factor] : sfx) {
        const std::string key = section + "." + base + suffix;
        known.insert(key);
        if (const auto* e = raw.find(key)) {
            if (result)
                throw ConfigError("fields '" + found + "' and '" + key +
                                  "' both set; pick one unit");
            result = parse_double(*e, key) * factor;
            found = key;
        }
    }
    return result;
}

template <class T>
void read_enum(const RawConfig& raw, std::set<std::string>& known, const std::string& key, T& dst,
               std::initializer_list<std::pair<const char*, T>> options) {
    known.insert(key);
    const auto* e = raw.find(key);
    if (!e) return;
    for (const auto& [name, value] : options)
        if (e->value == name) {
            dst = value;
            return;
        }
    std::string valid;
    for (const auto& [name, value] : options)
        valid += std::string(valid.empty() ? "" : ", ") + name;
    throw ConfigError("field '" + key + "' (line " + std::to_string(e->line) +
                      "): unknown value '" + e->value + "' (expected one of: " + valid + ")");
}

}  // namespace detail

// Scalar parameters a sweep grid may range over; phi0_pi values are given in
// units of pi.
inline const std::map<std::string, std::function<void(ExperimentConfig&, double)>>&
sweepable_fields() {
    static const std::map<std::string, std::function<void(ExperimentConfig&, double)>> fields = {
        {"beta", [](ExperimentConfig& c, double v) { c.beta = v; }},
        {"mu", [](ExperimentConfig& c, double v) { c.mu = v; }},
        {"rho", [](ExperimentConfig& c, double v) { c.rho = v; }},
        {"phi0_rad", [](ExperimentConfig& c, double v) { c.phi0 = v; }},
        {"phi0_pi", [](ExperimentConfig& c, double v) { c.phi0 = v * kPi; }},
        {"xi", [](ExperimentConfig& c, double v) { c.xi = v; }},
        {"lambda", [](ExperimentConfig& c, double v) { c.lambda = v; }},
        {"snr_db", [](ExperimentConfig& c, double v) { c.snr_db = v; }},
        {"delta_tau_s", [](ExperimentConfig& c, double v) { c.delta_tau_s = v; }},
        {"t_response_s", [](ExperimentConfig& c, double v) { c.t_response_s = v; }},
        {"nu_ro_hz", [](ExperimentConfig& c, double v) { c.nu_ro_hz = v; }},
    };
    return fields;
}

inline ExperimentConfig parse_experiment(const RawConfig& raw) {
    ExperimentConfig cfg;
    std::set<std::string> known = {"seed"};

    auto get_double = [&](const std::string& key, double& dst) {
        known.insert(key);
        if (const auto* e = raw.find(key)) dst = detail::parse_double(*e, key);
    };
    auto get_int = [&](const std::string& key, int& dst, long long lo, long long hi) {
        known.insert(key);
        if (const auto* e = raw.find(key)) {
            const long long v = detail::parse_int(*e, key);
            if (v < lo || v > hi)
                throw ConfigError("field '" + key + "' (line " + std::to_string(e->line) +
                                  "): out of range");
            dst = static_cast<int>(v);
        }
    };
    auto get_string = [&](const std::string& key, std::string& dst) {
        known.insert(key);
        if (const auto* e = raw.find(key)) dst = e->value;
    };
    if (const auto* e = raw.find("seed"))
        cfg.master_seed = static_cast<std::uint64_t>(detail::parse_int(*e, "seed"));

    get_int("reservoir.n_nodes", cfg.n_nodes, 1, 1000000);
    get_int("reservoir.desync_k", cfg.desync_k, 0, 1000000);
    if (auto v = detail::read_with_unit(raw, "reservoir", "delta_tau", detail::time_suffixes(), known))
        cfg.delta_tau_s = *v;
    if (auto v = detail::read_with_unit(raw, "reservoir", "t_response", detail::time_suffixes(), known))
        cfg.t_response_s = *v;
    get_double("reservoir.beta", cfg.beta);
    get_double("reservoir.mu", cfg.mu);
    get_double("reservoir.rho", cfg.rho);
    {
        known.insert("reservoir.phi0_rad");
        known.insert("reservoir.phi0_pi");
        const auto* rad = raw.find("reservoir.phi0_rad");
        const auto* pi = raw.find("reservoir.phi0_pi");
        if (rad && pi)
            throw ConfigError("fields 'reservoir.phi0_rad' and 'reservoir.phi0_pi' both set");
        if (rad) cfg.phi0 = detail::parse_double(*rad, "reservoir.phi0_rad");
        if (pi) cfg.phi0 = detail::parse_double(*pi, "reservoir.phi0_pi") * kPi;
    }
    detail::read_enum<Nonlinearity>(raw, known, "reservoir.nonlinearity", cfg.nonlinearity,
                                    {{"sin2", Nonlinearity::SinSquared},
                                     {"sin", Nonlinearity::Sine},
                                     {"tanh", Nonlinearity::Tanh},
                                     {"linear", Nonlinearity::Linear}});
    detail::read_enum<EngineMode>(raw, known, "reservoir.engine", cfg.engine,
                                  {{"dde", EngineMode::ContinuousDDE},
                                   {"map", EngineMode::DiscreteMap},
                                   {"elm", EngineMode::ELM}});
    detail::read_enum<Scheme>(raw, known, "reservoir.scheme", cfg.scheme,
                              {{"euler", Scheme::Euler}, {"rk4", Scheme::RK4}});
    detail::read_enum<MaskKind>(raw, known, "reservoir.mask", cfg.mask.kind,
                                {{"binary", MaskKind::BinaryBipolar},
                                 {"binary_unipolar", MaskKind::BinaryUnipolar},
                                 {"multilevel", MaskKind::MultiLevel},
                                 {"uniform", MaskKind::UniformRandom},
                                 {"two_tone", MaskKind::TwoToneSin}});
    get_int("reservoir.mask_levels", cfg.mask.levels, 2, 6);
    get_int("reservoir.mask_p", cfg.mask.tone_p, 1, 1000000);
    get_int("reservoir.mask_q", cfg.mask.tone_q, 1, 1000000);
    get_int("reservoir.edm_sublayers", cfg.edm_sublayers, 1, 1000000);
    get_double("reservoir.xi", cfg.xi);
    detail::read_enum<SamplingRule>(raw, known, "reservoir.sampling", cfg.sampling,
                                    {{"end", SamplingRule::EndOfSlot},
                                     {"average", SamplingRule::SlotAverage},
                                     {"mid", SamplingRule::MidSlot}});
    if (auto v = detail::read_with_unit(raw, "reservoir", "nu_ro", detail::freq_suffixes(), known))
        cfg.nu_ro_hz = *v;

    get_string("task.name", cfg.task);
    get_int("task.length", cfg.length, 2, 100000000);
    get_double("task.snr_db", cfg.snr_db);
    get_string("task.path", cfg.data_path);
    {
        known.insert("task.train_fraction");
        if (const auto* e = raw.find("task.train_fraction")) {
            const double v = detail::parse_double(*e, "task.train_fraction");
            if (v <= 0.0 || v >= 1.0)
                throw ConfigError("field 'task.train_fraction' (line " + std::to_string(e->line) +
                                  "): must lie in (0, 1)");
            cfg.train_fraction = v;
        }
    }

    {
        known.insert("training.lambda");
        if (const auto* e = raw.find("training.lambda")) {
            if (e->value == "auto")
                cfg.lambda = -1.0;
            else {
                cfg.lambda = detail::parse_double(*e, "training.lambda");
                if (cfg.lambda < 0.0)
                    throw ConfigError("field 'training.lambda' (line " + std::to_string(e->line) +
                                      "): must be nonnegative or 'auto'");
            }
        }
    }
    get_int("training.folds", cfg.folds, 1, 1000);
    {
        known.insert("training.washout");
        if (const auto* e = raw.find("training.washout")) {
            if (e->value == "auto")
                cfg.washout = -1;
            else {
                const long long v = detail::parse_int(*e, "training.washout");
                if (v < 0) throw ConfigError("field 'training.washout': must be >= 0 or 'auto'");
                cfg.washout = static_cast<int>(v);
            }
        }
    }
    {
        known.insert("training.with_bias");
        if (const auto* e = raw.find("training.with_bias"))
            cfg.with_bias = detail::parse_bool(*e, "training.with_bias");
    }

    {
        known.insert("mc.max_lag");
        if (const auto* e = raw.find("mc.max_lag")) {
            if (e->value == "auto")
                cfg.mc_max_lag = -1;
            else
                cfg.mc_max_lag = static_cast<int>(detail::parse_int(*e, "mc.max_lag"));
        }
    }
    get_int("mc.train_steps", cfg.mc_train_steps, 2, 100000000);
    get_int("mc.test_steps", cfg.mc_test_steps, 2, 100000000);

    get_string("output.dir", cfg.out_dir);
    get_string("output.log", cfg.log_file);

    for (const std::string& key : raw.order) {
        if (key.rfind("sweep.", 0) == 0) {
            const std::string name = key.substr(6);
            if (sweepable_fields().count(name) == 0)
                throw ConfigError("field '" + key + "' (line " +
                                  std::to_string(raw.find(key)->line) +
                                  "): '" + name + "' is not a sweepable parameter");
            cfg.sweep.push_back(SweepAxis{name, detail::parse_value_list(*raw.find(key), key)});
            continue;
        }
        if (known.count(key) == 0)
            throw ConfigError("unknown field '" + key + "' (line " +
                              std::to_string(raw.find(key)->line) + ")");
    }
    return cfg;
}

// Reservoir built from the resolved scalar fields; the mask seed is the
// per-point derived seed.
inline ReservoirConfig build_reservoir(const ExperimentConfig& cfg, std::uint64_t mask_seed,
                                       int n_features, std::string* warning = nullptr) {
    NodeGrid grid{cfg.n_nodes, cfg.delta_tau_s, cfg.desync_k, cfg.sampling};
    grid.validate();

    SystemParams params;
    params.response_time_s = cfg.t_response_s;
    params.mu = cfg.mu;
    params.rho = cfg.rho;
    params.phi0 = cfg.phi0;
    params.f = cfg.nonlinearity;
    if (cfg.engine != EngineMode::ELM) {
        if (cfg.nu_ro_hz)
            params.taps = double_delay_taps(grid.delay_s(), *cfg.nu_ro_hz, cfg.beta, warning);
        else
            params.taps = {FeedbackTap{grid.delay_s(), cfg.beta}};
    }

    ReservoirConfig rc;
    rc.params = std::move(params);
    rc.grid = grid;
    rc.mask = make_mask(cfg.mask, mask_seed, cfg.n_nodes, n_features);
    rc.edm_sublayers = cfg.edm_sublayers;
    rc.readout_desync_xi = cfg.xi;
    rc.mode = cfg.engine;
    rc.scheme = cfg.scheme;
    rc.washout = cfg.washout;
    rc.validate();
    return rc;
}

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    std::vector<std::string> notes;
    bool ok() const { return errors.empty(); }
};

inline ValidationReport validate_experiment(const ExperimentConfig& cfg) {
    ValidationReport report;

    if (cfg.engine == EngineMode::ELM && cfg.nu_ro_hz)
        report.errors.push_back("ELM mode with feedback taps declared (nu_ro set)");
    if (cfg.engine == EngineMode::ELM && cfg.beta != 0.0)
        report.warnings.push_back("beta is ignored in ELM mode (open loop)");
    if (cfg.engine != EngineMode::ContinuousDDE && cfg.desync_k >= cfg.n_nodes)
        report.errors.push_back("desync k >= N");

    const double ratio = cfg.delta_tau_s / cfg.t_response_s;
    std::ostringstream regime;
    regime.precision(3);
    regime << "delta_tau/T_R = " << ratio << ": ";
    if (ratio < 1.0)
        regime << "inertia-coupling regime (impulse response couples neighboring nodes)";
    else if (ratio >= 50.0)
        regime << "instantaneous regime (nodes settle within one slot; map engine is faithful)";
    else
        regime << "intermediate regime (partial inertia coupling)";
    report.notes.push_back(regime.str());

    if (cfg.engine == EngineMode::ContinuousDDE && ratio >= 50.0)
        report.notes.push_back(
            "dde engine in the instantaneous regime; the map engine reproduces it to ~1e-3");
    if (cfg.nu_ro_hz && cfg.engine == EngineMode::DiscreteMap)
        report.errors.push_back("double-delay taps (nu_ro) require the dde engine");

    if (cfg.task == "santa_fe" && cfg.data_path.empty())
        report.errors.push_back("task santa_fe requires task.path");
    if (cfg.task == "mc_probe")
        report.notes.push_back("task mc_probe is meant for the mc command");

    try {
        std::string warning;
        build_reservoir(cfg, 1, 1, &warning);
        if (!warning.empty()) report.warnings.push_back(warning);
    } catch (const std::exception& e) {
        report.errors.push_back(e.what());
    }

    const int washout = cfg.washout >= 0 ? cfg.washout : 100;
    if (cfg.task != "santa_fe" && cfg.length <= washout)
        report.errors.push_back("task.length must exceed the washout");
    if (cfg.folds >= 2 && cfg.train_fraction)
        report.notes.push_back("folds >= 2: train_fraction is ignored (cross-validation)");

    for (const auto& axis : cfg.sweep)
        if (axis.values.empty()) report.errors.push_back("empty sweep grid for " + axis.name);
    return report;
}

}  // namespace delayrc
