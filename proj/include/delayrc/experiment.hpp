#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "rng.hpp"
#include "tasks.hpp"
#include "training.hpp"

namespace delayrc {

struct ResultRecord {
    std::size_t grid_index = 0;
    std::string fingerprint;
    std::vector<std::pair<std::string, double>> swept;  // axis order
    std::map<std::string, double> metrics;
    double wall_time_s = 0.0;  // log only, never part of the CSV body
    std::uint64_t seed = 0;
    bool ok = true;
    std::string message;
};

struct RunOptions {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<EngineMode> engine;
    int threads = 0;  // 0: hardware concurrency
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// point-resolved config with the swept values applied; mixed-radix over the
// axes, first axis slowest
inline ExperimentConfig resolve_point(const ExperimentConfig& cfg, std::size_t index,
                                      std::vector<std::pair<std::string, double>>* swept) {
    ExperimentConfig point = cfg;
    std::size_t rest = index;
    std::size_t radix = cfg.grid_size();
    for (const auto& axis : cfg.sweep) {
        radix /= axis.values.size();
        const std::size_t i = rest / radix;
        rest %= radix;
        const double v = axis.values[i];
        sweepable_fields().at(axis.name)(point, v);
        if (swept) swept->emplace_back(axis.name, v);
    }
    return point;
}

inline std::string canonical_point_string(const ExperimentConfig& p, std::size_t index,
                                          std::uint64_t master_seed) {
    std::string s;
    auto add = [&](const std::string& k, const std::string& v) { s += k + "=" + v + ";"; };
    auto addf = [&](const std::string& k, double v) { add(k, format_g17(v)); };
    addf("beta", p.beta);
    addf("delta_tau_s", p.delta_tau_s);
    add("data_path", p.data_path);
    add("edm", std::to_string(p.edm_sublayers));
    add("engine", std::to_string(static_cast<int>(p.engine)));
    add("folds", std::to_string(p.folds));
    add("index", std::to_string(index));
    addf("lambda", p.lambda);
    add("length", std::to_string(p.length));
    add("mask", std::to_string(static_cast<int>(p.mask.kind)) + ":" +
                    std::to_string(p.mask.levels) + ":" + std::to_string(p.mask.tone_p) + ":" +
                    std::to_string(p.mask.tone_q));
    add("mc", std::to_string(p.mc_max_lag) + ":" + std::to_string(p.mc_train_steps) + ":" +
                  std::to_string(p.mc_test_steps));
    addf("mu", p.mu);
    add("n_nodes", std::to_string(p.n_nodes));
    add("k", std::to_string(p.desync_k));
    add("nonlinearity", std::to_string(static_cast<int>(p.nonlinearity)));
    addf("nu_ro_hz", p.nu_ro_hz.value_or(-1.0));
    addf("phi0", p.phi0);
    addf("rho", p.rho);
    add("sampling", std::to_string(static_cast<int>(p.sampling)));
    add("scheme", std::to_string(static_cast<int>(p.scheme)));
    add("seed", std::to_string(master_seed));
    addf("snr_db", p.snr_db);
    addf("t_response_s", p.t_response_s);
    add("task", p.task);
    addf("train_fraction", p.train_fraction.value_or(-1.0));
    add("washout", std::to_string(p.washout));
    add("with_bias", p.with_bias ? "1" : "0");
    addf("xi", p.xi);
    return s;
}

inline TaskDataset make_task(const ExperimentConfig& p, std::uint64_t task_seed) {
    if (p.task == "narma10") return narma10(p.length, task_seed);
    if (p.task == "channel_eq") return channel_eq(p.length, p.snr_db, task_seed);
    if (p.task == "santa_fe") return santa_fe_load(p.data_path);
    if (p.task == "surrogate") return surrogate_laser(p.length, task_seed);
    if (p.task == "mc_probe") return mc_probe(p.length, task_seed);
    throw ConfigError("unknown task '" + p.task + "'");
}

struct SplitMetrics {
    double nmse_sum = 0.0;
    long long symbol_errors = 0;
    long long symbols = 0;
    int splits = 0;
};

inline void evaluate_split(const ExperimentConfig& p, const Matrix& x_train,
                           const Matrix& y_train, const Matrix& x_test, const Matrix& y_test,
                           bool decode_symbols, SplitMetrics& acc) {
    const double lambda = p.lambda < 0.0 ? default_lambda(x_train) : p.lambda;
    const ReadoutWeights w = ridge_train(x_train, y_train, lambda, p.with_bias);
    const Matrix pred = predict(w, x_test);
    acc.nmse_sum += nmse(pred.row(0).transpose(), y_test.row(0).transpose());
    if (decode_symbols) {
        for (int j = 0; j < pred.cols(); ++j) {
            if (nearest_symbol(pred(0, j)) != static_cast<int>(y_test(0, j))) ++acc.symbol_errors;
            ++acc.symbols;
        }
    }
    ++acc.splits;
}

// forward pass + readout training + metrics for one resolved grid point
inline ResultRecord run_point(const ExperimentConfig& cfg, std::size_t index,
                              std::uint64_t master_seed, bool mc_mode) {
    ResultRecord rec;
    rec.grid_index = index;
    const ExperimentConfig point = resolve_point(cfg, index, &rec.swept);
    rec.fingerprint = hex64(fnv1a64(canonical_point_string(point, index, master_seed)));
    rec.seed = derive_seed(master_seed, index);
    const auto started = std::chrono::steady_clock::now();

    try {
        const std::uint64_t task_seed = derive_seed(rec.seed, 1);
        const std::uint64_t mask_seed = derive_seed(rec.seed, 2);

        if (mc_mode) {
            ReservoirConfig rc = build_reservoir(point, mask_seed, 1);
            McSettings settings;
            settings.max_lag = point.mc_max_lag;
            settings.train_steps = point.mc_train_steps;
            settings.test_steps = point.mc_test_steps;
            settings.lambda = point.lambda;
            settings.with_bias = point.with_bias;
            const int n_feat = rc.nodes_per_step();
            const int max_lag = settings.max_lag < 0 ? 2 * n_feat : settings.max_lag;
            const int lag_pad = std::max(0, max_lag + 1 - rc.washout_steps());
            const int needed =
                rc.washout_steps() + lag_pad + settings.train_steps + settings.test_steps;
            const TaskDataset probe = mc_probe(std::max(1000, needed), task_seed);
            std::vector<double> u(probe.inputs.cols());
            for (int i = 0; i < probe.inputs.cols(); ++i) u[i] = probe.inputs(0, i);
            const MemoryCapacity mc = memory_capacity(rc, std::move(u), settings);
            rec.metrics["mc_linear"] = mc.linear;
            rec.metrics["mc_quadratic"] = mc.quadratic;
            rec.metrics["mc_cross"] = mc.cross;
            rec.metrics["mc_total"] = mc.total;
        } else {
            const TaskDataset task = make_task(point, task_seed);
            ReservoirConfig rc =
                build_reservoir(point, mask_seed, static_cast<int>(task.inputs.rows()));
            const StateMatrix states = run(rc, task.inputs);
            const int q = states.n_steps();
            const Matrix targets = task.targets.middleCols(states.washout_discarded, q);
            const bool decode = point.task == "channel_eq";

            SplitMetrics acc;
            if (point.folds <= 1) {
                const double fraction = point.train_fraction.value_or(task.train_fraction);
                const int q_train = std::max(1, static_cast<int>(std::llround(fraction * q)));
                if (q - q_train < 2)
                    throw ContractError("run_point: test split needs at least two samples");
                evaluate_split(point, states.values.leftCols(q_train), targets.leftCols(q_train),
                               states.values.rightCols(q - q_train),
                               targets.rightCols(q - q_train), decode, acc);
            } else {
                for (const auto& [train_idx, test_idx] : kfold_splits(q, point.folds)) {
                    Matrix x_train(states.values.rows(), train_idx.size());
                    Matrix y_train(targets.rows(), train_idx.size());
                    Matrix x_test(states.values.rows(), test_idx.size());
                    Matrix y_test(targets.rows(), test_idx.size());
                    for (std::size_t i = 0; i < train_idx.size(); ++i) {
                        x_train.col(i) = states.values.col(train_idx[i]);
                        y_train.col(i) = targets.col(train_idx[i]);
                    }
                    for (std::size_t i = 0; i < test_idx.size(); ++i) {
                        x_test.col(i) = states.values.col(test_idx[i]);
                        y_test.col(i) = targets.col(test_idx[i]);
                    }
                    evaluate_split(point, x_train, y_train, x_test, y_test, decode, acc);
                }
            }
            rec.metrics["nmse"] = acc.nmse_sum / acc.splits;
            if (decode) {
                const double rate =
                    static_cast<double>(acc.symbol_errors) / static_cast<double>(acc.symbols);
                rec.metrics["ser"] = rate;
                rec.metrics["error_rate"] = rate;
            }
        }
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.message = e.what();
    }
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return rec;
}

}  // namespace detail

// Run every grid point; points execute concurrently with per-point seeds
// derived from (master seed, grid index), so scheduling never changes results.
inline std::vector<ResultRecord> execute(const ExperimentConfig& cfg_in, const RunOptions& opt,
                                         bool mc_mode = false) {
    ExperimentConfig cfg = cfg_in;
    if (opt.engine) cfg.engine = *opt.engine;
    if (opt.seed) cfg.master_seed = *opt.seed;

    const std::size_t grid = cfg.grid_size();
    std::vector<ResultRecord> records(grid);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n_threads =
        std::min<std::size_t>(grid, opt.threads > 0 ? static_cast<unsigned>(opt.threads) : hw);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < grid; i = next.fetch_add(1))
            records[i] = detail::run_point(cfg, i, cfg.master_seed, mc_mode);
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return records;  // index order by construction
}

inline const std::vector<std::string>& metric_columns() {
    static const std::vector<std::string> cols = {
        "nmse", "ser", "error_rate", "mc_linear", "mc_quadratic", "mc_cross", "mc_total"};
    return cols;
}

namespace detail {

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += "\"";
    return out;
}

}  // namespace detail

// Deterministic CSV body: fixed column order, 17 significant digits, no
// timestamps (wall times go to the run log only).
inline void write_results_csv(const ExperimentConfig& cfg, const std::vector<ResultRecord>& recs,
                              std::ostream& os) {
    os << "index,fingerprint,seed,status";
    for (const auto& axis : cfg.sweep) os << "," << axis.name;
    for (const auto& m : metric_columns()) os << "," << m;
    os << ",message\n";
    for (const auto& rec : recs) {
        os << rec.grid_index << "," << rec.fingerprint << "," << rec.seed << ","
           << (rec.ok ? "ok" : "failed");
        for (const auto& [name, value] : rec.swept) os << "," << format_g17(value);
        for (const auto& m : metric_columns()) {
            os << ",";
            const auto it = rec.metrics.find(m);
            if (it != rec.metrics.end()) os << format_g17(it->second);
        }
        os << "," << detail::csv_quote(rec.message) << "\n";
    }
}

inline std::string resolve_out_dir(const ExperimentConfig& cfg, const RunOptions& opt) {
    if (opt.out_dir) return *opt.out_dir;
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* env = std::getenv("DELAYRC_OUT")) return env;
    return ".";
}

// Full run verb: parse, validate, execute, write results.csv (and the
// optional log). Exit codes: 0 success, 2 invalid config, 3 failed rows.
inline int run_experiment(const std::string& config_path, const RunOptions& opt,
                          std::ostream& out, std::ostream& err, bool mc_mode = false) {
    ExperimentConfig cfg;
    try {
        cfg = parse_experiment(parse_config_file(config_path));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    if (opt.engine) cfg.engine = *opt.engine;
    if (!mc_mode && cfg.task == "mc_probe") {
        err << "error: task mc_probe is reserved for the mc command\n";
        return 2;
    }
    const ValidationReport report = validate_experiment(cfg);
    for (const auto& e : report.errors) err << "error: " << e << "\n";
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    if (!report.ok()) return 2;

    const auto records = execute(cfg, opt, mc_mode);

    const std::string dir = resolve_out_dir(cfg, opt);
    std::filesystem::create_directories(dir);
    const std::string csv_path = dir + "/results.csv";
    {
        std::ofstream csv(csv_path, std::ios::binary);
        if (!csv) {
            err << "error: cannot write " << csv_path << "\n";
            return 2;
        }
        write_results_csv(cfg, records, csv);
    }
    if (!cfg.log_file.empty()) {
        std::ofstream log(dir + "/" + cfg.log_file, std::ios::app);
        for (const auto& rec : records)
            log << "point index=" << rec.grid_index << " fingerprint=" << rec.fingerprint
                << " status=" << (rec.ok ? "ok" : "failed") << " wall_s=" << rec.wall_time_s
                << (rec.message.empty() ? "" : " message=" + rec.message) << "\n";
    }

    std::size_t failed = 0;
    for (const auto& rec : records)
        if (!rec.ok) ++failed;
    out << "wrote " << csv_path << " (" << records.size() << " rows";
    if (failed > 0) out << ", " << failed << " failed";
    out << ")\n";
    for (const auto& rec : records)
        if (!rec.ok) err << "failed: index " << rec.grid_index << ": " << rec.message << "\n";
    return failed == 0 ? 0 : 3;
}

inline int validate_command(const std::string& config_path, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        cfg = parse_experiment(parse_config_file(config_path));
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    const ValidationReport report = validate_experiment(cfg);
    for (const auto& e : report.errors) out << "error: " << e << "\n";
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    for (const auto& n : report.notes) out << "note: " << n << "\n";
    out << (report.ok() ? "config OK" : "config INVALID") << ": " << config_path << " ("
        << cfg.grid_size() << " grid point" << (cfg.grid_size() == 1 ? "" : "s") << ")\n";
    return report.ok() ? 0 : 2;
}

}  // namespace delayrc
