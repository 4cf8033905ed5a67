#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "dde.hpp"
#include "rng.hpp"

namespace delayrc {

struct TaskDataset {
    Matrix inputs;   // M x T
    Matrix targets;  // K x T
    double train_fraction = 0.75;
    int folds = 1;
    int washout = 100;  // suggested minimum
    std::string name;
    std::uint64_t seed = 0;
    std::map<std::string, double> meta;
};

// One step of the order-10 recurrence. y_window holds y(n-9)..y(n), oldest
// first; returns y(n+1). Constants follow the standard benchmark definition.
inline double narma10_next(std::span<const double> y_window, double u_n_minus_9, double u_n) {
    if (y_window.size() != 10) throw ContractError("narma10_next: window must hold 10 values");
    double sum = 0.0;
    for (double v : y_window) sum += v;
    const double y_n = y_window.back();
    return 0.3 * y_n + 0.05 * y_n * sum + 1.5 * u_n_minus_9 * u_n + 0.1;
}

// NARMA10 driven by i.i.d. uniform [0, 0.5] input, zero initial history.
// Sequences where |y| ever exceeds 1 are rejected and regenerated from a
// derived seed; the retry count lands in meta["retries"].
inline TaskDataset narma10(int t_steps, std::uint64_t seed) {
    if (t_steps < 200) throw ParameterError("narma10: need at least 200 steps");

    for (int attempt = 0; attempt < 10; ++attempt) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        std::vector<double> u(t_steps);
        for (double& v : u) v = 0.5 * rng.uniform();

        std::vector<double> y(static_cast<std::size_t>(t_steps) + 1, 0.0);
        bool ok = true;
        for (int n = 9; n < t_steps; ++n) {
            y[n + 1] = narma10_next(std::span<const double>(y).subspan(n - 9, 10), u[n - 9], u[n]);
            if (std::abs(y[n + 1]) > 1.0) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;

        TaskDataset ds;
        ds.inputs.resize(1, t_steps);
        ds.targets.resize(1, t_steps);
        for (int n = 0; n < t_steps; ++n) {
            ds.inputs(0, n) = u[n];
            ds.targets(0, n) = y[n + 1];  // next value, aligned with the input
        }
        ds.train_fraction = 0.8;
        ds.name = "narma10";
        ds.seed = seed;
        ds.meta["retries"] = attempt;
        ds.meta["input_low"] = 0.0;
        ds.meta["input_high"] = 0.5;
        return ds;
    }
    throw DataError("narma10: ten consecutive seeds produced divergent sequences");
}

struct ChannelEqOptions {
    bool distortion = true;        // cubic memoryless distortion after the filter
    bool identity_channel = false; // keep only the d(n) tap
};

// Linear channel of the equalization benchmark; d must cover n-7..n+2.
inline double channel_filter(std::span<const double> d, int n) {
    return 0.08 * d[n + 2] - 0.12 * d[n + 1] + d[n] + 0.18 * d[n - 1] - 0.1 * d[n - 2] +
           0.091 * d[n - 3] - 0.05 * d[n - 4] + 0.04 * d[n - 5] + 0.03 * d[n - 6] +
           0.01 * d[n - 7];
}

inline double channel_distort(double q) { return q + 0.036 * q * q - 0.011 * q * q * q; }

// Nearest symbol in {-3, -1, 1, 3}.
inline int nearest_symbol(double v) {
    if (v < -2.0) return -3;
    if (v < 0.0) return -1;
    if (v < 2.0) return 1;
    return 3;
}

// Nonlinear channel equalization: random 4-level symbols through a 10-tap
// channel with two look-ahead taps, cubic distortion and additive Gaussian
// noise at the requested SNR. The receiver signal u(n) is presented at step n
// with target d(n); the look-ahead/look-back taps cost 9 trimmed symbols.
inline TaskDataset channel_eq(int t_steps, double snr_db, std::uint64_t seed,
                              const ChannelEqOptions& opt = {}) {
    if (t_steps < 1000) throw ParameterError("channel_eq: need at least 1000 steps");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
        throw ParameterError("channel_eq: SNR must be finite or +infinity");

    static constexpr double kSymbols[4] = {-3.0, -1.0, 1.0, 3.0};
    const int l = t_steps + 9;
    Rng rng(seed);
    std::vector<double> d(l);
    for (double& v : d) v = kSymbols[rng.below(4)];

    std::vector<double> u(t_steps);
    for (int j = 0; j < t_steps; ++j) {
        const int n = j + 7;
        const double q = opt.identity_channel ? d[n] : channel_filter(d, n);
        u[j] = opt.distortion ? channel_distort(q) : q;
    }

    double power = 0.0;
    for (double v : u) power += v * v;
    power /= static_cast<double>(t_steps);

    double noise_var = 0.0;
    if (std::isfinite(snr_db)) {
        noise_var = power / std::pow(10.0, snr_db / 10.0);
        const double sigma = std::sqrt(noise_var);
        for (double& v : u) v += sigma * rng.gaussian();
    }

    TaskDataset ds;
    ds.inputs.resize(1, t_steps);
    ds.targets.resize(1, t_steps);
    for (int j = 0; j < t_steps; ++j) {
        ds.inputs(0, j) = u[j];
        ds.targets(0, j) = d[j + 7];
    }
    ds.train_fraction = 0.8;
    ds.name = "channel_eq";
    ds.seed = seed;
    ds.meta["snr_db"] = snr_db;
    ds.meta["signal_power"] = power;
    ds.meta["noise_variance"] = noise_var;
    return ds;
}

namespace detail {

// Normalize to zero mean / unit variance and pair each sample with its
// successor as the prediction target.
inline TaskDataset one_step_prediction(const std::vector<double>& series, std::string name) {
    if (series.size() < 3) throw DataError(name + ": series too short");
    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(series.size());
    double var = 0.0;
    for (double v : series) var += (v - mean) * (v - mean);
    var /= static_cast<double>(series.size());
    if (var <= 0.0) throw DataError(name + ": zero variance, cannot normalize");
    const double std_dev = std::sqrt(var);

    const auto t = static_cast<int>(series.size()) - 1;
    TaskDataset ds;
    ds.inputs.resize(1, t);
    ds.targets.resize(1, t);
    for (int n = 0; n < t; ++n) {
        ds.inputs(0, n) = (series[n] - mean) / std_dev;
        ds.targets(0, n) = (series[n + 1] - mean) / std_dev;
    }
    ds.train_fraction = 0.75;
    ds.name = std::move(name);
    ds.meta["norm_mean"] = mean;
    ds.meta["norm_std"] = std_dev;
    return ds;
}

}  // namespace detail

// Santa Fe laser series from a plain-text file, one numeric sample per line.
// Input is the normalized series, target its one-step-ahead value; 75/25
// train/test split. Normalization constants live in meta.
inline TaskDataset santa_fe_load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("santa_fe_load: cannot open " + path);
    std::vector<double> series;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos) continue;
        std::size_t consumed = 0;
        double v = 0.0;
        try {
            v = std::stod(line.substr(pos), &consumed);
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": not a number");
        }
        if (line.find_first_not_of(" \t\r", pos + consumed) != std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": trailing characters");
        series.push_back(v);
    }
    TaskDataset ds = detail::one_step_prediction(series, "santa_fe");
    ds.train_fraction = 0.75;
    return ds;
}

// i.i.d. uniform probe on [-1, 1]; per-lag targets are built by the training
// module, so targets simply mirror the probe here.
inline TaskDataset mc_probe(int t_steps, std::uint64_t seed) {
    if (t_steps < 1000) throw ParameterError("mc_probe: need at least 1000 steps");
    Rng rng(seed);
    TaskDataset ds;
    ds.inputs.resize(1, t_steps);
    for (int n = 0; n < t_steps; ++n) ds.inputs(0, n) = rng.uniform(-1.0, 1.0);
    ds.targets = ds.inputs;
    ds.name = "mc_probe";
    ds.seed = seed;
    return ds;
}

// Chaotic series from the electro-optical delay system itself, for CI runs
// where the Santa Fe file is unavailable. Not the canonical benchmark data.
inline std::vector<double> surrogate_laser_series(int t_steps, std::uint64_t seed) {
    if (t_steps < 10) throw ParameterError("surrogate_laser_series: need at least 10 samples");
    SystemParams p;
    p.response_time_s = 1.0;
    p.taps = {FeedbackTap{20.0, 2.6}};
    p.mu = 1.0;
    p.rho = 0.0;
    p.phi0 = 0.4;
    p.f = Nonlinearity::SinSquared;

    Rng rng(seed);
    const double x0 = 0.2 + 0.6 * rng.uniform();
    const double step = 0.0625;  // T_R / 16
    const double sample_every = 0.5;
    const double warmup = 400.0;
    const double duration = warmup + sample_every * (t_steps + 1);
    const Trajectory traj = integrate(p, [](double) { return 0.0; }, step, duration, x0);

    std::vector<double> out(t_steps);
    const auto stride = static_cast<std::size_t>(std::llround(sample_every / step));
    const auto start = static_cast<std::size_t>(std::llround(warmup / step));
    for (int i = 0; i < t_steps; ++i) out[i] = traj.values[start + stride * i];
    return out;
}

inline TaskDataset surrogate_laser(int t_steps, std::uint64_t seed) {
    TaskDataset ds =
        detail::one_step_prediction(surrogate_laser_series(t_steps + 1, seed), "surrogate_laser");
    ds.seed = seed;
    ds.meta["canonical"] = 0.0;
    return ds;
}

// CSV export with header row (n, u..., target...); 17 significant digits.
inline void write_csv(const TaskDataset& ds, std::ostream& os) {
    const auto m = static_cast<int>(ds.inputs.rows());
    const auto k = static_cast<int>(ds.targets.rows());
    os << "n";
    if (m == 1)
        os << ",u";
    else
        for (int i = 1; i <= m; ++i) os << ",u_" << i;
    if (k == 1)
        os << ",target";
    else
        for (int i = 1; i <= k; ++i) os << ",target_" << i;
    os << "\n";
    for (int n = 0; n < ds.inputs.cols(); ++n) {
        os << n;
        for (int i = 0; i < m; ++i) os << "," << format_g17(ds.inputs(i, n));
        for (int i = 0; i < k; ++i) os << "," << format_g17(ds.targets(i, n));
        os << "\n";
    }
}

}  // namespace delayrc
