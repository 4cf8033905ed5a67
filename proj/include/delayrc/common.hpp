#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace delayrc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

// 17 significant digits round-trip doubles exactly
inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Invalid numeric or physical parameter (nonpositive time constant, bad level
// count, incommensurate step, ...).
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Caller broke an interface contract: dimension or tap-count mismatch, empty
// input, trajectory too short.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Inconsistent configuration (ELM with feedback taps, k >= N, unknown field).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// State blew up during integration.
struct DivergenceError : std::runtime_error {
    double time_s = 0.0;
    long long input_index = -1;
    DivergenceError(const std::string& msg, double t_s, long long index = -1)
        : std::runtime_error(msg), time_s(t_s), input_index(index) {}
};

// Dynamical regime does not admit the requested operation (non-contractive
// fixed point, instantaneous-limit precondition violated).
struct RegimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Normal equations singular at lambda = 0.
struct RankError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Metric undefined on the given data (zero target variance).
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Not enough samples for a statistical estimate.
struct StatisticsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input data unusable (degenerate series, repeated generation failures).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Text input could not be parsed; the message carries the position.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace delayrc
