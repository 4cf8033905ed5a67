#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "dde.hpp"
#include "mask.hpp"
#include "nodes.hpp"

namespace delayrc {

enum class EngineMode { ContinuousDDE, DiscreteMap, ELM };

// Piecewise-constant drive: slot g of duration slot_s holds entry
// (g mod S, g div S) of the masked matrix (sample-and-hold). Queries beyond
// the covered range hold the boundary value.
struct PiecewiseConstantDrive {
    Matrix masked;  // S x T, column n = masked input for step n
    double slot_s = 1.0;

    double duration_s() const {
        return static_cast<double>(masked.size()) * slot_s;
    }

    double operator()(double t) const {
        const auto rows = static_cast<long long>(masked.rows());
        const long long total = static_cast<long long>(masked.size());
        auto g = static_cast<long long>(std::floor(t / slot_s));
        if (g < 0) g = 0;
        if (g >= total) g = total - 1;
        return masked(static_cast<int>(g % rows), static_cast<int>(g / rows));
    }
};

// Time multiplexing: value (W_in * u(n))_l held for one node slot, mask period
// tau_m per input step.
inline PiecewiseConstantDrive multiplex(const Matrix& inputs, const InputMask& mask,
                                        const NodeGrid& grid) {
    grid.validate();
    if (mask.n_nodes() != grid.n_nodes)
        throw ContractError("multiplex: mask rows must match the node count");
    if (inputs.rows() != mask.n_features())
        throw ContractError("multiplex: input feature count must match the mask columns");
    return PiecewiseConstantDrive{mask.weights * inputs, grid.node_duration_s};
}

// Full reservoir configuration: dynamics, node layout, input mask, EDM
// partitioning, readout de-synchronization and engine selection.
struct ReservoirConfig {
    SystemParams params;
    NodeGrid grid;
    InputMask mask;
    int edm_sublayers = 1;           // N_L
    double readout_desync_xi = 0.0;  // xi
    EngineMode mode = EngineMode::DiscreteMap;
    Scheme scheme = Scheme::RK4;     // ContinuousDDE only
    int washout = -1;                // < 0: max(100, ten delays of simulated time)

    int nodes_per_step() const { return grid.n_nodes / edm_sublayers; }

    int washout_steps() const {
        if (washout >= 0) return washout;
        const double per_step_span = nodes_per_step() * grid.node_duration_s;
        const double ten_delays = 10.0 * grid.delay_s() / per_step_span;
        return std::max(100, static_cast<int>(std::ceil(ten_delays)));
    }

    void validate() const {
        params.validate();
        grid.validate();
        if (mask.n_nodes() != grid.n_nodes)
            throw ConfigError("ReservoirConfig: mask rows must match the node count");
        if (edm_sublayers < 1) throw ConfigError("ReservoirConfig: need at least one sublayer");
        if (grid.n_nodes % edm_sublayers != 0)
            throw ConfigError("ReservoirConfig: node count must divide into the EDM sublayers");
        if (!std::isfinite(readout_desync_xi) || readout_desync_xi <= -1.0)
            throw ConfigError("ReservoirConfig: invalid readout desync");
        if (mode == EngineMode::ELM && !params.taps.empty())
            throw ConfigError("ReservoirConfig: ELM mode requires an empty tap list");
        if (mode != EngineMode::ELM && params.taps.empty())
            throw ConfigError("ReservoirConfig: closed-loop modes need at least one tap");
        if (mode != EngineMode::ContinuousDDE && readout_desync_xi != 0.0)
            throw ConfigError("ReservoirConfig: readout desync requires the continuous engine");
        if (mode == EngineMode::DiscreteMap && params.taps.size() > 1)
            throw ConfigError("ReservoirConfig: multiple taps require the continuous engine");
        if (mode == EngineMode::DiscreteMap && grid.desync_k >= grid.n_nodes)
            throw ConfigError("ReservoirConfig: desync k must be smaller than N");
        if (!params.taps.empty() &&
            std::abs(params.taps.front().delay_s - grid.delay_s()) > 1e-9 * grid.delay_s())
            throw ConfigError(
                "ReservoirConfig: principal tap delay must equal the grid delay (N+k)*delta_tau");
    }
};

namespace detail {

// Masked slot values laid out per input step. With EDM, step n occupies one
// sub-reservoir of N/N_L consecutive slots and uses its own block of mask
// rows, so the delayed feedback of tau_D = (N+k)*delta_tau reaches the step
// N_L inputs earlier and u(n) mixes with u(n+N_L).
inline Matrix masked_slots(const ReservoirConfig& cfg, const Matrix& inputs) {
    const Matrix full = cfg.mask.weights * inputs;  // N x T
    if (cfg.edm_sublayers == 1) return full;
    const int s = cfg.nodes_per_step();
    const auto t = static_cast<int>(inputs.cols());
    Matrix out(s, t);
    for (int n = 0; n < t; ++n) {
        const int block = n % cfg.edm_sublayers;
        out.col(n) = full.col(n).segment(block * s, s);
    }
    return out;
}

}  // namespace detail

// Run the forward pass: multiplex the inputs, drive the configured engine,
// de-multiplex into node states and discard the washout columns. The optional
// initial state overrides the default steady-state history (fixed-point of the
// autonomous system, zero when that iteration fails).
inline StateMatrix run(const ReservoirConfig& cfg, const Matrix& inputs,
                       std::optional<double> initial_state = {}) {
    cfg.validate();
    if (inputs.rows() != cfg.mask.n_features())
        throw ContractError("run: input feature count must match the mask");
    const auto t_steps = static_cast<int>(inputs.cols());
    const int washout = cfg.washout_steps();
    if (t_steps <= washout)
        throw ContractError("run: input length must exceed the washout (" +
                            std::to_string(washout) + " steps)");

    const int s = cfg.nodes_per_step();
    const double x0 = initial_state ? *initial_state : steady_state_or_zero(cfg.params, 0.0);
    const Matrix slots = detail::masked_slots(cfg, inputs);

    Matrix states(s, t_steps);
    switch (cfg.mode) {
        case EngineMode::ELM: {
            for (int n = 0; n < t_steps; ++n)
                for (int l = 0; l < s; ++l)
                    states(l, n) = activation(cfg.params.f,
                                              cfg.params.rho * slots(l, n) + cfg.params.phi0);
            break;
        }
        case EngineMode::DiscreteMap: {
            // flattened slot recurrence: x[g] = f(beta*mu*x[g - (N+k)] + rho*u_in[g] + phi0)
            const int d = cfg.grid.n_nodes + cfg.grid.desync_k;
            std::vector<double> ring(static_cast<std::size_t>(d), x0);
            std::size_t head = 0;  // position of x[g - d]
            for (int n = 0; n < t_steps; ++n)
                for (int l = 0; l < s; ++l) {
                    const double x = detail::map_node(ring[head], slots(l, n), cfg.params);
                    states(l, n) = x;
                    ring[head] = x;
                    head = (head + 1) % static_cast<std::size_t>(d);
                }
            break;
        }
        case EngineMode::ContinuousDDE: {
            const double dt = cfg.grid.node_duration_s;
            const auto n_sub = static_cast<long long>(
                std::max(16.0, std::ceil(16.0 * dt / cfg.params.response_time_s)));
            const double step = dt / static_cast<double>(n_sub);
            const PiecewiseConstantDrive drive{slots, dt};
            // cover the last readout slot, which xi > 0 pushes past T*tau_span
            const double slack = s * dt * std::max(0.0, cfg.readout_desync_xi) + dt;
            const double duration =
                (static_cast<double>(slots.size()) * dt + slack);
            Trajectory traj;
            try {
                traj = integrate(cfg.params, drive, step, duration, x0, cfg.scheme);
            } catch (DivergenceError& e) {
                const auto idx = static_cast<long long>(e.time_s / (s * dt));
                throw DivergenceError(std::string(e.what()) + " (input step " +
                                          std::to_string(idx) + ")",
                                      e.time_s, idx);
            }
            NodeGrid demux = cfg.grid;
            demux.n_nodes = s;
            demux.desync_k = 0;
            const StateMatrix sm = continuous_to_nodes(traj, demux, t_steps, cfg.readout_desync_xi);
            states = sm.values;
            break;
        }
    }

    StateMatrix out;
    out.values = states.rightCols(t_steps - washout);
    out.washout_discarded = washout;
    return out;
}

// Two feedback taps per the double-delay rule: the second delay sits half a
// relaxation-oscillation period after the first. The total gain is split
// evenly between the taps.
inline std::vector<FeedbackTap> double_delay_taps(double tau_d1_s, double nu_ro_hz,
                                                  double total_gain,
                                                  std::string* warning = nullptr) {
    if (!std::isfinite(tau_d1_s) || tau_d1_s <= 0.0)
        throw ParameterError("double_delay_taps: first delay must be positive and finite");
    if (!std::isfinite(nu_ro_hz) || nu_ro_hz <= 0.0)
        throw ParameterError("double_delay_taps: oscillation frequency must be positive");
    const double tau_d2 = tau_d1_s + 0.5 / nu_ro_hz;
    if (warning && (tau_d2 - tau_d1_s) <= 1e-12 * tau_d1_s)
        *warning = "double-delay taps coincide (nu_RO too large); configuration is degenerate";
    return {FeedbackTap{tau_d1_s, 0.5 * total_gain}, FeedbackTap{tau_d2, 0.5 * total_gain}};
}

}  // namespace delayrc
