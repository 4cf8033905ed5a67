#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "common.hpp"
#include "dde.hpp"

namespace delayrc {

enum class SamplingRule { EndOfSlot, SlotAverage, MidSlot };

// Virtual-node layout within one delay: N nodes of duration delta_tau, mask
// period tau_m = N*delta_tau, delay tau_D = (N + k)*delta_tau.
struct NodeGrid {
    int n_nodes = 1;             // N
    double node_duration_s = 1;  // delta_tau
    int desync_k = 0;            // k
    SamplingRule sampling = SamplingRule::EndOfSlot;

    double mask_duration_s() const { return n_nodes * node_duration_s; }
    double delay_s() const { return (n_nodes + desync_k) * node_duration_s; }

    void validate() const {
        if (n_nodes < 1) throw ParameterError("NodeGrid: need at least one node");
        if (!std::isfinite(node_duration_s) || node_duration_s <= 0.0)
            throw ParameterError("NodeGrid: node duration must be positive and finite");
        // node positions l*delta_tau must lie within [0, tau_D)
        if (desync_k < 0) throw ParameterError("NodeGrid: desync count must be nonnegative");
    }
};

// N x Q matrix of de-multiplexed virtual-node states.
struct StateMatrix {
    Matrix values;
    int washout_discarded = 0;

    int n_features() const { return static_cast<int>(values.rows()); }
    int n_steps() const { return static_cast<int>(values.cols()); }
};

// Divide the trajectory into per-step windows of tau_m and read node l of step
// n from slot [n*tau_m + l*dtr, n*tau_m + (l+1)*dtr) with dtr = (1+xi)*delta_tau.
// xi = 0 is plain de-multiplexing; xi > 0 de-synchronizes the readout clock and
// reads into the following window.
inline StateMatrix continuous_to_nodes(const Trajectory& traj, const NodeGrid& grid,
                                       int n_steps, double readout_desync_xi = 0.0) {
    grid.validate();
    if (n_steps < 1) throw ContractError("continuous_to_nodes: need at least one step");
    if (!std::isfinite(readout_desync_xi) || readout_desync_xi <= -1.0)
        throw ParameterError("continuous_to_nodes: invalid readout desync");
    if (traj.step_s <= 0.0 || traj.values.empty())
        throw ContractError("continuous_to_nodes: empty trajectory");
    if (traj.step_s > 0.5 * grid.node_duration_s)
        throw ParameterError("continuous_to_nodes: trajectory sampling coarser than half a node slot");

    const int n = grid.n_nodes;
    const double dtr = (1.0 + readout_desync_xi) * grid.node_duration_s;
    const double tau_m = grid.mask_duration_s();
    const double step = traj.step_s;
    const auto last = static_cast<long long>(traj.values.size()) - 1;

    const double t_last_needed = (n_steps - 1) * tau_m + n * dtr;
    if (std::llround(t_last_needed / step) > last)
        throw ContractError("continuous_to_nodes: trajectory too short for requested steps");

    Matrix out(n, n_steps);
    for (int col = 0; col < n_steps; ++col) {
        const double base = col * tau_m;
        for (int l = 0; l < n; ++l) {
            const double t_start = base + l * dtr;
            const double t_end = t_start + dtr;
            double v = 0.0;
            switch (grid.sampling) {
                case SamplingRule::EndOfSlot:
                    v = traj.values[static_cast<std::size_t>(std::llround(t_end / step))];
                    break;
                case SamplingRule::MidSlot:
                    v = traj.values[static_cast<std::size_t>(std::llround((t_start + 0.5 * dtr) / step))];
                    break;
                case SamplingRule::SlotAverage: {
                    const long long i0 = std::llround(t_start / step);
                    const long long i1 = std::llround(t_end / step);
                    double acc = 0.0;
                    for (long long i = i0 + 1; i <= i1; ++i)
                        acc += traj.values[static_cast<std::size_t>(i)];
                    v = acc / static_cast<double>(i1 - i0);
                    break;
                }
            }
            out(l, col) = v;
        }
    }
    return StateMatrix{std::move(out), 0};
}

// Convolution weights coupling node l to node l-j of the previous delay round:
// weight[j] is the impulse response integrated over one node slot at offset
// j*delta_tau, computed by composite Simpson quadrature.
struct CouplingKernel {
    std::vector<double> weights;
    double truncation_threshold = 1e-4;
};

inline CouplingKernel coupling_kernel(double response_time_s, double node_duration_s,
                                      int max_offset, double truncation_threshold = 1e-4) {
    if (!std::isfinite(response_time_s) || response_time_s <= 0.0)
        throw ParameterError("coupling_kernel: response time must be positive and finite");
    if (!std::isfinite(node_duration_s) || node_duration_s <= 0.0)
        throw ParameterError("coupling_kernel: node duration must be positive and finite");
    if (max_offset < 1) throw ParameterError("coupling_kernel: need at least one offset");

    // panel width must resolve T_R even when a slot spans many response times
    const int panels = std::max(
        64, static_cast<int>(std::min(4096.0, 64.0 * std::ceil(node_duration_s / response_time_s))));
    CouplingKernel k;
    k.truncation_threshold = truncation_threshold;
    for (int j = 0; j < max_offset; ++j) {
        const double a = j * node_duration_s;
        const double w = node_duration_s / (panels * 6.0);
        double acc = 0.0;
        for (int i = 0; i < panels; ++i) {
            const double lo = a + i * (node_duration_s / panels);
            const double hi = lo + node_duration_s / panels;
            acc += w * (impulse_response(lo, response_time_s) +
                        4.0 * impulse_response(0.5 * (lo + hi), response_time_s) +
                        impulse_response(hi, response_time_s));
        }
        if (j > 0 && acc < truncation_threshold * k.weights.front()) break;
        k.weights.push_back(acc);
    }
    return k;
}

// One round of the instantaneous-limit map. Node l of the new round couples to
// node l-k of the previous round; l-k < 0 falls into the tail of the round
// before that, so two rounds of state are carried.
struct NodeRounds {
    Vector older;  // round n-2
    Vector last;   // round n-1
};

namespace detail {
inline double map_node(double delayed, double u_in, const SystemParams& p) {
    return activation(p.f, p.principal_gain() * p.mu * delayed + p.rho * u_in + p.phi0);
}
}  // namespace detail

inline Vector discrete_map_step(const NodeRounds& prev, const Vector& u_in,
                                const SystemParams& p, const NodeGrid& grid) {
    grid.validate();
    const int n = grid.n_nodes;
    const int k = grid.desync_k;
    if (k >= n) throw ConfigError("discrete_map_step: desync k must be smaller than N");
    if (prev.last.size() != n || prev.older.size() != n)
        throw ContractError("discrete_map_step: round buffers must hold N nodes");
    if (u_in.size() != n) throw ContractError("discrete_map_step: masked input must hold N values");

    Vector out(n);
    for (int l = 0; l < n; ++l) {
        const int src = l - k;
        const double delayed = src >= 0 ? prev.last[src] : prev.older[n + src];
        out[l] = detail::map_node(delayed, u_in[l], p);
    }
    return out;
}

struct EquivalenceOptions {
    int washout_steps = 10;
    Scheme scheme = Scheme::RK4;
};

// Runs the continuous integrator and the discrete map on the same masked input
// and returns the largest per-node deviation after washout. Valid only in the
// instantaneous regime (delta_tau >= 50*T_R, k >= 1), where one node slot fully
// absorbs the system's transient.
inline double equivalence_check(const SystemParams& p, const NodeGrid& grid,
                                const Matrix& masked_input, int n_steps,
                                const EquivalenceOptions& opt = {}) {
    p.validate();
    grid.validate();
    if (grid.node_duration_s < 50.0 * p.response_time_s)
        throw RegimeError("equivalence_check: requires delta_tau >= 50*T_R");
    if (grid.desync_k < 1 || grid.desync_k >= grid.n_nodes)
        throw RegimeError("equivalence_check: requires 1 <= k < N");
    if (p.taps.size() != 1)
        throw ContractError("equivalence_check: exactly one feedback tap expected");
    if (std::abs(p.taps[0].delay_s - grid.delay_s()) > 1e-9 * grid.delay_s())
        throw ContractError("equivalence_check: tap delay must equal the grid delay");
    if (masked_input.rows() != grid.n_nodes || masked_input.cols() < n_steps)
        throw ContractError("equivalence_check: masked input must be N x n_steps");
    if (opt.washout_steps >= n_steps)
        throw ContractError("equivalence_check: washout leaves no steps");

    const int n = grid.n_nodes;
    const double dt = grid.node_duration_s;
    const double x0 = steady_state_or_zero(p, 0.0);

    // continuous side
    const auto n_sub = static_cast<long long>(
        std::max(16.0, std::ceil(16.0 * dt / p.response_time_s)));
    const double step = dt / static_cast<double>(n_sub);
    auto drive = [&](double t) {
        auto g = static_cast<long long>(std::floor(t / dt));
        const long long total = static_cast<long long>(n) * n_steps;
        if (g < 0) g = 0;
        if (g >= total) g = total - 1;
        return masked_input(static_cast<int>(g % n), static_cast<int>(g / n));
    };
    const double duration = static_cast<double>(n_steps) * grid.mask_duration_s();
    const Trajectory traj = integrate(p, drive, step, duration, x0, opt.scheme);

    NodeGrid demux = grid;
    demux.sampling = SamplingRule::EndOfSlot;
    const StateMatrix cont = continuous_to_nodes(traj, demux, n_steps, 0.0);

    // discrete side
    NodeRounds rounds{Vector::Constant(n, x0), Vector::Constant(n, x0)};
    double max_err = 0.0;
    for (int s = 0; s < n_steps; ++s) {
        Vector next = discrete_map_step(rounds, masked_input.col(s), p, grid);
        if (s >= opt.washout_steps) {
            const double err = (next - cont.values.col(s)).cwiseAbs().maxCoeff();
            max_err = std::max(max_err, err);
        }
        rounds.older = std::move(rounds.last);
        rounds.last = std::move(next);
    }
    return max_err;
}

}  // namespace delayrc
