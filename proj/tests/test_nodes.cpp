#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "delayrc/mask.hpp"
#include "delayrc/nodes.hpp"
#include "delayrc/rng.hpp"
#include "delayrc/tasks.hpp"

using namespace delayrc;
using Catch::Approx;

namespace {

Trajectory sampled(double step, double duration, double (*fn)(double)) {
    Trajectory t;
    t.step_s = step;
    const auto n = static_cast<std::size_t>(std::llround(duration / step));
    for (std::size_t i = 0; i <= n; ++i) t.values.push_back(fn(static_cast<double>(i) * step));
    return t;
}

double closed_form_weight(int j, double t_r, double dt) {
    return std::exp(-j * dt / t_r) * (1.0 - std::exp(-dt / t_r));
}

}  // namespace

TEST_CASE("constant trajectory de-multiplexes to constant states") {
    const Trajectory traj = sampled(0.125, 40.0, [](double) { return 0.7; });
    for (SamplingRule rule : {SamplingRule::EndOfSlot, SamplingRule::SlotAverage, SamplingRule::MidSlot})
        for (double xi : {0.0, 0.3}) {
            NodeGrid grid{4, 1.0, 1, rule};
            const StateMatrix m = continuous_to_nodes(traj, grid, 8, xi);
            REQUIRE(m.values.rows() == 4);
            REQUIRE(m.values.cols() == 8);
            CHECK(m.values.minCoeff() == Approx(0.7));
            CHECK(m.values.maxCoeff() == Approx(0.7));
        }
}

TEST_CASE("sawtooth slot sampling matches hand-computed values") {
    const Trajectory traj = sampled(1.0 / 16.0, 6.0, [](double t) { return t; });
    NodeGrid grid{4, 1.0, 0, SamplingRule::EndOfSlot};

    const StateMatrix plain = continuous_to_nodes(traj, grid, 1, 0.0);
    for (int l = 0; l < 4; ++l) CHECK(plain.values(l, 0) == Approx(l + 1.0));

    const StateMatrix desynced = continuous_to_nodes(traj, grid, 1, 0.25);
    const double expected[] = {1.25, 2.5, 3.75, 5.0};
    for (int l = 0; l < 4; ++l) CHECK(desynced.values(l, 0) == Approx(expected[l]));

    grid.sampling = SamplingRule::MidSlot;
    const StateMatrix mid = continuous_to_nodes(traj, grid, 1, 0.0);
    for (int l = 0; l < 4; ++l) CHECK(mid.values(l, 0) == Approx(l + 0.5));

    grid.sampling = SamplingRule::SlotAverage;
    const StateMatrix avg = continuous_to_nodes(traj, grid, 1, 0.0);
    // mean of samples at (l + i/16), i = 1..16
    for (int l = 0; l < 4; ++l) CHECK(avg.values(l, 0) == Approx(l + 17.0 / 32.0));
}

TEST_CASE("too-short trajectories are rejected") {
    const Trajectory traj = sampled(0.125, 7.9, [](double) { return 0.0; });
    NodeGrid grid{4, 1.0, 1, SamplingRule::EndOfSlot};
    CHECK_THROWS_AS(continuous_to_nodes(traj, grid, 2, 0.0), ContractError);
    CHECK_NOTHROW(continuous_to_nodes(traj, grid, 1, 0.0));
    const Trajectory coarse = sampled(0.6, 40.0, [](double) { return 0.0; });
    CHECK_THROWS_AS(continuous_to_nodes(coarse, grid, 2, 0.0), ParameterError);
}

TEST_CASE("plain end-of-slot de-multiplexing reproduces trajectory samples bit-exactly") {
    Rng rng(17);
    Trajectory traj;
    traj.step_s = 0.125;
    for (int i = 0; i <= 4 * 5 * 7; ++i) traj.values.push_back(rng.uniform(-2.0, 2.0));
    NodeGrid grid{5, 0.5, 0, SamplingRule::EndOfSlot};
    const StateMatrix m = continuous_to_nodes(traj, grid, 6, 0.0);
    for (int n = 0; n < 6; ++n)
        for (int l = 0; l < 5; ++l) {
            const std::size_t idx = static_cast<std::size_t>(n * 5 + l + 1) * 4;
            REQUIRE(m.values(l, n) == traj.values[idx]);
        }
}

TEST_CASE("coupling kernel matches the slot-integrated impulse response") {
    const double t_r = 1.3, dt = 0.4;
    const CouplingKernel k = coupling_kernel(t_r, dt, 12, 0.0);
    REQUIRE(k.weights.size() == 12);
    for (int j = 0; j < 12; ++j)
        CHECK(k.weights[j] == Approx(closed_form_weight(j, t_r, dt)).epsilon(1e-8));
    for (std::size_t j = 1; j < k.weights.size(); ++j) {
        CHECK(k.weights[j] >= 0.0);
        CHECK(k.weights[j] <= k.weights[j - 1]);
    }
}

TEST_CASE("instantaneous nodes decouple") {
    const CouplingKernel k = coupling_kernel(1.0, 50.0, 4, 0.0);
    CHECK(k.weights[0] == Approx(1.0).margin(1e-6));
    CHECK(k.weights[1] < 1e-20);
}

TEST_CASE("slot equal to the response time gives the 1/e weight ratio") {
    const CouplingKernel k = coupling_kernel(2.0, 2.0, 6, 0.0);
    CHECK(k.weights[1] / k.weights[0] == Approx(std::exp(-1.0)).epsilon(1e-9));
}

TEST_CASE("inertia regime couples many node offsets") {
    const CouplingKernel k = coupling_kernel(1.0, 0.2, 40, 0.0);
    int above = 0;
    for (double w : k.weights)
        if (w > 0.01 * k.weights[0]) ++above;
    CHECK(above >= 5);
}

TEST_CASE("kernel truncation and mass") {
    const CouplingKernel trunc = coupling_kernel(1.0, 0.5, 100, 1e-4);
    CHECK(trunc.weights.size() == 19);  // exp(-0.5 j) drops below 1e-4 at j = 19

    const CouplingKernel full = coupling_kernel(1.0, 0.3, 67, 0.0);
    double sum = 0.0;
    for (double w : full.weights) sum += w;
    CHECK(sum <= 1.0);
    CHECK(sum >= 1.0 - 1e-6);
}

TEST_CASE("discrete map: open-loop limit is a static map") {
    SystemParams p;
    p.taps = {FeedbackTap{6.0, 0.0}};
    p.rho = 0.8;
    p.phi0 = 0.25;
    NodeGrid grid{3, 2.0, 0, SamplingRule::EndOfSlot};
    NodeRounds rounds{Vector::Constant(3, 0.4), Vector::Constant(3, 0.9)};
    Vector u(3);
    u << 0.1, -0.5, 1.2;
    const Vector out = discrete_map_step(rounds, u, p, grid);
    for (int l = 0; l < 3; ++l) {
        const double s = std::sin(0.8 * u[l] + 0.25);
        CHECK(out[l] == Approx(s * s));
    }
}

TEST_CASE("discrete map: the k-shift wraps into the round before last") {
    SystemParams p;
    p.f = Nonlinearity::Linear;
    p.taps = {FeedbackTap{4.0, 1.0}};
    p.mu = 1.0;
    p.rho = 0.0;
    p.phi0 = 0.0;
    NodeGrid grid{3, 1.0, 1, SamplingRule::EndOfSlot};
    NodeRounds rounds{Vector::Zero(3), Vector::Zero(3)};
    rounds.older << 0.0, 0.0, 42.0;  // c' of round n-2
    rounds.last << 1.0, 2.0, 3.0;    // a, b, c
    const Vector out = discrete_map_step(rounds, Vector::Zero(3), p, grid);
    CHECK(out[0] == 42.0);
    CHECK(out[1] == 1.0);
    CHECK(out[2] == 2.0);
}

TEST_CASE("discrete map: a one-hot state shifts by k per round") {
    SystemParams p;
    p.f = Nonlinearity::Linear;
    p.taps = {FeedbackTap{8.0, 1.0}};
    p.rho = 0.0;
    NodeGrid grid{6, 1.0, 2, SamplingRule::EndOfSlot};
    for (int j = 0; j + 2 < 6; ++j) {
        NodeRounds rounds{Vector::Zero(6), Vector::Zero(6)};
        rounds.last[j] = 1.0;
        const Vector out = discrete_map_step(rounds, Vector::Zero(6), p, grid);
        for (int l = 0; l < 6; ++l) CHECK(out[l] == (l == j + 2 ? 1.0 : 0.0));
    }
}

TEST_CASE("discrete map contract errors") {
    SystemParams p;
    p.taps = {FeedbackTap{8.0, 0.5}};
    NodeGrid bad{3, 1.0, 3, SamplingRule::EndOfSlot};
    NodeRounds rounds{Vector::Zero(3), Vector::Zero(3)};
    CHECK_THROWS_AS(discrete_map_step(rounds, Vector::Zero(3), p, bad), ConfigError);

    NodeGrid grid{3, 1.0, 1, SamplingRule::EndOfSlot};
    CHECK_THROWS_AS(discrete_map_step(rounds, Vector::Zero(2), p, grid), ContractError);
    NodeRounds short_rounds{Vector::Zero(2), Vector::Zero(3)};
    CHECK_THROWS_AS(discrete_map_step(short_rounds, Vector::Zero(3), p, grid), ContractError);
}

TEST_CASE("iterated rounds equal the flattened single-sequence recurrence") {
    SystemParams p;
    p.f = Nonlinearity::SinSquared;
    p.taps = {FeedbackTap{10.0, 0.7}};
    p.mu = 0.9;
    p.rho = 0.4;
    p.phi0 = 0.3;
    const int n = 7, k = 3, rounds_n = 30;
    NodeGrid grid{n, 1.0, k, SamplingRule::EndOfSlot};
    const double x0 = 0.2;

    Rng rng(23);
    Matrix u(n, rounds_n);
    for (int c = 0; c < rounds_n; ++c)
        for (int l = 0; l < n; ++l) u(l, c) = rng.uniform(-1.0, 1.0);

    // module path: two-round buffers
    NodeRounds state{Vector::Constant(n, x0), Vector::Constant(n, x0)};
    Matrix iterated(n, rounds_n);
    for (int c = 0; c < rounds_n; ++c) {
        Vector next = discrete_map_step(state, u.col(c), p, grid);
        iterated.col(c) = next;
        state.older = std::move(state.last);
        state.last = std::move(next);
    }

    // oracle: one long recurrence over the flattened node sequence
    const int d = n + k;
    std::vector<double> seq(static_cast<std::size_t>(d), x0);
    for (int g = 0; g < n * rounds_n; ++g) {
        const double delayed = seq[seq.size() - d];
        const double arg = p.taps[0].gain * p.mu * delayed + p.rho * u(g % n, g / n) + p.phi0;
        const double s = std::sin(arg);
        seq.push_back(s * s);
    }
    for (int c = 0; c < rounds_n; ++c)
        for (int l = 0; l < n; ++l)
            REQUIRE(iterated(l, c) == seq[static_cast<std::size_t>(d + c * n + l)]);
}

TEST_CASE("equivalence check: fixed point with no feedback and no drive") {
    const int n = 8;
    NodeGrid grid{n, 100.0, 1, SamplingRule::EndOfSlot};
    SystemParams p;
    p.taps = {FeedbackTap{grid.delay_s(), 0.0}};
    p.rho = 0.0;
    p.phi0 = 0.3;
    const Matrix zeros = Matrix::Zero(n, 12);
    CHECK(equivalence_check(p, grid, zeros, 12) <= 1e-9);
}

TEST_CASE("equivalence check: linear map in the instantaneous regime") {
    const int n = 10;
    NodeGrid grid{n, 100.0, 1, SamplingRule::EndOfSlot};
    SystemParams p;
    p.f = Nonlinearity::Linear;
    p.taps = {FeedbackTap{grid.delay_s(), 0.6}};
    p.rho = 0.5;
    p.phi0 = 0.1;
    Rng rng(3);
    Matrix drive(n, 30);
    for (int c = 0; c < 30; ++c)
        for (int l = 0; l < n; ++l) drive(l, c) = rng.uniform(-1.0, 1.0);
    CHECK(equivalence_check(p, grid, drive, 30) <= 1e-3);
}

TEST_CASE("equivalence check: Ikeda reservoir driven by NARMA10 input") {
    const int n = 20;
    NodeGrid grid{n, 100.0, 1, SamplingRule::EndOfSlot};
    SystemParams p;
    p.taps = {FeedbackTap{grid.delay_s(), 0.4}};
    p.rho = 1.0;
    p.phi0 = 0.2 * kPi;
    const TaskDataset task = narma10(200, 99);
    const InputMask mask = make_mask(MaskSpec{MaskKind::BinaryBipolar}, 5, n, 1);
    const Matrix masked = mask.weights * task.inputs.leftCols(40);
    CHECK(equivalence_check(p, grid, masked, 40) <= 1e-3);
}

TEST_CASE("equivalence check rejects out-of-regime configurations") {
    NodeGrid slow{10, 10.0, 1, SamplingRule::EndOfSlot};
    SystemParams p;
    p.taps = {FeedbackTap{slow.delay_s(), 0.4}};
    CHECK_THROWS_AS(equivalence_check(p, slow, Matrix::Zero(10, 5), 5), RegimeError);

    NodeGrid synced{10, 100.0, 0, SamplingRule::EndOfSlot};
    SystemParams ps;
    ps.taps = {FeedbackTap{synced.delay_s(), 0.4}};
    CHECK_THROWS_AS(equivalence_check(ps, synced, Matrix::Zero(10, 5), 5), RegimeError);

    NodeGrid grid{10, 100.0, 1, SamplingRule::EndOfSlot};
    SystemParams wrong;
    wrong.taps = {FeedbackTap{grid.delay_s() * 1.5, 0.4}};
    CHECK_THROWS_AS(equivalence_check(wrong, grid, Matrix::Zero(10, 5), 5), ContractError);
}

TEST_CASE("node grid validation") {
    CHECK_THROWS_AS((NodeGrid{0, 1.0, 0, SamplingRule::EndOfSlot}).validate(), ParameterError);
    CHECK_THROWS_AS((NodeGrid{4, 0.0, 0, SamplingRule::EndOfSlot}).validate(), ParameterError);
    CHECK_THROWS_AS((NodeGrid{4, 1.0, -1, SamplingRule::EndOfSlot}).validate(), ParameterError);
    const NodeGrid grid{49, 0.5, 1, SamplingRule::EndOfSlot};
    CHECK(grid.mask_duration_s() == Approx(24.5));
    CHECK(grid.delay_s() == Approx(25.0));  // tau_d1 = tau_m + delta_tau
}
