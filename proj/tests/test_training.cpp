#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "delayrc/mask.hpp"
#include "delayrc/reservoir.hpp"
#include "delayrc/rng.hpp"
#include "delayrc/training.hpp"
#include "oracles.hpp"

using namespace delayrc;
using Catch::Approx;

namespace {

Matrix random_matrix(int r, int c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
    return m;
}

// explicit regularized pseudo-inverse via Gauss-Jordan, independent of the
// library's Cholesky path
Matrix pinv_oracle(const Matrix& x, const Matrix& t, double lambda) {
    const int n = static_cast<int>(x.rows());
    Matrix gram = x * x.transpose();
    gram.diagonal().array() += lambda;
    std::vector<double> flat(static_cast<std::size_t>(n) * n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) flat[static_cast<std::size_t>(r) * n + c] = gram(r, c);
    const std::vector<double> inv_flat = oracles::gauss_jordan_inverse(flat, n);
    Matrix inv(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) inv(r, c) = inv_flat[static_cast<std::size_t>(r) * n + c];
    return (inv * (x * t.transpose())).transpose();
}

ReservoirConfig mc_config(int n, int k, double beta, double phi0, double rho,
                          EngineMode mode, Nonlinearity f) {
    ReservoirConfig cfg;
    cfg.grid = NodeGrid{n, 100.0, k, SamplingRule::EndOfSlot};
    cfg.params.response_time_s = 1.0;
    if (mode != EngineMode::ELM) cfg.params.taps = {FeedbackTap{cfg.grid.delay_s(), beta}};
    cfg.params.rho = rho;
    cfg.params.phi0 = phi0;
    cfg.params.f = f;
    cfg.mode = mode;
    cfg.mask = make_mask(MaskSpec{MaskKind::BinaryBipolar}, 3, n, 1);
    return cfg;
}

}  // namespace

TEST_CASE("ridge regression recovers the identity") {
    const Matrix eye = Matrix::Identity(3, 3);
    const ReadoutWeights w0 = ridge_train(eye, eye, 0.0);
    CHECK((w0.weights - eye).cwiseAbs().maxCoeff() < 1e-12);

    const ReadoutWeights w1 = ridge_train(eye, eye, 1.0);
    CHECK((w1.weights - 0.5 * eye).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ridge regression matches the dense pseudo-inverse oracle") {
    for (std::uint64_t trial = 0; trial < 25; ++trial) {
        Rng rng(trial * 7 + 1);
        const int n = 2 + static_cast<int>(rng.below(19));
        const int q = n + static_cast<int>(rng.below(31));
        const int k = 1 + static_cast<int>(rng.below(3));
        const Matrix x = random_matrix(n, q, trial + 100);
        const Matrix t = random_matrix(k, q, trial + 200);
        const double lambda = 1e-6;
        const ReadoutWeights w = ridge_train(x, t, lambda);
        const Matrix w_oracle = pinv_oracle(x, t, lambda);
        const double rel =
            (w.weights - w_oracle).norm() / std::max(1e-30, w_oracle.norm());
        REQUIRE(rel <= 1e-8);
    }
}

TEST_CASE("singular normal equations at lambda zero raise a rank error") {
    Matrix x(3, 4);
    x << 1, 2, 3, 4, 1, 2, 3, 4, 0, 1, 0, 1;  // duplicate rows
    const Matrix t = Matrix::Ones(1, 4);
    CHECK_THROWS_AS(ridge_train(x, t, 0.0), RankError);
    CHECK_NOTHROW(ridge_train(x, t, 1e-8));
    CHECK_THROWS_AS(ridge_train(x, t, -1.0), ParameterError);
    CHECK_THROWS_AS(ridge_train(x, Matrix::Ones(1, 3), 1.0), ContractError);
}

TEST_CASE("training residual is non-decreasing in lambda") {
    const Matrix x = random_matrix(8, 30, 5);
    const Matrix t = random_matrix(1, 30, 6);
    double prev = -1.0;
    for (double lambda : {0.0, 1e-6, 1e-3, 1e-1, 1.0, 10.0}) {
        const ReadoutWeights w = ridge_train(x, t, lambda);
        const double res = (w.weights * x - t).norm();
        CHECK(res >= prev - 1e-12);
        prev = res;
    }
}

TEST_CASE("bias feature absorbs constant targets") {
    const Matrix x = random_matrix(5, 40, 9);
    const Matrix t = Matrix::Constant(1, 40, 2.0);
    const ReadoutWeights w = ridge_train(x, t, 1e-10, true);
    REQUIRE(w.bias_included);
    REQUIRE(w.weights.cols() == 6);
    const Matrix y = predict(w, x);
    CHECK((y.array() - 2.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("predict is the plain readout product") {
    const Matrix x = random_matrix(4, 7, 11);
    ReadoutWeights zero{Matrix::Zero(2, 4), 0.0, false};
    CHECK(predict(zero, x).cwiseAbs().maxCoeff() == 0.0);

    ReadoutWeights ident{Matrix::Identity(4, 4), 0.0, false};
    CHECK((predict(ident, x) - x).cwiseAbs().maxCoeff() == 0.0);

    ReadoutWeights hand{Matrix(2, 2), 0.0, false};
    hand.weights << 1, 2, 0, 1;
    Matrix v(2, 1);
    v << 3, 4;
    const Matrix y = predict(hand, v);
    CHECK(y(0, 0) == 11.0);
    CHECK(y(1, 0) == 4.0);

    CHECK_THROWS_AS(predict(hand, x), ContractError);
}

TEST_CASE("argmax decoding resolves ties to the lowest index") {
    Matrix out(3, 2);
    out << 0.5, 0.1, 0.5, 0.9, 0.2, 0.9;
    const std::vector<int> labels = decode_argmax(out);
    CHECK(labels == std::vector<int>{0, 1});
}

TEST_CASE("one-hot teachers validate their encoding") {
    const TeacherMatrix t = TeacherMatrix::one_hot({0, 2, 1}, 3);
    CHECK_NOTHROW(t.validate());
    TeacherMatrix bad = t;
    bad.values(1, 0) = 1.0;  // two ones in a column
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad.values(1, 0) = 0.5;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    CHECK_THROWS_AS(TeacherMatrix::one_hot({3}, 3), ContractError);
}

TEST_CASE("nmse definition") {
    Eigen::VectorXd target(4);
    target << 1.0, 2.0, 3.0, 4.0;
    CHECK(nmse(target, target) == 0.0);

    const Eigen::VectorXd mean_pred = Eigen::VectorXd::Constant(4, target.mean());
    CHECK(nmse(mean_pred, target) == Approx(1.0));

    const double c = 0.3;
    const Eigen::VectorXd offset = target.array() + c;
    const double var = (target.array() - target.mean()).square().mean();
    CHECK(nmse(offset, target) == Approx(c * c / var));

    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 1.0);
    CHECK_THROWS_AS(nmse(target, flat), MetricError);
    Eigen::VectorXd three(3);
    three << 1, 2, 3;
    CHECK_THROWS_AS(nmse(three, target), ContractError);
    Eigen::VectorXd one(1);
    one << 1;
    CHECK_THROWS_AS(nmse(one, one), ContractError);
}

TEST_CASE("classification error fractions") {
    CHECK(error_rate({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(error_rate({1, 2, 3}, {3, 1, 2}) == 1.0);
    std::vector<int> truth(500, 1), pred(500, 1);
    pred[17] = 2;
    pred[400] = 0;
    CHECK(ser(pred, truth) == Approx(0.004));  // 2 wrong out of 500
    CHECK_THROWS_AS(error_rate({}, {}), ContractError);
    CHECK_THROWS_AS(error_rate({1}, {1, 2}), ContractError);
}

TEST_CASE("k-fold rotation covers each sample exactly once") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const int q = 5 + static_cast<int>(rng.below(40));
        const int folds = 2 + static_cast<int>(rng.below(std::min(6, q - 1)));
        const auto splits = kfold_splits(q, folds);
        REQUIRE(static_cast<int>(splits.size()) == folds);
        std::vector<int> seen(q, 0);
        for (const auto& [train, test] : splits) {
            CHECK(static_cast<int>(train.size() + test.size()) == q);
            for (int i : test) ++seen[i];
        }
        for (int i = 0; i < q; ++i) REQUIRE(seen[i] == 1);
    }
    CHECK_THROWS_AS(kfold_splits(4, 5), ParameterError);
    CHECK_THROWS_AS(kfold_splits(4, 1), ParameterError);
}

TEST_CASE("ELM without feedback has no memory beyond the current step") {
    ReservoirConfig cfg = mc_config(20, 0, 0.0, 0.3, 0.8, EngineMode::ELM,
                                    Nonlinearity::SinSquared);
    McSettings s;
    s.train_steps = 3000;
    s.test_steps = 800;
    s.max_lag = 10;
    s.seed = 4;
    const MemoryCapacity mc = memory_capacity(cfg, s);
    for (std::size_t d = 2; d < mc.linear_per_lag.size(); ++d)
        CHECK(mc.linear_per_lag[d] <= 0.05);
    CHECK(mc.linear <= 1.5);
    CHECK(mc.linear_per_lag[0] > 0.5);  // the current input is recoverable
}

TEST_CASE("a near-unit-gain linear ring recalls most of its length") {
    ReservoirConfig cfg = mc_config(10, 1, 0.9, 0.0, 0.05, EngineMode::DiscreteMap,
                                    Nonlinearity::Linear);
    McSettings s;
    s.train_steps = 3000;
    s.test_steps = 800;
    s.max_lag = 20;
    s.seed = 5;
    const MemoryCapacity mc = memory_capacity(cfg, s);
    CHECK(mc.linear >= 0.8 * 10);
    // recall is spread over the whole ring length rather than the first lags
    CHECK(mc.linear_per_lag[0] > 0.5);
    CHECK(mc.linear_per_lag[5] > 0.5);
    CHECK(mc.linear_per_lag[9] > 0.5);
}

TEST_CASE("total capacity never exceeds the readout rank bound") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 5 + static_cast<int>(rng.below(8));
        const int k = trial % 2;
        const double beta = rng.uniform(0.2, 1.2);
        const double phi0 = rng.uniform(0.0, 0.5 * kPi);
        const double rho = rng.uniform(0.1, 1.0);
        const EngineMode mode = trial % 3 == 2 ? EngineMode::ELM : EngineMode::DiscreteMap;
        ReservoirConfig cfg = mc_config(n, mode == EngineMode::ELM ? 0 : std::max(k, 0),
                                        beta, phi0, rho, mode, Nonlinearity::SinSquared);
        McSettings s;
        s.train_steps = 2000;
        s.test_steps = 700;
        s.seed = trial + 11;
        const MemoryCapacity mc = memory_capacity(cfg, s);
        CHECK(mc.total <= n + 1);
        CHECK(mc.linear >= 0.0);
    }
}

TEST_CASE("capacities are invariant under affine rescaling of the probe") {
    ReservoirConfig cfg = mc_config(8, 1, 0.6, 0.25 * kPi, 0.5, EngineMode::DiscreteMap,
                                    Nonlinearity::SinSquared);
    McSettings s;
    s.train_steps = 1500;
    s.test_steps = 500;
    s.max_lag = 12;
    Rng rng(41);
    const int total = cfg.washout_steps() + s.max_lag + 1 + s.train_steps + s.test_steps;
    std::vector<double> probe(total), scaled(total);
    for (int i = 0; i < total; ++i) {
        probe[i] = rng.uniform(-1.0, 1.0);
        scaled[i] = 3.0 * probe[i] + 0.7;
    }
    const MemoryCapacity a = memory_capacity(cfg, probe, s);
    const MemoryCapacity b = memory_capacity(cfg, scaled, s);
    CHECK(a.total == Approx(b.total).margin(1e-9));
    for (std::size_t d = 0; d < a.linear_per_lag.size(); ++d) {
        CHECK(a.linear_per_lag[d] == Approx(b.linear_per_lag[d]).margin(1e-9));
        CHECK(a.quadratic_per_lag[d] == Approx(b.quadratic_per_lag[d]).margin(1e-9));
        CHECK(a.cross_per_lag[d] == Approx(b.cross_per_lag[d]).margin(1e-9));
    }
}

TEST_CASE("memory capacity input validation") {
    ReservoirConfig cfg = mc_config(10, 1, 0.5, 0.2, 0.5, EngineMode::DiscreteMap,
                                    Nonlinearity::SinSquared);
    McSettings s;
    s.max_lag = 30;  // > 2N
    CHECK_THROWS_AS(memory_capacity(cfg, s), ParameterError);

    McSettings tiny;
    tiny.train_steps = 20;
    tiny.test_steps = 10;
    CHECK_THROWS_AS(memory_capacity(cfg, tiny), StatisticsError);

    McSettings ok;
    CHECK_THROWS_AS(memory_capacity(cfg, std::vector<double>(50, 0.5), ok),
                    StatisticsError);  // probe too short
}
