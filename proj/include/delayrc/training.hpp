#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "common.hpp"
#include "nodes.hpp"
#include "reservoir.hpp"
#include "rng.hpp"

namespace delayrc {

struct TeacherMatrix {
    enum class Encoding { Regression, OneHot };

    Matrix values;  // K x Q
    Encoding encoding = Encoding::Regression;

    static TeacherMatrix regression(Matrix m) {
        return TeacherMatrix{std::move(m), Encoding::Regression};
    }

    static TeacherMatrix one_hot(const std::vector<int>& labels, int n_classes) {
        Matrix m = Matrix::Zero(n_classes, static_cast<int>(labels.size()));
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || labels[i] >= n_classes)
                throw ContractError("TeacherMatrix: label outside class range");
            m(labels[i], static_cast<int>(i)) = 1.0;
        }
        return TeacherMatrix{std::move(m), Encoding::OneHot};
    }

    void validate() const {
        if (!values.allFinite()) throw ContractError("TeacherMatrix: non-finite entries");
        if (encoding == Encoding::OneHot) {
            for (int c = 0; c < values.cols(); ++c) {
                int ones = 0;
                for (int r = 0; r < values.rows(); ++r) {
                    const double v = values(r, c);
                    if (v == 1.0)
                        ++ones;
                    else if (v != 0.0)
                        throw ContractError("TeacherMatrix: one-hot entries must be 0 or 1");
                }
                if (ones != 1)
                    throw ContractError("TeacherMatrix: one-hot columns need exactly one 1");
            }
        }
    }
};

// Trained readout y(n) = W * x(n). With bias_included the last weight column
// acts on a constant-1 feature appended to the state vector.
struct ReadoutWeights {
    Matrix weights;  // K x (N [+1])
    double lambda = 0.0;
    bool bias_included = false;

    int n_features() const {
        return static_cast<int>(weights.cols()) - (bias_included ? 1 : 0);
    }
    int n_outputs() const { return static_cast<int>(weights.rows()); }
};

// Scale-free default regularization: 1e-6 * trace(X X^T) / N.
inline double default_lambda(const Matrix& features) {
    return 1e-6 * features.squaredNorm() / static_cast<double>(features.rows());
}

inline double default_lambda(const StateMatrix& mx) { return default_lambda(mx.values); }

// Ridge regression on the regularized normal equations,
// W = solve(X X^T + lambda I, X T^T)^T, via a Cholesky factorization rather
// than an explicit inverse.
inline ReadoutWeights ridge_train(const Matrix& features, const Matrix& targets, double lambda,
                                  bool with_bias = false) {
    if (!std::isfinite(lambda) || lambda < 0.0)
        throw ParameterError("ridge_train: lambda must be nonnegative and finite");
    if (features.cols() < 1) throw ContractError("ridge_train: need at least one sample");
    if (targets.cols() != features.cols())
        throw ContractError("ridge_train: feature and target sample counts differ");

    const auto q = features.cols();
    Matrix x;
    if (with_bias) {
        x.resize(features.rows() + 1, q);
        x.topRows(features.rows()) = features;
        x.bottomRows(1).setOnes();
    } else {
        x = features;
    }

    Matrix gram = x * x.transpose();
    gram.diagonal().array() += lambda;
    const Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
        if (lambda == 0.0)
            throw RankError("ridge_train: normal equations singular at lambda = 0; use lambda > 0");
        throw RankError("ridge_train: normal equations could not be factorized");
    }
    const Matrix wt = llt.solve(x * targets.transpose());
    return ReadoutWeights{wt.transpose(), lambda, with_bias};
}

inline ReadoutWeights ridge_train(const StateMatrix& mx, const TeacherMatrix& teacher,
                                  double lambda, bool with_bias = false) {
    teacher.validate();
    return ridge_train(mx.values, teacher.values, lambda, with_bias);
}

inline Matrix predict(const ReadoutWeights& w, const Matrix& features) {
    if (features.rows() != w.n_features())
        throw ContractError("predict: feature count does not match the readout");
    if (!w.bias_included) return w.weights * features;
    return w.weights.leftCols(w.n_features()) * features +
           w.weights.rightCols(1) * Eigen::RowVectorXd::Ones(features.cols());
}

inline Matrix predict(const ReadoutWeights& w, const StateMatrix& mx) {
    return predict(w, mx.values);
}

// One-hot decoding: argmax per column, ties resolved to the lowest index.
inline std::vector<int> decode_argmax(const Matrix& outputs) {
    std::vector<int> labels(outputs.cols());
    for (int c = 0; c < outputs.cols(); ++c) {
        int best = 0;
        for (int r = 1; r < outputs.rows(); ++r)
            if (outputs(r, c) > outputs(best, c)) best = r;
        labels[c] = best;
    }
    return labels;
}

inline std::vector<int> predict_labels(const ReadoutWeights& w, const StateMatrix& mx) {
    return decode_argmax(predict(w, mx));
}

// Mean squared error over the target's population variance.
inline double nmse(const Eigen::Ref<const Eigen::VectorXd>& y,
                   const Eigen::Ref<const Eigen::VectorXd>& target) {
    if (y.size() != target.size()) throw ContractError("nmse: length mismatch");
    if (y.size() < 2) throw ContractError("nmse: need at least two samples");
    const double mean = target.mean();
    const double var = (target.array() - mean).square().mean();
    if (var <= 0.0) throw MetricError("nmse: target variance is zero");
    const double mse = (y - target).squaredNorm() / static_cast<double>(y.size());
    return mse / var;
}

inline double error_rate(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.empty()) throw ContractError("error_rate: empty input");
    if (predicted.size() != truth.size()) throw ContractError("error_rate: length mismatch");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] != truth[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(predicted.size());
}

inline double ser(const std::vector<int>& predicted_symbols, const std::vector<int>& true_symbols) {
    return error_rate(predicted_symbols, true_symbols);
}

// Contiguous k-fold splits; every sample index lands in exactly one test fold.
inline std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_splits(int q, int folds) {
    if (q < 2) throw ContractError("kfold_splits: need at least two samples");
    if (folds < 2 || folds > q) throw ParameterError("kfold_splits: fold count must be in [2, Q]");
    std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
    for (int f = 0; f < folds; ++f) {
        const int lo = static_cast<int>(static_cast<long long>(f) * q / folds);
        const int hi = static_cast<int>(static_cast<long long>(f + 1) * q / folds);
        std::vector<int> train, test;
        for (int i = 0; i < q; ++i)
            (i >= lo && i < hi ? test : train).push_back(i);
        out.emplace_back(std::move(train), std::move(test));
    }
    return out;
}

// Squared Pearson correlation, zero when either side is degenerate.
inline double squared_correlation(const Eigen::Ref<const Eigen::VectorXd>& a,
                                  const Eigen::Ref<const Eigen::VectorXd>& b) {
    const double ma = a.mean(), mb = b.mean();
    const Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
    const double va = da.square().sum(), vb = db.square().sum();
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    const double cov = (da * db).sum();
    const double r2 = cov * cov / (va * vb);
    if (!std::isfinite(r2)) return 0.0;
    return std::clamp(r2, 0.0, 1.0);
}

struct McSettings {
    int train_steps = 10000;
    int test_steps = 2000;
    int max_lag = -1;       // < 0: twice the feature count
    double lambda = -1.0;   // < 0: default_lambda of the training block
    std::uint64_t seed = 1;
    bool with_bias = true;
};

struct MemoryCapacity {
    std::vector<double> linear_per_lag;     // index = lag d
    std::vector<double> quadratic_per_lag;  // centered u^2(n-d)
    std::vector<double> cross_per_lag;      // u(n-d)*u(n-d-1)
    double linear = 0.0, quadratic = 0.0, cross = 0.0, total = 0.0;
};

// Memory capacity from an externally supplied probe sequence. The probe is
// affinely standardized to [-1, 1] before use, so capacities are invariant
// under affine rescaling of the probe. Per lag d, a readout is trained on
// u(n-d), centered u^2(n-d) and u(n-d)*u(n-d-1); the capacity of each target
// is the squared correlation between prediction and target on held-out data.
inline MemoryCapacity memory_capacity(const ReservoirConfig& cfg, std::vector<double> probe,
                                      const McSettings& s = {}) {
    cfg.validate();
    const int n_feat = cfg.nodes_per_step();
    const int max_lag = s.max_lag < 0 ? 2 * n_feat : s.max_lag;
    if (max_lag < 0 || max_lag > 2 * n_feat)
        throw ParameterError("memory_capacity: max lag must be within [0, 2N]");
    if (s.train_steps < 2 || s.test_steps < 2)
        throw ParameterError("memory_capacity: need train and test steps");

    const int washout = cfg.washout_steps();
    const int lag_pad = std::max(0, max_lag + 1 - washout);
    const int t_total = washout + lag_pad + s.train_steps + s.test_steps;
    if (static_cast<int>(probe.size()) < t_total)
        throw StatisticsError("memory_capacity: probe shorter than required " +
                              std::to_string(t_total) + " samples");
    probe.resize(t_total);

    double lo = probe[0], hi = probe[0];
    for (double v : probe) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) throw DataError("memory_capacity: degenerate probe");
    for (double& v : probe) v = -1.0 + 2.0 * (v - lo) / (hi - lo);

    Matrix inputs(1, t_total);
    for (int i = 0; i < t_total; ++i) inputs(0, i) = probe[i];
    const StateMatrix states = run(cfg, inputs);
    const int q = states.n_steps();
    if (q < 10 * n_feat)
        throw StatisticsError("memory_capacity: fewer than 10*N usable samples");

    const int j0 = lag_pad;
    const Matrix x_train_raw = states.values.middleCols(j0, s.train_steps);
    const Matrix x_test_raw = states.values.middleCols(j0 + s.train_steps, s.test_steps);
    auto with_bias_rows = [&](const Matrix& m) {
        if (!s.with_bias) return m;
        Matrix x(m.rows() + 1, m.cols());
        x.topRows(m.rows()) = m;
        x.bottomRows(1).setOnes();
        return x;
    };
    const Matrix x_train = with_bias_rows(x_train_raw);
    const Matrix x_test = with_bias_rows(x_test_raw);

    const double lambda = s.lambda < 0.0 ? default_lambda(x_train_raw) : s.lambda;
    Matrix gram = x_train * x_train.transpose();
    gram.diagonal().array() += lambda;
    const Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success)
        throw RankError("memory_capacity: state Gram matrix could not be factorized");

    double mean_sq = 0.0;
    for (double v : probe) mean_sq += v * v;
    mean_sq /= static_cast<double>(t_total);

    // global probe index of state column j is washout + j
    auto capacity_for = [&](auto&& target_of) {
        Eigen::VectorXd y_train(s.train_steps), y_test(s.test_steps);
        for (int j = 0; j < s.train_steps; ++j) y_train[j] = target_of(washout + j0 + j);
        for (int j = 0; j < s.test_steps; ++j)
            y_test[j] = target_of(washout + j0 + s.train_steps + j);
        const Eigen::VectorXd w = llt.solve(x_train * y_train);
        const Eigen::VectorXd pred = x_test.transpose() * w;
        return squared_correlation(pred, y_test);
    };

    MemoryCapacity mc;
    for (int d = 0; d <= max_lag; ++d) {
        mc.linear_per_lag.push_back(capacity_for([&](int g) { return probe[g - d]; }));
        mc.quadratic_per_lag.push_back(capacity_for(
            [&](int g) { return probe[g - d] * probe[g - d] - mean_sq; }));
        mc.cross_per_lag.push_back(capacity_for(
            [&](int g) { return probe[g - d] * probe[g - d - 1]; }));
    }
    for (double v : mc.linear_per_lag) mc.linear += v;
    for (double v : mc.quadratic_per_lag) mc.quadratic += v;
    for (double v : mc.cross_per_lag) mc.cross += v;
    mc.total = mc.linear + mc.quadratic + mc.cross;
    return mc;
}

// Memory capacity with an internally generated i.i.d. uniform [-1, 1] probe.
inline MemoryCapacity memory_capacity(const ReservoirConfig& cfg, const McSettings& s = {}) {
    const int n_feat = cfg.nodes_per_step();
    const int max_lag = s.max_lag < 0 ? 2 * n_feat : s.max_lag;
    const int lag_pad = std::max(0, max_lag + 1 - cfg.washout_steps());
    const int t_total = cfg.washout_steps() + lag_pad + s.train_steps + s.test_steps;
    Rng rng(s.seed);
    std::vector<double> probe(t_total);
    for (double& v : probe) v = rng.uniform(-1.0, 1.0);
    return memory_capacity(cfg, std::move(probe), s);
}

}  // namespace delayrc
