#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "common.hpp"

namespace delayrc {

enum class Nonlinearity { SinSquared, Sine, Tanh, Linear };
enum class Scheme { Euler, RK4 };

inline double activation(Nonlinearity f, double a) {
    switch (f) {
        case Nonlinearity::SinSquared: {
            const double s = std::sin(a);
            return s * s;
        }
        case Nonlinearity::Sine:
            return std::sin(a);
        case Nonlinearity::Tanh:
            return std::tanh(a);
        case Nonlinearity::Linear:
            return a;
    }
    return a;
}

struct FeedbackTap {
    double delay_s = 1.0;
    double gain = 0.0;  // beta for the principal tap
};

// All dynamical parameters of the delay system
//   T_R x'(t) + x(t) = f( sum_i gain_i * mu * x(t - delay_i) + rho * u(t) + phi0 ).
// An empty tap list means open loop (ELM operation).
struct SystemParams {
    double response_time_s = 1.0;  // T_R
    std::vector<FeedbackTap> taps;
    double mu = 1.0;
    double rho = 1.0;
    double phi0 = 0.0;
    Nonlinearity f = Nonlinearity::SinSquared;

    void validate() const {
        if (!std::isfinite(response_time_s) || response_time_s <= 0.0)
            throw ParameterError("SystemParams: response time must be positive and finite");
        for (const auto& tap : taps) {
            if (!std::isfinite(tap.delay_s) || tap.delay_s <= 0.0)
                throw ParameterError("SystemParams: tap delays must be positive and finite");
            if (!std::isfinite(tap.gain))
                throw ParameterError("SystemParams: tap gains must be finite");
        }
    }

    double max_delay_s() const {
        double m = 0.0;
        for (const auto& tap : taps) m = std::max(m, tap.delay_s);
        return m;
    }

    double loop_gain() const {
        double g = 0.0;
        for (const auto& tap : taps) g += tap.gain;
        return g;
    }

    double principal_gain() const { return taps.empty() ? 0.0 : taps.front().gain; }
};

// Impulse response of the low-pass stage: exp(-t/T_R)/T_R for t >= 0, else 0.
inline double impulse_response(double t_s, double response_time_s) {
    if (!std::isfinite(response_time_s) || response_time_s <= 0.0)
        throw ParameterError("impulse_response: response time must be positive and finite");
    if (t_s < 0.0) return 0.0;
    return std::exp(-t_s / response_time_s) / response_time_s;
}

// Right-hand side scaled by T_R: returns f(sum gain_i*mu*delayed_i + rho*u + phi0) - x.
inline double rhs(double x, std::span<const double> delayed, double u, const SystemParams& p) {
    if (delayed.size() != p.taps.size())
        throw ContractError("rhs: one delayed state per tap required");
    double arg = p.rho * u + p.phi0;
    for (std::size_t i = 0; i < delayed.size(); ++i) arg += p.taps[i].gain * p.mu * delayed[i];
    return activation(p.f, arg) - x;
}

// Uniformly sampled solution, values[i] = x(t0 + i*step).
struct Trajectory {
    double t0_s = 0.0;
    double step_s = 0.0;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double time_s(std::size_t i) const { return t0_s + static_cast<double>(i) * step_s; }
    double duration_s() const {
        return values.empty() ? 0.0 : static_cast<double>(values.size() - 1) * step_s;
    }

    // value at the sample closest to t
    double sample_near(double t_s) const {
        if (values.empty()) throw ContractError("Trajectory: empty");
        const long long i = std::llround((t_s - t0_s) / step_s);
        if (i < 0 || i >= static_cast<long long>(values.size()))
            throw ContractError("Trajectory: time outside sampled range");
        return values[static_cast<std::size_t>(i)];
    }
};

// Rolling window of past states at the integration step, newest sample at
// front_time(). Stores value and slope per sample: delayed lookups that fall
// between grid points use cubic Hermite interpolation, lookups at grid points
// return stored samples exactly. Times at or before the start of integration
// are answered from the pre-history (an exact constant, or the user-supplied
// samples).
class HistoryBuffer {
public:
    HistoryBuffer(double step_s, double span_s) {
        if (!std::isfinite(step_s) || step_s <= 0.0)
            throw ParameterError("HistoryBuffer: step must be positive and finite");
        if (!std::isfinite(span_s) || span_s < 0.0)
            throw ParameterError("HistoryBuffer: span must be nonnegative and finite");
        step_ = step_s;
        capacity_ = static_cast<std::size_t>(std::ceil(span_s / step_s)) + 2;
        value_.assign(capacity_, 0.0);
        slope_.assign(capacity_, 0.0);
    }

    // constant pre-history filled over the whole span, front at t = 0
    static HistoryBuffer constant(double value, double step_s, double span_s) {
        HistoryBuffer h(step_s, span_s);
        h.pre_constant_ = true;
        h.pre_value_ = value;
        for (std::size_t i = 0; i < h.capacity_; ++i) h.push(value, 0.0);
        h.start_time_ = 0.0;
        h.front_time_ = 0.0;
        return h;
    }

    // pre-history from samples (oldest first), front at t = 0; slopes by
    // finite differences
    static HistoryBuffer from_samples(const std::vector<double>& samples, double step_s) {
        if (samples.size() < 2)
            throw ParameterError("HistoryBuffer: need at least two samples");
        HistoryBuffer h(step_s, static_cast<double>(samples.size() - 1) * step_s);
        h.pre_constant_ = false;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            double sl;
            if (i == 0)
                sl = (samples[1] - samples[0]) / step_s;
            else if (i + 1 == samples.size())
                sl = (samples[i] - samples[i - 1]) / step_s;
            else
                sl = (samples[i + 1] - samples[i - 1]) / (2.0 * step_s);
            h.push(samples[i], sl);
        }
        h.pre_value_ = samples.front();
        h.start_time_ = 0.0;
        h.front_time_ = 0.0;
        return h;
    }

    double step_s() const { return step_; }
    double span_s() const { return static_cast<double>(capacity_ - 1) * step_; }
    std::size_t count() const { return count_; }
    double front_time_s() const { return front_time_; }

    void push(double value, double slope) {
        head_ = (head_ + 1) % capacity_;
        value_[head_] = value;
        slope_[head_] = slope;
        if (count_ < capacity_) ++count_;
        front_time_ += step_;
    }

    void set_front_slope(double slope) { slope_[head_] = slope; }

    // exact stored sample j steps behind the newest one
    double sample_back(std::size_t j) const {
        if (j >= count_) throw ContractError("HistoryBuffer: lookup beyond stored span");
        return value_[(head_ + capacity_ - j) % capacity_];
    }

    double slope_back(std::size_t j) const {
        if (j >= count_) throw ContractError("HistoryBuffer: lookup beyond stored span");
        return slope_[(head_ + capacity_ - j) % capacity_];
    }

    // value dt_back seconds behind the newest sample
    double value_back(double dt_back) const {
        const double j_real = dt_back / step_;
        const long long j_near = std::llround(j_real);
        if (std::abs(j_real - static_cast<double>(j_near)) < 1e-6) {
            if (j_near <= 0) return sample_back(0);
            if (front_time_ - static_cast<double>(j_near) * step_ <= start_time_ && pre_constant_)
                return pre_value_;
            if (static_cast<std::size_t>(j_near) >= count_)
                return pre_constant_ ? pre_value_ : sample_back(count_ - 1);
            return sample_back(static_cast<std::size_t>(j_near));
        }
        const double t = front_time_ - dt_back;
        const auto j0 = static_cast<std::size_t>(std::max(0.0, std::floor(j_real)));
        if (t < start_time_) {
            // pre-history: exact constant, or linear interpolation between the
            // user-supplied samples (the slope written at the integration start
            // must not bleed into times before it)
            if (pre_constant_) return pre_value_;
            if (j0 + 1 >= count_) return sample_back(count_ - 1);
            const double frac = j_real - static_cast<double>(j0);
            return (1.0 - frac) * sample_back(j0) + frac * sample_back(j0 + 1);
        }
        if (j0 + 1 >= count_) return pre_constant_ ? pre_value_ : sample_back(count_ - 1);
        // Hermite between samples j0+1 (older) and j0 (newer)
        const double y0 = sample_back(j0 + 1), y1 = sample_back(j0);
        const double m0 = slope_back(j0 + 1) * step_, m1 = slope_back(j0) * step_;
        const double s = 1.0 - (j_real - static_cast<double>(j0));  // 0 at older node
        const double s2 = s * s, s3 = s2 * s;
        return (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 +
               (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
    }

    double value_at(double t_s) const { return value_back(front_time_ - t_s); }

private:
    double step_ = 1.0;
    std::size_t capacity_ = 0;
    std::vector<double> value_, slope_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
    double front_time_ = 0.0;
    double start_time_ = 0.0;
    bool pre_constant_ = true;
    double pre_value_ = 0.0;
};

struct IntegrationStats {
    std::vector<double> snapped_delays_s;  // tap delays as integer multiples of the step
    double max_snap_rel = 0.0;
    long long n_steps = 0;
};

namespace detail {

inline constexpr double kDivergenceBound = 1e6;  // sin^2 systems are bounded; beyond this it is a bug

template <class DriveFn>
Trajectory integrate_impl(const SystemParams& p, DriveFn&& drive, double step_s,
                          double duration_s, HistoryBuffer hist, Scheme scheme,
                          IntegrationStats* stats) {
    p.validate();
    if (!std::isfinite(step_s) || step_s <= 0.0)
        throw ParameterError("integrate: step must be positive and finite");
    if (step_s > 0.5 * p.response_time_s)
        throw ParameterError("integrate: step too coarse (exceeds T_R/2)");
    if (!std::isfinite(duration_s) || duration_s < 0.0)
        throw ParameterError("integrate: duration must be nonnegative and finite");
    if (std::abs(hist.step_s() - step_s) > 1e-12 * step_s)
        throw ParameterError("integrate: history sample spacing must equal the step");

    // Snap tap delays onto the step grid. Lookups then hit stored samples
    // exactly and no interpolation phase drift accumulates over long runs.
    std::vector<std::size_t> offset(p.taps.size());
    double max_rel = 0.0;
    for (std::size_t i = 0; i < p.taps.size(); ++i) {
        const double d = p.taps[i].delay_s;
        const long long m = std::llround(d / step_s);
        if (m < 1) throw ParameterError("integrate: tap delay shorter than one step");
        const double rel = std::abs(d - static_cast<double>(m) * step_s) / d;
        if (rel > 1e-9)
            throw ParameterError("integrate: tap delay not commensurate with the step");
        offset[i] = static_cast<std::size_t>(m);
        max_rel = std::max(max_rel, rel);
    }
    const std::size_t max_offset = offset.empty() ? 0 : *std::max_element(offset.begin(), offset.end());
    if (hist.count() < max_offset + 1)
        throw ParameterError("integrate: history span shorter than the longest tap delay");

    const long long n = std::llround(duration_s / step_s);
    if (stats) {
        stats->snapped_delays_s.clear();
        for (std::size_t m : offset) stats->snapped_delays_s.push_back(static_cast<double>(m) * step_s);
        stats->max_snap_rel = max_rel;
        stats->n_steps = n;
    }

    const double t0 = hist.front_time_s();
    const double h = step_s;
    const double tr = p.response_time_s;
    const std::size_t n_taps = p.taps.size();

    Trajectory traj;
    traj.t0_s = t0;
    traj.step_s = h;
    traj.values.reserve(static_cast<std::size_t>(n) + 1);

    double x = hist.sample_back(0);
    traj.values.push_back(x);

    auto f_of = [&](std::span<const double> delayed, double u) {
        double arg = p.rho * u + p.phi0;
        for (std::size_t i = 0; i < n_taps; ++i) arg += p.taps[i].gain * p.mu * delayed[i];
        return activation(p.f, arg);
    };

    std::vector<double> d_now(n_taps), d_mid(n_taps), d_end(n_taps);

    // slope at the start so the first interval interpolates correctly
    {
        for (std::size_t i = 0; i < n_taps; ++i) d_now[i] = hist.sample_back(offset[i]);
        const double u0 = drive(t0 + 0.5 * h);
        hist.set_front_slope((f_of(d_now, u0) - x) / tr);
    }

    for (long long step = 0; step < n; ++step) {
        const double t = t0 + static_cast<double>(step) * h;
        // drive held constant across the step (sample-and-hold), sampled at
        // the midpoint so slot boundaries are unambiguous
        const double u = drive(t + 0.5 * h);

        double x_next, slope_next;
        if (scheme == Scheme::Euler) {
            for (std::size_t i = 0; i < n_taps; ++i) d_now[i] = hist.sample_back(offset[i]);
            const double k1 = (f_of(d_now, u) - x) / tr;
            x_next = x + h * k1;
            slope_next = (x_next - x) / h;
        } else {
            for (std::size_t i = 0; i < n_taps; ++i) {
                d_now[i] = hist.sample_back(offset[i]);
                d_mid[i] = hist.value_back((static_cast<double>(offset[i]) - 0.5) * h);
                d_end[i] = offset[i] == 1 ? x : hist.sample_back(offset[i] - 1);
            }
            const double f_now = f_of(d_now, u);
            const double f_mid = f_of(d_mid, u);
            const double f_end = f_of(d_end, u);
            const double k1 = (f_now - x) / tr;
            const double k2 = (f_mid - (x + 0.5 * h * k1)) / tr;
            const double k3 = (f_mid - (x + 0.5 * h * k2)) / tr;
            const double k4 = (f_end - (x + h * k3)) / tr;
            x_next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            slope_next = (f_end - x_next) / tr;
        }

        if (!std::isfinite(x_next) || std::abs(x_next) > kDivergenceBound)
            throw DivergenceError("integrate: state diverged at t = " + std::to_string(t + h),
                                  t + h);
        hist.push(x_next, slope_next);
        traj.values.push_back(x_next);
        x = x_next;
    }
    return traj;
}

}  // namespace detail

// Integrate from a constant initial history.
template <class DriveFn>
Trajectory integrate(const SystemParams& p, DriveFn&& drive, double step_s, double duration_s,
                     double initial_value, Scheme scheme = Scheme::RK4,
                     IntegrationStats* stats = nullptr) {
    p.validate();
    const double span = p.max_delay_s() + 2.0 * step_s;
    HistoryBuffer hist = HistoryBuffer::constant(initial_value, step_s, span);
    return detail::integrate_impl(p, std::forward<DriveFn>(drive), step_s, duration_s,
                                  std::move(hist), scheme, stats);
}

// Integrate from a sampled initial history (spacing must equal the step).
template <class DriveFn>
Trajectory integrate(const SystemParams& p, DriveFn&& drive, double step_s, double duration_s,
                     const HistoryBuffer& initial_history, Scheme scheme = Scheme::RK4,
                     IntegrationStats* stats = nullptr) {
    return detail::integrate_impl(p, std::forward<DriveFn>(drive), step_s, duration_s,
                                  initial_history, scheme, stats);
}

// Fixed point of x = f(sum(gains)*mu*x + rho*u + phi0) by direct iteration.
// Throws RegimeError when the iteration does not contract (oscillatory or
// chaotic operating point).
inline double steady_state(const SystemParams& p, double u_const) {
    p.validate();
    const double g = p.loop_gain() * p.mu;
    double x = 0.0;
    for (int it = 0; it < 100000; ++it) {
        const double r = activation(p.f, g * x + p.rho * u_const + p.phi0);
        if (std::abs(r - x) <= 1e-12) return x;
        if (!std::isfinite(r) || std::abs(r) > detail::kDivergenceBound)
            throw RegimeError("steady_state: iteration diverged");
        x = r;
    }
    throw RegimeError("steady_state: no convergence after 100000 iterations");
}

// steady_state with fallback to zero when the fixed point is not contractive.
inline double steady_state_or_zero(const SystemParams& p, double u_const) {
    try {
        return steady_state(p, u_const);
    } catch (const RegimeError&) {
        return 0.0;
    }
}

}  // namespace delayrc
