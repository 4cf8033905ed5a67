#pragma once

#include <cmath>
#include <cstdint>

#include "common.hpp"
#include "rng.hpp"

namespace delayrc {

enum class MaskKind { BinaryBipolar, BinaryUnipolar, MultiLevel, UniformRandom, TwoToneSin };

struct MaskSpec {
    MaskKind kind = MaskKind::BinaryBipolar;
    int levels = 3;           // MultiLevel only, 2..6
    int tone_p = 1;           // TwoToneSin only
    int tone_q = 2;
};

// Fixed input weights W_in mapping M features onto N virtual nodes. A pure
// function of (spec, seed, N, M).
struct InputMask {
    Matrix weights;  // N x M
    MaskSpec spec;
    std::uint64_t seed = 0;

    int n_nodes() const { return static_cast<int>(weights.rows()); }
    int n_features() const { return static_cast<int>(weights.cols()); }
};

inline InputMask make_mask(const MaskSpec& spec, std::uint64_t seed, int n_nodes, int n_features) {
    if (n_nodes < 1 || n_features < 1)
        throw ParameterError("make_mask: mask dimensions must be positive");

    Matrix w(n_nodes, n_features);
    Rng rng(seed);
    switch (spec.kind) {
        case MaskKind::BinaryBipolar:
            for (int l = 0; l < n_nodes; ++l)
                for (int m = 0; m < n_features; ++m) w(l, m) = rng.below(2) ? 1.0 : -1.0;
            break;
        case MaskKind::BinaryUnipolar:
            for (int l = 0; l < n_nodes; ++l)
                for (int m = 0; m < n_features; ++m) w(l, m) = rng.below(2) ? 1.0 : 0.0;
            break;
        case MaskKind::MultiLevel: {
            if (spec.levels < 2 || spec.levels > 6)
                throw ParameterError("make_mask: level count must be within 2..6");
            const int levels = spec.levels;
            for (int l = 0; l < n_nodes; ++l)
                for (int m = 0; m < n_features; ++m) {
                    const auto j = static_cast<double>(rng.below(levels));
                    w(l, m) = -1.0 + 2.0 * j / (levels - 1);
                }
            break;
        }
        case MaskKind::UniformRandom:
            for (int l = 0; l < n_nodes; ++l)
                for (int m = 0; m < n_features; ++m) w(l, m) = rng.uniform(-1.0, 1.0);
            break;
        case MaskKind::TwoToneSin: {
            // Analog two-tone mask: MZM response to the sum of two cosines at
            // p and q periods per mask, sampled at node centers. Entries land
            // in [0, 1].
            if (n_features != 1)
                throw ParameterError("make_mask: two-tone mask requires a scalar input");
            if (spec.tone_p == spec.tone_q || spec.tone_p < 1 || spec.tone_q < 1)
                throw ParameterError("make_mask: two-tone mask needs distinct positive p, q");
            for (int l = 0; l < n_nodes; ++l) {
                const double frac = (l + 0.5) / n_nodes;  // node-center position
                const double a = -0.25 * kPi * std::cos(2.0 * kPi * spec.tone_p * frac)
                                 - 0.25 * kPi * std::cos(2.0 * kPi * spec.tone_q * frac);
                w(l, 0) = 0.5 * (1.0 + std::sin(a));
            }
            break;
        }
    }
    return InputMask{std::move(w), spec, seed};
}

}  // namespace delayrc
