#pragma once

#include <array>

#include "ds3m/rng.hpp"

namespace ds3m {

/// Series with ground-truth regime labels and latent path retained.
struct LabeledSeries {
    Tensor y;                         // T x D
    std::vector<std::size_t> d_true;  // length T
    Tensor z_true;                    // T x Z
};

/// The two-regime nonlinear toy system. Noise parameters are variances.
struct ToyConfig {
    std::size_t length = 2000;
    double stay_prob = 0.95;        // both diagonal entries of the true chain
    double trans_var[2] = {10.0, 1.0};
    double emit_var[2] = {5.0, 0.5};
    std::uint64_t seed = 0;
};

/// Regime 0: z = 0.6 z' + 0.4 tanh(x + z') + w,  y = 1.5 z + tanh(z) + v
/// Regime 1: z = 0.1 z' + 0.2 sin(x + z') + w,   y = 0.5 z + sin(z) + v
/// with x_t = y_{t-1}, y_0 = 0, z_0 = 0, d_0 ~ Bernoulli(0.5).
inline LabeledSeries simulate_toy(const ToyConfig& cfg) {
    Rng rng(cfg.seed);
    LabeledSeries out;
    out.y = Tensor({cfg.length, 1});
    out.z_true = Tensor({cfg.length, 1});
    out.d_true.resize(cfg.length);

    std::size_t d = rng.uniform() < 0.5 ? 0 : 1;
    double z = 0.0, y_prev = 0.0;
    for (std::size_t t = 0; t < cfg.length; ++t) {
        d = rng.uniform() < cfg.stay_prob ? d : 1 - d;
        double x = y_prev;
        double y;
        if (d == 0) {
            z = 0.6 * z + 0.4 * std::tanh(x + z) + rng.normal() * std::sqrt(cfg.trans_var[0]);
            y = 1.5 * z + std::tanh(z) + rng.normal() * std::sqrt(cfg.emit_var[0]);
        } else {
            z = 0.1 * z + 0.2 * std::sin(x + z) + rng.normal() * std::sqrt(cfg.trans_var[1]);
            y = 0.5 * z + std::sin(z) + rng.normal() * std::sqrt(cfg.emit_var[1]);
        }
        out.y.at(t, 0) = y;
        out.z_true.at(t, 0) = z;
        out.d_true[t] = d;
        y_prev = y;
    }
    return out;
}

/// Lorenz attractor observed through a random linear map with additive noise.
struct LorenzConfig {
    std::size_t length = 3000;
    double alpha = 10.0;
    double beta = 28.0;
    double gamma = 8.0 / 3.0;
    double dt = 0.01;
    double obs_var = 0.5;
    std::array<double, 3> initial_state = {1.0, 1.0, 1.0};
    std::uint64_t seed = 0;
};

namespace detail {
inline std::array<double, 3> lorenz_field(const std::array<double, 3>& z, double a, double b,
                                          double g) {
    return {a * (z[1] - z[0]), z[0] * (b - z[2]) - z[1], z[0] * z[1] - g * z[2]};
}
}  // namespace detail

/// RK4 integration of the Lorenz field; observations y_t = W z_t + v_t with W
/// a seeded 10x3 standard normal kept fixed for the run. The ground-truth
/// regime is the attractor lobe: sign of z_1 (0 for negative), smoothed with a
/// 3-step majority filter so single-step jitter at the lobe boundary does not
/// count as a regime.
inline LabeledSeries simulate_lorenz(const LorenzConfig& cfg) {
    Rng rng(cfg.seed);
    Tensor W = rng.standard_normal({10, 3});

    LabeledSeries out;
    out.y = Tensor({cfg.length, 10});
    out.z_true = Tensor({cfg.length, 3});
    out.d_true.resize(cfg.length);

    std::array<double, 3> z = cfg.initial_state;
    std::vector<std::size_t> raw_label(cfg.length);
    for (std::size_t t = 0; t < cfg.length; ++t) {
        auto k1 = detail::lorenz_field(z, cfg.alpha, cfg.beta, cfg.gamma);
        std::array<double, 3> z2, z3, z4;
        for (int i = 0; i < 3; ++i) z2[i] = z[i] + 0.5 * cfg.dt * k1[i];
        auto k2 = detail::lorenz_field(z2, cfg.alpha, cfg.beta, cfg.gamma);
        for (int i = 0; i < 3; ++i) z3[i] = z[i] + 0.5 * cfg.dt * k2[i];
        auto k3 = detail::lorenz_field(z3, cfg.alpha, cfg.beta, cfg.gamma);
        for (int i = 0; i < 3; ++i) z4[i] = z[i] + cfg.dt * k3[i];
        auto k4 = detail::lorenz_field(z4, cfg.alpha, cfg.beta, cfg.gamma);
        for (int i = 0; i < 3; ++i)
            z[i] += cfg.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        double norm = std::abs(z[0]) + std::abs(z[1]) + std::abs(z[2]);
        if (norm > 1e3)
            throw std::runtime_error("simulate_lorenz: trajectory escaped, integration unstable");

        for (std::size_t j = 0; j < 3; ++j) out.z_true.at(t, j) = z[j];
        double noise_std = std::sqrt(cfg.obs_var);
        for (std::size_t i = 0; i < 10; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < 3; ++j) acc += W.at(i, j) * z[j];
            out.y.at(t, i) = acc + rng.normal() * noise_std;
        }
        raw_label[t] = z[0] < 0.0 ? 0 : 1;
    }

    // 3-step majority filter over the raw lobe labels
    for (std::size_t t = 0; t < cfg.length; ++t) {
        std::size_t lo = t == 0 ? 0 : t - 1;
        std::size_t hi = t + 1 < cfg.length ? t + 1 : t;
        int votes = 0, n = 0;
        for (std::size_t s = lo; s <= hi; ++s, ++n) votes += static_cast<int>(raw_label[s]);
        out.d_true[t] = 2 * votes > n ? 1 : 0;
    }
    return out;
}

}  // namespace ds3m
