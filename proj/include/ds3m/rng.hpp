#pragma once

#include <cstdint>
#include <random>

#include "ds3m/tensor.hpp"

namespace ds3m {

/// Seeded random stream. All randomness in the project flows through explicit
/// instances of this; there is no ambient RNG.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return unif_(engine_); }

    double normal() { return norm_(engine_); }

    /// Uniform weights in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    Tensor init_weights(std::vector<std::size_t> shape, std::size_t fan_in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor t(std::move(shape));
        for (double& v : t.data) v = (2.0 * uniform() - 1.0) * bound;
        return t;
    }

    Tensor standard_normal(std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (double& v : t.data) v = normal();
        return t;
    }

    std::size_t categorical(const Tensor& probs) {
        double u = uniform();
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
            acc += probs[k];
            if (u < acc) return k;
        }
        return probs.size() - 1;
    }

    std::mt19937_64& engine() { return engine_; }

    /// Independent substream; used to give Monte-Carlo paths their own seeds.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 over the pair
        std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
        x ^= x >> 30;
        x *= 0xBF58476D1CE4E5B9ULL;
        x ^= x >> 27;
        x *= 0x94D049BB133111EBULL;
        x ^= x >> 31;
        return x;
    }

  private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
    std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace ds3m
