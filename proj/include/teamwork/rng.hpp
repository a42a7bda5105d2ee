#pragma once

#include <cstdint>
#include <random>

#include "teamwork/common.hpp"

namespace teamwork {

namespace detail {
// splitmix64 finalizer, used to derive well-spread child seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}
}  // namespace detail

// Seeded pseudo-random stream. Identical seed gives an identical stream,
// bit-exact across runs of the same build. Instances are single-owner.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Uniform in [0, 1).
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }

    // Uniform in the open interval (0, 1).
    double uniform_open() {
        double u;
        do {
            u = uniform();
        } while (u <= 0.0);
        return u;
    }

    double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal draw.
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw ParamError("uniform_int: n must be positive");
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Deterministic child stream; independent draws for stream ids.
    Rng split(std::uint64_t stream) const {
        return Rng(detail::mix64(seed_ ^ detail::mix64(stream + 1)));
    }

  private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace teamwork
