#pragma once

#include <cstdint>

namespace biomoe {

std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based generator: draw i of a stream is mix64(key + i * golden). Streams are derived
/// by hashing, so (seed, index, epoch) always reproduces the same sequence on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept;

    /// Per-image stream used by augmentation.
    static Rng stream(std::uint64_t seed, std::uint64_t image_index, std::uint64_t epoch) noexcept;

    /// Independent child stream; does not advance this one.
    Rng split(std::uint64_t tag) const noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept;
    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept;
    bool bernoulli(double p) noexcept;
    double normal() noexcept;
    /// Normal(0, std) redrawn until it falls within +-2 std.
    double truncated_normal(double std) noexcept;
    /// Gamma(1) variate, used for flat Dirichlet weights.
    double exponential() noexcept;

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t draws() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace biomoe
