#include "biomoe/rng.hpp"

#include <cmath>
#include <numbers>

namespace biomoe {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) noexcept : key_(mix64(seed)) {}

Rng Rng::stream(std::uint64_t seed, std::uint64_t image_index, std::uint64_t epoch) noexcept
{
    Rng r(seed);
    r.key_ = mix64(r.key_ ^ mix64(image_index ^ mix64(epoch + 0x5851F42D4C957F2Dull)));
    return r;
}

Rng Rng::split(std::uint64_t tag) const noexcept
{
    Rng r(0);
    r.key_ = mix64(key_ ^ mix64(tag + 0x2545F4914F6CDD1Dull));
    return r;
}

std::uint64_t Rng::next_u64() noexcept
{
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() noexcept
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept
{
    return lo + (hi - lo) * uniform();
}

std::uint64_t Rng::below(std::uint64_t n) noexcept
{
    // rejection keeps the draw exactly uniform
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do
        x = next_u64();
    while (x >= limit);
    return x % n;
}

bool Rng::bernoulli(double p) noexcept
{
    return uniform() < p;
}

double Rng::normal() noexcept
{
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::truncated_normal(double std) noexcept
{
    double z;
    do
        z = normal();
    while (std::abs(z) > 2.0);
    return z * std;
}

double Rng::exponential() noexcept
{
    return -std::log(1.0 - uniform());
}

}  // namespace biomoe
