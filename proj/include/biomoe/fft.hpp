#pragma once

#include "biomoe/tensor.hpp"

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace biomoe::fft {

using cdouble = std::complex<double>;

/// One-dimensional transform plan for a fixed length.
///
/// Lengths whose prime factors are all in {2, 3, 5, 7} run a recursive
/// mixed-radix Cooley-Tukey; anything else goes through Bluestein's chirp-z
/// with a power-of-two inner transform. Both directions are unnormalized.
class Plan {
public:
    explicit Plan(std::size_t n);
    ~Plan();
    Plan(Plan&&) noexcept;
    Plan& operator=(Plan&&) noexcept;

    std::size_t size() const noexcept { return n_; }
    bool uses_bluestein() const noexcept { return bluestein_ != nullptr; }

    /// In place. `scratch` must hold at least size() elements (more for Bluestein;
    /// see scratch_size()).
    void forward(std::span<cdouble> data, std::span<cdouble> scratch) const;
    void inverse(std::span<cdouble> data, std::span<cdouble> scratch) const;
    std::size_t scratch_size() const noexcept;

    void forward(std::span<cdouble> data) const;
    void inverse(std::span<cdouble> data) const;

private:
    struct Bluestein;

    void mixed_radix(const cdouble* in, std::size_t stride, cdouble* out, std::size_t n,
                     std::size_t factor_index) const;
    void run_mixed(std::span<cdouble> data, std::span<cdouble> scratch) const;

    std::size_t n_ = 0;
    std::vector<std::size_t> factors_;
    std::vector<cdouble> twiddles_;
    std::unique_ptr<Bluestein> bluestein_;
};

std::vector<cdouble> forward(std::vector<cdouble> data);
std::vector<cdouble> inverse(std::vector<cdouble> data);

}  // namespace biomoe::fft

namespace biomoe {

/// Unnormalized 2-D DFT over the leading two axes of a [h, w, d] tensor, one plane per channel.
ComplexTensor fft2(const Tensor& t);

/// Inverse of fft2 (divides by h*w), complex result.
ComplexTensor ifft2_complex(const ComplexTensor& c);

/// Real part of ifft2_complex.
Tensor ifft2(const ComplexTensor& c);

}  // namespace biomoe
