#include "biomoe/fft.hpp"

#include "biomoe/error.hpp"

#include <cmath>
#include <numbers>

namespace biomoe::fft {

namespace {

std::vector<std::size_t> small_factors(std::size_t n)
{
    std::vector<std::size_t> out;
    for (std::size_t p : {4, 2, 3, 5, 7}) {
        while (n % p == 0) {
            out.push_back(p);
            n /= p;
        }
    }
    if (n != 1)
        return {};
    return out;
}

std::vector<cdouble> make_twiddles(std::size_t n)
{
    std::vector<cdouble> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        w[k] = {std::cos(angle), std::sin(angle)};
    }
    return w;
}

}  // namespace

struct Plan::Bluestein {
    std::size_t m = 0;
    std::vector<cdouble> chirp;      // exp(-i pi k^2 / n), k < n
    std::vector<cdouble> kernel_hat; // forward transform of the conjugate chirp, length m
    std::unique_ptr<Plan> inner;
};

Plan::Plan(std::size_t n) : n_(n)
{
    if (n == 0)
        throw ShapeError("fft length must be positive");
    factors_ = small_factors(n);
    if (n == 1 || !factors_.empty()) {
        twiddles_ = make_twiddles(n);
        return;
    }

    auto b = std::make_unique<Bluestein>();
    b->m = 1;
    while (b->m < 2 * n - 1)
        b->m <<= 1;
    b->chirp.resize(n);
    const std::size_t two_n = 2 * n;
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the phase argument small for long transforms
        const std::size_t k2 = (k * k) % two_n;
        const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        b->chirp[k] = {std::cos(angle), std::sin(angle)};
    }
    b->inner = std::make_unique<Plan>(b->m);
    b->kernel_hat.assign(b->m, cdouble{});
    b->kernel_hat[0] = std::conj(b->chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        b->kernel_hat[k] = std::conj(b->chirp[k]);
        b->kernel_hat[b->m - k] = std::conj(b->chirp[k]);
    }
    b->inner->forward(b->kernel_hat);
    bluestein_ = std::move(b);
}

Plan::~Plan() = default;
Plan::Plan(Plan&&) noexcept = default;
Plan& Plan::operator=(Plan&&) noexcept = default;

std::size_t Plan::scratch_size() const noexcept
{
    if (bluestein_)
        return 2 * bluestein_->m;
    return n_;
}

void Plan::mixed_radix(const cdouble* in, std::size_t stride, cdouble* out, std::size_t n,
                       std::size_t factor_index) const
{
    if (n == 1) {
        out[0] = in[0];
        return;
    }
    const std::size_t p = factors_[factor_index];
    const std::size_t m = n / p;
    for (std::size_t q = 0; q < p; ++q)
        mixed_radix(in + q * stride, stride * p, out + q * m, m, factor_index + 1);

    // twiddle index step for a sub-transform of length n inside the full length n_
    const std::size_t step = n_ / n;
    cdouble tmp[7];
    cdouble res[7];
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t q = 0; q < p; ++q)
            tmp[q] = out[q * m + k] * twiddles_[(q * k * step) % n_];
        for (std::size_t r = 0; r < p; ++r) {
            cdouble acc = tmp[0];
            for (std::size_t q = 1; q < p; ++q)
                acc += tmp[q] * twiddles_[((q * r * m) % n) * step];
            res[r] = acc;
        }
        for (std::size_t r = 0; r < p; ++r)
            out[k + r * m] = res[r];
    }
}

void Plan::run_mixed(std::span<cdouble> data, std::span<cdouble> scratch) const
{
    if (n_ == 1)
        return;
    std::copy(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n_), scratch.begin());
    mixed_radix(scratch.data(), 1, data.data(), n_, 0);
}

void Plan::forward(std::span<cdouble> data, std::span<cdouble> scratch) const
{
    if (data.size() < n_ || scratch.size() < scratch_size())
        throw ShapeError("fft buffer too small");
    if (!bluestein_) {
        run_mixed(data, scratch);
        return;
    }
    const auto& b = *bluestein_;
    std::span<cdouble> work = scratch.subspan(0, b.m);
    std::span<cdouble> inner_scratch = scratch.subspan(b.m, b.m);
    for (std::size_t k = 0; k < n_; ++k)
        work[k] = data[k] * b.chirp[k];
    std::fill(work.begin() + static_cast<std::ptrdiff_t>(n_), work.end(), cdouble{});
    b.inner->forward(work, inner_scratch);
    for (std::size_t k = 0; k < b.m; ++k)
        work[k] *= b.kernel_hat[k];
    b.inner->inverse(work, inner_scratch);
    const double scale = 1.0 / static_cast<double>(b.m);
    for (std::size_t k = 0; k < n_; ++k)
        data[k] = work[k] * b.chirp[k] * scale;
}

void Plan::inverse(std::span<cdouble> data, std::span<cdouble> scratch) const
{
    for (std::size_t k = 0; k < n_; ++k)
        data[k] = std::conj(data[k]);
    forward(data, scratch);
    for (std::size_t k = 0; k < n_; ++k)
        data[k] = std::conj(data[k]);
}

void Plan::forward(std::span<cdouble> data) const
{
    std::vector<cdouble> scratch(scratch_size());
    forward(data, scratch);
}

void Plan::inverse(std::span<cdouble> data) const
{
    std::vector<cdouble> scratch(scratch_size());
    inverse(data, scratch);
}

std::vector<cdouble> forward(std::vector<cdouble> data)
{
    if (data.empty())
        return data;
    Plan(data.size()).forward(data);
    return data;
}

std::vector<cdouble> inverse(std::vector<cdouble> data)
{
    if (data.empty())
        return data;
    Plan(data.size()).inverse(data);
    return data;
}

}  // namespace biomoe::fft

namespace biomoe {

namespace {

using fft::cdouble;

void require_plane_tensor(const Shape& dims, const char* op)
{
    if (dims.size() != 3)
        throw ShapeError(std::string(op) + " expects a [h, w, d] tensor, got " + shape_to_string(dims));
}

// Transforms every [h, w] plane of a channels-last buffer in place.
void transform_planes(std::vector<cdouble>& buf, std::size_t h, std::size_t w, std::size_t d, bool inverse)
{
    const fft::Plan row_plan(w);
    const fft::Plan col_plan(h);
    std::vector<cdouble> line(std::max(h, w));
    std::vector<cdouble> scratch(std::max(row_plan.scratch_size(), col_plan.scratch_size()));

    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x)
                line[x] = buf[(y * w + x) * d + c];
            std::span<cdouble> s(line.data(), w);
            inverse ? row_plan.inverse(s, scratch) : row_plan.forward(s, scratch);
            for (std::size_t x = 0; x < w; ++x)
                buf[(y * w + x) * d + c] = line[x];
        }
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t y = 0; y < h; ++y)
                line[y] = buf[(y * w + x) * d + c];
            std::span<cdouble> s(line.data(), h);
            inverse ? col_plan.inverse(s, scratch) : col_plan.forward(s, scratch);
            for (std::size_t y = 0; y < h; ++y)
                buf[(y * w + x) * d + c] = line[y];
        }
    }
}

}  // namespace

ComplexTensor fft2(const Tensor& t)
{
    require_plane_tensor(t.dims(), "fft2");
    if (!t.all_finite())
        throw ProcessingError("fft2: input contains non-finite values");
    const std::size_t h = t.dim(0), w = t.dim(1), d = t.dim(2);
    std::vector<cdouble> buf(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        buf[i] = {t[i], 0.0};
    transform_planes(buf, h, w, d, false);
    ComplexTensor out(t.dims());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out.re()[i] = static_cast<float>(buf[i].real());
        out.im()[i] = static_cast<float>(buf[i].imag());
    }
    return out;
}

ComplexTensor ifft2_complex(const ComplexTensor& c)
{
    require_plane_tensor(c.dims(), "ifft2");
    if (!c.re().all_finite() || !c.im().all_finite())
        throw ProcessingError("ifft2: input contains non-finite values");
    const std::size_t h = c.dims()[0], w = c.dims()[1], d = c.dims()[2];
    std::vector<cdouble> buf(c.size());
    for (std::size_t i = 0; i < c.size(); ++i)
        buf[i] = {c.re()[i], c.im()[i]};
    transform_planes(buf, h, w, d, true);
    const double scale = 1.0 / static_cast<double>(h * w);
    ComplexTensor out(c.dims());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out.re()[i] = static_cast<float>(buf[i].real() * scale);
        out.im()[i] = static_cast<float>(buf[i].imag() * scale);
    }
    return out;
}

Tensor ifft2(const ComplexTensor& c)
{
    return ifft2_complex(c).re();
}

}  // namespace biomoe
