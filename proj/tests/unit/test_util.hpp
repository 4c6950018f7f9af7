#pragma once

#include "biomoe/tensor.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace biomoe::oracle {

inline Tensor random_tensor(Shape dims, std::uint32_t seed, float lo = -1.0f, float hi = 1.0f)
{
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> dist(lo, hi);
    Tensor t(std::move(dims));
    for (float& v : t.data())
        v = dist(gen);
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

inline double l2_norm(const Tensor& a)
{
    double s = 0.0;
    for (float v : a.data())
        s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

inline double relative_error(const Tensor& got, const Tensor& want)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double d = static_cast<double>(got[i]) - want[i];
        num += d * d;
        den += static_cast<double>(want[i]) * want[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

/// O((hw)^2) two-dimensional DFT of a [h, w, d] tensor, per channel, in double precision.
inline std::vector<std::complex<double>> naive_dft2(const std::vector<std::complex<double>>& x, std::size_t h,
                                                    std::size_t w, std::size_t d, bool inverse = false)
{
    std::vector<std::complex<double>> out(x.size());
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t u = 0; u < h; ++u)
            for (std::size_t v = 0; v < w; ++v) {
                std::complex<double> acc{};
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const double angle = sign * 2.0 * std::numbers::pi *
                                             (static_cast<double>(u * y) / h + static_cast<double>(v * xx) / w);
                        acc += x[(y * w + xx) * d + c] * std::complex<double>(std::cos(angle), std::sin(angle));
                    }
                out[(u * w + v) * d + c] = inverse ? acc / static_cast<double>(h * w) : acc;
            }
    return out;
}

/// Direct nested-loop depthwise convolution, zero padded.
inline Tensor naive_depthwise(const Tensor& t, const Tensor& k, const Tensor& bias, std::size_t stride,
                              std::size_t pad)
{
    const std::size_t h = t.dim(0), w = t.dim(1), c = t.dim(2), ks = k.dim(0);
    const std::size_t oh = (h + 2 * pad - ks) / stride + 1, ow = (w + 2 * pad - ks) / stride + 1;
    Tensor out({oh, ow, c});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = bias.empty() ? 0.0 : bias[ch];
                for (std::size_t ky = 0; ky < ks; ++ky)
                    for (std::size_t kx = 0; kx < ks; ++kx) {
                        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                        const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                        if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                            continue;
                        acc += static_cast<double>(t.at({static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ch})) *
                               k.at({ky, kx, ch});
                    }
                out.at({oy, ox, ch}) = static_cast<float>(acc);
            }
    return out;
}

inline Tensor naive_matmul(const Tensor& a, const Tensor& b)
{
    Tensor out({a.dim(0), b.dim(1)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < b.dim(1); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.dim(1); ++k)
                acc += static_cast<double>(a.at({i, k})) * b.at({k, j});
            out.at({i, j}) = static_cast<float>(acc);
        }
    return out;
}

/// softmax(q k^T / sqrt(dk)) v computed with explicit loops in double.
inline Tensor naive_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv)
{
    const Tensor q = naive_matmul(x, wq), k = naive_matmul(x, wk), v = naive_matmul(x, wv);
    const std::size_t n = x.dim(0), dk = wq.dim(1), dv = wv.dim(1);
    Tensor out({n, dv});
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t c = 0; c < dk; ++c)
                acc += static_cast<double>(q.at({i, c})) * k.at({j, c});
            s[j] = acc / std::sqrt(static_cast<double>(dk));
            mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (auto& e : s) {
            e = std::exp(e - mx);
            z += e;
        }
        for (std::size_t c = 0; c < dv; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                acc += s[j] / z * v.at({j, c});
            out.at({i, c}) = static_cast<float>(acc);
        }
    }
    return out;
}

}  // namespace biomoe::oracle
