#include "biomoe/kernels.hpp"

#include "biomoe/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace biomoe {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require(bool ok, const char* message)
{
    if (!ok)
        throw ShapeError(message);
}

// x * Phi(x) with Phi from a Chebyshev erfc fit (fractional error below 1.2e-7), evaluated
// in cache-sized chunks so Eigen vectorizes the exp.
void gelu_inplace(float* data, std::size_t n)
{
    constexpr std::size_t kChunk = 256;
    using Chunk = Eigen::Array<float, Eigen::Dynamic, 1, 0, kChunk, 1>;
    for (std::size_t off = 0; off < n; off += kChunk) {
        Eigen::Map<Eigen::ArrayXf> x(data + off, static_cast<Eigen::Index>(std::min(kChunk, n - off)));
        const Chunk z = x.abs() * static_cast<float>(1.0 / std::numbers::sqrt2);
        const Chunk t = (1.0f + 0.5f * z).inverse();
        const Chunk poly =
            -1.26551223f +
            t * (1.00002368f +
                 t * (0.37409196f +
                      t * (0.09678418f +
                           t * (-0.18628806f +
                                t * (0.27886807f +
                                     t * (-1.13520398f + t * (1.48851587f + t * (-0.82215223f + t * 0.17087277f))))))));
        const Chunk half_erfc = 0.5f * t * (poly - z.square()).exp();
        // x Phi(x) = max(x, 0) - |x| erfc(|x| / sqrt2) / 2 holds for either sign
        x = x.max(0.0f) - x.abs() * half_erfc;
    }
}

std::size_t leading_volume(const Tensor& t)
{
    return t.size() / t.dims().back();
}

}  // namespace

float activate(Activation kind, float x) noexcept
{
    switch (kind) {
    case Activation::gelu:
        return static_cast<float>(0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)));
    case Activation::relu:
        return x > 0.0f ? x : 0.0f;
    case Activation::elu:
        return x > 0.0f ? x : std::expm1(x);
    case Activation::hardtanh:
        return std::clamp(x, -1.0f, 1.0f);
    }
    return x;
}

void activate_inplace(Activation kind, Tensor& x) noexcept
{
    if (kind == Activation::relu) {
        for (float& v : x.data())
            v = v > 0.0f ? v : 0.0f;
        return;
    }
    if (kind == Activation::gelu) {
        gelu_inplace(x.raw(), x.size());
        return;
    }
    for (float& v : x.data())
        v = activate(kind, v);
}

Tensor activation(Activation kind, const Tensor& x)
{
    Tensor out = x;
    activate_inplace(kind, out);
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b)
{
    require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 operands");
    if (!(a.dim(1) == b.dim(0)))
        throw ShapeError("matmul inner extents differ: " + shape_to_string(a.dims()) + " x " + shape_to_string(b.dims()));
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    Tensor out({a.dim(0), b.dim(1)});
    MatrixMap(out.raw(), m, n).noalias() = ConstMatrixMap(a.raw(), m, k) * ConstMatrixMap(b.raw(), k, n);
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias)
{
    require(w.rank() == 2, "linear weight must be [din, dout]");
    if (!(x.rank() >= 1 && x.dims().back() == w.dim(0)))
        throw ShapeError("linear input " + shape_to_string(x.dims()) + " does not match weight " + shape_to_string(w.dims()));
    require(bias.empty() || (bias.rank() == 1 && bias.dim(0) == w.dim(1)), "linear bias extent mismatch");
    const auto rows = static_cast<Eigen::Index>(leading_volume(x));
    const auto din = static_cast<Eigen::Index>(w.dim(0));
    const auto dout = static_cast<Eigen::Index>(w.dim(1));
    Shape out_dims = x.dims();
    out_dims.back() = w.dim(1);
    Tensor out(out_dims);
    MatrixMap y(out.raw(), rows, dout);
    y.noalias() = ConstMatrixMap(x.raw(), rows, din) * ConstMatrixMap(w.raw(), din, dout);
    if (!bias.empty())
        y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.raw(), dout);
    return out;
}

Tensor softmax_rows(const Tensor& x)
{
    require(x.rank() >= 1, "softmax needs at least one axis");
    Tensor out = x;
    const std::size_t n = x.dims().back();
    const std::size_t rows = x.size() / n;
    for (std::size_t r = 0; r < rows; ++r) {
        float* row = out.raw() + r * n;
        const float mx = *std::max_element(row, row + n);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < n; ++j)
            row[j] = static_cast<float>(row[j] * inv);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b)
{
    Tensor out = a;
    add_inplace(out, b);
    return out;
}

void add_inplace(Tensor& a, const Tensor& b)
{
    if (!(a.dims() == b.dims()))
        throw ShapeError("add: extents differ " + shape_to_string(a.dims()) + " vs " +
                                      shape_to_string(b.dims()));
    float* pa = a.raw();
    const float* pb = b.raw();
    for (std::size_t i = 0; i < a.size(); ++i)
        pa[i] += pb[i];
}

Tensor scale(const Tensor& a, float factor)
{
    Tensor out = a;
    for (float& v : out.data())
        v *= factor;
    return out;
}

Tensor concat_lastdim(std::span<const Tensor> parts)
{
    require(!parts.empty(), "concat of nothing");
    Shape lead = parts.front().dims();
    lead.pop_back();
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape l = p.dims();
        l.pop_back();
        require(l == lead, "concat: leading extents differ");
        total += p.dims().back();
    }
    Shape out_dims = lead;
    out_dims.push_back(total);
    Tensor out(out_dims);
    const std::size_t rows = out.size() / total;
    for (std::size_t r = 0; r < rows; ++r) {
        float* dst = out.raw() + r * total;
        for (const auto& p : parts) {
            const std::size_t n = p.dims().back();
            std::copy_n(p.raw() + r * n, n, dst);
            dst += n;
        }
    }
    return out;
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b)
{
    const Tensor parts[] = {a, b};
    return concat_lastdim(parts);
}

std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding)
{
    require(stride >= 1, "conv stride must be >= 1");
    require(in + 2 * padding >= k, "conv kernel larger than padded input");
    return (in + 2 * padding - k) / stride + 1;
}

Tensor depthwise_conv2d(const Tensor& t, const Tensor& kernels, const Tensor& bias, Conv2dParams p)
{
    require(t.rank() == 3, "depthwise_conv2d expects [h, w, c] input");
    require(kernels.rank() == 3 && kernels.dim(0) == kernels.dim(1), "depthwise kernels must be [k, k, c]");
    const std::size_t h = t.dim(0), w = t.dim(1), c = t.dim(2), k = kernels.dim(0);
    require(k % 2 == 1, "depthwise kernel size must be odd");
    if (!(kernels.dim(2) == c))
        throw ShapeError("depthwise kernel channels " + std::to_string(kernels.dim(2)) +
                                     " do not match input channels " + std::to_string(c));
    require(bias.empty() || (bias.rank() == 1 && bias.dim(0) == c), "depthwise bias channels mismatch");

    const std::size_t oh = conv_output_extent(h, k, p.stride, p.padding);
    const std::size_t ow = conv_output_extent(w, k, p.stride, p.padding);
    Tensor out({oh, ow, c});
    const float* in = t.raw();
    const float* ker = kernels.raw();
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            float* dst = out.raw() + (oy * ow + ox) * c;
            if (!bias.empty())
                std::copy_n(bias.raw(), c, dst);
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) -
                                          static_cast<std::ptrdiff_t>(p.padding);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h))
                    continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) -
                                              static_cast<std::ptrdiff_t>(p.padding);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                        continue;
                    const float* src = in + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
                    const float* kk = ker + (ky * k + kx) * c;
                    for (std::size_t ch = 0; ch < c; ++ch)
                        dst[ch] += src[ch] * kk[ch];
                }
            }
        }
    }
    return out;
}

Tensor conv2d(const Tensor& t, const Tensor& weights, const Tensor& bias, Conv2dParams p)
{
    require(t.rank() == 3, "conv2d expects [h, w, cin] input");
    require(weights.rank() == 4 && weights.dim(0) == weights.dim(1), "conv2d weights must be [k, k, cin, cout]");
    const std::size_t h = t.dim(0), w = t.dim(1), cin = t.dim(2), k = weights.dim(0);
    const std::size_t cout = weights.dim(3);
    if (!(weights.dim(2) == cin))
        throw ShapeError("conv2d weight input channels " + std::to_string(weights.dim(2)) +
                                       " do not match input channels " + std::to_string(cin));
    require(bias.empty() || (bias.rank() == 1 && bias.dim(0) == cout), "conv2d bias channels mismatch");

    const std::size_t oh = conv_output_extent(h, k, p.stride, p.padding);
    const std::size_t ow = conv_output_extent(w, k, p.stride, p.padding);
    const std::size_t patch = k * k * cin;

    // im2col: one row per output pixel, columns ordered (ky, kx, cin) to match the weight layout
    Tensor cols({oh * ow, patch});
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
            float* row = cols.raw() + (oy * ow + ox) * patch;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) -
                                          static_cast<std::ptrdiff_t>(p.padding);
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) -
                                              static_cast<std::ptrdiff_t>(p.padding);
                    float* dst = row + (ky * k + kx) * cin;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 ||
                        ix >= static_cast<std::ptrdiff_t>(w))
                        continue;  // zero padding; cols is zero-initialized
                    std::copy_n(t.raw() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin,
                                cin, dst);
                }
            }
        }
    }
    Tensor out = linear(cols, weights.reshaped({patch, cout}), bias);
    return out.reshaped({oh, ow, cout});
}

Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta, float eps)
{
    require(axis < x.rank(), "layer_norm axis out of range");
    const std::size_t n = x.dim(axis);
    require(n > 0, "layer_norm over a zero-length axis");
    require(eps > 0.0f, "layer_norm eps must be positive");
    require(gamma.empty() || gamma.size() == n, "layer_norm gamma extent mismatch");
    require(beta.empty() || beta.size() == n, "layer_norm beta extent mismatch");

    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < x.rank(); ++a)
        inner *= x.dim(a);
    const std::size_t outer = x.size() / (n * inner);

    Tensor out(x.dims());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const float* src = x.raw() + o * n * inner + i;
            float* dst = out.raw() + o * n * inner + i;
            double mean = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                mean += src[j * inner];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double dv = src[j * inner] - mean;
                var += dv * dv;
            }
            var /= static_cast<double>(n);
            const double inv = 1.0 / std::sqrt(var + eps);
            for (std::size_t j = 0; j < n; ++j) {
                double v = (src[j * inner] - mean) * inv;
                if (!gamma.empty())
                    v *= gamma[j];
                if (!beta.empty())
                    v += beta[j];
                dst[j * inner] = static_cast<float>(v);
            }
        }
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps)
{
    require(x.rank() >= 1, "layer_norm of a scalar");
    return layer_norm(x, x.rank() - 1, gamma, beta, eps);
}

Tensor batch_norm_infer(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                        const Tensor& beta, float eps)
{
    require(x.rank() >= 1, "batch_norm of a scalar");
    const std::size_t c = x.dims().back();
    for (const Tensor* t : {&mean, &var, &gamma, &beta})
        require(t->size() == c, "batch_norm statistic extent mismatch");
    for (float v : var.data())
        if (v < 0.0f)
            throw ProcessingError("batch_norm: negative variance");
    std::vector<float> mul(c), add_term(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double s = gamma[ch] / std::sqrt(static_cast<double>(var[ch]) + eps);
        mul[ch] = static_cast<float>(s);
        add_term[ch] = static_cast<float>(beta[ch] - mean[ch] * s);
    }
    Tensor out(x.dims());
    const std::size_t rows = x.size() / c;
    for (std::size_t r = 0; r < rows; ++r) {
        const float* src = x.raw() + r * c;
        float* dst = out.raw() + r * c;
        for (std::size_t ch = 0; ch < c; ++ch)
            dst[ch] = src[ch] * mul[ch] + add_term[ch];
    }
    return out;
}

Tensor scaled_dot_product(const Tensor& q, const Tensor& k, const Tensor& v)
{
    require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, "attention operands must be rank 2");
    require(q.dim(1) == k.dim(1), "attention query/key widths differ");
    require(q.dim(0) == k.dim(0) && k.dim(0) == v.dim(0), "attention token counts differ");
    const auto n = static_cast<Eigen::Index>(q.dim(0));
    const auto dk = static_cast<Eigen::Index>(q.dim(1));
    const auto dv = static_cast<Eigen::Index>(v.dim(1));
    Tensor scores({q.dim(0), k.dim(0)});
    MatrixMap(scores.raw(), n, n).noalias() =
        ConstMatrixMap(q.raw(), n, dk) * ConstMatrixMap(k.raw(), n, dk).transpose();
    const float inv_sqrt = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dk)));
    for (float& s : scores.data())
        s *= inv_sqrt;
    const Tensor weights = softmax_rows(scores);
    Tensor out({q.dim(0), v.dim(1)});
    MatrixMap(out.raw(), n, dv).noalias() =
        ConstMatrixMap(weights.raw(), n, n) * ConstMatrixMap(v.raw(), n, dv);
    return out;
}

Tensor attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv)
{
    require(x.rank() == 2, "attention input must be [n, d]");
    for (const Tensor* wt : {&wq, &wk, &wv})
        if (!(wt->rank() == 2 && wt->dim(0) == x.dim(1)))
            throw ShapeError("attention projection " + shape_to_string(wt->dims()) + " does not accept width " +
                        std::to_string(x.dim(1)));
    require(wq.dim(1) == wk.dim(1), "attention query/key projections differ in width");
    const Tensor none;
    return scaled_dot_product(linear(x, wq, none), linear(x, wk, none), linear(x, wv, none));
}

Tensor global_avg_pool(const Tensor& t)
{
    require(t.rank() >= 2, "global_avg_pool expects token axes plus channels");
    const std::size_t c = t.dims().back();
    const std::size_t n = t.size() / c;
    std::vector<double> acc(c, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t ch = 0; ch < c; ++ch)
            acc[ch] += t[r * c + ch];
    Tensor out({c});
    for (std::size_t ch = 0; ch < c; ++ch)
        out[ch] = static_cast<float>(acc[ch] / static_cast<double>(n));
    return out;
}

}  // namespace biomoe
