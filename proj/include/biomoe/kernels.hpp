#pragma once

#include "biomoe/tensor.hpp"

#include <span>
#include <vector>

namespace biomoe {

enum class Activation { gelu, relu, elu, hardtanh };

float activate(Activation kind, float x) noexcept;
Tensor activation(Activation kind, const Tensor& x);
/// Tensor form. GELU here uses a vectorized erfc fit, within 4e-7 of the exact value.
void activate_inplace(Activation kind, Tensor& x) noexcept;

/// [m, k] x [k, n] -> [m, n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Applies a dense layer to the last axis: x[..., din] * w[din, dout] + bias[dout].
/// `bias` may be empty.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Softmax along the last axis; the row max is subtracted first.
Tensor softmax_rows(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);

/// Concatenates along the last axis; leading extents must agree.
Tensor concat_lastdim(std::span<const Tensor> parts);
Tensor concat_lastdim(const Tensor& a, const Tensor& b);

struct Conv2dParams {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

/// Channels-last depthwise convolution: t[h, w, c] with kernels[k, k, c] and bias[c] (bias may be empty).
Tensor depthwise_conv2d(const Tensor& t, const Tensor& kernels, const Tensor& bias, Conv2dParams p);

/// Dense convolution: t[h, w, cin] with weights[k, k, cin, cout] and bias[cout] (may be empty).
Tensor conv2d(const Tensor& t, const Tensor& weights, const Tensor& bias, Conv2dParams p);

std::size_t conv_output_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t padding);

inline constexpr float kLayerNormEps = 1e-6f;
inline constexpr float kBatchNormEps = 1e-5f;

/// Normalizes each slice along `axis` to zero mean and unit (population) variance,
/// then applies gamma/beta when given (empty tensors mean no affine).
Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  float eps = kLayerNormEps);

/// Last-axis layer norm.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = kLayerNormEps);

/// Inference-mode batch norm over the last (channel) axis.
Tensor batch_norm_infer(const Tensor& x, const Tensor& mean, const Tensor& var, const Tensor& gamma,
                        const Tensor& beta, float eps = kBatchNormEps);

/// softmax(X Wq (X Wk)^T / sqrt(dk)) X Wv. Wq and Wk share an output width;
/// Wv may differ.
Tensor attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv);

/// softmax(q k^T / sqrt(dk)) v for already projected q[n, dk], k[n, dk], v[n, dv].
Tensor scaled_dot_product(const Tensor& q, const Tensor& k, const Tensor& v);

/// Mean over the token axes of a [h, w, c] (or [n, c]) tensor -> [c].
Tensor global_avg_pool(const Tensor& t);

}  // namespace biomoe
