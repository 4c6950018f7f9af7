#pragma once

#include "biomoe/image.hpp"
#include "biomoe/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace biomoe {

struct ModelConfig {
    std::size_t image = kImageSize;
    std::size_t embed_dim = 96;
    std::size_t n_classes = 3;

    // Encoder-1: 4x4 patch stem, 2x2 merges, spectral blocks in the first stages
    std::array<std::size_t, 4> enc1_dims{64, 128, 320, 96};
    std::array<std::size_t, 4> enc1_depths{2, 2, 1, 2};
    std::array<std::size_t, 4> enc1_mlp_ratios{8, 8, 3, 2};
    std::size_t enc1_stem_patch = 4;
    std::size_t enc1_spectral_stages = 2;

    // Encoder-2: four stride-2 3x3 stem convs, then mixer/attention/mixer per block
    std::array<std::size_t, 3> enc2_dims{192, 288, 96};
    std::array<std::size_t, 3> enc2_heads{3, 3, 4};
    std::array<std::size_t, 3> enc2_depths{1, 1, 1};
    std::array<std::size_t, 3> enc2_ffn_ratios{2, 8, 6};
    std::array<std::size_t, 4> enc2_stem_channels{24, 48, 96, 192};
    std::size_t enc2_key_dim = 16;
    std::size_t enc2_merge_ratio = 2;

    std::size_t fused_dim() const noexcept { return 2 * embed_dim; }
    /// Throws UsageError describing the first inconsistency.
    void validate() const;
};

enum class ParamRole { weight, bias, norm_scale, norm_shift, bn_mean, bn_var, filter_re, filter_im };

struct ParamSpec {
    std::string name;
    Shape dims;
    ParamRole role = ParamRole::weight;
};

/// Every tensor the forward pass reads for `cfg`, in a fixed order.
std::vector<ParamSpec> weight_manifest(const ModelConfig& cfg);

/// Named tensors in insertion order.
class WeightStore {
public:
    /// Duplicate names throw IntegrityError.
    void insert(std::string name, Tensor t);
    bool contains(std::string_view name) const;
    /// Missing names throw ShapeError naming the tensor.
    const Tensor& get(std::string_view name) const;
    Tensor& get_mutable(std::string_view name);

    const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::uint64_t element_count() const noexcept;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Checks names and extents against the manifest; throws ShapeError naming the first offender.
void validate_weights(const WeightStore& w, const ModelConfig& cfg);

/// Truncated normal (std 0.02) weights, zero biases, identity norms, BN stats (0, 1), K = 1 + 0i.
WeightStore init_random(const ModelConfig& cfg, std::uint64_t seed);

// Views over weights owned elsewhere.
struct LayerNormParams {
    const Tensor& gamma;
    const Tensor& beta;
};

struct BatchNormParams {
    const Tensor& gamma;
    const Tensor& beta;
    const Tensor& mean;
    const Tensor& var;
};

struct DwMlpParams {
    const Tensor& w1;    // [d, hidden]
    const Tensor& b1;
    const Tensor& dw_k;  // [3, 3, hidden]
    const Tensor& dw_b;
    const Tensor& w2;    // [hidden, d]
    const Tensor& b2;
};

struct SpectralBlockParams {
    LayerNormParams norm1;
    const ComplexTensor& filter;  // half spectrum [h, w/2+1, d]
    LayerNormParams norm2;
    DwMlpParams mlp;
};

struct AttentionBlockParams {
    LayerNormParams norm1;
    const Tensor& wq;
    const Tensor& wk;
    const Tensor& wv;
    const Tensor& wp;
    const Tensor& bp;
    LayerNormParams norm2;
    DwMlpParams mlp;
};

struct SpatialMixerParams {
    const Tensor& dw_k;  // [3, 3, d]
    const Tensor& dw_b;
    BatchNormParams bn;
    const Tensor& w1;
    const Tensor& b1;
    const Tensor& w2;
    const Tensor& b2;
};

struct WaterfallHeadParams {
    const Tensor& wq;      // [segment, key]
    const Tensor& wk;      // [segment, key]
    const Tensor& wv;      // [segment, segment]
    const Tensor& q_dw_k;  // [3, 3, key]
    const Tensor& q_dw_b;
};

struct WaterfallParams {
    std::vector<WaterfallHeadParams> heads;
    const Tensor& wp;  // [d, d]
    const Tensor& bp;
};

struct FusionParams {
    LayerNormParams norm1;
    LayerNormParams norm2;
    const Tensor& gate_w;  // [fused, fused], applied as W x
    LayerNormParams norm_out;
};

/// Expands a half spectrum [h, w/2+1, d] to the full conjugate-symmetric filter [h, w, d].
ComplexTensor expand_hermitian(const ComplexTensor& half, std::size_t width);

/// Real part of ifft2(K * fft2(x)) per channel.
Tensor spectral_filter(const Tensor& x, const ComplexTensor& filter);

/// spectral_filter(x, expand_hermitian(half, w)) evaluated with real-input transforms as dense
/// products; the half spectrum is used as stored.
Tensor spectral_filter_half(const Tensor& x, const ComplexTensor& half);

/// W2 GELU(DWConv3x3(W1 x + b1)) + b2 over a [h, w, d] grid.
Tensor dw_mlp(const Tensor& x, const DwMlpParams& p);

Tensor spectral_block(const Tensor& x, const SpectralBlockParams& p);
Tensor attention_block(const Tensor& x, const AttentionBlockParams& p);

/// y = x + BN(DWConv(x) + b); out = y + FFN(y).
Tensor spatial_mixer(const Tensor& x, const SpatialMixerParams& p);

/// Cascaded heads over channel segments of a [h, w, d] grid; head j sees its segment plus
/// head j-1's output.
Tensor waterfall_attention(const Tensor& x, const WaterfallParams& p);

/// [224, 224, 3] image tensor normalized over channels at every pixel.
Tensor prepare_input(const Image& img);

Tensor encoder1_forward(const Tensor& input, const WeightStore& w, const ModelConfig& cfg);
Tensor encoder2_forward(const Tensor& input, const WeightStore& w, const ModelConfig& cfg);

/// HardTanh(ELU(W [z1_hat | z2_hat])) with both halves already normalized.
Tensor gate_coefficients(const Tensor& z1_hat, const Tensor& z2_hat, const Tensor& gate_w);

Tensor gated_fuse(const Tensor& z1, const Tensor& z2, const FusionParams& p);

/// softmax(W e + b) with W [n_classes, dim].
Tensor classify(const Tensor& embedding, const Tensor& head_w, const Tensor& head_b);

FusionParams fusion_params(const WeightStore& w);

struct ModelOutput {
    Tensor z1;
    Tensor z2;
    Tensor fused;
    Tensor probs;
};

ModelOutput model_forward(const Image& img, const WeightStore& w, const ModelConfig& cfg);

// Cost audit. One MAC counts as two FLOPs; a length-N FFT costs 5 N log2 N per channel;
// norms and activations are not counted.
constexpr std::uint64_t matmul_flops(std::uint64_t m, std::uint64_t k, std::uint64_t n) noexcept
{
    return 2 * m * k * n;
}

constexpr std::uint64_t linear_params(std::uint64_t din, std::uint64_t dout, bool bias) noexcept
{
    return din * dout + (bias ? dout : 0);
}

struct LayerCost {
    std::string name;
    std::string group;  // enc1, enc2 or fusion
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
};

struct CostReport {
    std::vector<LayerCost> layers;
    std::uint64_t params(std::string_view group) const noexcept;
    std::uint64_t flops(std::string_view group) const noexcept;
    std::uint64_t total_params() const noexcept;
    std::uint64_t total_flops() const noexcept;
};

CostReport audit_costs(const ModelConfig& cfg, std::size_t input = kImageSize);

struct ParamCounts {
    std::uint64_t enc1 = 0, enc2 = 0, fusion = 0, total = 0;
};

struct FlopCounts {
    std::uint64_t enc1 = 0, enc2 = 0, fusion = 0, total = 0;
};

ParamCounts count_params(const ModelConfig& cfg);
FlopCounts count_flops(const ModelConfig& cfg, std::size_t input = kImageSize);

struct BudgetTarget {
    double enc1, enc2, total;
    double enc_tolerance, total_tolerance;
};

inline constexpr BudgetTarget kParamTarget{2.90e6, 4.13e6, 7.34e6, 0.15, 0.10};
inline constexpr BudgetTarget kFlopTarget{2.36e9, 0.68e9, 3.04e9, 0.20, 0.15};

}  // namespace biomoe
