#include "biomoe/model.hpp"

#include "biomoe/error.hpp"
#include "biomoe/fft.hpp"
#include "biomoe/kernels.hpp"
#include "biomoe/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace biomoe {

namespace {

std::string idx(std::string_view prefix, std::size_t i)
{
    return std::string(prefix) + std::to_string(i);
}

double fft_length_flops(std::size_t n)
{
    return n > 1 ? 5.0 * static_cast<double>(n) * std::log2(static_cast<double>(n)) : 0.0;
}

// one 2-D transform per channel, done as row then column passes
std::uint64_t fft2_flops(std::size_t h, std::size_t w, std::size_t d)
{
    const double per_channel = static_cast<double>(h) * fft_length_flops(w) + static_cast<double>(w) * fft_length_flops(h);
    return static_cast<std::uint64_t>(std::llround(per_channel * static_cast<double>(d)));
}

struct LayerDesc {
    std::string name;
    std::string group;
    std::vector<ParamSpec> params;
    std::uint64_t flops = 0;
};

class Describer {
public:
    LayerDesc& layer(std::string name, std::string group)
    {
        layers.push_back(LayerDesc{std::move(name), std::move(group), {}, 0});
        return layers.back();
    }

    static void add(LayerDesc& l, const std::string& suffix, Shape dims, ParamRole role)
    {
        l.params.push_back(ParamSpec{l.name + "." + suffix, std::move(dims), role});
    }
    static void add_layer_norm(LayerDesc& l, const std::string& suffix, std::size_t d)
    {
        const std::string stem = suffix.empty() ? "" : suffix + ".";
        add(l, stem + "gamma", {d}, ParamRole::norm_scale);
        add(l, stem + "beta", {d}, ParamRole::norm_shift);
    }
    static void add_batch_norm(LayerDesc& l, const std::string& suffix, std::size_t d)
    {
        add(l, suffix + ".gamma", {d}, ParamRole::norm_scale);
        add(l, suffix + ".beta", {d}, ParamRole::norm_shift);
        add(l, suffix + ".mean", {d}, ParamRole::bn_mean);
        add(l, suffix + ".var", {d}, ParamRole::bn_var);
    }

    std::vector<LayerDesc> layers;
};

std::uint64_t u64(std::size_t v)
{
    return static_cast<std::uint64_t>(v);
}

std::vector<LayerDesc> describe(const ModelConfig& cfg, std::size_t input)
{
    cfg.validate();
    Describer D;

    // Encoder-1
    {
        const std::size_t p = cfg.enc1_stem_patch;
        std::size_t g = input / p;
        auto& stem = D.layer("enc1.stem", "enc1");
        Describer::add(stem, "w", {p, p, 3, cfg.enc1_dims[0]}, ParamRole::weight);
        Describer::add(stem, "b", {cfg.enc1_dims[0]}, ParamRole::bias);
        Describer::add_layer_norm(stem, "norm", cfg.enc1_dims[0]);
        stem.flops = 2 * u64(p * p * 3 * cfg.enc1_dims[0]) * u64(g * g);

        for (std::size_t s = 0; s < 4; ++s) {
            const std::size_t d = cfg.enc1_dims[s];
            const std::string stage = idx("enc1.stage", s);
            if (s > 0) {
                const std::size_t dp = cfg.enc1_dims[s - 1];
                g = conv_output_extent(g, 2, 2, 0);
                auto& down = D.layer(stage + ".down", "enc1");
                Describer::add(down, "w", {2, 2, dp, d}, ParamRole::weight);
                Describer::add(down, "b", {d}, ParamRole::bias);
                Describer::add_layer_norm(down, "norm", d);
                down.flops = 2 * u64(4 * dp * d) * u64(g * g);
            }
            const std::size_t n = g * g;
            const std::size_t hidden = d * cfg.enc1_mlp_ratios[s];
            for (std::size_t b = 0; b < cfg.enc1_depths[s]; ++b) {
                const std::string block = stage + idx(".block", b);
                if (s < cfg.enc1_spectral_stages) {
                    auto& mix = D.layer(block + ".filter", "enc1");
                    Describer::add_layer_norm(mix, "norm1", d);
                    Describer::add(mix, "re", {g, g / 2 + 1, d}, ParamRole::filter_re);
                    Describer::add(mix, "im", {g, g / 2 + 1, d}, ParamRole::filter_im);
                    mix.flops = 2 * fft2_flops(g, g, d) + 6 * u64(n * d);
                } else {
                    auto& mix = D.layer(block + ".attn", "enc1");
                    Describer::add_layer_norm(mix, "norm1", d);
                    Describer::add(mix, "wq", {d, d}, ParamRole::weight);
                    Describer::add(mix, "wk", {d, d}, ParamRole::weight);
                    Describer::add(mix, "wv", {d, d}, ParamRole::weight);
                    Describer::add(mix, "wp", {d, d}, ParamRole::weight);
                    Describer::add(mix, "bp", {d}, ParamRole::bias);
                    mix.flops = 2 * u64(n * d * d) * 4 + 2 * 2 * u64(n) * u64(n) * u64(d);
                }
                auto& mlp = D.layer(block + ".mlp", "enc1");
                Describer::add_layer_norm(mlp, "norm2", d);
                Describer::add(mlp, "w1", {d, hidden}, ParamRole::weight);
                Describer::add(mlp, "b1", {hidden}, ParamRole::bias);
                Describer::add(mlp, "dw_k", {3, 3, hidden}, ParamRole::weight);
                Describer::add(mlp, "dw_b", {hidden}, ParamRole::bias);
                Describer::add(mlp, "w2", {hidden, d}, ParamRole::weight);
                Describer::add(mlp, "b2", {d}, ParamRole::bias);
                mlp.flops = 2 * matmul_flops(n, d, hidden) + 2 * 9 * u64(hidden * n);
            }
        }
        auto& norm = D.layer("enc1.norm", "enc1");
        Describer::add_layer_norm(norm, "", cfg.enc1_dims[3]);
    }

    // Encoder-2
    {
        std::size_t g = input;
        std::size_t cin = 3;
        auto& stem = D.layer("enc2.stem", "enc2");
        for (std::size_t i = 0; i < 4; ++i) {
            const std::size_t cout = cfg.enc2_stem_channels[i];
            g = conv_output_extent(g, 3, 2, 1);
            Describer::add(stem, idx("conv", i) + ".w", {3, 3, cin, cout}, ParamRole::weight);
            Describer::add_batch_norm(stem, idx("bn", i), cout);
            stem.flops += 2 * u64(9 * cin * cout) * u64(g * g);
            cin = cout;
        }
        for (std::size_t s = 0; s < 3; ++s) {
            const std::size_t d = cfg.enc2_dims[s];
            const std::string stage = idx("enc2.stage", s);
            if (s > 0) {
                const std::size_t dp = cfg.enc2_dims[s - 1];
                const std::size_t hidden = dp * cfg.enc2_merge_ratio;
                auto& merge = D.layer(stage + ".merge", "enc2");
                Describer::add(merge, "expand.w", {dp, hidden}, ParamRole::weight);
                Describer::add_batch_norm(merge, "bn1", hidden);
                Describer::add(merge, "dw_k", {3, 3, hidden}, ParamRole::weight);
                Describer::add_batch_norm(merge, "bn2", hidden);
                Describer::add(merge, "project.w", {hidden, d}, ParamRole::weight);
                Describer::add_batch_norm(merge, "bn3", d);
                merge.flops = 2 * u64(dp * hidden) * u64(g * g);
                g = conv_output_extent(g, 3, 2, 1);
                merge.flops += 2 * 9 * u64(hidden) * u64(g * g) + 2 * u64(hidden * d) * u64(g * g);
            }
            const std::size_t n = g * g;
            const std::size_t heads = cfg.enc2_heads[s];
            const std::size_t seg = d / heads;
            const std::size_t kd = cfg.enc2_key_dim;
            const std::size_t ffn = d * cfg.enc2_ffn_ratios[s];
            for (std::size_t b = 0; b < cfg.enc2_depths[s]; ++b) {
                const std::string block = stage + idx(".block", b);
                auto mixer = [&](std::size_t m) {
                    auto& l = D.layer(block + idx(".mixer", m), "enc2");
                    Describer::add(l, "dw_k", {3, 3, d}, ParamRole::weight);
                    Describer::add(l, "dw_b", {d}, ParamRole::bias);
                    Describer::add_batch_norm(l, "bn", d);
                    Describer::add(l, "ffn.w1", {d, ffn}, ParamRole::weight);
                    Describer::add(l, "ffn.b1", {ffn}, ParamRole::bias);
                    Describer::add(l, "ffn.w2", {ffn, d}, ParamRole::weight);
                    Describer::add(l, "ffn.b2", {d}, ParamRole::bias);
                    l.flops = 2 * 9 * u64(d * n) + 2 * 2 * u64(n * d * ffn);
                };
                mixer(0);
                auto& attn = D.layer(block + ".attn", "enc2");
                for (std::size_t j = 0; j < heads; ++j) {
                    const std::string head = idx("head", j);
                    Describer::add(attn, head + ".wq", {seg, kd}, ParamRole::weight);
                    Describer::add(attn, head + ".wk", {seg, kd}, ParamRole::weight);
                    Describer::add(attn, head + ".wv", {seg, seg}, ParamRole::weight);
                    Describer::add(attn, head + ".q_dw_k", {3, 3, kd}, ParamRole::weight);
                    Describer::add(attn, head + ".q_dw_b", {kd}, ParamRole::bias);
                    attn.flops += 2 * u64(n * seg * (2 * kd + seg)) + 2 * u64(n) * u64(n) * u64(kd) +
                                  2 * u64(n) * u64(n) * u64(seg) + 2 * 9 * u64(kd * n);
                }
                Describer::add(attn, "wp", {d, d}, ParamRole::weight);
                Describer::add(attn, "bp", {d}, ParamRole::bias);
                attn.flops += 2 * u64(n * d * d);
                mixer(1);
            }
        }
    }

    // Fusion and classifier
    {
        const std::size_t e = cfg.embed_dim, f = cfg.fused_dim();
        auto& norms = D.layer("fusion", "fusion");
        Describer::add_layer_norm(norms, "norm1", e);
        Describer::add_layer_norm(norms, "norm2", e);
        Describer::add_layer_norm(norms, "norm_out", f);
        auto& gate = D.layer("gate", "fusion");
        Describer::add(gate, "W", {f, f}, ParamRole::weight);
        gate.flops = matmul_flops(1, f, f);
        auto& head = D.layer("head", "fusion");
        Describer::add(head, "W", {cfg.n_classes, f}, ParamRole::weight);
        Describer::add(head, "b", {cfg.n_classes}, ParamRole::bias);
        head.flops = matmul_flops(1, f, cfg.n_classes);
    }
    return std::move(D.layers);
}

std::size_t checked_dim(const Tensor& t, std::size_t axis, std::string_view what)
{
    if (t.rank() <= axis)
        throw ShapeError(std::string(what) + " has rank " + std::to_string(t.rank()));
    return t.dim(axis);
}

Tensor relu(Tensor t)
{
    activate_inplace(Activation::relu, t);
    return t;
}

// views into the store
LayerNormParams ln_view(const WeightStore& w, const std::string& prefix)
{
    return {w.get(prefix + ".gamma"), w.get(prefix + ".beta")};
}

BatchNormParams bn_view(const WeightStore& w, const std::string& prefix)
{
    return {w.get(prefix + ".gamma"), w.get(prefix + ".beta"), w.get(prefix + ".mean"), w.get(prefix + ".var")};
}

DwMlpParams mlp_view(const WeightStore& w, const std::string& p)
{
    return {w.get(p + ".w1"), w.get(p + ".b1"), w.get(p + ".dw_k"), w.get(p + ".dw_b"), w.get(p + ".w2"), w.get(p + ".b2")};
}

Tensor layer_norm_view(const Tensor& x, const LayerNormParams& p)
{
    return layer_norm(x, p.gamma, p.beta);
}

Tensor batch_norm_view(const Tensor& x, const BatchNormParams& p)
{
    return batch_norm_infer(x, p.mean, p.var, p.gamma, p.beta);
}

}  // namespace

void ModelConfig::validate() const
{
    if (image == 0 || image % (enc1_stem_patch * 8) != 0)
        throw UsageError("image size must be a multiple of " + std::to_string(enc1_stem_patch * 8));
    if (enc1_dims[3] != embed_dim || enc2_dims[2] != embed_dim)
        throw UsageError("last stage width of each encoder must equal embed_dim");
    if (enc1_spectral_stages > 4)
        throw UsageError("enc1_spectral_stages must be at most 4");
    if (enc2_stem_channels[3] != enc2_dims[0])
        throw UsageError("Encoder-2 stem must end at the first stage width");
    if (n_classes == 0 || enc2_key_dim == 0 || enc2_merge_ratio == 0 || enc1_stem_patch == 0)
        throw UsageError("n_classes, enc2_key_dim, enc2_merge_ratio and enc1_stem_patch must be positive");
    for (std::size_t s = 0; s < 4; ++s)
        if (enc1_dims[s] == 0 || enc1_mlp_ratios[s] == 0)
            throw UsageError("Encoder-1 widths and MLP ratios must be positive");
    for (std::size_t s = 0; s < 3; ++s) {
        if (enc2_heads[s] == 0 || enc2_dims[s] % enc2_heads[s] != 0)
            throw UsageError("Encoder-2 stage " + std::to_string(s) + " width " + std::to_string(enc2_dims[s]) +
                             " is not divisible by its " + std::to_string(enc2_heads[s]) + " heads");
        if (enc2_ffn_ratios[s] == 0)
            throw UsageError("Encoder-2 FFN ratios must be positive");
    }
}

std::vector<ParamSpec> weight_manifest(const ModelConfig& cfg)
{
    std::vector<ParamSpec> out;
    for (auto& layer : describe(cfg, cfg.image))
        for (auto& p : layer.params)
            out.push_back(std::move(p));
    return out;
}

void WeightStore::insert(std::string name, Tensor t)
{
    if (index_.contains(name))
        throw IntegrityError("duplicate tensor name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(t));
}

bool WeightStore::contains(std::string_view name) const
{
    return index_.contains(std::string(name));
}

const Tensor& WeightStore::get(std::string_view name) const
{
    const auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw ShapeError("missing weight tensor '" + std::string(name) + "'");
    return entries_[it->second].second;
}

Tensor& WeightStore::get_mutable(std::string_view name)
{
    return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::uint64_t WeightStore::element_count() const noexcept
{
    std::uint64_t total = 0;
    for (const auto& [name, t] : entries_)
        total += t.size();
    return total;
}

void validate_weights(const WeightStore& w, const ModelConfig& cfg)
{
    const auto manifest = weight_manifest(cfg);
    for (const auto& spec : manifest) {
        const Tensor& t = w.get(spec.name);
        if (t.dims() != spec.dims)
            throw ShapeError("weight tensor '" + spec.name + "' has shape " + shape_to_string(t.dims()) +
                             ", expected " + shape_to_string(spec.dims));
    }
    if (w.size() != manifest.size()) {
        for (const auto& [name, t] : w.entries()) {
            const bool known = std::any_of(manifest.begin(), manifest.end(), [&](const ParamSpec& s) { return s.name == name; });
            if (!known)
                throw ShapeError("unexpected weight tensor '" + name + "' for this model config");
        }
    }
}

WeightStore init_random(const ModelConfig& cfg, std::uint64_t seed)
{
    WeightStore store;
    const auto manifest = weight_manifest(cfg);
    const Rng root(seed);
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& spec = manifest[i];
        Tensor t(spec.dims);
        switch (spec.role) {
        case ParamRole::weight: {
            Rng r = root.split(i);
            for (float& v : t.data())
                v = static_cast<float>(r.truncated_normal(0.02));
            break;
        }
        case ParamRole::norm_scale:
        case ParamRole::bn_var:
        case ParamRole::filter_re:
            t = Tensor(spec.dims, 1.0f);
            break;
        case ParamRole::bias:
        case ParamRole::norm_shift:
        case ParamRole::bn_mean:
        case ParamRole::filter_im:
            break;
        }
        store.insert(spec.name, std::move(t));
    }
    return store;
}

ComplexTensor expand_hermitian(const ComplexTensor& half, std::size_t width)
{
    if (half.dims().size() != 3 || half.dim(1) != width / 2 + 1)
        throw ShapeError("half-spectrum filter " + shape_to_string(half.dims()) + " does not match width " +
                         std::to_string(width));
    const std::size_t h = half.dim(0), hw = half.dim(1), d = half.dim(2);
    ComplexTensor full({h, width, d});
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < width; ++v) {
            const bool mirrored = v >= hw;
            const std::size_t su = mirrored ? (h - u) % h : u;
            const std::size_t sv = mirrored ? width - v : v;
            const float* re = half.re().raw() + (su * hw + sv) * d;
            const float* im = half.im().raw() + (su * hw + sv) * d;
            float* ore = full.re().raw() + (u * width + v) * d;
            float* oim = full.im().raw() + (u * width + v) * d;
            for (std::size_t c = 0; c < d; ++c) {
                ore[c] = re[c];
                oim[c] = mirrored ? -im[c] : im[c];
            }
        }
    return full;
}

Tensor spectral_filter(const Tensor& x, const ComplexTensor& filter)
{
    if (x.rank() != 3 || filter.dims() != x.dims())
        throw ShapeError("spectral filter " + shape_to_string(filter.dims()) + " does not match token grid " +
                         shape_to_string(x.dims()));
    ComplexTensor spec = fft2(x);
    float* re = spec.re().raw();
    float* im = spec.im().raw();
    const float* kr = filter.re().raw();
    const float* ki = filter.im().raw();
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const double a = re[i], b = im[i];
        re[i] = static_cast<float>(a * kr[i] - b * ki[i]);
        im[i] = static_cast<float>(a * ki[i] + b * kr[i]);
    }
    return ifft2(spec);
}

Tensor spectral_filter_half(const Tensor& x, const ComplexTensor& half)
{
    if (x.rank() != 3)
        throw ShapeError("spectral filter expects [h, w, d] tokens");
    const std::size_t h = x.dim(0), w = x.dim(1), d = x.dim(2), hw = w / 2 + 1;
    if (half.dims() != Shape{h, hw, d})
        throw ShapeError("half-spectrum filter " + shape_to_string(half.dims()) + " does not match token grid " +
                         shape_to_string(x.dims()));
    if (!x.all_finite())
        throw ProcessingError("spectral filter: input contains non-finite values");

    using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    using MMap = Eigen::Map<Mat>;
    const auto rows = static_cast<Eigen::Index>(h), cols = static_cast<Eigen::Index>(hw * d);
    const auto eh = static_cast<Eigen::Index>(h), ew = static_cast<Eigen::Index>(w), ehw = static_cast<Eigen::Index>(hw),
               ed = static_cast<Eigen::Index>(d);
    constexpr double two_pi = 2.0 * std::numbers::pi;

    Mat cw(ehw, ew), sw(ehw, ew), ciw(ew, ehw), siw(ew, ehw), ch(eh, eh), sh(eh, eh);
    const double inv_area = 1.0 / static_cast<double>(h * w);
    for (std::size_t v = 0; v < hw; ++v) {
        const double weight = (v == 0 || 2 * v == w) ? 1.0 : 2.0;
        for (std::size_t t = 0; t < w; ++t) {
            const double a = two_pi * static_cast<double>((v * t) % w) / static_cast<double>(w);
            cw(v, t) = static_cast<float>(std::cos(a));
            sw(v, t) = static_cast<float>(std::sin(a));
            ciw(t, v) = static_cast<float>(weight * inv_area * std::cos(a));
            siw(t, v) = static_cast<float>(weight * inv_area * std::sin(a));
        }
    }
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t t = 0; t < h; ++t) {
            const double a = two_pi * static_cast<double>((u * t) % h) / static_cast<double>(h);
            ch(u, t) = static_cast<float>(std::cos(a));
            sh(u, t) = static_cast<float>(std::sin(a));
        }

    // rows: real input to half spectrum
    Mat are(rows, cols), aim(rows, cols);
    for (std::size_t y = 0; y < h; ++y) {
        const CMap xy(x.raw() + y * w * d, ew, ed);
        MMap(are.data() + y * hw * d, ehw, ed).noalias() = cw * xy;
        MMap(aim.data() + y * hw * d, ehw, ed).noalias() = -(sw * xy);
    }
    // columns: full complex transform
    Mat zre(rows, cols), zim(rows, cols);
    zre.noalias() = ch * are;
    zre.noalias() += sh * aim;
    zim.noalias() = ch * aim;
    zim.noalias() -= sh * are;

    const CMap kre(half.re().raw(), rows, cols), kim(half.im().raw(), rows, cols);
    are = zre.cwiseProduct(kre) - zim.cwiseProduct(kim);
    aim = zre.cwiseProduct(kim) + zim.cwiseProduct(kre);

    // inverse columns, then half spectrum back to real rows
    zre.noalias() = ch * are;
    zre.noalias() -= sh * aim;
    zim.noalias() = ch * aim;
    zim.noalias() += sh * are;
    Tensor out(x.dims());
    for (std::size_t y = 0; y < h; ++y) {
        MMap oy(out.raw() + y * w * d, ew, ed);
        oy.noalias() = ciw * CMap(zre.data() + y * hw * d, ehw, ed);
        oy.noalias() -= siw * CMap(zim.data() + y * hw * d, ehw, ed);
    }
    return out;
}

Tensor dw_mlp(const Tensor& x, const DwMlpParams& p)
{
    Tensor h = linear(x, p.w1, p.b1);
    h = depthwise_conv2d(h, p.dw_k, p.dw_b, {1, 1});
    activate_inplace(Activation::gelu, h);
    return linear(h, p.w2, p.b2);
}

Tensor spectral_block(const Tensor& x, const SpectralBlockParams& p)
{
    if (x.rank() != 3)
        throw ShapeError("spectral block expects [h, w, d] tokens");
    Tensor x1 = add(x, spectral_filter_half(layer_norm_view(x, p.norm1), p.filter));
    add_inplace(x1, dw_mlp(layer_norm_view(x1, p.norm2), p.mlp));
    return x1;
}

Tensor attention_block(const Tensor& x, const AttentionBlockParams& p)
{
    if (x.rank() != 3)
        throw ShapeError("attention block expects [h, w, d] tokens");
    const std::size_t n = x.dim(0) * x.dim(1), d = x.dim(2);
    const Tensor t = layer_norm_view(x, p.norm1).reshaped({n, d});
    const Tensor a = linear(attention(t, p.wq, p.wk, p.wv), p.wp, p.bp);
    Tensor x1 = add(x, a.reshaped(x.dims()));
    add_inplace(x1, dw_mlp(layer_norm_view(x1, p.norm2), p.mlp));
    return x1;
}

Tensor spatial_mixer(const Tensor& x, const SpatialMixerParams& p)
{
    if (x.rank() != 3)
        throw ShapeError("spatial mixer expects [h, w, d] tokens");
    Tensor y = add(x, batch_norm_view(depthwise_conv2d(x, p.dw_k, p.dw_b, {1, 1}), p.bn));
    Tensor h = relu(linear(y, p.w1, p.b1));
    add_inplace(y, linear(h, p.w2, p.b2));
    return y;
}

Tensor waterfall_attention(const Tensor& x, const WaterfallParams& p)
{
    if (x.rank() != 3)
        throw ShapeError("waterfall attention expects [h, w, d] tokens");
    const std::size_t gh = x.dim(0), gw = x.dim(1), d = x.dim(2), n = gh * gw;
    const std::size_t heads = p.heads.size();
    if (heads == 0 || d % heads != 0)
        throw ShapeError("width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
    const std::size_t seg = d / heads;

    std::vector<Tensor> outputs;
    outputs.reserve(heads);
    for (std::size_t j = 0; j < heads; ++j) {
        const auto& hp = p.heads[j];
        if (checked_dim(hp.wv, 1, "value projection") != seg || hp.wv.dim(0) != seg)
            throw ShapeError("value projection of head " + std::to_string(j) + " must be [" + std::to_string(seg) +
                             ", " + std::to_string(seg) + "]");
        Tensor xj({n, seg});
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t c = 0; c < seg; ++c)
                xj[t * seg + c] = x[t * d + j * seg + c];
        if (j > 0)
            add_inplace(xj, outputs.back());
        const std::size_t kd = checked_dim(hp.wq, 1, "query projection");
        Tensor q = linear(xj, hp.wq, Tensor());
        q = depthwise_conv2d(q.reshaped({gh, gw, kd}), hp.q_dw_k, hp.q_dw_b, {1, 1}).reshaped({n, kd});
        const Tensor k = linear(xj, hp.wk, Tensor());
        const Tensor v = linear(xj, hp.wv, Tensor());
        outputs.push_back(scaled_dot_product(q, k, v));
    }
    return linear(concat_lastdim(outputs), p.wp, p.bp).reshaped(x.dims());
}

Tensor prepare_input(const Image& img)
{
    require_model_input(img);
    return layer_norm(image_to_tensor(img), Tensor(), Tensor());
}

Tensor encoder1_forward(const Tensor& input, const WeightStore& w, const ModelConfig& cfg)
{
    cfg.validate();
    if (input.dims() != Shape{cfg.image, cfg.image, 3})
        throw ShapeError("Encoder-1 expects a [" + std::to_string(cfg.image) + ", " + std::to_string(cfg.image) +
                         ", 3] input, got " + shape_to_string(input.dims()));
    const std::size_t p = cfg.enc1_stem_patch;
    Tensor x = conv2d(input, w.get("enc1.stem.w"), w.get("enc1.stem.b"), {p, 0});
    x = layer_norm_view(x, ln_view(w, "enc1.stem.norm"));

    for (std::size_t s = 0; s < 4; ++s) {
        const std::string stage = idx("enc1.stage", s);
        if (s > 0) {
            x = conv2d(x, w.get(stage + ".down.w"), w.get(stage + ".down.b"), {2, 0});
            x = layer_norm_view(x, ln_view(w, stage + ".down.norm"));
        }
        for (std::size_t b = 0; b < cfg.enc1_depths[s]; ++b) {
            const std::string block = stage + idx(".block", b);
            const DwMlpParams mlp = mlp_view(w, block + ".mlp");
            const LayerNormParams norm2 = ln_view(w, block + ".mlp.norm2");
            if (s < cfg.enc1_spectral_stages) {
                const std::string f = block + ".filter";
                const ComplexTensor half(w.get(f + ".re"), w.get(f + ".im"));
                x = spectral_block(x, {ln_view(w, f + ".norm1"), half, norm2, mlp});
            } else {
                const std::string a = block + ".attn";
                x = attention_block(x, {ln_view(w, a + ".norm1"), w.get(a + ".wq"), w.get(a + ".wk"), w.get(a + ".wv"),
                                        w.get(a + ".wp"), w.get(a + ".bp"), norm2, mlp});
            }
        }
    }
    x = layer_norm_view(x, ln_view(w, "enc1.norm"));
    return global_avg_pool(x);
}

Tensor encoder2_forward(const Tensor& input, const WeightStore& w, const ModelConfig& cfg)
{
    cfg.validate();
    if (input.dims() != Shape{cfg.image, cfg.image, 3})
        throw ShapeError("Encoder-2 expects a [" + std::to_string(cfg.image) + ", " + std::to_string(cfg.image) +
                         ", 3] input, got " + shape_to_string(input.dims()));
    Tensor x = input;
    for (std::size_t i = 0; i < 4; ++i) {
        x = conv2d(x, w.get(idx("enc2.stem.conv", i) + ".w"), Tensor(), {2, 1});
        x = batch_norm_view(x, bn_view(w, idx("enc2.stem.bn", i)));
        if (i < 3)
            x = relu(std::move(x));
    }
    for (std::size_t s = 0; s < 3; ++s) {
        const std::string stage = idx("enc2.stage", s);
        if (s > 0) {
            const std::string m = stage + ".merge";
            x = relu(batch_norm_view(linear(x, w.get(m + ".expand.w"), Tensor()), bn_view(w, m + ".bn1")));
            x = relu(batch_norm_view(depthwise_conv2d(x, w.get(m + ".dw_k"), Tensor(), {2, 1}), bn_view(w, m + ".bn2")));
            x = batch_norm_view(linear(x, w.get(m + ".project.w"), Tensor()), bn_view(w, m + ".bn3"));
        }
        for (std::size_t b = 0; b < cfg.enc2_depths[s]; ++b) {
            const std::string block = stage + idx(".block", b);
            auto mixer = [&](std::size_t i) {
                const std::string m = block + idx(".mixer", i);
                return spatial_mixer(x, {w.get(m + ".dw_k"), w.get(m + ".dw_b"), bn_view(w, m + ".bn"), w.get(m + ".ffn.w1"),
                                         w.get(m + ".ffn.b1"), w.get(m + ".ffn.w2"), w.get(m + ".ffn.b2")});
            };
            x = mixer(0);
            const std::string a = block + ".attn";
            WaterfallParams wf{{}, w.get(a + ".wp"), w.get(a + ".bp")};
            for (std::size_t j = 0; j < cfg.enc2_heads[s]; ++j) {
                const std::string h = a + idx(".head", j);
                wf.heads.push_back({w.get(h + ".wq"), w.get(h + ".wk"), w.get(h + ".wv"), w.get(h + ".q_dw_k"),
                                    w.get(h + ".q_dw_b")});
            }
            add_inplace(x, waterfall_attention(x, wf));
            x = mixer(1);
        }
    }
    return global_avg_pool(x);
}

namespace {

const float kAboveMinusOne = std::nextafter(-1.0f, 0.0f);

}  // namespace

Tensor gate_coefficients(const Tensor& z1_hat, const Tensor& z2_hat, const Tensor& gate_w)
{
    const Tensor x = concat_lastdim(z1_hat, z2_hat);
    const std::size_t f = x.size();
    if (gate_w.dims() != Shape{f, f})
        throw ShapeError("gate weight " + shape_to_string(gate_w.dims()) + " does not match fused width " + std::to_string(f));
    Tensor alpha({f});
    for (std::size_t r = 0; r < f; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < f; ++c)
            acc += static_cast<double>(gate_w[r * f + c]) * x[c];
        // ELU(x) > -1 for every finite x but rounds to -1 below about -17 in float
        const float a = activate(Activation::hardtanh, activate(Activation::elu, static_cast<float>(acc)));
        alpha[r] = std::max(a, kAboveMinusOne);
    }
    return alpha;
}

Tensor gated_fuse(const Tensor& z1, const Tensor& z2, const FusionParams& p)
{
    if (z1.rank() != 1 || z2.rank() != 1 || z1.size() != z2.size())
        throw ShapeError("gated fusion needs two embeddings of equal width, got " + shape_to_string(z1.dims()) + " and " +
                         shape_to_string(z2.dims()));
    const Tensor z1_hat = layer_norm_view(z1, p.norm1);
    const Tensor z2_hat = layer_norm_view(z2, p.norm2);
    const Tensor alpha = gate_coefficients(z1_hat, z2_hat, p.gate_w);
    Tensor gated = concat_lastdim(z1_hat, z2_hat);
    for (std::size_t i = 0; i < gated.size(); ++i)
        gated[i] *= alpha[i];
    return layer_norm_view(gated, p.norm_out);
}

Tensor classify(const Tensor& embedding, const Tensor& head_w, const Tensor& head_b)
{
    if (embedding.rank() != 1 || head_w.rank() != 2 || head_w.dim(1) != embedding.size() || head_b.dims() != Shape{head_w.dim(0)})
        throw ShapeError("classifier head " + shape_to_string(head_w.dims()) + " / " + shape_to_string(head_b.dims()) +
                         " does not match embedding " + shape_to_string(embedding.dims()));
    const std::size_t nc = head_w.dim(0), f = embedding.size();
    Tensor logits({1, nc});
    for (std::size_t r = 0; r < nc; ++r) {
        double acc = head_b[r];
        for (std::size_t c = 0; c < f; ++c)
            acc += static_cast<double>(head_w[r * f + c]) * embedding[c];
        logits[r] = static_cast<float>(acc);
    }
    return softmax_rows(logits).reshaped({nc});
}

FusionParams fusion_params(const WeightStore& w)
{
    return {ln_view(w, "fusion.norm1"), ln_view(w, "fusion.norm2"), w.get("gate.W"), ln_view(w, "fusion.norm_out")};
}

ModelOutput model_forward(const Image& img, const WeightStore& w, const ModelConfig& cfg)
{
    const Tensor input = prepare_input(img);
    ModelOutput out{encoder1_forward(input, w, cfg), encoder2_forward(input, w, cfg), {}, {}};
    out.fused = gated_fuse(out.z1, out.z2, fusion_params(w));
    out.probs = classify(out.fused, w.get("head.W"), w.get("head.b"));
    return out;
}

std::uint64_t CostReport::params(std::string_view group) const noexcept
{
    std::uint64_t t = 0;
    for (const auto& l : layers)
        if (l.group == group)
            t += l.params;
    return t;
}

std::uint64_t CostReport::flops(std::string_view group) const noexcept
{
    std::uint64_t t = 0;
    for (const auto& l : layers)
        if (l.group == group)
            t += l.flops;
    return t;
}

std::uint64_t CostReport::total_params() const noexcept
{
    std::uint64_t t = 0;
    for (const auto& l : layers)
        t += l.params;
    return t;
}

std::uint64_t CostReport::total_flops() const noexcept
{
    std::uint64_t t = 0;
    for (const auto& l : layers)
        t += l.flops;
    return t;
}

CostReport audit_costs(const ModelConfig& cfg, std::size_t input)
{
    CostReport report;
    for (const auto& layer : describe(cfg, input)) {
        std::uint64_t params = 0;
        for (const auto& p : layer.params)
            params += shape_volume(p.dims);
        report.layers.push_back({layer.name, layer.group, params, layer.flops});
    }
    return report;
}

ParamCounts count_params(const ModelConfig& cfg)
{
    const auto r = audit_costs(cfg, cfg.image);
    return {r.params("enc1"), r.params("enc2"), r.params("fusion"), r.total_params()};
}

FlopCounts count_flops(const ModelConfig& cfg, std::size_t input)
{
    const auto r = audit_costs(cfg, input);
    return {r.flops("enc1"), r.flops("enc2"), r.flops("fusion"), r.total_flops()};
}

}  // namespace biomoe
