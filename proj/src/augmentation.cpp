#include "biomoe/augmentation.hpp"

#include "biomoe/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace biomoe {

namespace {

std::uint8_t to_byte(double v)
{
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

double luma(const Image& img, std::size_t i)
{
    return 0.299 * img.pixels[i] + 0.587 * img.pixels[i + 1] + 0.114 * img.pixels[i + 2];
}

// mirror about the first and last sample centers
double reflect(double x, double last)
{
    if (last <= 0.0)
        return 0.0;
    const double period = 2.0 * last;
    x = std::fmod(std::abs(x), period);
    return x > last ? period - x : x;
}

std::size_t reflect_index(long i, long n)
{
    if (n == 1)
        return 0;
    const long period = 2 * (n - 1);
    i = std::abs(i) % period;
    return static_cast<std::size_t>(i >= n ? period - i : i);
}

// out(x, y) samples the input at center + m * (x - center, y - center)
Image warp(const Image& img, const std::array<double, 4>& m, double shift_x)
{
    Image out(img.width, img.height);
    const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
    const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
    const double lx = static_cast<double>(img.width) - 1.0, ly = static_cast<double>(img.height) - 1.0;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const double u = static_cast<double>(x) - cx, v = static_cast<double>(y) - cy;
            const double sx = reflect(cx + m[0] * u + m[1] * v - shift_x, lx);
            const double sy = reflect(cy + m[2] * u + m[3] * v, ly);
            const auto x0 = static_cast<std::size_t>(std::floor(sx)), y0 = static_cast<std::size_t>(std::floor(sy));
            const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
            const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
                const double bottom = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
                out.at(x, y, c) = to_byte(top * (1.0 - fy) + bottom * fy);
            }
        }
    return out;
}

// Marsaglia-Tsang; shape < 1 is boosted through shape + 1
double gamma_variate(Rng& rng, double shape)
{
    if (shape == 1.0)
        return rng.exponential();
    if (shape < 1.0) {
        const double u = rng.uniform();
        return gamma_variate(rng, shape + 1.0) * std::pow(u > 0.0 ? u : 1e-300, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0, c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x || std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
            return d * v;
    }
}

void check_probability(double p, const char* name)
{
    if (!(p >= 0.0 && p <= 1.0))
        throw UsageError(std::string(name) + " must lie in [0, 1]");
}

void check_range(double lo, double hi, const char* name)
{
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw UsageError(std::string(name) + " range is empty or not finite");
}

}  // namespace

std::string_view to_string(AugOp op) noexcept
{
    switch (op) {
    case AugOp::contrast: return "contrast";
    case AugOp::color_jitter: return "color_jitter";
    case AugOp::rotate: return "rotate";
    case AugOp::translate: return "translate";
    case AugOp::shear: return "shear";
    }
    return "contrast";
}

void AugmentConfig::validate() const
{
    for (double m : {contrast_max, color_max, rotate_max_deg, translate_max, shear_max_deg})
        if (!(m >= 0.0) || !std::isfinite(m))
            throw UsageError("op magnitudes must be finite and nonnegative");
    if (contrast_max > 1.0 || color_max > 1.0)
        throw UsageError("contrast and colour magnitudes must not exceed 1");
    if (translate_max > 1.0 || shear_max_deg >= 90.0)
        throw UsageError("translate must stay within the image and shear below 90 degrees");
    if (augmix_depth_min == 0 || augmix_depth_min > augmix_depth_max)
        throw UsageError("augmix depth range must be nonempty and start at 1 or more");
    if (!(augmix_alpha > 0.0) || !std::isfinite(augmix_alpha))
        throw UsageError("augmix alpha must be positive");
    check_probability(augmix_skip_prob, "augmix skip probability");
    check_probability(crop_prob_min, "crop probability");
    check_probability(crop_prob_max, "crop probability");
    check_range(crop_prob_min, crop_prob_max, "crop probability");
    check_range(crop_ratio_min, crop_ratio_max, "crop ratio");
    if (!(crop_ratio_min > 0.0 && crop_ratio_max <= 1.0))
        throw UsageError("crop ratios must lie in (0, 1]");
    check_probability(blur_prob, "blur probability");
    check_range(blur_sigma_min, blur_sigma_max, "blur sigma");
    if (!(blur_sigma_min > 0.0))
        throw UsageError("blur sigma must be positive");
    if (cutout_block != 32)
        throw UsageError("cutout block size is fixed at 32");
}

AugmentConfig AugmentConfig::identity()
{
    AugmentConfig c;
    c.contrast_max = c.color_max = c.rotate_max_deg = c.translate_max = c.shear_max_deg = 0.0;
    c.crop_prob_min = c.crop_prob_max = 0.0;
    c.blur_prob = 0.0;
    c.cutout_small = c.cutout_large = 0;
    return c;
}

double op_max_magnitude(AugOp op, const AugmentConfig& cfg)
{
    switch (op) {
    case AugOp::contrast: return cfg.contrast_max;
    case AugOp::color_jitter: return cfg.color_max;
    case AugOp::rotate: return cfg.rotate_max_deg;
    case AugOp::translate: return cfg.translate_max;
    case AugOp::shear: return cfg.shear_max_deg;
    }
    return 0.0;
}

Image apply_op(const Image& img, AugOp op, double magnitude)
{
    if (img.pixels.size() != img.width * img.height * 3 || img.pixels.empty())
        throw ShapeError("image buffer does not match its extents");
    if (!std::isfinite(magnitude))
        throw UsageError("op magnitude must be finite");
    if (magnitude == 0.0)
        return img;
    const double rad = std::numbers::pi / 180.0;
    switch (op) {
    case AugOp::contrast: {
        double mean = 0.0;
        for (std::size_t i = 0; i < img.pixels.size(); i += 3)
            mean += luma(img, i);
        mean /= static_cast<double>(img.width * img.height);
        Image out = img;
        for (std::size_t i = 0; i < out.pixels.size(); ++i)
            out.pixels[i] = to_byte(mean + (1.0 + magnitude) * (img.pixels[i] - mean));
        return out;
    }
    case AugOp::color_jitter: {
        Image out = img;
        for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
            const double g = luma(img, i);
            for (std::size_t c = 0; c < 3; ++c)
                out.pixels[i + c] = to_byte(g + (1.0 + magnitude) * (img.pixels[i + c] - g));
        }
        return out;
    }
    case AugOp::rotate: {
        const double cs = std::cos(magnitude * rad), sn = std::sin(magnitude * rad);
        return warp(img, {cs, sn, -sn, cs}, 0.0);
    }
    case AugOp::translate:
        return warp(img, {1.0, 0.0, 0.0, 1.0}, magnitude * static_cast<double>(img.width));
    case AugOp::shear:
        return warp(img, {1.0, -std::tan(magnitude * rad), 0.0, 1.0}, 0.0);
    }
    return img;
}

AugmixWeights draw_augmix_weights(Rng& rng, const AugmentConfig& cfg)
{
    AugmixWeights w;
    double total = 0.0;
    for (std::size_t i = 0; i < cfg.augmix_chains; ++i) {
        w.chain.push_back(gamma_variate(rng, cfg.augmix_alpha));
        total += w.chain.back();
    }
    for (double& v : w.chain)
        v /= total;
    const double a = gamma_variate(rng, cfg.augmix_alpha), b = gamma_variate(rng, cfg.augmix_alpha);
    w.original = a / (a + b);
    return w;
}

Image augmix(const Image& img, Rng& rng, const AugmentConfig& cfg, OpTrace* trace)
{
    const AugmixWeights w = draw_augmix_weights(rng, cfg);
    return augmix(img, rng, cfg, w, trace);
}

Image augmix(const Image& img, Rng& rng, const AugmentConfig& cfg, const AugmixWeights& weights, OpTrace* trace)
{
    cfg.validate();
    require_model_input(img);
    if (weights.chain.size() != cfg.augmix_chains)
        throw UsageError("augmix needs one weight per chain");
    double total = 0.0;
    for (double v : weights.chain) {
        if (!(v >= 0.0))
            throw UsageError("augmix chain weights must be nonnegative");
        total += v;
    }
    if (!weights.chain.empty() && std::abs(total - 1.0) > 1e-9)
        throw UsageError("augmix chain weights must sum to 1");
    check_probability(weights.original, "augmix original weight");

    std::vector<double> mix(img.pixels.size(), 0.0);
    for (std::size_t k = 0; k < cfg.augmix_chains; ++k) {
        Image chain = img;
        const std::size_t depth = cfg.augmix_depth_min + rng.below(cfg.augmix_depth_max - cfg.augmix_depth_min + 1);
        for (std::size_t d = 0; d < depth; ++d) {
            if (cfg.augmix_skip_prob > 0.0 && rng.bernoulli(cfg.augmix_skip_prob))
                continue;
            const AugOp op = kAllAugOps[rng.below(kAllAugOps.size())];
            const double max = op_max_magnitude(op, cfg);
            const double mag = rng.uniform(-max, max);
            chain = apply_op(chain, op, mag);
            if (trace)
                trace->ops.push_back({op, mag});
        }
        for (std::size_t i = 0; i < mix.size(); ++i)
            mix[i] += weights.chain[k] * chain.pixels[i];
    }
    if (weights.chain.empty())
        return img;
    Image out = img;
    for (std::size_t i = 0; i < mix.size(); ++i)
        out.pixels[i] = to_byte(weights.original * img.pixels[i] + (1.0 - weights.original) * mix[i]);
    return out;
}

Image trivial_augment(const Image& img, Rng& rng, const AugmentConfig& cfg, OpTrace* trace)
{
    require_model_input(img);
    const AugOp op = kAllAugOps[rng.below(kAllAugOps.size())];
    const double max = op_max_magnitude(op, cfg);
    const double mag = rng.uniform(-max, max);
    if (trace)
        trace->ops.push_back({op, mag});
    return apply_op(img, op, mag);
}

Image center_crop(const Image& img, double ratio)
{
    if (!(ratio > 0.0) || !std::isfinite(ratio))
        throw UsageError("crop ratio must be positive");
    if (ratio >= 1.0)
        return img;
    const double w = ratio * static_cast<double>(img.width), h = ratio * static_cast<double>(img.height);
    return resize_region_bilinear(img, (static_cast<double>(img.width) - w) / 2.0,
                                  (static_cast<double>(img.height) - h) / 2.0, w, h, img.width, img.height);
}

Image center_crop_random(const Image& img, Rng& rng, const AugmentConfig& cfg)
{
    require_model_input(img);
    const double p = rng.uniform(cfg.crop_prob_min, cfg.crop_prob_max);
    if (!rng.bernoulli(p))
        return img;
    return center_crop(img, rng.uniform(cfg.crop_ratio_min, cfg.crop_ratio_max));
}

Image gaussian_blur(const Image& img, double sigma)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw UsageError("blur sigma must be positive");
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (long i = -radius; i <= radius; ++i)
        norm += k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    for (double& v : k)
        v /= norm;

    const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
    std::vector<double> rows(img.pixels.size());
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (long i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] *
                           img.at(reflect_index(x + i, w), static_cast<std::size_t>(y), c);
                rows[(static_cast<std::size_t>(y * w + x)) * 3 + c] = acc;
            }
    Image out(img.width, img.height);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (long i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] *
                           rows[(reflect_index(y + i, h) * img.width + static_cast<std::size_t>(x)) * 3 + c];
                out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = to_byte(acc);
            }
    return out;
}

Image gaussian_blur_conditional(const Image& img, Rng& rng, const AugmentConfig& cfg)
{
    require_model_input(img);
    if (!rng.bernoulli(cfg.blur_prob))
        return img;
    return gaussian_blur(img, rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max));
}

Image cutout(const Image& img, Rng& rng, std::size_t n_blocks, std::size_t block, std::vector<std::uint8_t>* mask)
{
    if (block == 0 || block > img.width || block > img.height)
        throw UsageError("cutout block of " + std::to_string(block) + " does not fit a " + std::to_string(img.width) +
                         "x" + std::to_string(img.height) + " image");
    if (mask)
        mask->assign(img.width * img.height, 0);
    if (n_blocks == 0)
        return img;
    std::array<double, 3> mean{};
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        mean[i % 3] += img.pixels[i];
    Rgb fill;
    const double n = static_cast<double>(img.width * img.height);
    fill.r = to_byte(mean[0] / n);
    fill.g = to_byte(mean[1] / n);
    fill.b = to_byte(mean[2] / n);

    Image out = img;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t x0 = rng.below(img.width - block + 1), y0 = rng.below(img.height - block + 1);
        for (std::size_t y = y0; y < y0 + block; ++y)
            for (std::size_t x = x0; x < x0 + block; ++x) {
                out.set(x, y, fill);
                if (mask)
                    (*mask)[y * img.width + x] = 1;
            }
    }
    return out;
}

Image augment_pipeline(const Image& img, const Rng& stream, const AugmentConfig& cfg, OpTrace* trace)
{
    cfg.validate();
    require_model_input(img);
    Image out = img;
    if (cfg.use_augmix && cfg.augmix_chains > 0) {
        Rng r = stream.split(1);
        out = augmix(out, r, cfg, trace);
    }
    if (cfg.use_trivial) {
        Rng r = stream.split(2);
        out = trivial_augment(out, r, cfg, trace);
    }
    {
        Rng r = stream.split(3);
        out = center_crop_random(out, r, cfg);
    }
    {
        Rng r = stream.split(4);
        out = gaussian_blur_conditional(out, r, cfg);
    }
    {
        Rng r = stream.split(5);
        out = cutout(out, r, cfg.cutout_small, cfg.cutout_block);
    }
    {
        Rng r = stream.split(6);
        out = cutout(out, r, cfg.cutout_large, cfg.cutout_block);
    }
    return out;
}

Image augment_image(const Image& img, std::uint64_t seed, std::uint64_t image_index, std::uint64_t epoch,
                    const AugmentConfig& cfg)
{
    return augment_pipeline(img, Rng::stream(seed, image_index, epoch), cfg);
}

}  // namespace biomoe
