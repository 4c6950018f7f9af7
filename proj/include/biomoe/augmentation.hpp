#pragma once

#include "biomoe/image.hpp"
#include "biomoe/rng.hpp"

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace biomoe {

/// Photometric and geometric operations shared by AugMix and TrivialAugment. No flips: both
/// image axes carry meaning (time, frequency).
enum class AugOp { contrast, color_jitter, rotate, translate, shear };

inline constexpr std::array<AugOp, 5> kAllAugOps{AugOp::contrast, AugOp::color_jitter, AugOp::rotate, AugOp::translate,
                                                 AugOp::shear};

std::string_view to_string(AugOp op) noexcept;

struct AugmentConfig {
    // largest absolute magnitude per op; magnitudes are drawn from [-max, max]
    double contrast_max = 0.5;      // contrast factor 1 + m
    double color_max = 0.4;         // saturation factor 1 + m
    double rotate_max_deg = 15.0;
    double translate_max = 0.10;    // fraction of the width, horizontal
    double shear_max_deg = 10.0;    // horizontal shear angle

    bool use_augmix = true;
    std::size_t augmix_chains = 3;
    std::size_t augmix_depth_min = 1;
    std::size_t augmix_depth_max = 3;
    double augmix_alpha = 1.0;      // Dirichlet over chains and Beta for the original-vs-mix weight
    double augmix_skip_prob = 0.0;

    bool use_trivial = true;

    double crop_prob_min = 0.2;
    double crop_prob_max = 0.4;
    double crop_ratio_min = 0.6;
    double crop_ratio_max = 0.9;

    double blur_prob = 0.2;
    double blur_sigma_min = 0.5;
    double blur_sigma_max = 1.5;

    std::size_t cutout_small = 2;
    std::size_t cutout_large = 8;
    std::size_t cutout_block = 32;

    void validate() const;
    /// Every stage disabled or at zero strength; the pipeline is then the identity.
    static AugmentConfig identity();
};

double op_max_magnitude(AugOp op, const AugmentConfig& cfg);

struct AppliedOp {
    AugOp op;
    double magnitude;
};

/// Collects every op application, in order.
struct OpTrace {
    std::vector<AppliedOp> ops;
};

/// Magnitude 0 returns the input unchanged. Geometric ops map about the image center and
/// sample bilinearly with reflected borders.
Image apply_op(const Image& img, AugOp op, double magnitude);

struct AugmixWeights {
    std::vector<double> chain;  // convex, one per chain
    double original = 0.0;      // weight of the untouched image in the final blend
};

AugmixWeights draw_augmix_weights(Rng& rng, const AugmentConfig& cfg);

Image augmix(const Image& img, Rng& rng, const AugmentConfig& cfg, OpTrace* trace = nullptr);
/// Chains still come from rng; the blend uses the given weights.
Image augmix(const Image& img, Rng& rng, const AugmentConfig& cfg, const AugmixWeights& weights,
             OpTrace* trace = nullptr);

/// One op chosen uniformly with a magnitude uniform in [-max, max].
Image trivial_augment(const Image& img, Rng& rng, const AugmentConfig& cfg = {}, OpTrace* trace = nullptr);

/// Centered square of side ratio * size, resized back to the input size.
Image center_crop(const Image& img, double ratio);
/// Draws p from the probability range, then crops with probability p at a ratio from the ratio range.
Image center_crop_random(const Image& img, Rng& rng, const AugmentConfig& cfg);

/// Separable kernel of radius ceil(3 sigma), mirrored borders (edge pixel not repeated).
Image gaussian_blur(const Image& img, double sigma);
Image gaussian_blur_conditional(const Image& img, Rng& rng, const AugmentConfig& cfg);

/// Fills n_blocks block x block squares with the image's mean color. Top-left corners are uniform
/// over the positions that keep the block inside the image; blocks may overlap. When mask is
/// given it receives width*height flags, 1 where a pixel was covered.
Image cutout(const Image& img, Rng& rng, std::size_t n_blocks, std::size_t block = 32,
             std::vector<std::uint8_t>* mask = nullptr);

/// AugMix, TrivialAugment, centre crop, blur, small cutout, large cutout. Each stage draws from
/// its own child of the stream so toggling one leaves the others' draws unchanged.
Image augment_pipeline(const Image& img, const Rng& stream, const AugmentConfig& cfg, OpTrace* trace = nullptr);

/// Pipeline on the stream for (seed, image_index, epoch).
Image augment_image(const Image& img, std::uint64_t seed, std::uint64_t image_index, std::uint64_t epoch,
                    const AugmentConfig& cfg = {});

}  // namespace biomoe
