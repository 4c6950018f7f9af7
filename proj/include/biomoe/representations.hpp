#pragma once

#include "biomoe/colormap.hpp"
#include "biomoe/image.hpp"
#include "biomoe/signal.hpp"
#include "biomoe/tensor.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace biomoe {

enum class RepresentationKind { angle, phase, psd, recurrence, scalogram, waveform };

inline constexpr RepresentationKind kAllRepresentations[] = {
    RepresentationKind::angle,      RepresentationKind::phase,     RepresentationKind::psd,
    RepresentationKind::recurrence, RepresentationKind::scalogram, RepresentationKind::waveform,
};

std::string_view to_string(RepresentationKind k) noexcept;
RepresentationKind parse_representation(std::string_view name);

struct StftConfig {
    std::size_t window_len = 128;  // periodic Hann
    std::size_t hop = 16;
    std::size_t fft_len = 256;     // zero padded beyond window_len

    void validate() const;
    std::size_t bins() const noexcept { return fft_len / 2 + 1; }
};

/// [frames, bins] with frames = 1 + (len - window_len) / hop.
ComplexTensor stft(const Signal& s, const StftConfig& cfg = {});

/// Phase angle in [-pi, pi]; atan2(0, 0) is taken as 0.
Tensor spec_angle(const ComplexTensor& stft);

/// Phase unwrapped along the frequency axis of each frame.
Tensor spec_phase_unwrapped(const ComplexTensor& stft);

/// Removes 2*pi jumps along the last axis.
Tensor unwrap_lastdim(const Tensor& phase);

/// One-sided power spectral density |X|^2 / (fs * sum(w^2)), interior bins doubled.
Tensor spec_psd(const ComplexTensor& stft, const StftConfig& cfg, double sample_rate_hz);

std::vector<double> resample_linear(std::span<const double> x, std::size_t n);

/// Unthresholded distance recurrence |x_i - x_j| scaled by its maximum. The length-n
/// form skips resampling.
Tensor recurrence_matrix_raw(std::span<const double> x);
Tensor recurrence_matrix(const Signal& s, std::size_t size = kImageSize);

inline constexpr double kMorletOmega0 = 6.0;
inline constexpr double kScalogramMinHz = 0.05;
inline constexpr double kScalogramMaxHz = 8.0;

/// Log-spaced wavelet center frequencies, highest first.
std::vector<double> cwt_center_frequencies(double sample_rate_hz, std::size_t n_scales = 112);

/// Morlet magnitude scalogram [n_scales, len]; row 0 is the highest center frequency.
/// Normalized so a unit-amplitude sinusoid at a scale's center frequency has magnitude ~1.
Tensor cwt_scalogram(const Signal& s, std::size_t n_scales = 112);

enum class ValueScaling { linear, log1p, db };

struct RenderConfig {
    Colormap colormap = Colormap::viridis;
    ValueScaling scaling = ValueScaling::linear;
};

inline constexpr double kDbFloor = -80.0;

/// Value scaling, min-max to 0..255 and colormap lookup at the matrix's own resolution
/// (row 0 at the top). A constant matrix maps to the middle level.
Image colorize(const Tensor& matrix, const RenderConfig& cfg);

/// colorize followed by a bilinear resize to 224x224.
Image rasterize(const Tensor& matrix, const RenderConfig& cfg);

/// Black 2-px polyline of the min-max normalized signal on white; maximum at the top.
Image waveform_raster(const Signal& s);

RenderConfig default_render_config(RepresentationKind kind);

/// Full path from an (already filtered) signal to the 224x224 image of one representation.
Image render_representation(const Signal& s, RepresentationKind kind, const StftConfig& stft_cfg = {});

}  // namespace biomoe
