#include "biomoe/representations.hpp"

#include "biomoe/error.hpp"
#include "biomoe/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace biomoe {

namespace {

constexpr double kPi = std::numbers::pi;
// largest float not above pi, so float angles stay inside [-pi, pi]
const float kPiFloat = std::nextafter(static_cast<float>(std::numbers::pi), 0.0f);

std::size_t next_power_of_two(std::size_t n)
{
    std::size_t p = 1;
    while (p < n)
        p <<= 1;
    return p;
}

// frequency axis bottom-up: [frames, bins] -> [bins, frames] with the highest bin in row 0
Tensor spectrogram_plane(const Tensor& frames_by_bins)
{
    const std::size_t frames = frames_by_bins.dim(0), bins = frames_by_bins.dim(1);
    Tensor out({bins, frames});
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t b = 0; b < bins; ++b)
            out.at({bins - 1 - b, f}) = frames_by_bins.at({f, b});
    return out;
}

}  // namespace

std::string_view to_string(RepresentationKind k) noexcept
{
    switch (k) {
    case RepresentationKind::angle: return "angle";
    case RepresentationKind::phase: return "phase";
    case RepresentationKind::psd: return "psd";
    case RepresentationKind::recurrence: return "recurrence";
    case RepresentationKind::scalogram: return "scalogram";
    case RepresentationKind::waveform: return "waveform";
    }
    return "angle";
}

RepresentationKind parse_representation(std::string_view name)
{
    for (auto k : kAllRepresentations)
        if (name == to_string(k))
            return k;
    throw UsageError("unknown representation '" + std::string(name) +
                     "' (expected angle, phase, psd, recurrence, scalogram or waveform)");
}

void StftConfig::validate() const
{
    if (hop == 0 || hop > window_len || window_len > fft_len)
        throw UsageError("STFT config needs 0 < hop <= window_len <= fft_len");
}

ComplexTensor stft(const Signal& s, const StftConfig& cfg)
{
    validate(s);
    cfg.validate();
    if (s.size() < cfg.window_len)
        throw UsageError("signal of " + std::to_string(s.size()) + " samples is shorter than the " +
                         std::to_string(cfg.window_len) + "-sample STFT window");
    const std::size_t frames = 1 + (s.size() - cfg.window_len) / cfg.hop;
    const std::size_t bins = cfg.bins();

    std::vector<double> window(cfg.window_len);
    for (std::size_t k = 0; k < cfg.window_len; ++k)
        window[k] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(cfg.window_len));

    const fft::Plan plan(cfg.fft_len);
    std::vector<fft::cdouble> buf(cfg.fft_len), scratch(plan.scratch_size());
    ComplexTensor out({frames, bins});
    for (std::size_t f = 0; f < frames; ++f) {
        std::fill(buf.begin(), buf.end(), fft::cdouble{});
        for (std::size_t k = 0; k < cfg.window_len; ++k)
            buf[k] = s.samples[f * cfg.hop + k] * window[k];
        plan.forward(buf, scratch);
        for (std::size_t b = 0; b < bins; ++b) {
            out.re().at({f, b}) = static_cast<float>(buf[b].real());
            out.im().at({f, b}) = static_cast<float>(buf[b].imag());
        }
    }
    return out;
}

Tensor spec_angle(const ComplexTensor& c)
{
    Tensor out(c.dims());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const float re = c.re()[i], im = c.im()[i];
        const float a = (re == 0.0f && im == 0.0f) ? 0.0f : static_cast<float>(std::atan2(im, re));
        out[i] = std::clamp(a, -kPiFloat, kPiFloat);
    }
    return out;
}

Tensor unwrap_lastdim(const Tensor& phase)
{
    Tensor out = phase;
    const std::size_t n = phase.dims().back();
    const std::size_t rows = phase.size() / n;
    for (std::size_t r = 0; r < rows; ++r) {
        const float* src = phase.raw() + r * n;
        float* dst = out.raw() + r * n;
        double offset = 0.0;
        for (std::size_t j = 1; j < n; ++j) {
            const double d = static_cast<double>(src[j]) - src[j - 1];
            if (d > kPi)
                offset -= 2.0 * kPi * std::ceil((d - kPi) / (2.0 * kPi));
            else if (d < -kPi)
                offset += 2.0 * kPi * std::ceil((-d - kPi) / (2.0 * kPi));
            dst[j] = static_cast<float>(src[j] + offset);
        }
    }
    return out;
}

Tensor spec_phase_unwrapped(const ComplexTensor& c)
{
    return unwrap_lastdim(spec_angle(c));
}

Tensor spec_psd(const ComplexTensor& c, const StftConfig& cfg, double sample_rate_hz)
{
    double window_energy = 0.0;
    for (std::size_t k = 0; k < cfg.window_len; ++k) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(cfg.window_len));
        window_energy += w * w;
    }
    const double norm = 1.0 / (sample_rate_hz * window_energy);
    const std::size_t bins = c.dims().back();
    Tensor out(c.dims());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const std::size_t b = i % bins;
        const double power = static_cast<double>(c.re()[i]) * c.re()[i] + static_cast<double>(c.im()[i]) * c.im()[i];
        const bool interior = b != 0 && !(cfg.fft_len % 2 == 0 && b == cfg.fft_len / 2);
        out[i] = static_cast<float>(power * norm * (interior ? 2.0 : 1.0));
    }
    return out;
}

std::vector<double> resample_linear(std::span<const double> x, std::size_t n)
{
    if (x.empty() || n == 0)
        throw UsageError("cannot resample an empty sequence");
    std::vector<double> out(n);
    if (x.size() == 1 || n == 1) {
        std::fill(out.begin(), out.end(), x.front());
        return out;
    }
    const double step = static_cast<double>(x.size() - 1) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * step;
        const auto lo = std::min(static_cast<std::size_t>(t), x.size() - 2);
        const double frac = t - static_cast<double>(lo);
        out[i] = x[lo] * (1.0 - frac) + x[lo + 1] * frac;
    }
    return out;
}

Tensor recurrence_matrix_raw(std::span<const double> x)
{
    if (x.empty())
        throw UsageError("recurrence of an empty signal");
    const std::size_t n = x.size();
    std::vector<double> dist(n * n);
    double max_d = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = std::abs(x[i] - x[j]);
            dist[i * n + j] = d;
            max_d = std::max(max_d, d);
        }
    Tensor out({n, n});
    if (max_d == 0.0)
        return out;  // constant signal: no structure to show
    for (std::size_t i = 0; i < n * n; ++i)
        out[i] = static_cast<float>(dist[i] / max_d);
    return out;
}

Tensor recurrence_matrix(const Signal& s, std::size_t size)
{
    validate(s);
    return recurrence_matrix_raw(resample_linear(s.samples, size));
}

std::vector<double> cwt_center_frequencies(double sample_rate_hz, std::size_t n_scales)
{
    const double f_max = std::min(kScalogramMaxHz, 0.45 * sample_rate_hz);
    if (!(f_max > kScalogramMinHz))
        throw UsageError("sample rate " + std::to_string(sample_rate_hz) + " Hz cannot host the " +
                         std::to_string(kScalogramMinHz) + "-" + std::to_string(kScalogramMaxHz) + " Hz scalogram band");
    if (n_scales < 2)
        throw UsageError("scalogram needs at least two scales");
    std::vector<double> freqs(n_scales);
    const double log_hi = std::log(f_max), log_lo = std::log(kScalogramMinHz);
    for (std::size_t k = 0; k < n_scales; ++k)
        freqs[k] = std::exp(log_hi + (log_lo - log_hi) * static_cast<double>(k) / static_cast<double>(n_scales - 1));
    return freqs;
}

Tensor cwt_scalogram(const Signal& s, std::size_t n_scales)
{
    validate(s);
    if (s.size() < 64)
        throw UsageError("scalogram needs at least 64 samples, got " + std::to_string(s.size()));
    const auto freqs = cwt_center_frequencies(s.sample_rate_hz, n_scales);
    const std::size_t n = s.size();
    const std::size_t nfft = next_power_of_two(2 * n);

    const fft::Plan plan(nfft);
    std::vector<fft::cdouble> spectrum(nfft), work(nfft), scratch(plan.scratch_size());
    for (std::size_t i = 0; i < n; ++i)
        spectrum[i] = s.samples[i];
    plan.forward(spectrum, scratch);

    Tensor out({n_scales, n});
    const double bin_omega = 2.0 * kPi * s.sample_rate_hz / static_cast<double>(nfft);
    for (std::size_t k = 0; k < n_scales; ++k) {
        const double scale = kMorletOmega0 / (2.0 * kPi * freqs[k]);
        std::fill(work.begin(), work.end(), fft::cdouble{});
        // analytic Morlet: only positive frequencies; peak gain 2 restores unit amplitude
        for (std::size_t j = 1; j <= nfft / 2; ++j) {
            const double arg = scale * bin_omega * static_cast<double>(j) - kMorletOmega0;
            const double gain = 2.0 * std::exp(-0.5 * arg * arg);
            if (gain < 1e-300)
                continue;
            work[j] = spectrum[j] * gain;
        }
        plan.inverse(work, scratch);
        const double inv = 1.0 / static_cast<double>(nfft);
        for (std::size_t t = 0; t < n; ++t)
            out.at({k, t}) = static_cast<float>(std::abs(work[t]) * inv);
    }
    return out;
}

Image colorize(const Tensor& matrix, const RenderConfig& cfg)
{
    if (matrix.rank() != 2)
        throw ShapeError("colorize expects a 2-D matrix");
    if (!matrix.all_finite())
        throw ProcessingError("cannot render a matrix with non-finite values");

    std::vector<double> v(matrix.size());
    double max_raw = -1e300;
    for (float x : matrix.data())
        max_raw = std::max(max_raw, static_cast<double>(x));
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = matrix[i];
        switch (cfg.scaling) {
        case ValueScaling::linear: v[i] = x; break;
        case ValueScaling::log1p: v[i] = std::log1p(std::max(x, 0.0)); break;
        case ValueScaling::db: {
            const double floor = max_raw > 0.0 ? max_raw * std::pow(10.0, kDbFloor / 10.0) : 1.0;
            v[i] = 10.0 * std::log10(std::max(x, floor));
            break;
        }
        }
    }
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;

    const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
    Image img(cols, rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            std::uint8_t level = 128;
            if (hi > lo)
                level = static_cast<std::uint8_t>(std::lround((v[r * cols + c] - lo) / (hi - lo) * 255.0));
            img.set(c, r, colormap_lookup(cfg.colormap, level));
        }
    return img;
}

Image rasterize(const Tensor& matrix, const RenderConfig& cfg)
{
    return resize_bilinear(colorize(matrix, cfg), kImageSize, kImageSize);
}

Image waveform_raster(const Signal& s)
{
    validate(s);
    const auto [lo_it, hi_it] = std::minmax_element(s.samples.begin(), s.samples.end());
    const double lo = *lo_it, hi = *hi_it;
    const auto columns = resample_linear(s.samples, kImageSize);
    const double last_row = static_cast<double>(kImageSize - 1);

    Image img = Image::model_canvas(255);
    long prev = -1;
    for (std::size_t x = 0; x < kImageSize; ++x) {
        const double v = hi > lo ? (columns[x] - lo) / (hi - lo) : 0.5;
        const long row = std::lround((1.0 - v) * last_row);
        const long from = prev < 0 ? row : std::min(prev, row);
        const long to = prev < 0 ? row : std::max(prev, row);
        // connect to the previous column, then thicken downward by one pixel
        for (long y = from; y <= std::min<long>(to + 1, static_cast<long>(kImageSize) - 1); ++y)
            img.set(x, static_cast<std::size_t>(y), Rgb{0, 0, 0});
        prev = row;
    }
    return img;
}

RenderConfig default_render_config(RepresentationKind kind)
{
    switch (kind) {
    case RepresentationKind::angle:
    case RepresentationKind::phase: return {Colormap::viridis, ValueScaling::linear};
    case RepresentationKind::psd:
    case RepresentationKind::scalogram: return {Colormap::viridis, ValueScaling::db};
    case RepresentationKind::recurrence: return {Colormap::gray_inverted, ValueScaling::linear};
    case RepresentationKind::waveform: return {Colormap::line_bw, ValueScaling::linear};
    }
    return {};
}

Image render_representation(const Signal& s, RepresentationKind kind, const StftConfig& stft_cfg)
{
    const RenderConfig cfg = default_render_config(kind);
    switch (kind) {
    case RepresentationKind::angle: return rasterize(spectrogram_plane(spec_angle(stft(s, stft_cfg))), cfg);
    case RepresentationKind::phase: return rasterize(spectrogram_plane(spec_phase_unwrapped(stft(s, stft_cfg))), cfg);
    case RepresentationKind::psd:
        return rasterize(spectrogram_plane(spec_psd(stft(s, stft_cfg), stft_cfg, s.sample_rate_hz)), cfg);
    case RepresentationKind::recurrence: return rasterize(recurrence_matrix(s), cfg);
    case RepresentationKind::scalogram: {
        // rendered as power so the dB scale matches the PSD image
        Tensor power = cwt_scalogram(s);
        for (float& v : power.data())
            v *= v;
        return rasterize(power, cfg);
    }
    case RepresentationKind::waveform: return waveform_raster(s);
    }
    throw UsageError("unknown representation");
}

}  // namespace biomoe
