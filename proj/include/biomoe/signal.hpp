#pragma once

#include <array>
#include <complex>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace biomoe {

enum class Modality { eda, bvp, resp, spo2, other };

std::string_view to_string(Modality m) noexcept;
/// Accepts "EDA", "BVP", "RESP", "SPO2", "OTHER" in any case.
Modality parse_modality(std::string_view name);

/// A uniformly sampled single-channel recording.
struct Signal {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
    Modality modality = Modality::other;

    std::size_t size() const noexcept { return samples.size(); }
    double duration_s() const noexcept { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

/// Throws when the rate is non-positive, the signal is empty, or a sample is not finite.
void validate(const Signal& s);

struct CsvOptions {
    std::size_t column = 0;
    bool skip_header = false;
};

/// One sample per line; cells are comma separated and `column` selects which one to read.
/// Parse failures name the 1-based line number.
Signal load_csv(const std::filesystem::path& path, double sample_rate_hz, Modality modality,
                const CsvOptions& options = {});

enum class FilterKind { lowpass, bandpass };

struct FilterSpec {
    FilterKind kind = FilterKind::lowpass;
    double lo_hz = 0.0;  // unused for lowpass
    double hi_hz = 0.0;

    friend bool operator==(const FilterSpec&, const FilterSpec&) = default;
};

/// EDA: lowpass 5 Hz; BVP and SpO2: bandpass 0.04-1.7 Hz; respiration: bandpass 0.05-0.5 Hz.
/// There is no default for Modality::other.
FilterSpec default_filter(Modality m);

/// Second-order sections, each {b0, b1, b2, a0 = 1, a1, a2}.
struct SosFilter {
    std::vector<std::array<double, 6>> sections;

    std::size_t order() const noexcept { return 2 * sections.size(); }
};

inline constexpr int kButterworthOrder = 4;

/// Digital Butterworth design via the bilinear transform with frequency pre-warping.
/// A bandpass of prototype order N has 2N poles.
SosFilter design_butterworth(const FilterSpec& spec, double sample_rate_hz, int order = kButterworthOrder);

std::complex<double> frequency_response(const SosFilter& filter, double freq_hz, double sample_rate_hz);

/// Causal single pass; `state` holds two delay values per section.
std::vector<double> sosfilt(const SosFilter& filter, const std::vector<double>& x,
                            std::vector<std::array<double, 2>>* state = nullptr);

/// Steady-state delay values for a unit step input.
std::vector<std::array<double, 2>> sosfilt_steady_state(const SosFilter& filter);

/// Zero-phase forward-backward filtering with odd reflection padding of 3x the filter order.
std::vector<double> filtfilt(const SosFilter& filter, const std::vector<double>& x);

/// Designs the 4th-order Butterworth for `f` and applies it forward-backward.
Signal apply_filter(const Signal& s, const FilterSpec& f);

}  // namespace biomoe
