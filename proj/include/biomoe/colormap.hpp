#pragma once

#include <array>
#include <cstdint>

namespace biomoe {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

enum class Colormap { viridis, gray_inverted, line_bw };

/// Fixed 256-level tables compiled into the binary.
Rgb colormap_lookup(Colormap map, std::uint8_t level) noexcept;

/// Rec. 601 luma.
double luminance(Rgb c) noexcept;

}  // namespace biomoe
