#pragma once

#include "biomoe/colormap.hpp"
#include "biomoe/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace biomoe {

inline constexpr std::size_t kImageSize = 224;

/// 8-bit RGB raster, row-major, interleaved channels.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

    static Image model_canvas(std::uint8_t fill = 0) { return Image(kImageSize, kImageSize, fill); }

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
    Rgb rgb(std::size_t x, std::size_t y) const { return {at(x, y, 0), at(x, y, 1), at(x, y, 2)}; }
    void set(std::size_t x, std::size_t y, Rgb c)
    {
        at(x, y, 0) = c.r;
        at(x, y, 1) = c.g;
        at(x, y, 2) = c.b;
    }

    bool is_model_input() const noexcept { return width == kImageSize && height == kImageSize; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Throws ShapeError unless the image is 224x224 RGB.
void require_model_input(const Image& img);

/// Bilinear resampling with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& src, std::size_t width, std::size_t height);

/// Bilinear resampling of the sub-rectangle [x0, x0+w) x [y0, y0+h); samples never leave it.
Image resize_region_bilinear(const Image& src, double x0, double y0, double w, double h, std::size_t width,
                             std::size_t height);

/// [224, 224, 3] float tensor with values in [0, 1].
Tensor image_to_tensor(const Image& img);

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace biomoe
