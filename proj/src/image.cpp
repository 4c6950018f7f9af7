#include "biomoe/image.hpp"

#include "biomoe/error.hpp"

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>
#include <unistd.h>

namespace biomoe {

void require_model_input(const Image& img)
{
    if (!img.is_model_input() || img.pixels.size() != kImageSize * kImageSize * 3)
        throw ShapeError("model input must be 224x224 RGB, got " + std::to_string(img.width) + "x" +
                         std::to_string(img.height));
}

Image resize_region_bilinear(const Image& src, double x0, double y0, double w, double h, std::size_t width,
                             std::size_t height)
{
    if (src.width == 0 || src.height == 0 || width == 0 || height == 0)
        throw ShapeError("cannot resize an empty image");
    Image out(width, height);
    const double sx = w / static_cast<double>(width);
    const double sy = h / static_cast<double>(height);
    // sample coordinates are clamped to the centers of the region's border pixels
    const double min_x = std::max(x0, 0.0), max_x = std::min(x0 + w - 1.0, static_cast<double>(src.width - 1));
    const double min_y = std::max(y0, 0.0), max_y = std::min(y0 + h - 1.0, static_cast<double>(src.height - 1));
    for (std::size_t oy = 0; oy < height; ++oy) {
        const double fy = std::clamp(y0 + (static_cast<double>(oy) + 0.5) * sy - 0.5, min_y, max_y);
        const auto y_lo = static_cast<std::size_t>(std::floor(fy));
        const std::size_t y_hi = std::min(y_lo + 1, src.height - 1);
        const double ty = fy - static_cast<double>(y_lo);
        for (std::size_t ox = 0; ox < width; ++ox) {
            const double fx = std::clamp(x0 + (static_cast<double>(ox) + 0.5) * sx - 0.5, min_x, max_x);
            const auto x_lo = static_cast<std::size_t>(std::floor(fx));
            const std::size_t x_hi = std::min(x_lo + 1, src.width - 1);
            const double tx = fx - static_cast<double>(x_lo);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = src.at(x_lo, y_lo, c) * (1.0 - tx) + src.at(x_hi, y_lo, c) * tx;
                const double bottom = src.at(x_lo, y_hi, c) * (1.0 - tx) + src.at(x_hi, y_hi, c) * tx;
                const double v = top * (1.0 - ty) + bottom * ty;
                out.at(ox, oy, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

Image resize_bilinear(const Image& src, std::size_t width, std::size_t height)
{
    return resize_region_bilinear(src, 0.0, 0.0, static_cast<double>(src.width), static_cast<double>(src.height),
                                  width, height);
}

Tensor image_to_tensor(const Image& img)
{
    require_model_input(img);
    Tensor t({kImageSize, kImageSize, 3});
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        t[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    return t;
}

namespace {

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length)
{
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void png_read_from_span(png_structp png, png_bytep data, png_size_t length)
{
    auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cur->offset + length > cur->bytes.size())
        png_error(png, "truncated PNG stream");
    std::memcpy(data, cur->bytes.data() + cur->offset, length);
    cur->offset += length;
}

[[noreturn]] void png_error_handler(png_structp, png_const_charp message)
{
    throw ProcessingError(std::string("PNG: ") + message);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img)
{
    if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height * 3)
        throw ShapeError("cannot encode an empty or inconsistent image");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ProcessingError("PNG: out of memory");
    }
    std::vector<std::uint8_t> out;
    try {
        png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                     PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_set_compression_level(png, 6);
        png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
        png_write_info(png, info);
        std::vector<png_bytep> rows(img.height);
        for (std::size_t y = 0; y < img.height; ++y)
            rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * 3);
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

Image decode_png(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw UsageError("not a PNG stream");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ProcessingError("PNG: out of memory");
    }
    ReadCursor cursor{bytes, 0};
    Image img;
    try {
        png_set_read_fn(png, &cursor, png_read_from_span);
        png_read_info(png, info);
        const auto color = png_get_color_type(png, info);
        const auto depth = png_get_bit_depth(png, info);
        if (depth == 16)
            png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE)
            png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
            if (depth < 8)
                png_set_expand_gray_1_2_4_to_8(png);
            png_set_gray_to_rgb(png);
        }
        if (color & PNG_COLOR_MASK_ALPHA)
            png_set_strip_alpha(png);
        png_set_interlace_handling(png);
        png_read_update_info(png, info);
        if (png_get_channels(png, info) != 3)
            throw UsageError("unsupported PNG channel layout");
        img = Image(png_get_image_width(png, info), png_get_image_height(png, info));
        std::vector<png_bytep> rows(img.height);
        for (std::size_t y = 0; y < img.height; ++y)
            rows[y] = img.pixels.data() + y * img.width * 3;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes)
{
    static std::atomic<unsigned> counter{0};
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ProcessingError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw ProcessingError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw ProcessingError("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

void write_png(const std::filesystem::path& path, const Image& img)
{
    write_file_atomic(path, encode_png(img));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw UsageError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image read_png(const std::filesystem::path& path)
{
    return decode_png(read_file(path));
}

}  // namespace biomoe
