#include "core/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "core/errors.hpp"

namespace usrob::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open image: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed decoding image: " + path.string());
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    const std::size_t w = png_get_image_width(png, info);
    const std::size_t h = png_get_image_height(png, info);
    const std::size_t channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported channel count in " + path.string());
    }

    std::vector<std::uint8_t> raw(w * h * channels);
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = raw.data() + y * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (channels == 1) {
        Tensor img({h, w});
        for (std::size_t i = 0; i < w * h; ++i) img[i] = static_cast<double>(raw[i]);
        return img;
    }
    Tensor img({3, h, w});
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < w * h; ++i) {
            img[c * w * h + i] = static_cast<double>(raw[i * 3 + c]);
        }
    }
    return img;
}

namespace {

void write_png_impl(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    int color_type, std::size_t channels, const std::uint8_t* bytes) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open image for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed encoding image: " + path.string());
    }

    png_init_io(png, fp.get());
    png_set_compression_level(png, 6);  // fixed so identical pixels give identical files
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(bytes + y * width * channels);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray8(const std::filesystem::path& path, const Tensor& image) {
    if (image.ndim() != 2) throw IoError("write_png_gray8 expects an {H,W} image");
    const std::size_t h = image.dim(0), w = image.dim(1);
    std::vector<std::uint8_t> bytes(w * h);
    for (std::size_t i = 0; i < w * h; ++i) {
        const double v = std::clamp(image[i], 0.0, 1.0);
        bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    write_png_impl(path, w, h, PNG_COLOR_TYPE_GRAY, 1, bytes.data());
}

void write_png_rgb8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != 3 * width * height) throw IoError("write_png_rgb8 buffer size mismatch");
    write_png_impl(path, width, height, PNG_COLOR_TYPE_RGB, 3, rgb.data());
}

}  // namespace usrob::io
