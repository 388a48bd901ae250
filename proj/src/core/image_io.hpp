#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "core/tensor.hpp"

namespace usrob::io {

// Decodes a PNG to doubles on the 8-bit scale (0..255). Grayscale files come
// back as {H, W}; color files as {3, H, W}. 16-bit depth is reduced to 8,
// palette images expanded, alpha stripped.
Tensor read_png(const std::filesystem::path& path);

// Writes an {H, W} image with values in [0,1] as 8-bit grayscale.
void write_png_gray8(const std::filesystem::path& path, const Tensor& image);

// Writes packed RGB rows (3 * width * height bytes).
void write_png_rgb8(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& rgb);

}  // namespace usrob::io
