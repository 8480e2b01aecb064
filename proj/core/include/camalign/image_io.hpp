#pragma once

#include <filesystem>

#include "camalign/tensor.hpp"

namespace camalign {

/// Reads any PNG as RGB with values scaled to [0, 1].
Image read_png(const std::filesystem::path& path);

/// Writes an RGB (3 channel) or grayscale (1 channel) tensor as an 8-bit PNG.
/// Values are clamped to [0, 1].
void write_png(const std::filesystem::path& path, const Tensor3& image);

/// Bilinear resize with half-pixel centers.
Image resize_bilinear(const Image& image, int height, int width);

}  // namespace camalign
