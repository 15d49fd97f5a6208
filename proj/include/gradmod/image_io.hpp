#pragma once

#include <filesystem>

#include "gradmod/tensor.hpp"

namespace gradmod {

/// Writes an RGB image [3 x H x W] with values in [-1, 1] as a binary PPM
/// with 16-bit channels (maxval 65535). Values outside [-1, 1] are clamped.
void write_image(const Tensor& image, const std::filesystem::path& path);

/// Reads a binary PPM (8- or 16-bit) back into [-1, 1].
Tensor read_image(const std::filesystem::path& path);

}  // namespace gradmod
