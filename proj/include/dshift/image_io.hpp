#pragma once

#include <filesystem>

#include "dshift/tensor.hpp"

namespace dshift {

// Reads an 8-bit PNG or binary PPM/PGM (P6/P5) into a [1, 3, H, W] tensor
// with values v/255. Grayscale and palette images are replicated to RGB;
// alpha is dropped.
Tensor load_image(const std::filesystem::path& path);

// Writes a [1, 3, H, W] (or [1, 1, H, W]) tensor as 8-bit RGB, quantizing
// with round(v * 255) clamped to [0, 255]. The container follows the file
// extension: .png, .ppm (P6) or .pgm (P5, first channel only).
void write_image(const Tensor& image, const std::filesystem::path& path);

bool is_image_file(const std::filesystem::path& path);

}  // namespace dshift
