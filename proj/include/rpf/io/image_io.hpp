#pragma once

#include <string>

#include "rpf/core/tensor.hpp"

namespace rpf::io {

using core::Tensor;

/// Decoded image in unit-range doubles: (H,W) for grayscale, (3,H,W) for RGB.
struct ImageData {
    int channels = 0;
    Tensor pixels;
    int height() const { return pixels.height(); }
    int width() const { return pixels.width(); }
};

/// Reads 8- or 16-bit PNG and 8-bit JPEG, dispatching on the magic bytes.
/// Palette images expand to RGB, alpha is stripped. Throws std::runtime_error.
ImageData read_image(const std::string& path);

/// 8-bit PNG writers (fixed settings, no ancillary chunks, so identical
/// pixels produce identical bytes).
void write_png_gray(const std::string& path, const Tensor& plane);
void write_png_rgb(const std::string& path, const Tensor& rgb);  // (3,H,W)

/// 16-bit grayscale PNG writer, used by tests exercising 16-bit ingestion.
void write_png_gray16(const std::string& path, const Tensor& plane);

}  // namespace rpf::io
