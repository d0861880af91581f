#pragma once

#include <string>

#include "famed/tensor.hpp"

namespace famed {

/// Reads an 8-bit PNG (any colour type, converted to RGB) or a binary PPM
/// (P6, maxval 255) into a [1,3,h,w] tensor with values v/255.
Tensor load_image(const std::string& path);

/// Reads an image as a single-channel [1,1,h,w] map (the first channel of
/// an RGB image; gray PNGs are read directly).
Tensor load_gray(const std::string& path);

/// Writes a [1,3,h,w] (RGB) or [1,1,h,w] (gray) tensor as 8-bit PNG or PPM
/// by extension. Values are clamped to [0,1] and rounded half away from
/// zero. The write is atomic.
void save_image(const Tensor& image, const std::string& path);

/// Quantizes to the 8-bit grid exactly as save_image does.
Tensor quantize8(const Tensor& image);

}  // namespace famed
