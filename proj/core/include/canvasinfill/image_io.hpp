#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

#include "canvasinfill/mask_engine.hpp"

namespace canvasinfill {

/// Decodes an image file to a 3×H×W float tensor in [0, 1] (RGB). When
/// `size` > 0 the image is bilinearly resized to size×size (aspect ratio is
/// not preserved). Throws IngestError naming the path on failure.
torch::Tensor read_image(const std::string& path, int64_t size = 0);

/// Writes a 3×H×W tensor as 8-bit PNG (values clamped to [0, 1], rounded).
void write_image(const std::string& path, const torch::Tensor& image);

/// Reads an 8-bit single-channel mask; pixels > 127 are holes. Resizes with
/// nearest-neighbor sampling when `size` > 0.
Mask read_mask(const std::string& path, int64_t size = 0);

/// Writes 255 for holes and 0 for known pixels.
void write_mask(const std::string& path, const Mask& mask);

/// True when OpenCV recognizes the file signature as a decodable format.
bool has_image_signature(const std::string& path);

}  // namespace canvasinfill
