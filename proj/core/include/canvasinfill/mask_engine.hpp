#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace canvasinfill {

/// H×W binary hole mask, 1 = unknown pixel. Stored as a float32 tensor.
class Mask {
 public:
  Mask() = default;
  /// Validates that `data` is 2-D with entries exactly 0 or 1.
  explicit Mask(torch::Tensor data);

  /// Wraps a tensor already known to be a float {0,1} H×W map.
  static Mask unchecked(torch::Tensor data);
  static Mask zeros(int64_t h, int64_t w);
  static Mask ones(int64_t h, int64_t w);

  const torch::Tensor& data() const { return data_; }
  int64_t height() const { return data_.size(0); }
  int64_t width() const { return data_.size(1); }
  double hole_ratio() const;
  /// 1×1×H×W view for the batched kernels.
  torch::Tensor as_batch() const { return data_.unsqueeze(0).unsqueeze(0); }

 private:
  torch::Tensor data_;
};

enum class MaskKind { kRectangular, kIrregular };

const char* to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& text);

struct MaskSpec {
  MaskKind kind = MaskKind::kIrregular;
  uint64_t seed = 0;

  // rectangular: side lengths as fractions of the image dimension
  double rect_min_frac = 0.25;
  double rect_max_frac = 0.5;

  // irregular: brush strokes as random polylines
  int stroke_min = 1;
  int stroke_max = 5;
  double brush_min = 4.0;  // pixels at a 256-pixel reference size
  double brush_max = 18.0;
  int vertex_min = 4;
  int vertex_max = 12;
  double max_angle_step = std::numbers::pi / 2.0;
  double segment_min_frac = 0.15;  // segment length / min(h, w)
  double segment_max_frac = 0.4;
  bool scale_brush_to_image = true;

  /// Throws ConfigError on inconsistent ranges.
  void validate() const;
};

/// Polyline in pixel coordinates (row, col) painted with a round brush.
struct Stroke {
  std::vector<std::pair<double, double>> vertices;
  double width = 1.0;
};

/// Rasterizes the union of capsules around every stroke segment; a pixel is
/// covered when its center lies within width/2 of the polyline.
Mask rasterize_strokes(const std::vector<Stroke>& strokes, int64_t h, int64_t w);

Mask gen_rectangular(const MaskSpec& spec, int64_t h, int64_t w);
Mask gen_rectangular(const MaskSpec& spec, int64_t h, int64_t w, std::mt19937_64& rng);
Mask gen_irregular(const MaskSpec& spec, int64_t h, int64_t w);
Mask gen_irregular(const MaskSpec& spec, int64_t h, int64_t w, std::mt19937_64& rng);

/// Dispatches on spec.kind, drawing from the caller's stream.
Mask generate_mask(const MaskSpec& spec, int64_t h, int64_t w, std::mt19937_64& rng);

struct MaskedImage {
  torch::Tensor pixels;  // 3×H×W, zero inside holes
  Mask mask;

  /// 4×H×W network input: masked RGB followed by the mask channel.
  torch::Tensor network_input() const;
};

MaskedImage apply_mask(const torch::Tensor& image, const Mask& mask);

/// Batched variant: N×3×H×W images, N×1×H×W masks → N×4×H×W network input.
torch::Tensor masked_input(const torch::Tensor& images, const torch::Tensor& masks);

/// One-pixel dilation with the 3×3 all-ones structuring element.
Mask dilate1(const Mask& mask);
torch::Tensor dilate1(const torch::Tensor& masks);

/// Level k (0-based) has size H/2^k × W/2^k; coarse pixels are 1 when any
/// covered fine pixel is 1.
std::vector<Mask> mask_pyramid(const Mask& mask, int levels);
std::vector<torch::Tensor> mask_pyramid(const torch::Tensor& masks, int levels);

}  // namespace canvasinfill
