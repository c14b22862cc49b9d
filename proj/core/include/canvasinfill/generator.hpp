#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>

#include "canvasinfill/contrastive.hpp"
#include "canvasinfill/daf.hpp"
#include "canvasinfill/mask_engine.hpp"

namespace canvasinfill {

inline constexpr int kOutputScales = 6;

/// Ŷ_k for k = 1..6; scale k is H/2^(k−1) × W/2^(k−1), k = 1 outermost.
struct MultiScaleOutput {
  std::array<torch::Tensor, kOutputScales> scales;

  const torch::Tensor& at(int k) const { return scales.at(static_cast<size_t>(k - 1)); }
  torch::Tensor& at(int k) { return scales.at(static_cast<size_t>(k - 1)); }
};

struct GeneratorOptions {
  EncoderOptions encoder;
  /// Decoder widths from the coarsest stage (k = 6) to the outermost (k = 1).
  std::array<int64_t, kOutputScales> decoder_widths{256, 256, 256, 128, 64, 32};
  int64_t norm_groups = 8;
  bool use_daf = true;
  int64_t daf_reduction = 16;
  int64_t daf_hidden = 16;
};

/// Encoder plus U-Net style decoder. Each decoder stage upsamples (nearest)
/// to the matching skip resolution, concatenates the skip and applies a 3×3
/// conv block; its output feeds one output head.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorOptions options = {});

  /// input: N×4×H×W (masked RGB + mask) with H, W divisible by 32.
  MultiScaleOutput forward(const torch::Tensor& input);

  const GeneratorOptions& options() const { return options_; }
  Encoder& encoder() { return encoder_; }
  /// DAF head for scale k (only when use_daf).
  DafHead& daf_head(int k) { return daf_heads_.at(static_cast<size_t>(k - 1)); }

 private:
  GeneratorOptions options_;
  Encoder encoder_{nullptr};
  std::array<torch::nn::Sequential, kOutputScales> decoder_;  // index k − 1
  std::vector<DafHead> daf_heads_;
  std::vector<torch::nn::Conv2d> plain_heads_;
};
TORCH_MODULE(Generator);

/// Runs the generator on one image and returns Ŷ_1 clipped to [0, 1]. With
/// `composite`, known pixels are copied from the input image.
torch::Tensor inpaint(Generator& generator, const torch::Tensor& image, const Mask& mask, bool composite = true);

/// Batched inference: N×3×H×W images, N×1×H×W masks.
torch::Tensor inpaint_batch(Generator& generator, const torch::Tensor& images, const torch::Tensor& masks,
                            bool composite = true);

}  // namespace canvasinfill
