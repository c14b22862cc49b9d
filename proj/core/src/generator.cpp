#include "canvasinfill/generator.hpp"

#include <algorithm>
#include <string>

#include "canvasinfill/errors.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace canvasinfill {

GeneratorImpl::GeneratorImpl(GeneratorOptions options) : options_(options) {
  encoder_ = register_module("encoder", Encoder(options_.encoder));
  const auto& enc = options_.encoder.widths;

  // Stage k consumes the previous decoder output (or the bottleneck) plus
  // the skip at its own resolution: encoder stage k − 1, or the raw input.
  int64_t prev = enc[kEncoderStages - 1];
  for (int k = kOutputScales; k >= 1; --k) {
    const int64_t skip = k == 1 ? options_.encoder.in_channels : enc[static_cast<size_t>(k - 2)];
    const int64_t out = options_.decoder_widths[static_cast<size_t>(kOutputScales - k)];
    nn::Sequential block(nn::Conv2d(nn::Conv2dOptions(prev + skip, out, 3).padding(1)),
                         nn::GroupNorm(nn::GroupNormOptions(std::min(options_.norm_groups, out), out)),
                         nn::ReLU());
    decoder_[static_cast<size_t>(k - 1)] = register_module("decoder" + std::to_string(k), block);
    prev = out;
  }

  for (int k = 1; k <= kOutputScales; ++k) {
    const int64_t channels = options_.decoder_widths[static_cast<size_t>(kOutputScales - k)];
    if (options_.use_daf) {
      DafOptions daf;
      daf.channels = channels;
      daf.reduction = options_.daf_reduction;
      daf.hidden = options_.daf_hidden;
      daf.input_channels = options_.encoder.in_channels;
      daf_heads_.push_back(register_module("daf" + std::to_string(k), DafHead(daf)));
    } else {
      plain_heads_.push_back(
          register_module("head" + std::to_string(k), nn::Conv2d(nn::Conv2dOptions(channels, 3, 3).padding(1))));
    }
  }
}

MultiScaleOutput GeneratorImpl::forward(const torch::Tensor& input) {
  CANVASINFILL_EXPECT(input.dim() == 4 && input.size(1) == options_.encoder.in_channels,
                      "generator input must be N×4×H×W");
  CANVASINFILL_EXPECT(input.size(2) % 32 == 0 && input.size(3) % 32 == 0,
                      "generator input height and width must be divisible by 32");
  auto skips = encoder_->features(input);

  MultiScaleOutput out;
  torch::Tensor h = skips.back();
  for (int k = kOutputScales; k >= 1; --k) {
    const torch::Tensor& skip = k == 1 ? input : skips[static_cast<size_t>(k - 2)];
    auto up = F::interpolate(h, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                                    .mode(torch::kNearest));
    h = decoder_[static_cast<size_t>(k - 1)]->forward(torch::cat({up, skip}, 1));
    if (options_.use_daf) {
      out.at(k) = daf_heads_[static_cast<size_t>(k - 1)]->forward(h, input);
    } else {
      out.at(k) = plain_heads_[static_cast<size_t>(k - 1)]->forward(h);
    }
  }
  return out;
}

torch::Tensor inpaint_batch(Generator& generator, const torch::Tensor& images, const torch::Tensor& masks,
                            bool composite) {
  auto input = masked_input(images, masks);
  auto predicted = generator->forward(input).at(1).clamp(0.0, 1.0);
  if (!composite) return predicted;
  auto m = masks.to(images.dtype());
  return m * predicted + (1.0 - m) * images;
}

torch::Tensor inpaint(Generator& generator, const torch::Tensor& image, const Mask& mask, bool composite) {
  CANVASINFILL_EXPECT(image.dim() == 3 && image.size(0) == 3, "image must be 3×H×W");
  CANVASINFILL_EXPECT(image.size(1) == mask.height() && image.size(2) == mask.width(),
                      "image and mask shapes disagree");
  return inpaint_batch(generator, image.unsqueeze(0), mask.as_batch(), composite).squeeze(0);
}

}  // namespace canvasinfill
