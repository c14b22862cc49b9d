#include "canvasinfill/daf.hpp"

#include <string>

#include "canvasinfill/errors.hpp"
#include "canvasinfill/tensor_ops.hpp"

namespace nn = torch::nn;

namespace canvasinfill {

ChannelGateImpl::ChannelGateImpl(int64_t channels, int64_t reduction) {
  CANVASINFILL_EXPECT(reduction >= 1 && channels % reduction == 0,
                      "channel count " + std::to_string(channels) + " not divisible by reduction " +
                          std::to_string(reduction));
  down = register_module("down", nn::Linear(channels, channels / reduction));
  up = register_module("up", nn::Linear(channels / reduction, channels));
}

torch::Tensor ChannelGateImpl::forward(const torch::Tensor& z) {
  return torch::sigmoid(up->forward(torch::relu(down->forward(z))));
}

CombineHeadImpl::CombineHeadImpl(const DafOptions& options) {
  input_proj = register_module("input_proj", nn::Conv2d(nn::Conv2dOptions(options.input_channels, 3, 1)));
  feature_proj = register_module("feature_proj", nn::Conv2d(nn::Conv2dOptions(options.channels, 3, 1)));
  transform1 = register_module("transform1", nn::Conv2d(nn::Conv2dOptions(6, options.hidden, 3).padding(1)));
  transform2 =
      register_module("transform2", nn::Conv2d(nn::Conv2dOptions(options.hidden, options.hidden, 3).padding(1)));
  transform3 = register_module("transform3", nn::Conv2d(nn::Conv2dOptions(options.hidden, 3, 3).padding(1)));
}

torch::Tensor CombineHeadImpl::transform(const torch::Tensor& x) {
  auto h = torch::relu(transform1->forward(x));
  h = torch::relu(transform2->forward(h));
  return transform3->forward(h);
}

torch::Tensor global_pool(const torch::Tensor& features) {
  CANVASINFILL_EXPECT(features.dim() == 4, "feature map must be N×C×h×w");
  return features.mean({2, 3});
}

torch::Tensor channel_gate(const torch::Tensor& pooled, ChannelGate& gate) {
  CANVASINFILL_EXPECT(pooled.dim() == 2 && pooled.size(1) == gate->down->options.in_features(),
                      "pooled statistics do not match the gate's channel count");
  return gate->forward(pooled);
}

torch::Tensor rescale(const torch::Tensor& features, const torch::Tensor& weights) {
  CANVASINFILL_EXPECT(features.dim() == 4 && weights.dim() == 2 && weights.size(0) == features.size(0) &&
                          weights.size(1) == features.size(1),
                      "channel weights must be N×C for an N×C×h×w map");
  return features * weights.unsqueeze(2).unsqueeze(3);
}

torch::Tensor downscale_input(const torch::Tensor& input, int64_t h, int64_t w, CombineHead& head) {
  CANVASINFILL_EXPECT(input.dim() == 4, "input must be N×4×H×W");
  CANVASINFILL_EXPECT(halving_steps(input.size(2), h) >= 0 && halving_steps(input.size(3), w) >= 0,
                      "target size must divide the input size by a power of two");
  return downscale_bilinear(head->input_proj->forward(input), h, w);
}

torch::Tensor combine_map_projected(const torch::Tensor& projected, const torch::Tensor& downscaled,
                                    CombineHead& head) {
  CANVASINFILL_EXPECT(projected.dim() == 4 && projected.sizes() == downscaled.sizes(),
                      "projected features and downscaled input must have equal shapes");
  return torch::sigmoid(head->transform(torch::cat({projected, downscaled}, 1)));
}

torch::Tensor combine_map(const torch::Tensor& rescaled, const torch::Tensor& downscaled, CombineHead& head) {
  CANVASINFILL_EXPECT(rescaled.dim() == 4 && downscaled.dim() == 4 && rescaled.size(2) == downscaled.size(2) &&
                          rescaled.size(3) == downscaled.size(3),
                      "feature map and downscaled input sizes disagree");
  return combine_map_projected(head->feature_proj->forward(rescaled), downscaled, head);
}

torch::Tensor blend(const torch::Tensor& alpha, const torch::Tensor& projected, const torch::Tensor& downscaled) {
  CANVASINFILL_EXPECT(alpha.sizes() == projected.sizes() && alpha.sizes() == downscaled.sizes(),
                      "blend operands must have equal shapes");
  return alpha * projected + (1.0 - alpha) * downscaled;
}

DafHeadImpl::DafHeadImpl(const DafOptions& options) : options_(options) {
  gate = register_module("gate", ChannelGate(options.channels, options.reduction));
  combine = register_module("combine", CombineHead(options));
}

DafTrace DafHeadImpl::trace(const torch::Tensor& features, const torch::Tensor& input) {
  CANVASINFILL_EXPECT(features.dim() == 4 && features.size(1) == options_.channels,
                      "feature map channel count does not match the head");
  DafTrace t;
  t.pooled = global_pool(features);
  t.gate = channel_gate(t.pooled, gate);
  t.rescaled = rescale(features, t.gate);
  t.projected = combine->feature_proj->forward(t.rescaled);
  t.downscaled = downscale_input(input, features.size(2), features.size(3), combine);
  t.alpha = combine_map_projected(t.projected, t.downscaled, combine);
  t.output = blend(t.alpha, t.projected, t.downscaled);
  return t;
}

torch::Tensor DafHeadImpl::forward(const torch::Tensor& features, const torch::Tensor& input) {
  return trace(features, input).output;
}

torch::Tensor daf_forward(const torch::Tensor& features, const torch::Tensor& input, DafHead& head) {
  return head->forward(features, input);
}

}  // namespace canvasinfill
