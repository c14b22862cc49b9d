#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace canvasinfill {

// Dual attention fusion output head. Channel attention squeezes the decoder
// feature map to per-channel statistics, gates them through a bottleneck and
// rescales the map; the spatial branch predicts a combine map α that blends
// the projected features with the downscaled network input.

struct DafOptions {
  int64_t channels = 32;
  int64_t reduction = 16;
  int64_t hidden = 16;          // width of the two inner 3×3 convolutions of A
  int64_t input_channels = 4;   // masked RGB + mask
};

/// ω = sigmoid(up(relu(down(z)))), C → C/r → C with biases.
class ChannelGateImpl : public torch::nn::Module {
 public:
  ChannelGateImpl(int64_t channels, int64_t reduction);
  torch::Tensor forward(const torch::Tensor& z);

  torch::nn::Linear down{nullptr};
  torch::nn::Linear up{nullptr};
};
TORCH_MODULE(ChannelGate);

/// Input projection (1×1, 4 → 3), feature projection (1×1, C → 3) and the
/// three 3×3 convolutions producing the pre-sigmoid combine map.
class CombineHeadImpl : public torch::nn::Module {
 public:
  explicit CombineHeadImpl(const DafOptions& options);

  torch::nn::Conv2d input_proj{nullptr};
  torch::nn::Conv2d feature_proj{nullptr};
  torch::nn::Conv2d transform1{nullptr};
  torch::nn::Conv2d transform2{nullptr};
  torch::nn::Conv2d transform3{nullptr};

  /// A(·): conv → relu → conv → relu → conv on 6 concatenated channels.
  torch::Tensor transform(const torch::Tensor& x);
};
TORCH_MODULE(CombineHead);

/// Intermediate values of one head evaluation.
struct DafTrace {
  torch::Tensor pooled;      // N×C
  torch::Tensor gate;        // ω, N×C
  torch::Tensor rescaled;    // F̂
  torch::Tensor projected;   // W_D F̂, N×3×h×w
  torch::Tensor downscaled;  // x_q′, N×3×h×w
  torch::Tensor alpha;       // N×3×h×w
  torch::Tensor output;      // Ŷ
};

class DafHeadImpl : public torch::nn::Module {
 public:
  explicit DafHeadImpl(const DafOptions& options);

  /// features: N×C×h×w; input: N×4×H×W with H/h a power of two.
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& input);
  DafTrace trace(const torch::Tensor& features, const torch::Tensor& input);

  const DafOptions& options() const { return options_; }

  ChannelGate gate{nullptr};
  CombineHead combine{nullptr};

 private:
  DafOptions options_;
};
TORCH_MODULE(DafHead);

/// Channel-wise spatial mean: N×C×h×w → N×C.
torch::Tensor global_pool(const torch::Tensor& features);

torch::Tensor channel_gate(const torch::Tensor& pooled, ChannelGate& gate);

/// f̂_c = ω_c · f_c.
torch::Tensor rescale(const torch::Tensor& features, const torch::Tensor& weights);

/// 1×1 input projection followed by bilinear down-scaling to h×w.
torch::Tensor downscale_input(const torch::Tensor& input, int64_t h, int64_t w, CombineHead& head);

/// α = sigmoid(A([W_D F̂, x_q′])).
torch::Tensor combine_map(const torch::Tensor& rescaled, const torch::Tensor& downscaled, CombineHead& head);
/// Same as combine_map with the feature projection W_D F̂ already applied.
torch::Tensor combine_map_projected(const torch::Tensor& projected, const torch::Tensor& downscaled,
                                    CombineHead& head);

/// Ŷ = α ⊙ projected + (1 − α) ⊙ x_q′.
torch::Tensor blend(const torch::Tensor& alpha, const torch::Tensor& projected, const torch::Tensor& downscaled);

torch::Tensor daf_forward(const torch::Tensor& features, const torch::Tensor& input, DafHead& head);

}  // namespace canvasinfill
