#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "canvasinfill/generator.hpp"

namespace canvasinfill {

struct LossWeights {
  double rec = 6.0;
  double per = 0.1;
  double style = 240.0;
  double tv = 0.1;
  double adv = 0.001;
  double gp = 10.0;
  std::vector<int> structure_scales{1, 2, 3, 4, 5, 6};
  std::vector<int> texture_scales{1, 2, 3};

  /// Throws ConfigError for negative weights, out-of-range scales or a
  /// texture scale set that is not contained in the structure set.
  void validate() const;
};

enum class FeatureExtractorKind { kSeededRandom, kVgg16 };

struct FeatureExtractorOptions {
  FeatureExtractorKind kind = FeatureExtractorKind::kSeededRandom;
  uint64_t seed = 20240607;
  std::array<int64_t, 3> widths{16, 32, 64};  // seeded-random variant only
  std::string weights_path;                   // required for the VGG-16 variant
};

/// Frozen convolutional network exposing the outputs of its first three
/// pooling layers. The seeded-random variant is a hermetic substitute for
/// the ImageNet classifier; the VGG-16 variant loads conv weights from a
/// torch archive (keys "block{b}.conv{i}.weight" and ".bias").
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(FeatureExtractorOptions options = {});

  /// N×3×H×W in [0, 1] → three pooled feature maps. H, W ≥ 8.
  std::vector<torch::Tensor> forward(const torch::Tensor& images);
  std::vector<int64_t> channels() const;

 private:
  FeatureExtractorOptions options_;
  std::vector<torch::nn::Sequential> blocks_;
  torch::Tensor mean_;
  torch::Tensor std_;
};
TORCH_MODULE(FeatureExtractor);

struct DiscriminatorOptions {
  int64_t base_width = 64;
};

/// Critic: five stride-2 4×4 convs (64 → 512 at base 64) with leaky ReLU,
/// global average pooling and a linear scalar head. No normalization.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorOptions options = {});
  /// N×3×H×W → N scores.
  torch::Tensor forward(const torch::Tensor& images);

 private:
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Any image → per-sample score function; lets tests substitute analytic critics.
using Critic = std::function<torch::Tensor(const torch::Tensor&)>;
Critic as_critic(Discriminator& d);

/// Mean absolute difference.
torch::Tensor rec_loss(const torch::Tensor& predicted, const torch::Tensor& target);

torch::Tensor perceptual_loss(const torch::Tensor& predicted, const torch::Tensor& target, FeatureExtractor& phi);

/// Unnormalized Gram matrix F Fᵀ of an N×C×h×w (or C×h×w) feature map.
torch::Tensor gram(const torch::Tensor& features);

torch::Tensor style_loss(const torch::Tensor& predicted, const torch::Tensor& target, FeatureExtractor& phi);

struct TvTerms {
  torch::Tensor horizontal;
  torch::Tensor vertical;
  torch::Tensor total() const { return horizontal + vertical; }
};

/// Total variation over the one-pixel dilation Ω of the holes. A pair counts
/// when both pixels are in Ω; each direction is mean-reduced over its own
/// counted pairs and channels, and an empty direction contributes 0.
TvTerms tv_terms(const torch::Tensor& predicted, const torch::Tensor& masks);
torch::Tensor tv_loss(const torch::Tensor& predicted, const torch::Tensor& masks);

/// λ·E[(‖∇D(x)‖₂ − 1)²] at the given samples; differentiable in the critic.
torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& samples, double lambda);

/// Samples Y′: per-sample ε ~ U(0,1) mix of real and fake, bilinear resize by
/// s ~ U(0.75, 1.25) and back to the original size.
torch::Tensor sample_penalty_points(const torch::Tensor& real, const torch::Tensor& fake, std::mt19937_64& rng);

struct CriticLoss {
  torch::Tensor total;
  torch::Tensor wasserstein;  // E[D(fake)] − E[D(real)]
  torch::Tensor penalty;      // already scaled by λ
};

CriticLoss adv_loss_d(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                      std::mt19937_64& rng, double lambda_gp = 10.0);
/// −E[D(fake)].
torch::Tensor adv_loss_g(const Critic& critic, const torch::Tensor& fake);

/// Per-scale targets: Y↓k by repeated bilinear halving.
std::array<torch::Tensor, kOutputScales> image_pyramid(const torch::Tensor& images);

/// (1/|P|) Σ_{k∈P} λ_rec · rec(Ŷ_k, Y↓k).
torch::Tensor structure_loss(const MultiScaleOutput& out, const torch::Tensor& target, const LossWeights& w);

struct TextureTerms {
  torch::Tensor total;       // (1/|Q|) Σ_k weighted sum
  torch::Tensor perceptual;  // unweighted means over Q, for logging
  torch::Tensor style;
  torch::Tensor tv;
  torch::Tensor adversarial;
};

/// Texture loss over k ∈ Q. The critic scores each Ŷ_k after bilinear
/// resizing to the full resolution.
TextureTerms texture_terms(const MultiScaleOutput& out, const torch::Tensor& target, const torch::Tensor& masks,
                           const Critic& critic, FeatureExtractor& phi, const LossWeights& w);
torch::Tensor texture_loss(const MultiScaleOutput& out, const torch::Tensor& target, const torch::Tensor& masks,
                           const Critic& critic, FeatureExtractor& phi, const LossWeights& w);

struct LossBreakdown {
  torch::Tensor total;
  torch::Tensor structure;
  TextureTerms texture;
};

LossBreakdown total_loss(const MultiScaleOutput& out, const torch::Tensor& target, const torch::Tensor& masks,
                         const Critic& critic, FeatureExtractor& phi, const LossWeights& w);

}  // namespace canvasinfill
