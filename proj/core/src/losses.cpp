#include "canvasinfill/losses.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "canvasinfill/errors.hpp"
#include "canvasinfill/mask_engine.hpp"
#include "canvasinfill/tensor_ops.hpp"

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace canvasinfill {

void LossWeights::validate() const {
  for (double v : {rec, per, style, tv, adv, gp}) {
    if (!(v >= 0.0)) throw ConfigError("loss weights must be non-negative");
  }
  auto in_range = [](const std::vector<int>& scales) {
    return std::all_of(scales.begin(), scales.end(), [](int k) { return k >= 1 && k <= kOutputScales; });
  };
  if (!in_range(structure_scales) || !in_range(texture_scales)) {
    throw ConfigError("loss scales must lie in 1.." + std::to_string(kOutputScales));
  }
  std::set<int> p(structure_scales.begin(), structure_scales.end());
  for (int k : texture_scales) {
    if (!p.count(k)) throw ConfigError("texture scales must be a subset of structure scales");
  }
}

// ---------------------------------------------------------------------------
// Feature extractor

FeatureExtractorImpl::FeatureExtractorImpl(FeatureExtractorOptions options) : options_(std::move(options)) {
  std::vector<std::vector<int64_t>> layout;
  if (options_.kind == FeatureExtractorKind::kVgg16) {
    layout = {{64, 64}, {128, 128}, {256, 256, 256}};
    mean_ = torch::tensor({0.485, 0.456, 0.406}, torch::kFloat).view({1, 3, 1, 1});
    std_ = torch::tensor({0.229, 0.224, 0.225}, torch::kFloat).view({1, 3, 1, 1});
  } else {
    layout = {{options_.widths[0]}, {options_.widths[1]}, {options_.widths[2]}};
    mean_ = torch::zeros({1, 3, 1, 1});
    std_ = torch::ones({1, 3, 1, 1});
  }
  register_buffer("mean", mean_);
  register_buffer("std", std_);

  auto gen = at::make_generator<at::CPUGeneratorImpl>(options_.seed);
  int64_t in = 3;
  for (size_t b = 0; b < layout.size(); ++b) {
    nn::Sequential block;
    for (size_t i = 0; i < layout[b].size(); ++i) {
      const int64_t out = layout[b][i];
      nn::Conv2d conv(nn::Conv2dOptions(in, out, 3).padding(1));
      {
        torch::NoGradGuard no_grad;
        const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
        conv->weight.copy_(torch::randn(conv->weight.sizes(), gen) * std);
        conv->bias.zero_();
      }
      block->push_back("conv" + std::to_string(i + 1), conv);
      block->push_back("relu" + std::to_string(i + 1), nn::ReLU());
      in = out;
    }
    block->push_back("pool", nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
    blocks_.push_back(register_module("block" + std::to_string(b + 1), block));
  }

  if (options_.kind == FeatureExtractorKind::kVgg16) {
    if (options_.weights_path.empty()) {
      throw ConfigError("the vgg16 feature extractor needs feature_extractor_weights");
    }
    try {
      torch::serialize::InputArchive archive;
      archive.load_from(options_.weights_path);
      torch::NoGradGuard no_grad;
      for (auto& item : named_parameters()) {
        torch::Tensor value;
        archive.read(item.key(), value);
        item.value().copy_(value);
      }
    } catch (const c10::Error& e) {
      throw ConfigError("cannot load feature extractor weights from " + options_.weights_path + ": " +
                        e.what_without_backtrace());
    }
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

std::vector<torch::Tensor> FeatureExtractorImpl::forward(const torch::Tensor& images) {
  CANVASINFILL_EXPECT(images.dim() == 4 && images.size(1) == 3, "feature extractor expects N×3×H×W");
  CANVASINFILL_EXPECT(images.size(2) >= 8 && images.size(3) >= 8,
                      "images must be at least 8×8 for three pooling stages");
  std::vector<torch::Tensor> out;
  torch::Tensor h = (images - mean_) / std_;
  for (auto& block : blocks_) {
    h = block->forward(h);
    out.push_back(h);
  }
  return out;
}

std::vector<int64_t> FeatureExtractorImpl::channels() const {
  if (options_.kind == FeatureExtractorKind::kVgg16) return {64, 128, 256};
  return {options_.widths.begin(), options_.widths.end()};
}

// ---------------------------------------------------------------------------
// Critic

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorOptions options) {
  const int64_t b = options.base_width;
  const std::array<int64_t, 6> widths{3, b, 2 * b, 4 * b, 8 * b, 8 * b};
  nn::Sequential body;
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    body->push_back(nn::Conv2d(nn::Conv2dOptions(widths[i], widths[i + 1], 4).stride(2).padding(1)));
    body->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  }
  body_ = register_module("body", body);
  head_ = register_module("head", nn::Linear(widths.back(), 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
  CANVASINFILL_EXPECT(images.dim() == 4 && images.size(1) == 3, "critic expects N×3×H×W");
  return head_->forward(body_->forward(images).mean({2, 3})).squeeze(1);
}

Critic as_critic(Discriminator& d) {
  return [d](const torch::Tensor& x) mutable { return d->forward(x); };
}

// ---------------------------------------------------------------------------
// Losses

torch::Tensor rec_loss(const torch::Tensor& predicted, const torch::Tensor& target) {
  CANVASINFILL_EXPECT(predicted.sizes() == target.sizes(), "rec_loss operands must have equal shapes");
  return (predicted - target).abs().mean();
}

torch::Tensor perceptual_loss(const torch::Tensor& predicted, const torch::Tensor& target, FeatureExtractor& phi) {
  CANVASINFILL_EXPECT(predicted.sizes() == target.sizes(), "perceptual_loss operands must have equal shapes");
  auto fp = phi->forward(predicted);
  auto ft = phi->forward(target);
  torch::Tensor total = torch::zeros({}, predicted.options());
  for (size_t i = 0; i < fp.size(); ++i) total = total + (ft[i] - fp[i]).abs().mean();
  return total / static_cast<double>(fp.size());
}

torch::Tensor gram(const torch::Tensor& features) {
  if (features.dim() == 3) return gram(features.unsqueeze(0)).squeeze(0);
  CANVASINFILL_EXPECT(features.dim() == 4, "gram expects C×h×w or N×C×h×w");
  auto flat = features.flatten(2);
  return torch::bmm(flat, flat.transpose(1, 2));
}

torch::Tensor style_loss(const torch::Tensor& predicted, const torch::Tensor& target, FeatureExtractor& phi) {
  CANVASINFILL_EXPECT(predicted.sizes() == target.sizes(), "style_loss operands must have equal shapes");
  auto fp = phi->forward(predicted);
  auto ft = phi->forward(target);
  torch::Tensor total = torch::zeros({}, predicted.options());
  for (size_t i = 0; i < fp.size(); ++i) {
    // 1/C² weight on top of the entry-wise mean of the Gram difference.
    const double c = static_cast<double>(fp[i].size(1));
    total = total + (gram(ft[i]) - gram(fp[i])).abs().mean() / (c * c);
  }
  return total / static_cast<double>(fp.size());
}

TvTerms tv_terms(const torch::Tensor& predicted, const torch::Tensor& masks) {
  CANVASINFILL_EXPECT(predicted.dim() == 4 && masks.dim() == 4 && masks.size(1) == 1 &&
                          masks.size(0) == predicted.size(0) && masks.size(2) == predicted.size(2) &&
                          masks.size(3) == predicted.size(3),
                      "tv_loss needs N×C×H×W images with N×1×H×W masks");
  const auto region = dilate1(masks).to(predicted.dtype());
  const double channels = static_cast<double>(predicted.size(1));
  auto reduce = [&](const torch::Tensor& diff, const torch::Tensor& pairs) {
    const double count = pairs.sum().item<double>();
    if (count == 0.0) return torch::zeros({}, predicted.options());
    return (diff.abs() * pairs).sum() / (count * channels);
  };
  const int64_t w = predicted.size(3);
  const int64_t h = predicted.size(2);
  auto h_pairs = region.slice(3, 0, w - 1) * region.slice(3, 1, w);
  auto v_pairs = region.slice(2, 0, h - 1) * region.slice(2, 1, h);
  auto h_diff = predicted.slice(3, 1, w) - predicted.slice(3, 0, w - 1);
  auto v_diff = predicted.slice(2, 1, h) - predicted.slice(2, 0, h - 1);
  return {reduce(h_diff, h_pairs), reduce(v_diff, v_pairs)};
}

torch::Tensor tv_loss(const torch::Tensor& predicted, const torch::Tensor& masks) {
  return tv_terms(predicted, masks).total();
}

torch::Tensor gradient_penalty(const Critic& critic, const torch::Tensor& samples, double lambda) {
  // Needs the input gradient even when called under NoGradGuard.
  torch::AutoGradMode grad_mode(true);
  auto x = samples.detach().requires_grad_(true);
  auto scores = critic(x);
  torch::Tensor grad;
  if (scores.requires_grad()) {
    grad = torch::autograd::grad({scores.sum()}, {x}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                 /*create_graph=*/true, /*allow_unused=*/true)[0];
  }
  if (!grad.defined()) grad = torch::zeros_like(x);
  auto norms = grad.flatten(1).norm(2, 1);
  return lambda * (norms - 1.0).pow(2).mean();
}

torch::Tensor sample_penalty_points(const torch::Tensor& real, const torch::Tensor& fake, std::mt19937_64& rng) {
  CANVASINFILL_EXPECT(real.sizes() == fake.sizes() && real.dim() == 4, "real and fake batches must match");
  const int64_t n = real.size(0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> eps(static_cast<size_t>(n));
  for (auto& e : eps) e = unit(rng);
  auto weights = torch::tensor(eps, torch::TensorOptions().dtype(torch::kDouble))
                     .to(real.scalar_type())
                     .view({n, 1, 1, 1});
  auto mixed = weights * real.detach() + (1.0 - weights) * fake.detach();
  const double scale = std::uniform_real_distribution<double>(0.75, 1.25)(rng);
  const int64_t h = real.size(2);
  const int64_t w = real.size(3);
  const auto sh = std::max<int64_t>(1, std::llround(static_cast<double>(h) * scale));
  const auto sw = std::max<int64_t>(1, std::llround(static_cast<double>(w) * scale));
  return resize_bilinear(resize_bilinear(mixed, sh, sw), h, w);
}

CriticLoss adv_loss_d(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                      std::mt19937_64& rng, double lambda_gp) {
  CriticLoss out;
  out.wasserstein = critic(fake.detach()).mean() - critic(real).mean();
  out.penalty = gradient_penalty(critic, sample_penalty_points(real, fake, rng), lambda_gp);
  out.total = out.wasserstein + out.penalty;
  return out;
}

torch::Tensor adv_loss_g(const Critic& critic, const torch::Tensor& fake) { return -critic(fake).mean(); }

std::array<torch::Tensor, kOutputScales> image_pyramid(const torch::Tensor& images) {
  CANVASINFILL_EXPECT(images.dim() == 4, "image_pyramid expects N×C×H×W");
  CANVASINFILL_EXPECT(images.size(2) % 32 == 0 && images.size(3) % 32 == 0,
                      "image size must be divisible by 32 for six scales");
  std::array<torch::Tensor, kOutputScales> out;
  out[0] = images;
  for (size_t k = 1; k < out.size(); ++k) {
    out[k] = downscale_bilinear(out[k - 1], out[k - 1].size(2) / 2, out[k - 1].size(3) / 2);
  }
  return out;
}

torch::Tensor structure_loss(const MultiScaleOutput& out, const torch::Tensor& target, const LossWeights& w) {
  auto targets = image_pyramid(target);
  torch::Tensor total = torch::zeros({}, target.options());
  if (w.structure_scales.empty()) return total;
  for (int k : w.structure_scales) {
    total = total + w.rec * rec_loss(out.at(k), targets[static_cast<size_t>(k - 1)]);
  }
  return total / static_cast<double>(w.structure_scales.size());
}

TextureTerms texture_terms(const MultiScaleOutput& out, const torch::Tensor& target, const torch::Tensor& masks,
                           const Critic& critic, FeatureExtractor& phi, const LossWeights& w) {
  auto targets = image_pyramid(target);
  auto mask_levels = mask_pyramid(masks, kOutputScales);
  const auto zero = torch::zeros({}, target.options());
  TextureTerms t{zero, zero, zero, zero, zero};
  if (w.texture_scales.empty()) return t;
  const int64_t h = target.size(2);
  const int64_t wd = target.size(3);
  const double inv = 1.0 / static_cast<double>(w.texture_scales.size());
  for (int k : w.texture_scales) {
    const auto& pred = out.at(k);
    const auto& tgt = targets[static_cast<size_t>(k - 1)];
    auto per = perceptual_loss(pred, tgt, phi);
    auto sty = style_loss(pred, tgt, phi);
    auto tv = tv_loss(pred, mask_levels[static_cast<size_t>(k - 1)].to(pred.dtype()));
    auto adv = adv_loss_g(critic, resize_bilinear(pred, h, wd));
    t.total = t.total + inv * (w.per * per + w.style * sty + w.tv * tv + w.adv * adv);
    t.perceptual = t.perceptual + inv * per;
    t.style = t.style + inv * sty;
    t.tv = t.tv + inv * tv;
    t.adversarial = t.adversarial + inv * adv;
  }
  return t;
}

torch::Tensor texture_loss(const MultiScaleOutput& out, const torch::Tensor& target, const torch::Tensor& masks,
                           const Critic& critic, FeatureExtractor& phi, const LossWeights& w) {
  return texture_terms(out, target, masks, critic, phi, w).total;
}

LossBreakdown total_loss(const MultiScaleOutput& out, const torch::Tensor& target, const torch::Tensor& masks,
                         const Critic& critic, FeatureExtractor& phi, const LossWeights& w) {
  LossBreakdown b;
  b.structure = structure_loss(out, target, w);
  b.texture = texture_terms(out, target, masks, critic, phi, w);
  b.total = b.structure + b.texture.total;
  return b;
}

}  // namespace canvasinfill
