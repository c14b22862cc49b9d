#include "canvasinfill/evaluation.hpp"

#include <cmath>
#include <random>

#include "canvasinfill/errors.hpp"
#include "canvasinfill/tensor_ops.hpp"
#include "json.hpp"

namespace F = torch::nn::functional;

namespace canvasinfill {

namespace {

torch::Tensor to_double_batch(const torch::Tensor& x) { return as_batch(x).to(torch::kDouble); }

torch::Tensor gaussian_window(const SsimOptions& o) {
  auto coords = torch::arange(o.window, torch::kDouble) - static_cast<double>(o.window - 1) / 2.0;
  auto g = torch::exp(-(coords * coords) / (2.0 * o.sigma * o.sigma));
  g = g / g.sum();
  return torch::outer(g, g).view({1, 1, o.window, o.window});
}

/// Square root of a symmetric PSD matrix; small negative eigenvalues from
/// round-off are clipped to zero.
torch::Tensor sqrt_psd(const torch::Tensor& m) {
  auto [values, vectors] = torch::linalg_eigh(m);
  const double scale = std::max(1.0, values.abs().max().item<double>());
  if (values.min().item<double>() < -1e-6 * scale) {
    throw ContractError("covariance product is not positive semidefinite");
  }
  auto root = values.clamp_min(0.0).sqrt();
  return torch::matmul(vectors * root.unsqueeze(0), vectors.t());
}

}  // namespace

double l1_error(const torch::Tensor& predicted, const torch::Tensor& target) {
  CANVASINFILL_EXPECT(predicted.sizes() == target.sizes(), "l1_error operands must have equal shapes");
  return (predicted.to(torch::kDouble) - target.to(torch::kDouble)).abs().mean().item<double>();
}

double psnr_from_mse(double mse, double max_val) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double psnr(const torch::Tensor& predicted, const torch::Tensor& target, double max_val) {
  CANVASINFILL_EXPECT(predicted.sizes() == target.sizes(), "psnr operands must have equal shapes");
  auto p = to_double_batch(predicted);
  auto t = to_double_batch(target);
  auto mse = (p - t).pow(2).flatten(1).mean(1);
  double total = 0.0;
  for (int64_t i = 0; i < mse.size(0); ++i) total += psnr_from_mse(mse[i].item<double>(), max_val);
  return total / static_cast<double>(mse.size(0));
}

double ssim(const torch::Tensor& predicted, const torch::Tensor& target, const SsimOptions& o) {
  CANVASINFILL_EXPECT(predicted.sizes() == target.sizes(), "ssim operands must have equal shapes");
  auto p = to_double_batch(predicted);
  auto t = to_double_batch(target);
  CANVASINFILL_EXPECT(p.size(2) >= o.window && p.size(3) >= o.window, "image smaller than the SSIM window");
  if (p.size(1) == 3) {
    p = to_grayscale(p);
    t = to_grayscale(t);
  }
  CANVASINFILL_EXPECT(p.size(1) == 1, "ssim expects RGB or single-channel images");
  const auto window = gaussian_window(o);
  auto filter = [&](const torch::Tensor& x) { return F::conv2d(x, window); };
  const double c1 = std::pow(o.k1 * o.max_val, 2);
  const double c2 = std::pow(o.k2 * o.max_val, 2);
  auto mu_p = filter(p);
  auto mu_t = filter(t);
  auto var_p = filter(p * p) - mu_p * mu_p;
  auto var_t = filter(t * t) - mu_t * mu_t;
  auto cov = filter(p * t) - mu_p * mu_t;
  auto map = ((2.0 * mu_p * mu_t + c1) * (2.0 * cov + c2)) /
             ((mu_p * mu_p + mu_t * mu_t + c1) * (var_p + var_t + c2));
  return map.flatten(1).mean(1).mean().item<double>();
}

double fid(const torch::Tensor& features_a, const torch::Tensor& features_b) {
  CANVASINFILL_EXPECT(features_a.dim() == 2 && features_b.dim() == 2 && features_a.size(1) == features_b.size(1),
                      "feature sets must be n×d with a shared d");
  CANVASINFILL_EXPECT(features_a.size(0) >= 2 && features_b.size(0) >= 2, "each feature set needs two samples");
  auto a = features_a.to(torch::kDouble);
  auto b = features_b.to(torch::kDouble);
  CANVASINFILL_EXPECT(torch::isfinite(a).all().item<bool>() && torch::isfinite(b).all().item<bool>(),
                      "features must be finite");
  auto mu_a = a.mean(0);
  auto mu_b = b.mean(0);
  auto cov = [](const torch::Tensor& x, const torch::Tensor& mu) {
    auto centered = x - mu;
    return torch::matmul(centered.t(), centered) / static_cast<double>(x.size(0) - 1);
  };
  auto cov_a = cov(a, mu_a);
  auto cov_b = cov(b, mu_b);
  auto root_a = sqrt_psd(cov_a);
  auto inner = torch::matmul(torch::matmul(root_a, cov_b), root_a);
  inner = 0.5 * (inner + inner.t());
  auto [values, vectors] = torch::linalg_eigh(inner);
  const double trace_root = values.clamp_min(0.0).sqrt().sum().item<double>();
  const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
  return mean_term + cov_a.trace().item<double>() + cov_b.trace().item<double>() - 2.0 * trace_root;
}

torch::Tensor fid_features(FeatureExtractor& extractor, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> pooled;
  for (auto& map : extractor->forward(as_batch(images))) pooled.push_back(map.mean({2, 3}));
  return torch::cat(pooled, 1);
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& row : rows) {
    const auto& p = row.mask_type;
    j[p + ".l1_error"] = row.l1_error;
    if (std::isinf(row.psnr)) {
      j[p + ".psnr"] = "inf";
    } else {
      j[p + ".psnr"] = row.psnr;
    }
    j[p + ".ssim"] = row.ssim;
    j[p + ".fid"] = row.fid;
    j[p + ".samples"] = row.samples;
  }
  for (const auto& [key, value] : config) j["config." + key] = value;
  return j.dump(2);
}

MetricReport evaluate(const Inpainter& inpainter, const ImageDataset& dataset, FeatureExtractor& extractor,
                      const EvaluationOptions& options) {
  CANVASINFILL_EXPECT(!dataset.empty(), "evaluation dataset is empty");
  CANVASINFILL_EXPECT(options.batch_size >= 1, "batch size must be positive");
  torch::NoGradGuard no_grad;
  MetricReport report;
  const int64_t size = dataset.image_size();
  for (MaskKind kind : options.kinds) {
    MaskSpec spec = options.mask;
    spec.kind = kind;
    std::mt19937_64 rng(options.seed);
    std::vector<torch::Tensor> outputs;
    std::vector<torch::Tensor> targets;
    for (size_t start = 0; start < dataset.size(); start += static_cast<size_t>(options.batch_size)) {
      const size_t end = std::min(dataset.size(), start + static_cast<size_t>(options.batch_size));
      std::vector<size_t> which;
      std::vector<torch::Tensor> masks;
      for (size_t i = start; i < end; ++i) {
        which.push_back(i);
        masks.push_back(generate_mask(spec, size, size, rng).data().unsqueeze(0));
      }
      auto images = dataset.batch(which);
      outputs.push_back(inpainter(images, torch::stack(masks)).to(torch::kFloat));
      targets.push_back(images);
    }
    auto predicted = torch::cat(outputs);
    auto target = torch::cat(targets);
    MetricRow row;
    row.mask_type = to_string(kind);
    row.l1_error = l1_error(predicted, target);
    row.psnr = psnr(predicted, target);
    row.ssim = ssim(predicted, target);
    row.fid = predicted.size(0) >= 2
                  ? fid(fid_features(extractor, target), fid_features(extractor, predicted))
                  : std::numeric_limits<double>::quiet_NaN();
    row.samples = predicted.size(0);
    report.rows.push_back(row);
  }
  report.config["seed"] = std::to_string(options.seed);
  return report;
}

}  // namespace canvasinfill
