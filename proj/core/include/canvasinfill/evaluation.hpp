#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "canvasinfill/dataset.hpp"
#include "canvasinfill/losses.hpp"
#include "canvasinfill/mask_engine.hpp"

namespace canvasinfill {

/// Mean absolute error over all pixels and channels.
double l1_error(const torch::Tensor& predicted, const torch::Tensor& target);

/// 10·log10(max²/mse); +∞ when mse is 0.
double psnr_from_mse(double mse, double max_val = 1.0);
/// PSNR of one image or the mean per-image PSNR of an N×C×H×W batch.
double psnr(const torch::Tensor& predicted, const torch::Tensor& target, double max_val = 1.0);

struct SsimOptions {
  int64_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double max_val = 1.0;
};

/// Mean SSIM over valid 11×11 Gaussian windows of the luma channel,
/// averaged over the batch. Throws ContractError for images smaller than
/// the window.
double ssim(const torch::Tensor& predicted, const torch::Tensor& target, const SsimOptions& options = {});

/// Fréchet distance between Gaussian fits of two n×d feature sets (n ≥ 2).
double fid(const torch::Tensor& features_a, const torch::Tensor& features_b);

/// Global-average-pooled features of all three extractor stages, N×ΣC.
torch::Tensor fid_features(FeatureExtractor& extractor, const torch::Tensor& images);

struct MetricRow {
  std::string mask_type;  // "rect" or "irregular"
  double l1_error = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double fid = 0.0;
  int64_t samples = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::map<std::string, std::string> config;

  /// Flat key set: "<mask>.l1_error", "<mask>.psnr" (the string "inf" for
  /// exact reconstructions), "<mask>.ssim", "<mask>.fid", "<mask>.samples",
  /// plus "config.<key>" entries.
  std::string to_json() const;
};

/// Maps N×3×H×W images and N×1×H×W masks to N×3×H×W completions.
using Inpainter = std::function<torch::Tensor(const torch::Tensor& images, const torch::Tensor& masks)>;

struct EvaluationOptions {
  std::vector<MaskKind> kinds{MaskKind::kRectangular, MaskKind::kIrregular};
  MaskSpec mask;     // kind is overridden per row
  uint64_t seed = 0;
  int64_t batch_size = 8;
};

/// Generates masks from a fixed seed for each mask kind, inpaints every
/// image and reports L1, PSNR, SSIM and FID (full images).
MetricReport evaluate(const Inpainter& inpainter, const ImageDataset& dataset, FeatureExtractor& extractor,
                      const EvaluationOptions& options);

}  // namespace canvasinfill
