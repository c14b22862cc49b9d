#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace canvasinfill {

// Images are C×H×W (or N×C×H×W for batches) tensors with values in [0, 1].
// Masks are H×W tensors (N×1×H×W for batches) over {0, 1}, 1 marking a hole.

/// Adds a leading batch dimension to a C×H×W tensor; N×C×H×W passes through.
torch::Tensor as_batch(const torch::Tensor& x);

/// Number of times `full` must be halved to reach `target`, or -1 when
/// `target` is not `full / 2^k` for some k ≥ 0.
int halving_steps(int64_t full, int64_t target);

/// Bilinear resize of an N×C×H×W tensor (half-pixel centers).
torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t h, int64_t w);

/// Downscales an N×C×H×W tensor to h×w by repeated 2× bilinear halving.
/// Each halving averages 2×2 blocks exactly. Throws ContractError when the
/// target is not a power-of-two reduction of the input.
torch::Tensor downscale_bilinear(const torch::Tensor& x, int64_t h, int64_t w);

/// Any-covered 2× reduction for batched masks (N×1×H×W).
torch::Tensor max_pool_halve(const torch::Tensor& mask);

/// Converts N×3×H×W RGB to N×1×H×W luma (BT.601 weights).
torch::Tensor to_grayscale(const torch::Tensor& rgb);

}  // namespace canvasinfill
