#include "canvasinfill/tensor_ops.hpp"

#include "canvasinfill/errors.hpp"

namespace F = torch::nn::functional;

namespace canvasinfill {

torch::Tensor as_batch(const torch::Tensor& x) {
  if (x.dim() == 4) return x;
  CANVASINFILL_EXPECT(x.dim() == 3, "expected a C×H×W or N×C×H×W tensor");
  return x.unsqueeze(0);
}

int halving_steps(int64_t full, int64_t target) {
  if (target <= 0 || full <= 0) return -1;
  int steps = 0;
  while (full > target) {
    if (full % 2 != 0) return -1;
    full /= 2;
    ++steps;
  }
  return full == target ? steps : -1;
}

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t h, int64_t w) {
  CANVASINFILL_EXPECT(x.dim() == 4, "resize_bilinear expects N×C×H×W");
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{h, w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor downscale_bilinear(const torch::Tensor& x, int64_t h, int64_t w) {
  CANVASINFILL_EXPECT(x.dim() == 4, "downscale_bilinear expects N×C×H×W");
  const int sh = halving_steps(x.size(2), h);
  const int sw = halving_steps(x.size(3), w);
  CANVASINFILL_EXPECT(sh >= 0 && sw >= 0 && sh == sw,
                      "target size must be the input size divided by a power of two");
  torch::Tensor out = x;
  for (int i = 0; i < sh; ++i) {
    out = resize_bilinear(out, out.size(2) / 2, out.size(3) / 2);
  }
  return out;
}

torch::Tensor max_pool_halve(const torch::Tensor& mask) {
  CANVASINFILL_EXPECT(mask.dim() == 4, "max_pool_halve expects N×1×H×W");
  CANVASINFILL_EXPECT(mask.size(2) % 2 == 0 && mask.size(3) % 2 == 0,
                      "mask size must be even to halve");
  return F::max_pool2d(mask, F::MaxPool2dFuncOptions(2).stride(2));
}

torch::Tensor to_grayscale(const torch::Tensor& rgb) {
  CANVASINFILL_EXPECT(rgb.dim() == 4 && rgb.size(1) == 3, "to_grayscale expects N×3×H×W");
  return 0.299 * rgb.select(1, 0).unsqueeze(1) + 0.587 * rgb.select(1, 1).unsqueeze(1) +
         0.114 * rgb.select(1, 2).unsqueeze(1);
}

}  // namespace canvasinfill
