#include "canvasinfill/mask_engine.hpp"

#include <algorithm>
#include <cmath>

#include "canvasinfill/errors.hpp"
#include "canvasinfill/tensor_ops.hpp"

namespace F = torch::nn::functional;

namespace canvasinfill {

namespace {

constexpr double kReferenceSize = 256.0;

void check_size(int64_t h, int64_t w) {
  CANVASINFILL_EXPECT(h >= 8 && w >= 8, "mask size must be at least 8×8");
}

double distance_to_segment(double r, double c, std::pair<double, double> a,
                           std::pair<double, double> b) {
  const double dr = b.first - a.first;
  const double dc = b.second - a.second;
  const double len2 = dr * dr + dc * dc;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((r - a.first) * dr + (c - a.second) * dc) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const double pr = a.first + t * dr - r;
  const double pc = a.second + t * dc - c;
  return std::sqrt(pr * pr + pc * pc);
}

void paint_segment(float* out, int64_t h, int64_t w, std::pair<double, double> a,
                   std::pair<double, double> b, double radius) {
  const auto r0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a.first, b.first) - radius)));
  const auto r1 = std::min<int64_t>(h - 1, static_cast<int64_t>(std::ceil(std::max(a.first, b.first) + radius)));
  const auto c0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a.second, b.second) - radius)));
  const auto c1 = std::min<int64_t>(w - 1, static_cast<int64_t>(std::ceil(std::max(a.second, b.second) + radius)));
  for (int64_t r = r0; r <= r1; ++r) {
    for (int64_t c = c0; c <= c1; ++c) {
      if (distance_to_segment(static_cast<double>(r), static_cast<double>(c), a, b) <= radius) {
        out[r * w + c] = 1.0f;
      }
    }
  }
}

}  // namespace

Mask::Mask(torch::Tensor data) : data_(std::move(data)) {
  CANVASINFILL_EXPECT(data_.dim() == 2, "mask must be a 2-D H×W tensor");
  data_ = data_.to(torch::kFloat).contiguous();
  const bool binary = (data_.eq(0) | data_.eq(1)).all().item<bool>();
  CANVASINFILL_EXPECT(binary, "mask entries must be exactly 0 or 1");
}

Mask Mask::unchecked(torch::Tensor data) {
  Mask m;
  m.data_ = std::move(data);
  return m;
}

Mask Mask::zeros(int64_t h, int64_t w) { return unchecked(torch::zeros({h, w})); }
Mask Mask::ones(int64_t h, int64_t w) { return unchecked(torch::ones({h, w})); }

double Mask::hole_ratio() const { return data_.to(torch::kDouble).mean().item<double>(); }

const char* to_string(MaskKind kind) {
  return kind == MaskKind::kRectangular ? "rect" : "irregular";
}

MaskKind parse_mask_kind(const std::string& text) {
  if (text == "rect" || text == "rectangular") return MaskKind::kRectangular;
  if (text == "irregular") return MaskKind::kIrregular;
  throw ConfigError("unknown mask kind '" + text + "' (expected rect or irregular)");
}

void MaskSpec::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("invalid mask spec: ") + what);
  };
  require(rect_min_frac > 0.0 && rect_min_frac <= rect_max_frac && rect_max_frac <= 1.0,
          "need 0 < rect_min_frac <= rect_max_frac <= 1");
  require(stroke_min >= 0 && stroke_min <= stroke_max, "need 0 <= stroke_min <= stroke_max");
  require(brush_min >= 1.0 && brush_min <= brush_max, "need 1 <= brush_min <= brush_max");
  require(vertex_min >= 1 && vertex_min <= vertex_max, "need 1 <= vertex_min <= vertex_max");
  require(max_angle_step >= 0.0, "max_angle_step must be non-negative");
  require(segment_min_frac >= 0.0 && segment_min_frac <= segment_max_frac,
          "need 0 <= segment_min_frac <= segment_max_frac");
}

Mask rasterize_strokes(const std::vector<Stroke>& strokes, int64_t h, int64_t w) {
  auto data = torch::zeros({h, w});
  float* out = data.data_ptr<float>();
  for (const auto& stroke : strokes) {
    const double radius = stroke.width / 2.0;
    const auto& v = stroke.vertices;
    if (v.empty()) continue;
    if (v.size() == 1) {
      paint_segment(out, h, w, v[0], v[0], radius);
      continue;
    }
    for (size_t i = 0; i + 1 < v.size(); ++i) paint_segment(out, h, w, v[i], v[i + 1], radius);
  }
  return Mask::unchecked(data);
}

Mask gen_rectangular(const MaskSpec& spec, int64_t h, int64_t w) {
  std::mt19937_64 rng(spec.seed);
  return gen_rectangular(spec, h, w, rng);
}

Mask gen_rectangular(const MaskSpec& spec, int64_t h, int64_t w, std::mt19937_64& rng) {
  check_size(h, w);
  CANVASINFILL_EXPECT(spec.kind == MaskKind::kRectangular, "gen_rectangular needs a rect spec");
  spec.validate();
  auto side = [&](int64_t dim) {
    std::uniform_real_distribution<double> frac(spec.rect_min_frac, spec.rect_max_frac);
    const auto len = static_cast<int64_t>(std::llround(frac(rng) * static_cast<double>(dim)));
    return std::clamp<int64_t>(len, 1, dim);
  };
  const int64_t rh = side(h);
  const int64_t rw = side(w);
  const int64_t top = std::uniform_int_distribution<int64_t>(0, h - rh)(rng);
  const int64_t left = std::uniform_int_distribution<int64_t>(0, w - rw)(rng);
  auto data = torch::zeros({h, w});
  data.slice(0, top, top + rh).slice(1, left, left + rw).fill_(1.0f);
  return Mask::unchecked(data);
}

Mask gen_irregular(const MaskSpec& spec, int64_t h, int64_t w) {
  std::mt19937_64 rng(spec.seed);
  return gen_irregular(spec, h, w, rng);
}

Mask gen_irregular(const MaskSpec& spec, int64_t h, int64_t w, std::mt19937_64& rng) {
  check_size(h, w);
  CANVASINFILL_EXPECT(spec.kind == MaskKind::kIrregular, "gen_irregular needs an irregular spec");
  spec.validate();

  const double dim = static_cast<double>(std::min(h, w));
  const double brush_scale = spec.scale_brush_to_image ? dim / kReferenceSize : 1.0;
  using Real = std::uniform_real_distribution<double>;
  using Int = std::uniform_int_distribution<int>;

  const int n_strokes = Int(spec.stroke_min, spec.stroke_max)(rng);
  std::vector<Stroke> strokes;
  strokes.reserve(static_cast<size_t>(n_strokes));
  for (int s = 0; s < n_strokes; ++s) {
    Stroke stroke;
    stroke.width = std::max(1.0, Real(spec.brush_min, spec.brush_max)(rng) * brush_scale);
    const int n_vertices = Int(spec.vertex_min, spec.vertex_max)(rng);
    double r = Real(0.0, static_cast<double>(h - 1))(rng);
    double c = Real(0.0, static_cast<double>(w - 1))(rng);
    double angle = Real(0.0, 2.0 * std::numbers::pi)(rng);
    stroke.vertices.emplace_back(r, c);
    for (int v = 1; v < n_vertices; ++v) {
      angle += Real(-spec.max_angle_step, spec.max_angle_step)(rng);
      const double len = Real(spec.segment_min_frac, spec.segment_max_frac)(rng) * dim;
      r = std::clamp(r + len * std::sin(angle), 0.0, static_cast<double>(h - 1));
      c = std::clamp(c + len * std::cos(angle), 0.0, static_cast<double>(w - 1));
      stroke.vertices.emplace_back(r, c);
    }
    strokes.push_back(std::move(stroke));
  }
  return rasterize_strokes(strokes, h, w);
}

Mask generate_mask(const MaskSpec& spec, int64_t h, int64_t w, std::mt19937_64& rng) {
  return spec.kind == MaskKind::kRectangular ? gen_rectangular(spec, h, w, rng)
                                             : gen_irregular(spec, h, w, rng);
}

torch::Tensor MaskedImage::network_input() const {
  return torch::cat({pixels, mask.data().unsqueeze(0).to(pixels.dtype())}, 0);
}

MaskedImage apply_mask(const torch::Tensor& image, const Mask& mask) {
  CANVASINFILL_EXPECT(image.dim() == 3 && image.size(0) == 3, "image must be 3×H×W");
  CANVASINFILL_EXPECT(image.size(1) == mask.height() && image.size(2) == mask.width(),
                      "image and mask shapes disagree");
  auto keep = (1.0 - mask.data()).to(image.dtype()).unsqueeze(0);
  return MaskedImage{image * keep, mask};
}

torch::Tensor masked_input(const torch::Tensor& images, const torch::Tensor& masks) {
  CANVASINFILL_EXPECT(images.dim() == 4 && images.size(1) == 3, "images must be N×3×H×W");
  CANVASINFILL_EXPECT(masks.dim() == 4 && masks.size(1) == 1 && masks.size(0) == images.size(0) &&
                          masks.size(2) == images.size(2) && masks.size(3) == images.size(3),
                      "masks must be N×1×H×W matching the images");
  auto m = masks.to(images.dtype());
  return torch::cat({images * (1.0 - m), m}, 1);
}

torch::Tensor dilate1(const torch::Tensor& masks) {
  CANVASINFILL_EXPECT(masks.dim() == 4, "dilate1 expects N×1×H×W");
  return F::max_pool2d(masks, F::MaxPool2dFuncOptions(3).stride(1).padding(1));
}

Mask dilate1(const Mask& mask) {
  return Mask::unchecked(dilate1(mask.as_batch()).squeeze(0).squeeze(0));
}

std::vector<torch::Tensor> mask_pyramid(const torch::Tensor& masks, int levels) {
  CANVASINFILL_EXPECT(levels >= 1, "mask_pyramid needs at least one level");
  CANVASINFILL_EXPECT(masks.dim() == 4, "mask_pyramid expects N×1×H×W");
  const int64_t div = int64_t{1} << (levels - 1);
  CANVASINFILL_EXPECT(masks.size(2) % div == 0 && masks.size(3) % div == 0,
                      "mask size must be divisible by 2^(levels-1)");
  std::vector<torch::Tensor> out{masks};
  for (int k = 1; k < levels; ++k) out.push_back(max_pool_halve(out.back()));
  return out;
}

std::vector<Mask> mask_pyramid(const Mask& mask, int levels) {
  std::vector<Mask> out;
  for (auto& level : mask_pyramid(mask.as_batch(), levels)) {
    out.push_back(Mask::unchecked(level.squeeze(0).squeeze(0)));
  }
  return out;
}

}  // namespace canvasinfill
