#include "canvasinfill/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "canvasinfill/errors.hpp"
#include "canvasinfill/tensor_ops.hpp"

namespace canvasinfill {

torch::Tensor read_image(const std::string& path, int64_t size) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IngestError("cannot decode image: " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto pixels = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  auto image = pixels.permute({2, 0, 1}).to(torch::kFloat).div(255.0).contiguous();
  if (size > 0) image = resize_bilinear(image.unsqueeze(0), size, size).squeeze(0).clamp(0.0, 1.0);
  return image;
}

void write_image(const std::string& path, const torch::Tensor& image) {
  CANVASINFILL_EXPECT(image.dim() == 3 && image.size(0) == 3, "write_image expects 3×H×W");
  auto bytes = image.detach()
                   .to(torch::kDouble)
                   .clamp(0.0, 1.0)
                   .mul(255.0)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  cv::Mat rgb(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw std::runtime_error("cannot write image: " + path);
}

Mask read_mask(const std::string& path, int64_t size) {
  cv::Mat gray = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw IngestError("cannot decode mask: " + path);
  if (size > 0 && (gray.rows != size || gray.cols != size)) {
    cv::Mat resized;
    cv::resize(gray, resized, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0, cv::INTER_NEAREST);
    gray = resized;
  }
  auto data = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8).gt(127).to(torch::kFloat);
  return Mask::unchecked(data.contiguous());
}

void write_mask(const std::string& path, const Mask& mask) {
  auto bytes = mask.data().mul(255.0).to(torch::kUInt8).contiguous();
  cv::Mat gray(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC1, bytes.data_ptr<uint8_t>());
  if (!cv::imwrite(path, gray)) throw std::runtime_error("cannot write mask: " + path);
}

bool has_image_signature(const std::string& path) {
  try {
    return cv::haveImageReader(path);
  } catch (const cv::Exception&) {
    return false;
  }
}

}  // namespace canvasinfill
