#include "canvasinfill/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "canvasinfill/errors.hpp"
#include "canvasinfill/image_io.hpp"

namespace fs = std::filesystem;

namespace canvasinfill {

namespace {

uint64_t fnv1a(uint64_t seed, const std::string& text) {
  uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](unsigned char byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  for (char c : text) mix(static_cast<unsigned char>(c));
  return h;
}

}  // namespace

ImageDataset ImageDataset::from_tensors(const std::vector<torch::Tensor>& images) {
  CANVASINFILL_EXPECT(!images.empty(), "dataset needs at least one image");
  ImageDataset ds;
  ds.storage_ = std::make_shared<Storage>();
  ds.image_size_ = images.front().size(1);
  for (const auto& image : images) {
    CANVASINFILL_EXPECT(image.dim() == 3 && image.size(0) == 3 && image.size(1) == ds.image_size_ &&
                            image.size(2) == ds.image_size_,
                        "dataset images must be 3×S×S with a common S");
    ds.indices_.push_back(ds.storage_->entries.size());
    ds.storage_->entries.push_back({"", image.to(torch::kFloat).contiguous()});
  }
  return ds;
}

torch::Tensor ImageDataset::get(size_t i) const {
  CANVASINFILL_EXPECT(i < indices_.size(), "dataset index out of range");
  std::lock_guard<std::mutex> lock(storage_->mutex);
  Entry& entry = storage_->entries[indices_[i]];
  if (!entry.image.defined()) entry.image = read_image(entry.path, image_size_);
  return entry.image;
}

torch::Tensor ImageDataset::batch(const std::vector<size_t>& which) const {
  std::vector<torch::Tensor> images;
  images.reserve(which.size());
  for (size_t i : which) images.push_back(get(i));
  return torch::stack(images);
}

std::string ImageDataset::name(size_t i) const {
  CANVASINFILL_EXPECT(i < indices_.size(), "dataset index out of range");
  const auto& path = storage_->entries[indices_[i]].path;
  return path.empty() ? "#" + std::to_string(indices_[i]) : path;
}

ImageDataset::Split ImageDataset::split(double val_fraction, uint64_t seed) const {
  CANVASINFILL_EXPECT(val_fraction >= 0.0 && val_fraction < 1.0, "validation fraction must lie in [0, 1)");
  std::vector<std::pair<uint64_t, size_t>> keyed;
  for (size_t i = 0; i < size(); ++i) {
    auto key = name(i);
    if (auto slash = key.find_last_of('/'); slash != std::string::npos) key = key.substr(slash + 1);
    keyed.emplace_back(fnv1a(seed, key), i);
  }
  std::sort(keyed.begin(), keyed.end());
  const auto n_val = static_cast<size_t>(std::llround(val_fraction * static_cast<double>(size())));
  Split out{*this, *this};
  out.train.indices_.clear();
  out.val.indices_.clear();
  std::vector<size_t> val_pos;
  std::vector<size_t> train_pos;
  for (size_t r = 0; r < keyed.size(); ++r) (r < n_val ? val_pos : train_pos).push_back(keyed[r].second);
  // Keep the original enumeration order within each part.
  std::sort(val_pos.begin(), val_pos.end());
  std::sort(train_pos.begin(), train_pos.end());
  for (size_t p : train_pos) out.train.indices_.push_back(indices_[p]);
  for (size_t p : val_pos) out.val.indices_.push_back(indices_[p]);
  return out;
}

ImageDataset ingest_directory(const std::string& root, int64_t size) {
  CANVASINFILL_EXPECT(size > 0, "image size must be positive");
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IngestError("dataset directory not found: " + root);
  std::vector<std::string> files;
  for (const auto& item : fs::directory_iterator(root)) {
    if (item.is_regular_file()) files.push_back(item.path().string());
  }
  std::sort(files.begin(), files.end());

  ImageDataset ds;
  ds.storage_ = std::make_shared<ImageDataset::Storage>();
  ds.image_size_ = size;
  for (const auto& path : files) {
    if (!has_image_signature(path)) {
      std::cerr << "warning: skipping undecodable file " << path << "\n";
      ++ds.skipped_;
      continue;
    }
    ds.indices_.push_back(ds.storage_->entries.size());
    ds.storage_->entries.push_back({path, torch::Tensor()});
  }
  if (ds.indices_.empty()) throw IngestError("no decodable images in " + root);
  return ds;
}

ImageDataset::Split ingest_dataset(const std::string& root, int64_t size, double val_fraction, uint64_t seed) {
  return ingest_directory(root, size).split(val_fraction, seed);
}

}  // namespace canvasinfill
