#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace canvasinfill {

/// Ordered collection of square RGB images. Images backed by files are
/// decoded on first access and cached; copies and splits share the cache.
class ImageDataset {
 public:
  ImageDataset() = default;

  /// Builds an in-memory dataset from 3×S×S tensors.
  static ImageDataset from_tensors(const std::vector<torch::Tensor>& images);

  size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  int64_t image_size() const { return image_size_; }

  /// 3×S×S float image in [0, 1]. Throws IngestError naming the file when
  /// decoding fails.
  torch::Tensor get(size_t i) const;
  /// Stacks the selected images into an N×3×S×S batch.
  torch::Tensor batch(const std::vector<size_t>& which) const;
  /// Identifier of image i: its path, or "#<index>" for in-memory images.
  std::string name(size_t i) const;

  /// Files skipped at ingestion because no decoder recognized them.
  size_t skipped() const { return skipped_; }

  /// Deterministic split: items are ordered by a 64-bit FNV-1a hash of
  /// (seed, name) and the first round(fraction·n) become validation.
  struct Split;
  Split split(double val_fraction, uint64_t seed) const;

 private:
  friend ImageDataset ingest_directory(const std::string&, int64_t);

  struct Entry {
    std::string path;
    torch::Tensor image;
  };
  struct Storage {
    std::vector<Entry> entries;
    std::mutex mutex;
  };

  std::shared_ptr<Storage> storage_;
  std::vector<size_t> indices_;
  int64_t image_size_ = 0;
  size_t skipped_ = 0;
};

struct ImageDataset::Split {
  ImageDataset train;
  ImageDataset val;
};

/// Enumerates decodable images under `root` (sorted by path, non-recursive),
/// to be resized to size×size on access. Throws IngestError when the
/// directory is missing or holds no decodable image.
ImageDataset ingest_directory(const std::string& root, int64_t size);

/// ingest_directory followed by split().
ImageDataset::Split ingest_dataset(const std::string& root, int64_t size, double val_fraction, uint64_t seed);

}  // namespace canvasinfill
