#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <string>

namespace canvasinfill {

// Checkpoints are torch serialization archives: named, shaped tensors
// grouped by prefix ("generator.encoder.stage1.0.weight", ...), nested
// optimizer archives, and a "metadata" string holding a JSON record with
// the format tag, stage, step count, configuration echo and a manifest of
// every stored tensor's shape.

class CheckpointWriter {
 public:
  CheckpointWriter();

  /// Stores every parameter and buffer of `module` as "<prefix>.<name>".
  void put_module(const std::string& prefix, const torch::nn::Module& module);
  void put_tensor(const std::string& name, const torch::Tensor& tensor);
  void put_optimizer(const std::string& name, const torch::optim::Optimizer& optimizer);
  void put_rng(const std::string& name, const std::mt19937_64& rng);
  void put_int(const std::string& name, int64_t value);
  /// Free-form metadata entry (stored in the JSON record).
  void put_meta(const std::string& key, const std::string& value);

  void save(const std::string& path);

 private:
  torch::serialize::OutputArchive archive_;
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::pair<std::string, std::vector<int64_t>>> shapes_;
};

class CheckpointReader {
 public:
  /// Throws std::runtime_error naming the path when the file is missing or
  /// is not a checkpoint.
  explicit CheckpointReader(const std::string& path);

  /// Copies stored values into `module`; names and shapes must match.
  void get_module(const std::string& prefix, torch::nn::Module& module);
  bool has_module(const std::string& prefix, const torch::nn::Module& module);
  torch::Tensor get_tensor(const std::string& name);
  void get_optimizer(const std::string& name, torch::optim::Optimizer& optimizer);
  void get_rng(const std::string& name, std::mt19937_64& rng);
  int64_t get_int(const std::string& name);
  /// Empty string when the key is absent.
  std::string meta(const std::string& key) const;

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  torch::serialize::InputArchive archive_;
  std::string metadata_json_;
};

}  // namespace canvasinfill
