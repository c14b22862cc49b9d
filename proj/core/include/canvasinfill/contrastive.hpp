#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "canvasinfill/mask_engine.hpp"

namespace canvasinfill {

inline constexpr int kEncoderStages = 6;

struct EncoderOptions {
  int64_t in_channels = 4;
  std::array<int64_t, kEncoderStages> widths{32, 64, 128, 256, 256, 256};
  int64_t norm_groups = 8;
  int64_t repr_dim = 128;
  int64_t image_size = 64;
};

/// Six stride-2 conv stages (conv → group norm → ReLU) with a pooled linear
/// projection head. Query and key encoders are two instances of this module.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(EncoderOptions options = {});

  /// Feature map of every stage, finest first.
  std::vector<torch::Tensor> features(const torch::Tensor& x);
  /// Global average pool of the last stage followed by the linear head.
  torch::Tensor project(const torch::Tensor& last_stage);

  const EncoderOptions& options() const { return options_; }

 private:
  EncoderOptions options_;
  std::vector<torch::nn::Sequential> stages_;
  torch::nn::Linear projection_{nullptr};
};
TORCH_MODULE(Encoder);

/// L2-normalizes each row; throws DegenerateRepresentationError when a row
/// has norm below 1e-12.
torch::Tensor l2_normalize_rows(const torch::Tensor& x);

/// Unit-length representation of one masked image (d-vector).
torch::Tensor encode(Encoder& encoder, const MaskedImage& x);
/// Batched form over N×4×H×W network inputs; returns N×d unit rows.
torch::Tensor encode_batch(Encoder& encoder, const torch::Tensor& inputs);

/// Fixed-capacity FIFO of key representations backed by a ring buffer.
class KeyQueue {
 public:
  KeyQueue() = default;
  KeyQueue(int64_t capacity, int64_t dim, torch::Dtype dtype = torch::kFloat);

  /// Appends B×d keys (detached copies), evicting the oldest surplus.
  void enqueue(const torch::Tensor& keys);
  /// Current contents, oldest first (length×d).
  torch::Tensor keys() const;

  int64_t size() const { return size_; }
  int64_t capacity() const { return capacity_; }
  int64_t dim() const { return dim_; }
  bool empty() const { return size_ == 0; }
  int64_t total_enqueued() const { return total_enqueued_; }
  int64_t total_evicted() const { return total_evicted_; }

  /// Rebuilds a queue from ordered contents (used by checkpoint loading).
  static KeyQueue from_keys(int64_t capacity, const torch::Tensor& ordered, int64_t total_enqueued);

 private:
  torch::Tensor storage_;
  int64_t capacity_ = 0;
  int64_t dim_ = 0;
  int64_t head_ = 0;
  int64_t size_ = 0;
  int64_t total_enqueued_ = 0;
  int64_t total_evicted_ = 0;
};

/// Temperature-scaled softmax cross-entropy that classifies the positive key
/// against every queued key. Returns a scalar tensor (differentiable in z_q).
torch::Tensor info_nce(const torch::Tensor& z_q, const torch::Tensor& z_pos, const KeyQueue& queue,
                       double tau);

struct InfoNceBatch {
  torch::Tensor loss;  // mean over the batch
  double accuracy;     // fraction of rows whose positive logit is the maximum
};

/// Batched InfoNCE: z_q, z_pos are B×d, negatives L×d (L ≥ 1).
InfoNceBatch info_nce_batch(const torch::Tensor& z_q, const torch::Tensor& z_pos,
                            const torch::Tensor& negatives, double tau);

/// key ← m·key + (1−m)·query for every parameter; query is untouched.
void momentum_update(const Encoder& query, Encoder& key, double m);

/// Two independently masked views of the same image.
std::pair<MaskedImage, MaskedImage> make_positive_pair(const torch::Tensor& image, const MaskSpec& spec,
                                                        std::mt19937_64& rng);

struct ContrastiveConfig {
  double tau = 0.07;
  double momentum = 0.9;
  int64_t queue_capacity = 1024;
  int64_t repr_dim = 128;
  double lr = 0.015;
  double sgd_momentum = 0.9;

  void validate() const;
};

/// Mutable state of the Siamese pretraining loop. Single writer.
struct PretrainState {
  Encoder query{nullptr};
  Encoder key{nullptr};
  KeyQueue queue;
  std::unique_ptr<torch::optim::SGD> optimizer;
  std::mt19937_64 rng;
  int64_t step = 0;

  /// Fresh state: query initialized from `init_seed`, key an exact copy.
  static PretrainState create(const EncoderOptions& encoder, const ContrastiveConfig& config,
                              uint64_t init_seed, uint64_t data_seed);
};

struct PretrainStepResult {
  double loss;
  double accuracy;
};

/// One optimization step over a batch of N×3×H×W images.
PretrainStepResult pretrain_step(PretrainState& state, const torch::Tensor& images, const MaskSpec& masks,
                                 const ContrastiveConfig& config, bool hflip);

/// Deep copy of parameter values from `src` into `dst` (names and shapes must match).
void copy_parameters(const torch::nn::Module& src, torch::nn::Module& dst);

}  // namespace canvasinfill
