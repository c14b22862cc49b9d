#pragma once

#include <cstdint>
#include <string>

#include "canvasinfill/contrastive.hpp"
#include "canvasinfill/losses.hpp"
#include "canvasinfill/mask_engine.hpp"

namespace canvasinfill {

enum class MaskMode { kRect, kIrregular, kBoth };

struct TrainConfig {
  int64_t image_size = 64;
  uint64_t seed = 1;
  std::string data_dir;
  std::string out_dir = "runs";
  double val_fraction = 0.0;
  bool hflip = true;

  // stage 1: contrastive pretraining of the query encoder
  int64_t pretrain_steps = 1000;
  int64_t pretrain_batch = 16;
  ContrastiveConfig contrastive;

  // stage 2: joint encoder/decoder/fusion training against the critic
  int64_t joint_steps = 2000;
  int64_t joint_batch = 8;
  double joint_lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  bool use_contrastive_init = true;
  bool use_daf = true;
  int64_t daf_reduction = 16;
  int64_t daf_hidden = 16;
  int64_t disc_base_width = 64;
  LossWeights loss;

  MaskMode mask_mode = MaskMode::kIrregular;
  MaskSpec mask;
  FeatureExtractorOptions features;

  int64_t log_every = 1;
  int64_t snapshot_every = 0;
  int64_t checkpoint_every = 0;

  /// Throws ConfigError naming the offending key.
  void validate() const;

  EncoderOptions encoder_options() const;
  GeneratorOptions generator_options() const;
};

}  // namespace canvasinfill
