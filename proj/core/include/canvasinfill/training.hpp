#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "canvasinfill/contrastive.hpp"
#include "canvasinfill/dataset.hpp"
#include "canvasinfill/generator.hpp"
#include "canvasinfill/losses.hpp"
#include "canvasinfill/train_config.hpp"

namespace canvasinfill {

/// One machine-parseable log line: "stage=<s> step=<n> key=value ...".
/// Values are printed in shortest round-trip form.
struct StepRecord {
  std::string stage;
  int64_t step = 0;
  std::vector<std::pair<std::string, double>> values;

  std::string to_line() const;
  static StepRecord parse(const std::string& line);
  /// Value for `key`; throws std::out_of_range when absent.
  double at(const std::string& key) const;
};

/// Append-only record list, optionally mirrored to a stream.
class RunLog {
 public:
  explicit RunLog(std::ostream* sink = nullptr) : sink_(sink) {}
  void append(StepRecord record);
  const std::vector<StepRecord>& records() const { return records_; }
  std::vector<StepRecord> stage(const std::string& name) const;

 private:
  std::ostream* sink_;
  std::vector<StepRecord> records_;
};

/// Dataset positions for `step`: a fresh permutation per epoch derived from
/// (seed, epoch), so the sequence depends only on the step counter.
std::vector<size_t> batch_indices(uint64_t seed, int64_t step, int64_t batch, size_t dataset_size);

/// N×1×H×W training masks following cfg.mask_mode.
torch::Tensor sample_training_masks(const TrainConfig& cfg, int64_t n, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Stage 1

PretrainState create_pretrain_state(const TrainConfig& cfg);
void save_pretrain(const std::string& path, const PretrainState& state, const TrainConfig& cfg);
PretrainState load_pretrain(const std::string& path, const TrainConfig& cfg);

struct PretrainResult {
  std::vector<double> losses;
  std::vector<double> accuracies;
  /// Mean positive-retrieval accuracy over the last 10% of steps.
  double final_accuracy = 0.0;
  std::string checkpoint;
};

/// Runs pretrain_step until cfg.pretrain_steps. Writes a checkpoint when
/// `checkpoint_path` is non-empty. Throws IngestError for an empty dataset.
PretrainResult run_pretrain(const TrainConfig& cfg, const ImageDataset& dataset, RunLog& log,
                            const std::string& checkpoint_path = "");

// ---------------------------------------------------------------------------
// Stage 2

struct JointState {
  Generator generator{nullptr};
  Discriminator critic{nullptr};
  FeatureExtractor features{nullptr};
  std::unique_ptr<torch::optim::Adam> generator_optimizer;
  std::unique_ptr<torch::optim::Adam> critic_optimizer;
  std::mt19937_64 rng;
  int64_t step = 0;

  /// Seeded initialization; the encoder is random until init_from_pretrain.
  static JointState create(const TrainConfig& cfg);
};

/// Copies the pretrained query encoder into the generator's encoder.
void init_from_pretrain(JointState& state, const std::string& checkpoint_path);

struct JointStepResult {
  double total = 0.0;
  double structure = 0.0;
  double texture = 0.0;
  double perceptual = 0.0;
  double style = 0.0;
  double tv = 0.0;
  double adv_g = 0.0;
  double critic = 0.0;
  double wasserstein = 0.0;
  double gp = 0.0;

  StepRecord record(int64_t step) const;
};

/// One critic update followed by one generator update on N×3×H×W images.
JointStepResult joint_step(JointState& state, const torch::Tensor& images, const TrainConfig& cfg);

void save_joint(const std::string& path, const JointState& state, const TrainConfig& cfg);
/// Restores a joint checkpoint; the configuration is read from the archive.
JointState load_joint(const std::string& path, TrainConfig* cfg_out = nullptr);
/// Loads only the generator (for inference and evaluation).
Generator load_generator(const std::string& path, TrainConfig* cfg_out = nullptr);

/// Mean |Ŷ₁ − Y| over hole pixels of the dataset with masks drawn from
/// `mask_seed` (identical masks across calls).
double masked_region_l1(Generator& generator, const ImageDataset& dataset, const TrainConfig& cfg,
                        uint64_t mask_seed);

struct JointRunOptions {
  std::optional<std::string> init_checkpoint;    // pretraining archive
  std::optional<std::string> resume_checkpoint;  // joint archive
  std::string checkpoint_path;                   // final archive ("" skips)
  std::string snapshot_dir;                      // validation grids ("" skips)
};

struct JointResult {
  std::string checkpoint;
  int64_t steps = 0;
};

/// Trains until cfg.joint_steps. Throws ConfigError when
/// cfg.use_contrastive_init is set without an init checkpoint.
JointResult run_joint(const TrainConfig& cfg, const ImageDataset& train, const ImageDataset& val, RunLog& log,
                      const JointRunOptions& options);
/// Continues training on an existing state up to cfg.joint_steps.
void train_joint(JointState& state, const TrainConfig& cfg, const ImageDataset& train, const ImageDataset& val,
                 RunLog& log, const JointRunOptions& options = {});

}  // namespace canvasinfill
