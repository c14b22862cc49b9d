#include "canvasinfill/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "canvasinfill/checkpoint.hpp"
#include "canvasinfill/config.hpp"
#include "canvasinfill/errors.hpp"
#include "canvasinfill/evaluation.hpp"
#include "canvasinfill/image_io.hpp"

namespace canvasinfill {

namespace {

constexpr uint64_t kDataSeedSalt = 0x9E3779B97F4A7C15ULL;

torch::Tensor random_hflip(const torch::Tensor& images, std::mt19937_64& rng) {
  std::bernoulli_distribution flip(0.5);
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<size_t>(images.size(0)));
  for (int64_t i = 0; i < images.size(0); ++i) {
    out.push_back(flip(rng) ? images[i].flip({2}) : images[i]);
  }
  return torch::stack(out);
}

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config validation

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(image_size >= 32 && image_size % 32 == 0, "image_size must be a positive multiple of 32");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must lie in [0, 1)");
  require(pretrain_steps >= 1 && joint_steps >= 1, "step budgets must be at least 1");
  require(pretrain_batch >= 1 && joint_batch >= 1, "batch sizes must be at least 1");
  require(pretrain_batch <= contrastive.queue_capacity, "pretrain_batch must not exceed queue_capacity");
  require(joint_lr > 0.0, "joint_lr must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
          "Adam betas must lie in [0, 1)");
  require(daf_reduction >= 1 && daf_hidden >= 1 && disc_base_width >= 1, "layer widths must be positive");
  require(log_every >= 1, "log_every must be at least 1");
  require(snapshot_every >= 0 && checkpoint_every >= 0, "snapshot/checkpoint intervals must be non-negative");
  contrastive.validate();
  loss.validate();
  mask.validate();
}

EncoderOptions TrainConfig::encoder_options() const {
  EncoderOptions o;
  o.image_size = image_size;
  o.repr_dim = contrastive.repr_dim;
  return o;
}

GeneratorOptions TrainConfig::generator_options() const {
  GeneratorOptions o;
  o.encoder = encoder_options();
  o.use_daf = use_daf;
  o.daf_reduction = daf_reduction;
  o.daf_hidden = daf_hidden;
  return o;
}

// ---------------------------------------------------------------------------
// Logging

std::string StepRecord::to_line() const {
  std::string line = "stage=" + stage + " step=" + std::to_string(step);
  for (const auto& [key, value] : values) line += " " + key + "=" + format_double(value);
  return line;
}

StepRecord StepRecord::parse(const std::string& line) {
  StepRecord r;
  std::istringstream in(line);
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("malformed log token: " + token);
    const auto key = token.substr(0, eq);
    const auto value = token.substr(eq + 1);
    if (key == "stage") {
      r.stage = value;
    } else if (key == "step") {
      r.step = std::stoll(value);
    } else {
      r.values.emplace_back(key, std::stod(value));
    }
  }
  return r;
}

double StepRecord::at(const std::string& key) const {
  for (const auto& [k, v] : values) {
    if (k == key) return v;
  }
  throw std::out_of_range("log record has no value " + key);
}

void RunLog::append(StepRecord record) {
  if (sink_) *sink_ << record.to_line() << std::endl;
  records_.push_back(std::move(record));
}

std::vector<StepRecord> RunLog::stage(const std::string& name) const {
  std::vector<StepRecord> out;
  std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
               [&](const StepRecord& r) { return r.stage == name; });
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<size_t> batch_indices(uint64_t seed, int64_t step, int64_t batch, size_t dataset_size) {
  CANVASINFILL_EXPECT(dataset_size > 0 && batch > 0, "batch_indices needs a non-empty dataset");
  const auto n = static_cast<int64_t>(dataset_size);
  std::vector<size_t> out;
  out.reserve(static_cast<size_t>(batch));
  int64_t cached_epoch = -1;
  std::vector<size_t> perm(dataset_size);
  for (int64_t j = 0; j < batch; ++j) {
    const int64_t position = step * batch + j;
    const int64_t epoch = position / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), size_t{0});
      std::mt19937_64 rng(seed ^ (static_cast<uint64_t>(epoch) * kDataSeedSalt));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<size_t>(position % n)]);
  }
  return out;
}

torch::Tensor sample_training_masks(const TrainConfig& cfg, int64_t n, std::mt19937_64& rng) {
  std::vector<torch::Tensor> masks;
  masks.reserve(static_cast<size_t>(n));
  std::bernoulli_distribution coin(0.5);
  for (int64_t i = 0; i < n; ++i) {
    MaskSpec spec = cfg.mask;
    switch (cfg.mask_mode) {
      case MaskMode::kRect:
        spec.kind = MaskKind::kRectangular;
        break;
      case MaskMode::kIrregular:
        spec.kind = MaskKind::kIrregular;
        break;
      case MaskMode::kBoth:
        spec.kind = coin(rng) ? MaskKind::kRectangular : MaskKind::kIrregular;
        break;
    }
    masks.push_back(generate_mask(spec, cfg.image_size, cfg.image_size, rng).data().unsqueeze(0));
  }
  return torch::stack(masks);
}

// ---------------------------------------------------------------------------
// Stage 1

PretrainState create_pretrain_state(const TrainConfig& cfg) {
  cfg.validate();
  return PretrainState::create(cfg.encoder_options(), cfg.contrastive, cfg.seed, cfg.seed ^ kDataSeedSalt);
}

void save_pretrain(const std::string& path, const PretrainState& state, const TrainConfig& cfg) {
  CheckpointWriter w;
  w.put_meta("stage", "pretrain");
  w.put_meta("step", std::to_string(state.step));
  w.put_meta("config", to_config(cfg).serialize());
  w.put_module("query", *state.query);
  w.put_module("key", *state.key);
  w.put_tensor("queue.keys", state.queue.keys());
  w.put_int("queue.capacity", state.queue.capacity());
  w.put_int("queue.total_enqueued", state.queue.total_enqueued());
  w.put_optimizer("optimizer", *state.optimizer);
  w.put_rng("rng", state.rng);
  w.put_int("step", state.step);
  w.save(path);
}

PretrainState load_pretrain(const std::string& path, const TrainConfig& cfg) {
  CheckpointReader r(path);
  if (r.meta("stage") != "pretrain") throw std::runtime_error("not a pretraining checkpoint: " + path);
  PretrainState state = create_pretrain_state(cfg);
  r.get_module("query", *state.query);
  r.get_module("key", *state.key);
  state.queue = KeyQueue::from_keys(r.get_int("queue.capacity"), r.get_tensor("queue.keys"),
                                    r.get_int("queue.total_enqueued"));
  r.get_optimizer("optimizer", *state.optimizer);
  r.get_rng("rng", state.rng);
  state.step = r.get_int("step");
  return state;
}

PretrainResult run_pretrain(const TrainConfig& cfg, const ImageDataset& dataset, RunLog& log,
                            const std::string& checkpoint_path) {
  cfg.validate();
  if (dataset.empty()) throw IngestError("pretraining dataset is empty");
  PretrainState state = create_pretrain_state(cfg);
  MaskSpec spec = cfg.mask;
  spec.kind = cfg.mask_mode == MaskMode::kRect ? MaskKind::kRectangular : MaskKind::kIrregular;

  PretrainResult result;
  while (state.step < cfg.pretrain_steps) {
    auto images = dataset.batch(batch_indices(cfg.seed, state.step, cfg.pretrain_batch, dataset.size()));
    auto r = pretrain_step(state, images, spec, cfg.contrastive, cfg.hflip);
    result.losses.push_back(r.loss);
    result.accuracies.push_back(r.accuracy);
    if (state.step % cfg.log_every == 0 || state.step == cfg.pretrain_steps) {
      log.append({"pretrain", state.step,
                  {{"loss", r.loss}, {"acc", r.accuracy}, {"queue", static_cast<double>(state.queue.size())}}});
    }
    if (!checkpoint_path.empty() && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      save_pretrain(checkpoint_path, state, cfg);
    }
  }
  const size_t tail = std::max<size_t>(1, result.accuracies.size() / 10);
  result.final_accuracy =
      std::accumulate(result.accuracies.end() - static_cast<std::ptrdiff_t>(tail), result.accuracies.end(), 0.0) /
      static_cast<double>(tail);
  if (!checkpoint_path.empty()) {
    save_pretrain(checkpoint_path, state, cfg);
    result.checkpoint = checkpoint_path;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Stage 2

JointState JointState::create(const TrainConfig& cfg) {
  cfg.validate();
  JointState s;
  torch::manual_seed(cfg.seed);
  s.generator = Generator(cfg.generator_options());
  s.critic = Discriminator(DiscriminatorOptions{cfg.disc_base_width});
  s.features = FeatureExtractor(cfg.features);
  auto adam = [&](std::vector<torch::Tensor> params) {
    return std::make_unique<torch::optim::Adam>(
        std::move(params), torch::optim::AdamOptions(cfg.joint_lr).betas({cfg.adam_beta1, cfg.adam_beta2}));
  };
  s.generator_optimizer = adam(s.generator->parameters());
  s.critic_optimizer = adam(s.critic->parameters());
  s.rng.seed(cfg.seed ^ kDataSeedSalt);
  return s;
}

void init_from_pretrain(JointState& state, const std::string& checkpoint_path) {
  CheckpointReader r(checkpoint_path);
  if (r.meta("stage") != "pretrain") throw std::runtime_error("not a pretraining checkpoint: " + checkpoint_path);
  r.get_module("query", *state.generator->encoder());
}

StepRecord JointStepResult::record(int64_t step) const {
  return {"joint",
          step,
          {{"total", total},
           {"structure", structure},
           {"texture", texture},
           {"per", perceptual},
           {"style", style},
           {"tv", tv},
           {"adv_g", adv_g},
           {"critic", critic},
           {"wdist", wasserstein},
           {"gp", gp}}};
}

JointStepResult joint_step(JointState& state, const torch::Tensor& images_in, const TrainConfig& cfg) {
  CANVASINFILL_EXPECT(images_in.dim() == 4 && images_in.size(1) == 3, "images must be N×3×H×W");
  auto images = cfg.hflip ? random_hflip(images_in, state.rng) : images_in;
  auto masks = sample_training_masks(cfg, images.size(0), state.rng);
  auto input = masked_input(images, masks);
  auto critic = as_critic(state.critic);

  auto out = state.generator->forward(input);

  set_requires_grad(*state.critic, true);
  auto critic_loss = adv_loss_d(critic, images, out.at(1).detach(), state.rng, cfg.loss.gp);
  state.critic_optimizer->zero_grad();
  critic_loss.total.backward();
  state.critic_optimizer->step();

  set_requires_grad(*state.critic, false);
  auto losses = total_loss(out, images, masks, critic, state.features, cfg.loss);
  state.generator_optimizer->zero_grad();
  losses.total.backward();
  state.generator_optimizer->step();
  set_requires_grad(*state.critic, true);

  ++state.step;
  JointStepResult r;
  r.total = losses.total.item<double>();
  r.structure = losses.structure.item<double>();
  r.texture = losses.texture.total.item<double>();
  r.perceptual = losses.texture.perceptual.item<double>();
  r.style = losses.texture.style.item<double>();
  r.tv = losses.texture.tv.item<double>();
  r.adv_g = losses.texture.adversarial.item<double>();
  r.critic = critic_loss.total.item<double>();
  r.wasserstein = critic_loss.wasserstein.item<double>();
  r.gp = critic_loss.penalty.item<double>();
  return r;
}

void save_joint(const std::string& path, const JointState& state, const TrainConfig& cfg) {
  CheckpointWriter w;
  w.put_meta("stage", "joint");
  w.put_meta("step", std::to_string(state.step));
  w.put_meta("config", to_config(cfg).serialize());
  w.put_module("generator", *state.generator);
  w.put_module("critic", *state.critic);
  w.put_optimizer("generator_optimizer", *state.generator_optimizer);
  w.put_optimizer("critic_optimizer", *state.critic_optimizer);
  w.put_rng("rng", state.rng);
  w.put_int("step", state.step);
  w.save(path);
}

namespace {
TrainConfig config_from_checkpoint(const CheckpointReader& r) {
  const auto text = r.meta("config");
  if (text.empty()) throw std::runtime_error("checkpoint has no configuration record: " + r.path());
  return to_train_config(Config::parse(text));
}
}  // namespace

JointState load_joint(const std::string& path, TrainConfig* cfg_out) {
  CheckpointReader r(path);
  if (r.meta("stage") != "joint") throw std::runtime_error("not a joint training checkpoint: " + path);
  const TrainConfig cfg = config_from_checkpoint(r);
  JointState state = JointState::create(cfg);
  r.get_module("generator", *state.generator);
  r.get_module("critic", *state.critic);
  r.get_optimizer("generator_optimizer", *state.generator_optimizer);
  r.get_optimizer("critic_optimizer", *state.critic_optimizer);
  r.get_rng("rng", state.rng);
  state.step = r.get_int("step");
  if (cfg_out) *cfg_out = cfg;
  return state;
}

Generator load_generator(const std::string& path, TrainConfig* cfg_out) {
  CheckpointReader r(path);
  if (r.meta("stage") != "joint") throw std::runtime_error("not a joint training checkpoint: " + path);
  const TrainConfig cfg = config_from_checkpoint(r);
  Generator generator(cfg.generator_options());
  r.get_module("generator", *generator);
  if (cfg_out) *cfg_out = cfg;
  return generator;
}

double masked_region_l1(Generator& generator, const ImageDataset& dataset, const TrainConfig& cfg,
                        uint64_t mask_seed) {
  torch::NoGradGuard no_grad;
  std::mt19937_64 rng(mask_seed);
  double abs_sum = 0.0;
  double holes = 0.0;
  const size_t chunk = 8;
  for (size_t start = 0; start < dataset.size(); start += chunk) {
    std::vector<size_t> which;
    for (size_t i = start; i < std::min(dataset.size(), start + chunk); ++i) which.push_back(i);
    auto images = dataset.batch(which);
    auto masks = sample_training_masks(cfg, images.size(0), rng);
    auto predicted = generator->forward(masked_input(images, masks)).at(1).clamp(0.0, 1.0);
    abs_sum += ((predicted - images).abs() * masks).to(torch::kDouble).sum().item<double>();
    holes += 3.0 * masks.to(torch::kDouble).sum().item<double>();
  }
  return holes > 0.0 ? abs_sum / holes : 0.0;
}

namespace {

void write_snapshot(JointState& state, const TrainConfig& cfg, const ImageDataset& val, RunLog& log,
                    const std::string& dir) {
  torch::NoGradGuard no_grad;
  std::vector<size_t> which;
  for (size_t i = 0; i < std::min<size_t>(4, val.size()); ++i) which.push_back(i);
  auto images = val.batch(which);
  std::mt19937_64 rng(cfg.seed);
  auto masks = sample_training_masks(cfg, images.size(0), rng);
  auto predicted = inpaint_batch(state.generator, images, masks, /*composite=*/true);
  log.append({"val",
              state.step,
              {{"l1", l1_error(predicted, images)}, {"psnr", psnr(predicted, images)}, {"ssim", ssim(predicted, images)}}});
  std::vector<torch::Tensor> rows;
  for (int64_t i = 0; i < images.size(0); ++i) {
    auto masked = images[i] * (1.0 - masks[i]);
    rows.push_back(torch::cat({masked, predicted[i], images[i]}, 2));
  }
  std::filesystem::create_directories(dir);
  char name[64];
  std::snprintf(name, sizeof(name), "step_%06lld.png", static_cast<long long>(state.step));
  write_image((std::filesystem::path(dir) / name).string(), torch::cat(rows, 1));
}

}  // namespace

void train_joint(JointState& state, const TrainConfig& cfg, const ImageDataset& train, const ImageDataset& val,
                 RunLog& log, const JointRunOptions& options) {
  if (train.empty()) throw IngestError("training dataset is empty");
  const ImageDataset& snapshots = val.empty() ? train : val;
  while (state.step < cfg.joint_steps) {
    auto images = train.batch(batch_indices(cfg.seed, state.step, cfg.joint_batch, train.size()));
    auto r = joint_step(state, images, cfg);
    if (state.step % cfg.log_every == 0 || state.step == cfg.joint_steps) log.append(r.record(state.step));
    if (!options.snapshot_dir.empty() && cfg.snapshot_every > 0 && state.step % cfg.snapshot_every == 0) {
      write_snapshot(state, cfg, snapshots, log, options.snapshot_dir);
    }
    if (!options.checkpoint_path.empty() && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      save_joint(options.checkpoint_path, state, cfg);
    }
  }
}

JointResult run_joint(const TrainConfig& cfg, const ImageDataset& train, const ImageDataset& val, RunLog& log,
                      const JointRunOptions& options) {
  cfg.validate();
  JointState state = [&] {
    if (options.resume_checkpoint) return load_joint(*options.resume_checkpoint);
    JointState fresh = JointState::create(cfg);
    if (cfg.use_contrastive_init) {
      if (!options.init_checkpoint) {
        throw ConfigError("use_contrastive_init is set but no pretraining checkpoint was given (--init)");
      }
      init_from_pretrain(fresh, *options.init_checkpoint);
    }
    return fresh;
  }();
  train_joint(state, cfg, train, val, log, options);
  JointResult result;
  result.steps = state.step;
  if (!options.checkpoint_path.empty()) {
    save_joint(options.checkpoint_path, state, cfg);
    result.checkpoint = options.checkpoint_path;
  }
  return result;
}

}  // namespace canvasinfill
