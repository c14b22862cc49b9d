#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "canvasinfill/config.hpp"
#include "canvasinfill/dataset.hpp"
#include "canvasinfill/errors.hpp"
#include "canvasinfill/evaluation.hpp"
#include "canvasinfill/generator.hpp"
#include "canvasinfill/image_io.hpp"
#include "canvasinfill/mask_engine.hpp"
#include "canvasinfill/training.hpp"

namespace canvasinfill::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<int64_t, int64_t> parse_size(const std::string& text) {
  const auto x = text.find_first_of("xX");
  try {
    if (x == std::string::npos) {
      const auto s = std::stoll(text);
      return {s, s};
    }
    return {std::stoll(text.substr(0, x)), std::stoll(text.substr(x + 1))};
  } catch (const std::exception&) {
    throw UsageError("--size expects HxW (for example 256x256), got '" + text + "'");
  }
}

/// Defaults, then the config file, then CANVASINFILL_* variables, then --set.
TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  Config config = path.empty() ? Config::defaults() : Config::load(path);
  config.apply_environment("CANVASINFILL_");
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + item + "'");
    config.set(item.substr(0, eq), item.substr(eq + 1));
  }
  return to_train_config(config);
}

void require_data_dir(const TrainConfig& cfg) {
  if (cfg.data_dir.empty()) {
    throw ConfigError("data_dir is not set; add 'data_dir = <folder of images>' to the config file");
  }
}

class FileLog {
 public:
  explicit FileLog(const fs::path& path) : file_(path) {
    if (!file_) throw std::runtime_error("cannot open log file " + path.string());
  }
  std::ostream& stream() { return file_; }

 private:
  std::ofstream file_;
};

int cmd_make_masks(const std::string& kind, int64_t count, const std::string& size, uint64_t seed,
                   const std::string& out_dir, std::ostream& out) {
  const auto [h, w] = parse_size(size);
  if (count < 1) throw UsageError("--count must be at least 1");
  MaskSpec spec;
  spec.kind = parse_mask_kind(kind);
  spec.seed = seed;
  spec.validate();
  fs::create_directories(out_dir);
  std::mt19937_64 rng(seed);
  double hole_sum = 0.0;
  for (int64_t i = 0; i < count; ++i) {
    const Mask mask = generate_mask(spec, h, w, rng);
    hole_sum += mask.hole_ratio();
    char name[32];
    std::snprintf(name, sizeof(name), "mask_%05lld.png", static_cast<long long>(i));
    write_mask((fs::path(out_dir) / name).string(), mask);
  }
  out << "wrote " << count << " " << kind << " masks (" << h << "x" << w << ", mean hole ratio "
      << hole_sum / static_cast<double>(count) << ") to " << out_dir << "\n";
  return kSuccess;
}

int cmd_pretrain(const TrainConfig& cfg, std::ostream& out) {
  require_data_dir(cfg);
  auto data = ingest_directory(cfg.data_dir, cfg.image_size);
  fs::create_directories(cfg.out_dir);
  FileLog log_file(fs::path(cfg.out_dir) / "pretrain.log");
  RunLog log(&log_file.stream());
  const auto ckpt = (fs::path(cfg.out_dir) / "pretrain.ckpt").string();
  auto result = run_pretrain(cfg, data, log, ckpt);
  out << "pretraining finished: " << result.losses.size() << " steps, final accuracy " << result.final_accuracy
      << ", checkpoint " << result.checkpoint << "\n";
  return kSuccess;
}

int cmd_train(const TrainConfig& cfg, const std::string& init, const std::string& resume, std::ostream& out) {
  require_data_dir(cfg);
  auto split = ingest_dataset(cfg.data_dir, cfg.image_size, cfg.val_fraction, cfg.seed);
  fs::create_directories(cfg.out_dir);
  FileLog log_file(fs::path(cfg.out_dir) / "train.log");
  RunLog log(&log_file.stream());
  JointRunOptions options;
  if (!init.empty()) options.init_checkpoint = init;
  if (!resume.empty()) options.resume_checkpoint = resume;
  options.checkpoint_path = (fs::path(cfg.out_dir) / "joint.ckpt").string();
  options.snapshot_dir = (fs::path(cfg.out_dir) / "snapshots").string();
  auto result = run_joint(cfg, split.train, split.val, log, options);
  out << "training finished at step " << result.steps << ", checkpoint " << result.checkpoint << "\n";
  return kSuccess;
}

int cmd_inpaint(const std::string& image_path, const std::string& mask_path, const std::string& ckpt,
                const std::string& out_path, bool no_composite, std::ostream& out) {
  TrainConfig cfg;
  Generator generator = load_generator(ckpt, &cfg);
  generator->eval();
  torch::NoGradGuard no_grad;
  const auto image = read_image(image_path, cfg.image_size);
  const auto mask = read_mask(mask_path, cfg.image_size);
  const auto result = inpaint(generator, image, mask, !no_composite);
  const auto parent = fs::path(out_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_image(out_path, result);
  out << "wrote " << out_path << " (hole ratio " << mask.hole_ratio() << ")\n";
  return kSuccess;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data_dir, const std::string& masks, uint64_t seed,
                 const std::string& out_path, std::ostream& out) {
  TrainConfig cfg;
  Generator generator = load_generator(ckpt, &cfg);
  generator->eval();
  auto data = ingest_directory(data_dir, cfg.image_size);
  FeatureExtractor extractor(cfg.features);

  EvaluationOptions options;
  options.mask = cfg.mask;
  options.seed = seed;
  if (masks == "rect") {
    options.kinds = {MaskKind::kRectangular};
  } else if (masks == "irregular") {
    options.kinds = {MaskKind::kIrregular};
  }
  Inpainter inpainter = [&](const torch::Tensor& images, const torch::Tensor& m) {
    return inpaint_batch(generator, images, m, /*composite=*/true);
  };
  MetricReport report = evaluate(inpainter, data, extractor, options);
  report.config = to_config(cfg).values();
  report.config["checkpoint"] = ckpt;
  report.config["eval_data"] = data_dir;
  report.config["eval_seed"] = std::to_string(seed);

  const auto parent = fs::path(out_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream file(out_path);
  if (!file) throw std::runtime_error("cannot write report " + out_path);
  file << report.to_json() << "\n";
  for (const auto& row : report.rows) {
    out << row.mask_type << ": l1=" << row.l1_error << " psnr=" << row.psnr << " ssim=" << row.ssim
        << " fid=" << row.fid << " (n=" << row.samples << ")\n";
  }
  return kSuccess;
}

std::string config_help() {
  std::string text = "Config keys (file lines 'key = value'; environment CANVASINFILL_<KEY> overrides):\n";
  const Config defaults = Config::defaults();
  for (const auto& key : config_keys()) {
    text += "  " + key.name + " [" + defaults.get(key.name) + "]  " + key.doc + "\n";
  }
  return text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"canvasinfill: free-form image inpainting", args.empty() ? "canvasinfill" : args.front()};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string kind = "irregular", size = "256x256", out_dir, config_path, init, resume;
  std::string image_path, mask_path, ckpt, out_path, data_dir, masks = "both";
  int64_t count = 0;
  uint64_t seed = 0;
  bool no_composite = false;
  std::vector<std::string> overrides;

  auto* make_masks = app.add_subcommand("make-masks", "Write seeded random masks as 8-bit PNG (255 = hole)");
  make_masks->add_option("--kind", kind, "Mask family")->check(CLI::IsMember({"rect", "irregular"}))->required();
  make_masks->add_option("--count", count, "Number of masks")->required();
  make_masks->add_option("--size", size, "Mask size HxW")->required();
  make_masks->add_option("--seed", seed, "Random seed")->required();
  make_masks->add_option("--out", out_dir, "Output directory")->required();

  auto* pretrain = app.add_subcommand("pretrain", "Contrastive pretraining of the encoder");
  pretrain->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  pretrain->add_option("--set", overrides, "Override a config key (key=value), repeatable");
  pretrain->footer(config_help());

  auto* train = app.add_subcommand("train", "Joint adversarial training of the inpainting network");
  train->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  train->add_option("--init", init, "Pretraining checkpoint to initialize the encoder from");
  train->add_option("--resume", resume, "Joint checkpoint to continue from");
  train->add_option("--set", overrides, "Override a config key (key=value), repeatable");
  train->footer(config_help());

  auto* inpaint_cmd = app.add_subcommand("inpaint", "Fill the holes of one image");
  inpaint_cmd->add_option("--image", image_path, "Input image")->required();
  inpaint_cmd->add_option("--mask", mask_path, "Mask image (>127 = hole)")->required();
  inpaint_cmd->add_option("--ckpt", ckpt, "Joint training checkpoint")->required();
  inpaint_cmd->add_option("--out", out_path, "Output PNG")->required();
  inpaint_cmd->add_flag("--no-composite", no_composite, "Return raw network output in known pixels too");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Report L1, PSNR, SSIM and FID on a folder of images");
  evaluate_cmd->add_option("--ckpt", ckpt, "Joint training checkpoint")->required();
  evaluate_cmd->add_option("--data", data_dir, "Folder of evaluation images")->required();
  evaluate_cmd->add_option("--masks", masks, "Mask families")->check(CLI::IsMember({"rect", "irregular", "both"}));
  evaluate_cmd->add_option("--seed", seed, "Mask seed");
  evaluate_cmd->add_option("--out", out_path, "Report JSON path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (make_masks->parsed()) return cmd_make_masks(kind, count, size, seed, out_dir, out);
    if (pretrain->parsed()) return cmd_pretrain(resolve_config(config_path, overrides), out);
    if (train->parsed()) return cmd_train(resolve_config(config_path, overrides), init, resume, out);
    if (inpaint_cmd->parsed()) return cmd_inpaint(image_path, mask_path, ckpt, out_path, no_composite, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(ckpt, data_dir, masks, seed, out_path, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace canvasinfill::cli
