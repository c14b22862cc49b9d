#include "canvasinfill/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "canvasinfill/errors.hpp"

namespace canvasinfill {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<int> parse_scales(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<int>(parse_int(key, item)));
  }
  return out;
}

std::string format_scales(const std::vector<int>& scales) {
  std::string out;
  for (size_t i = 0; i < scales.size(); ++i) out += (i ? "," : "") + std::to_string(scales[i]);
  return out;
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

const char* mask_mode_name(MaskMode m) {
  switch (m) {
    case MaskMode::kRect:
      return "rect";
    case MaskMode::kIrregular:
      return "irregular";
    case MaskMode::kBoth:
      return "both";
  }
  return "irregular";
}

MaskMode parse_mask_mode(const std::string& v) {
  if (v == "rect") return MaskMode::kRect;
  if (v == "irregular") return MaskMode::kIrregular;
  if (v == "both") return MaskMode::kBoth;
  throw ConfigError("config key 'mask_kind' expects rect, irregular or both, got '" + v + "'");
}

struct Field {
  ConfigKey key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

#define CI_DOUBLE(name, member, doc)                                                 \
  Field {                                                                            \
    {name, doc}, [](const TrainConfig& c) { return format_double(c.member); },       \
        [](TrainConfig& c, const std::string& v) { c.member = parse_double(name, v); } \
  }
#define CI_INT(name, member, doc)                                                      \
  Field {                                                                              \
    {name, doc}, [](const TrainConfig& c) { return std::to_string(c.member); },        \
        [](TrainConfig& c, const std::string& v) {                                     \
          c.member = static_cast<decltype(c.member)>(parse_int(name, v));              \
        }                                                                              \
  }
#define CI_U64(name, member, doc)                                                   \
  Field {                                                                           \
    {name, doc}, [](const TrainConfig& c) { return std::to_string(c.member); },     \
        [](TrainConfig& c, const std::string& v) { c.member = parse_u64(name, v); } \
  }
#define CI_BOOL(name, member, doc)                                                   \
  Field {                                                                            \
    {name, doc}, [](const TrainConfig& c) { return format_bool(c.member); },         \
        [](TrainConfig& c, const std::string& v) { c.member = parse_bool(name, v); } \
  }
#define CI_STRING(name, member, doc)                                                                      \
  Field {                                                                                                 \
    {name, doc}, [](const TrainConfig& c) { return c.member; }, [](TrainConfig& c, const std::string& v) { \
      c.member = v;                                                                                       \
    }                                                                                                     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      CI_INT("image_size", image_size, "training and inference resolution (square, divisible by 32)"),
      CI_U64("seed", seed, "seed for initialization, masks, augmentation and critic sampling"),
      CI_STRING("data_dir", data_dir, "directory of training images"),
      CI_STRING("out_dir", out_dir, "directory receiving checkpoints, logs and snapshots"),
      CI_DOUBLE("val_fraction", val_fraction, "fraction of images held out for validation snapshots"),
      CI_BOOL("hflip", hflip, "random horizontal flips with probability 0.5"),
      CI_INT("pretrain_steps", pretrain_steps, "contrastive pretraining step budget"),
      CI_INT("pretrain_batch", pretrain_batch, "contrastive pretraining batch size"),
      CI_DOUBLE("tau", contrastive.tau, "InfoNCE temperature"),
      CI_DOUBLE("momentum", contrastive.momentum, "key encoder momentum coefficient"),
      CI_INT("queue_capacity", contrastive.queue_capacity, "number of keys held in the dictionary queue"),
      CI_INT("repr_dim", contrastive.repr_dim, "representation dimension"),
      CI_DOUBLE("lr", contrastive.lr, "SGD learning rate for pretraining"),
      CI_DOUBLE("sgd_momentum", contrastive.sgd_momentum, "SGD momentum for pretraining"),
      CI_INT("joint_steps", joint_steps, "joint training step budget"),
      CI_INT("joint_batch", joint_batch, "joint training batch size"),
      CI_DOUBLE("joint_lr", joint_lr, "Adam learning rate for generator and critic"),
      CI_DOUBLE("adam_beta1", adam_beta1, "Adam first-moment decay"),
      CI_DOUBLE("adam_beta2", adam_beta2, "Adam second-moment decay"),
      CI_BOOL("use_contrastive_init", use_contrastive_init, "initialize the encoder from a pretraining checkpoint"),
      CI_BOOL("use_daf", use_daf, "dual attention fusion output heads (false: plain 3x3 conv heads)"),
      CI_INT("daf_reduction", daf_reduction, "channel gate reduction ratio"),
      CI_INT("daf_hidden", daf_hidden, "width of the combine-map transform"),
      CI_INT("disc_base_width", disc_base_width, "first critic layer width"),
      CI_DOUBLE("lambda_rec", loss.rec, "reconstruction weight"),
      CI_DOUBLE("lambda_per", loss.per, "perceptual weight"),
      CI_DOUBLE("lambda_style", loss.style, "style weight"),
      CI_DOUBLE("lambda_tv", loss.tv, "total variation weight"),
      CI_DOUBLE("lambda_adv", loss.adv, "adversarial weight"),
      CI_DOUBLE("lambda_gp", loss.gp, "gradient penalty weight"),
      Field{{"structure_scales", "decoder scales receiving the structure loss"},
            [](const TrainConfig& c) { return format_scales(c.loss.structure_scales); },
            [](TrainConfig& c, const std::string& v) { c.loss.structure_scales = parse_scales("structure_scales", v); }},
      Field{{"texture_scales", "decoder scales receiving the texture loss"},
            [](const TrainConfig& c) { return format_scales(c.loss.texture_scales); },
            [](TrainConfig& c, const std::string& v) { c.loss.texture_scales = parse_scales("texture_scales", v); }},
      Field{{"mask_kind", "training masks: rect, irregular or both"},
            [](const TrainConfig& c) { return std::string(mask_mode_name(c.mask_mode)); },
            [](TrainConfig& c, const std::string& v) { c.mask_mode = parse_mask_mode(v); }},
      CI_DOUBLE("rect_min_frac", mask.rect_min_frac, "minimum rectangle side as a fraction of the image"),
      CI_DOUBLE("rect_max_frac", mask.rect_max_frac, "maximum rectangle side as a fraction of the image"),
      CI_INT("stroke_min", mask.stroke_min, "minimum brush strokes per irregular mask"),
      CI_INT("stroke_max", mask.stroke_max, "maximum brush strokes per irregular mask"),
      CI_DOUBLE("brush_min", mask.brush_min, "minimum brush width in pixels at 256x256"),
      CI_DOUBLE("brush_max", mask.brush_max, "maximum brush width in pixels at 256x256"),
      CI_INT("vertex_min", mask.vertex_min, "minimum vertices per stroke"),
      CI_INT("vertex_max", mask.vertex_max, "maximum vertices per stroke"),
      CI_DOUBLE("max_angle_step", mask.max_angle_step, "maximum turn between stroke segments (radians)"),
      CI_DOUBLE("segment_min_frac", mask.segment_min_frac, "minimum segment length as a fraction of the image"),
      CI_DOUBLE("segment_max_frac", mask.segment_max_frac, "maximum segment length as a fraction of the image"),
      CI_BOOL("scale_brush", mask.scale_brush_to_image, "scale brush widths by image_size/256"),
      Field{{"feature_extractor", "loss and FID features: random (seeded substitute) or vgg16"},
            [](const TrainConfig& c) {
              return std::string(c.features.kind == FeatureExtractorKind::kVgg16 ? "vgg16" : "random");
            },
            [](TrainConfig& c, const std::string& v) {
              if (v == "vgg16") {
                c.features.kind = FeatureExtractorKind::kVgg16;
              } else if (v == "random") {
                c.features.kind = FeatureExtractorKind::kSeededRandom;
              } else {
                throw ConfigError("config key 'feature_extractor' expects random or vgg16, got '" + v + "'");
              }
            }},
      CI_STRING("feature_extractor_weights", features.weights_path, "torch archive with VGG-16 conv weights"),
      CI_U64("feature_seed", features.seed, "seed of the substitute feature extractor"),
      CI_INT("log_every", log_every, "steps between log lines"),
      CI_INT("snapshot_every", snapshot_every, "steps between validation snapshots (0 disables)"),
      CI_INT("checkpoint_every", checkpoint_every, "steps between intermediate checkpoints (0 disables)"),
  };
  return table;
}

#undef CI_DOUBLE
#undef CI_INT
#undef CI_U64
#undef CI_BOOL
#undef CI_STRING

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key.name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

Config Config::defaults() { return to_config(TrainConfig{}); }

Config Config::parse(std::string_view text) {
  Config config = defaults();
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + " is not 'key = value': " + content);
    }
    config.set(trim(std::string_view(content).substr(0, eq)), trim(std::string_view(content).substr(eq + 1)));
  }
  return config;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::set(const std::string& key, const std::string& value) {
  TrainConfig probe;
  field(key).set(probe, value);
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void Config::apply_environment(const std::string& prefix) {
  for (const auto& key : config_keys()) {
    std::string var = prefix + key.name;
    std::transform(var.begin(), var.end(), var.begin(), [](unsigned char c) { return std::toupper(c); });
    if (const char* value = std::getenv(var.c_str())) set(key.name, value);
  }
}

std::string Config::serialize() const {
  std::string out;
  for (const auto& key : config_keys()) {
    auto it = values_.find(key.name);
    if (it != values_.end()) out += key.name + " = " + it->second + "\n";
  }
  return out;
}

TrainConfig to_train_config(const Config& config) {
  TrainConfig out;
  for (const auto& [key, value] : config.values()) field(key).set(out, value);
  out.validate();
  return out;
}

Config to_config(const TrainConfig& config) {
  Config out;
  for (const auto& f : fields()) out.set(f.key.name, f.get(config));
  return out;
}

}  // namespace canvasinfill
