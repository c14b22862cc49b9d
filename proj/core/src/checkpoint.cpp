#include "canvasinfill/checkpoint.hpp"

#include <filesystem>
#include <sstream>

#include "canvasinfill/errors.hpp"
#include "json.hpp"

namespace canvasinfill {

namespace {
constexpr const char* kFormatTag = "canvasinfill-checkpoint/1";

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}
}  // namespace

CheckpointWriter::CheckpointWriter() = default;

void CheckpointWriter::put_module(const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters()) put_tensor(join(prefix, item.key()), item.value());
  for (const auto& item : module.named_buffers()) put_tensor(join(prefix, item.key()), item.value());
}

void CheckpointWriter::put_tensor(const std::string& name, const torch::Tensor& tensor) {
  archive_.write(name, tensor.detach());
  shapes_.emplace_back(name, tensor.sizes().vec());
}

void CheckpointWriter::put_optimizer(const std::string& name, const torch::optim::Optimizer& optimizer) {
  torch::serialize::OutputArchive nested;
  optimizer.save(nested);
  archive_.write(name, nested);
}

void CheckpointWriter::put_rng(const std::string& name, const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  archive_.write(name, c10::IValue(out.str()));
}

void CheckpointWriter::put_int(const std::string& name, int64_t value) { archive_.write(name, c10::IValue(value)); }

void CheckpointWriter::put_meta(const std::string& key, const std::string& value) { meta_.emplace_back(key, value); }

void CheckpointWriter::save(const std::string& path) {
  nlohmann::ordered_json record;
  record["format"] = kFormatTag;
  for (const auto& [key, value] : meta_) record[key] = value;
  nlohmann::ordered_json manifest = nlohmann::ordered_json::object();
  for (const auto& [name, shape] : shapes_) manifest[name] = shape;
  record["tensors"] = manifest;
  archive_.write("metadata", c10::IValue(record.dump()));
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  archive_.save_to(path);
}

CheckpointReader::CheckpointReader(const std::string& path) : path_(path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
  try {
    archive_.load_from(path);
    c10::IValue meta;
    archive_.read("metadata", meta);
    metadata_json_ = meta.toStringRef();
  } catch (const c10::Error& e) {
    throw std::runtime_error("not a readable checkpoint: " + path + " (" + e.what_without_backtrace() + ")");
  }
  auto record = nlohmann::json::parse(metadata_json_, nullptr, false);
  if (record.is_discarded() || record.value("format", "") != kFormatTag) {
    throw std::runtime_error("unrecognized checkpoint format: " + path);
  }
}

void CheckpointReader::get_module(const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto load = [&](const std::string& name, torch::Tensor& target) {
    torch::Tensor value;
    if (!archive_.try_read(join(prefix, name), value)) {
      throw std::runtime_error("checkpoint " + path_ + " lacks tensor " + join(prefix, name));
    }
    if (value.sizes() != target.sizes()) {
      throw std::runtime_error("checkpoint " + path_ + " has a different shape for " + join(prefix, name));
    }
    target.copy_(value);
  };
  for (auto& item : module.named_parameters()) load(item.key(), item.value());
  for (auto& item : module.named_buffers()) load(item.key(), item.value());
}

bool CheckpointReader::has_module(const std::string& prefix, const torch::nn::Module& module) {
  auto params = module.named_parameters();
  if (params.is_empty()) return true;
  torch::Tensor probe;
  return archive_.try_read(join(prefix, params.begin()->key()), probe);
}

torch::Tensor CheckpointReader::get_tensor(const std::string& name) {
  torch::Tensor value;
  if (!archive_.try_read(name, value)) throw std::runtime_error("checkpoint " + path_ + " lacks tensor " + name);
  return value;
}

void CheckpointReader::get_optimizer(const std::string& name, torch::optim::Optimizer& optimizer) {
  torch::serialize::InputArchive nested;
  if (!archive_.try_read(name, nested)) throw std::runtime_error("checkpoint " + path_ + " lacks optimizer " + name);
  optimizer.load(nested);
}

void CheckpointReader::get_rng(const std::string& name, std::mt19937_64& rng) {
  c10::IValue value;
  if (!archive_.try_read(name, value)) throw std::runtime_error("checkpoint " + path_ + " lacks RNG state " + name);
  std::istringstream in(value.toStringRef());
  in >> rng;
}

int64_t CheckpointReader::get_int(const std::string& name) {
  c10::IValue value;
  if (!archive_.try_read(name, value)) throw std::runtime_error("checkpoint " + path_ + " lacks value " + name);
  return value.toInt();
}

std::string CheckpointReader::meta(const std::string& key) const {
  auto record = nlohmann::json::parse(metadata_json_);
  if (!record.contains(key)) return {};
  const auto& v = record[key];
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace canvasinfill
