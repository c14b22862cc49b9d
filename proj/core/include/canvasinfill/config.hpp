#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "canvasinfill/train_config.hpp"

namespace canvasinfill {

struct ConfigKey {
  std::string name;
  std::string doc;
};

/// Every accepted key with a one-line description, in serialization order.
const std::vector<ConfigKey>& config_keys();

/// Flat key-value configuration. Text form is one "key = value" per line;
/// blank lines and lines starting with '#' are ignored. Unknown keys are
/// rejected. Missing keys keep their defaults.
class Config {
 public:
  static Config defaults();
  static Config parse(std::string_view text);
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  /// Overrides keys from environment variables named prefix + KEY_IN_CAPS.
  void apply_environment(const std::string& prefix = "CANVASINFILL_");

  std::string serialize() const;
  const std::map<std::string, std::string>& values() const { return values_; }

  bool operator==(const Config& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Converts to the typed form; throws ConfigError on malformed values.
TrainConfig to_train_config(const Config& config);
Config to_config(const TrainConfig& config);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace canvasinfill
