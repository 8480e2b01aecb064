#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "camalign/dataset.hpp"
#include "camalign/trainer.hpp"

namespace camalign {

/// Flat `section.key = value` store. Text form accepts `[section]` headers,
/// `#` comments and blank lines; keys outside a section must be dotted.
class Settings {
 public:
  static Settings parse(std::string_view text);
  static Settings load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.contains(key); }
  const std::map<std::string, std::string>& values() const { return values_; }
  /// Later values win.
  void merge(const Settings& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;

  /// Throws ConfigError naming the first key not in `known_setting_keys()`.
  void check_known_keys() const;

  /// Sorted `key = value` lines; parse(to_text()) reproduces the settings.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

const std::vector<std::string>& known_setting_keys();

/// "[[1,2],[3,4]]" (1-based) to 0-based groups; "" gives no groups.
std::vector<std::vector<int>> parse_groups(const std::string& text);
std::string format_groups(const std::vector<std::vector<int>>& groups);

std::string format_int_list(const std::vector<int>& values);
std::string format_double(double value);

SynthConfig synth_config_from(const Settings& s);
void store(Settings& s, const SynthConfig& config);

TrainConfig train_config_from(const Settings& s);
void store(Settings& s, const TrainConfig& config);

LoadOptions load_options_from(const Settings& s);
void store(Settings& s, const LoadOptions& options);

/// Architecture keys only (backbone, discriminator, variant, parts and
/// class counts); used to tag checkpoints.
std::string model_config_text(const ModelConfig& config);
ModelConfig model_config_from_text(std::string_view text);

}  // namespace camalign
