#include "camalign/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace camalign {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

long parse_long(const std::string& key, const std::string& text) {
  long value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return value;
}

std::string strip_brackets(const std::string& text) {
  std::string s = trim(text);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

Settings Settings::parse(std::string_view text) {
  Settings s;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    if (key.find('.') == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key '" + key + "' has no section");
    }
    s.set(key, trim(line.substr(eq + 1)));
  }
  return s;
}

Settings Settings::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void Settings::set(const std::string& key, const std::string& value) { values_[key] = value; }

void Settings::merge(const Settings& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Settings::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Settings::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

long Settings::get_int(const std::string& key, long fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_long(key, it->second);
}

bool Settings::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<int> Settings::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  const std::string body = strip_brackets(it->second);
  if (body.empty()) return out;
  for (const auto& item : split(body, ',')) out.push_back(static_cast<int>(parse_long(key, item)));
  return out;
}

std::vector<double> Settings::get_double_list(const std::string& key,
                                              const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  const std::string body = strip_brackets(it->second);
  if (body.empty()) return out;
  for (const auto& item : split(body, ',')) out.push_back(parse_double(key, item));
  return out;
}

const std::vector<std::string>& known_setting_keys() {
  static const std::vector<std::string> keys{
      "backbone.channels", "backbone.slope",
      "data.height", "data.resize", "data.root", "data.test_root", "data.use_groups", "data.width",
      "disc.hidden", "disc.slope",
      "eval.bins", "eval.checkpoint", "eval.k_values", "eval.pca", "eval.probe_seed", "eval.rates",
      "eval.seeds", "eval.test_identities",
      "mdifl.groups", "mdifl.variant",
      "pam.freeze_interval", "pam.k", "pam.mode", "pam.normalize_by_area", "pam.seed",
      "run.output",
      "synth.brightness_range", "synth.cameras", "synth.first_identity", "synth.frames",
      "synth.height", "synth.hue_range", "synth.identities", "synth.noise", "synth.offset_range",
      "synth.light_drift", "synth.overlap", "synth.seed", "synth.tracklets_per_identity", "synth.walk",
      "synth.width",
      "train.adam_beta1", "train.adam_beta2", "train.batch_size", "train.checkpoint_interval",
      "train.frames", "train.grl_coefficient", "train.grl_warmup", "train.id_normalize",
      "train.label_seed", "train.lambda", "train.lr", "train.lr_decay", "train.lr_decay_interval",
      "train.seed", "train.steps", "train.weight_decay",
  };
  return keys;
}

void Settings::check_known_keys() const {
  const auto& known = known_setting_keys();
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("unknown config key '" + k + "'");
    }
  }
}

std::string Settings::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::vector<int>> parse_groups(const std::string& text) {
  std::vector<std::vector<int>> groups;
  const std::string body = strip_brackets(text);
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto open = body.find('[', pos);
    if (open == std::string::npos) {
      if (!trim(body.substr(pos)).empty() && trim(body.substr(pos)) != ",") {
        throw ConfigError("mdifl.groups: expected [[a,b],[c]], got '" + text + "'");
      }
      break;
    }
    const auto close = body.find(']', open);
    if (close == std::string::npos) throw ConfigError("mdifl.groups: unbalanced brackets in '" + text + "'");
    std::vector<int> group;
    const std::string inner = trim(body.substr(open + 1, close - open - 1));
    if (!inner.empty()) {
      for (const auto& item : split(inner, ',')) {
        group.push_back(static_cast<int>(parse_long("mdifl.groups", item)) - 1);
      }
    }
    groups.push_back(std::move(group));
    pos = close + 1;
  }
  return groups;
}

std::string format_groups(const std::vector<std::vector<int>>& groups) {
  std::string out = "[";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g) out += ",";
    out += "[";
    for (std::size_t i = 0; i < groups[g].size(); ++i) {
      if (i) out += ",";
      out += std::to_string(groups[g][i] + 1);
    }
    out += "]";
  }
  return out + "]";
}

std::string format_int_list(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, ptr);
}

SynthConfig synth_config_from(const Settings& s) {
  SynthConfig c;
  c.n_cameras = static_cast<int>(s.get_int("synth.cameras", c.n_cameras));
  c.n_identities = static_cast<int>(s.get_int("synth.identities", c.n_identities));
  c.first_identity = static_cast<int>(s.get_int("synth.first_identity", c.first_identity));
  c.overlap = s.get_double("synth.overlap", c.overlap);
  c.frames_per_tracklet = static_cast<int>(s.get_int("synth.frames", c.frames_per_tracklet));
  c.tracklets_per_identity =
      static_cast<int>(s.get_int("synth.tracklets_per_identity", c.tracklets_per_identity));
  c.height = static_cast<int>(s.get_int("synth.height", c.height));
  c.width = static_cast<int>(s.get_int("synth.width", c.width));
  c.pixel_noise = s.get_double("synth.noise", c.pixel_noise);
  c.hue_range = s.get_double("synth.hue_range", c.hue_range);
  c.brightness_range = s.get_double("synth.brightness_range", c.brightness_range);
  c.offset_range = s.get_double("synth.offset_range", c.offset_range);
  c.walk = s.get_double("synth.walk", c.walk);
  c.light_drift = s.get_double("synth.light_drift", c.light_drift);
  c.seed = static_cast<std::uint64_t>(s.get_int("synth.seed", static_cast<long>(c.seed)));
  c.validate();
  return c;
}

void store(Settings& s, const SynthConfig& c) {
  s.set("synth.cameras", std::to_string(c.n_cameras));
  s.set("synth.identities", std::to_string(c.n_identities));
  s.set("synth.first_identity", std::to_string(c.first_identity));
  s.set("synth.overlap", format_double(c.overlap));
  s.set("synth.frames", std::to_string(c.frames_per_tracklet));
  s.set("synth.tracklets_per_identity", std::to_string(c.tracklets_per_identity));
  s.set("synth.height", std::to_string(c.height));
  s.set("synth.width", std::to_string(c.width));
  s.set("synth.noise", format_double(c.pixel_noise));
  s.set("synth.hue_range", format_double(c.hue_range));
  s.set("synth.brightness_range", format_double(c.brightness_range));
  s.set("synth.offset_range", format_double(c.offset_range));
  s.set("synth.walk", format_double(c.walk));
  s.set("synth.light_drift", format_double(c.light_drift));
  s.set("synth.seed", std::to_string(c.seed));
}

namespace {

long parse_freeze_interval(const Settings& s, long fallback) {
  const std::string v = s.get_string("pam.freeze_interval", "");
  if (v.empty()) return fallback;
  if (v == "inf" || v == "never") return -1;
  return s.get_int("pam.freeze_interval", fallback);
}

}  // namespace

TrainConfig train_config_from(const Settings& s) {
  TrainConfig c;
  c.backbone.channels = s.get_int_list("backbone.channels", c.backbone.channels);
  c.backbone.activation_slope = s.get_double("backbone.slope", c.backbone.activation_slope);
  const auto hidden = s.get_int_list("disc.hidden", {c.adversarial.discriminator.hidden1,
                                                     c.adversarial.discriminator.hidden2});
  if (hidden.size() != 2) throw ConfigError("disc.hidden: expected two channel counts");
  c.adversarial.discriminator.hidden1 = hidden[0];
  c.adversarial.discriminator.hidden2 = hidden[1];
  c.adversarial.discriminator.slope = s.get_double("disc.slope", c.adversarial.discriminator.slope);
  c.adversarial.variant = parse_variant(s.get_string("mdifl.variant", to_string(c.adversarial.variant)));
  c.adversarial.groups = parse_groups(s.get_string("mdifl.groups", ""));
  c.adversarial.parts = static_cast<int>(s.get_int("pam.k", c.adversarial.parts));
  c.adversarial.mask_mode = parse_mask_mode(s.get_string("pam.mode", to_string(c.adversarial.mask_mode)));
  c.adversarial.normalize_by_area = s.get_bool("pam.normalize_by_area", c.adversarial.normalize_by_area);
  c.pam_seed = static_cast<std::uint64_t>(s.get_int("pam.seed", static_cast<long>(c.pam_seed)));
  c.pam_freeze_interval = parse_freeze_interval(s, c.pam_freeze_interval);
  c.id_normalize = s.get_bool("train.id_normalize", c.id_normalize);
  c.lambda = s.get_double("train.lambda", c.lambda);
  c.learning_rate = s.get_double("train.lr", c.learning_rate);
  c.weight_decay = s.get_double("train.weight_decay", c.weight_decay);
  c.adam_beta1 = s.get_double("train.adam_beta1", c.adam_beta1);
  c.adam_beta2 = s.get_double("train.adam_beta2", c.adam_beta2);
  c.lr_decay = s.get_double("train.lr_decay", c.lr_decay);
  c.lr_decay_interval = static_cast<int>(s.get_int("train.lr_decay_interval", c.lr_decay_interval));
  c.batch_size = static_cast<int>(s.get_int("train.batch_size", c.batch_size));
  c.frames_per_sample = static_cast<int>(s.get_int("train.frames", c.frames_per_sample));
  c.steps = static_cast<int>(s.get_int("train.steps", c.steps));
  c.seed = static_cast<std::uint64_t>(s.get_int("train.seed", static_cast<long>(c.seed)));
  c.grl_coefficient = s.get_double("train.grl_coefficient", c.grl_coefficient);
  c.grl_warmup_steps = static_cast<int>(s.get_int("train.grl_warmup", c.grl_warmup_steps));
  c.checkpoint_interval = static_cast<int>(s.get_int("train.checkpoint_interval", c.checkpoint_interval));
  c.validate();
  return c;
}

void store(Settings& s, const TrainConfig& c) {
  s.set("backbone.channels", format_int_list(c.backbone.channels));
  s.set("backbone.slope", format_double(c.backbone.activation_slope));
  s.set("disc.hidden", format_int_list({c.adversarial.discriminator.hidden1, c.adversarial.discriminator.hidden2}));
  s.set("disc.slope", format_double(c.adversarial.discriminator.slope));
  s.set("mdifl.variant", to_string(c.adversarial.variant));
  s.set("mdifl.groups", format_groups(c.adversarial.groups));
  s.set("pam.k", std::to_string(c.adversarial.parts));
  s.set("pam.mode", to_string(c.adversarial.mask_mode));
  s.set("pam.normalize_by_area", c.adversarial.normalize_by_area ? "true" : "false");
  s.set("pam.seed", std::to_string(c.pam_seed));
  s.set("pam.freeze_interval", c.pam_freeze_interval < 0 ? "inf" : std::to_string(c.pam_freeze_interval));
  s.set("train.id_normalize", c.id_normalize ? "true" : "false");
  s.set("train.lambda", format_double(c.lambda));
  s.set("train.lr", format_double(c.learning_rate));
  s.set("train.weight_decay", format_double(c.weight_decay));
  s.set("train.adam_beta1", format_double(c.adam_beta1));
  s.set("train.adam_beta2", format_double(c.adam_beta2));
  s.set("train.lr_decay", format_double(c.lr_decay));
  s.set("train.lr_decay_interval", std::to_string(c.lr_decay_interval));
  s.set("train.batch_size", std::to_string(c.batch_size));
  s.set("train.frames", std::to_string(c.frames_per_sample));
  s.set("train.steps", std::to_string(c.steps));
  s.set("train.seed", std::to_string(c.seed));
  s.set("train.grl_coefficient", format_double(c.grl_coefficient));
  s.set("train.grl_warmup", std::to_string(c.grl_warmup_steps));
  s.set("train.checkpoint_interval", std::to_string(c.checkpoint_interval));
}

LoadOptions load_options_from(const Settings& s) {
  LoadOptions o;
  o.height = static_cast<int>(s.get_int("data.height", o.height));
  o.width = static_cast<int>(s.get_int("data.width", o.width));
  o.resize = s.get_bool("data.resize", o.resize);
  return o;
}

void store(Settings& s, const LoadOptions& o) {
  s.set("data.height", std::to_string(o.height));
  s.set("data.width", std::to_string(o.width));
  s.set("data.resize", o.resize ? "true" : "false");
}

std::string model_config_text(const ModelConfig& config) {
  Settings s;
  s.set("backbone.channels", format_int_list(config.backbone.channels));
  s.set("backbone.slope", format_double(config.backbone.activation_slope));
  s.set("backbone.input_channels", std::to_string(config.backbone.input_channels));
  const auto& adv = config.adversarial;
  s.set("disc.hidden", format_int_list({adv.discriminator.hidden1, adv.discriminator.hidden2}));
  s.set("disc.slope", format_double(adv.discriminator.slope));
  s.set("mdifl.variant", to_string(adv.variant));
  s.set("mdifl.groups", format_groups(adv.groups));
  s.set("pam.k", std::to_string(adv.parts));
  s.set("pam.mode", to_string(adv.mask_mode));
  s.set("pam.normalize_by_area", adv.normalize_by_area ? "true" : "false");
  s.set("model.classes", format_int_list(config.classes_per_camera));
  return s.to_text();
}

ModelConfig model_config_from_text(std::string_view text) {
  const Settings s = Settings::parse(text);
  ModelConfig c;
  c.backbone.channels = s.get_int_list("backbone.channels", c.backbone.channels);
  c.backbone.activation_slope = s.get_double("backbone.slope", c.backbone.activation_slope);
  c.backbone.input_channels = static_cast<int>(s.get_int("backbone.input_channels", c.backbone.input_channels));
  auto& adv = c.adversarial;
  const auto hidden = s.get_int_list("disc.hidden", {adv.discriminator.hidden1, adv.discriminator.hidden2});
  if (hidden.size() != 2) throw ConfigError("disc.hidden: expected two channel counts");
  adv.discriminator.hidden1 = hidden[0];
  adv.discriminator.hidden2 = hidden[1];
  adv.discriminator.slope = s.get_double("disc.slope", adv.discriminator.slope);
  adv.variant = parse_variant(s.get_string("mdifl.variant", to_string(adv.variant)));
  adv.groups = parse_groups(s.get_string("mdifl.groups", ""));
  adv.parts = static_cast<int>(s.get_int("pam.k", adv.parts));
  adv.mask_mode = parse_mask_mode(s.get_string("pam.mode", to_string(adv.mask_mode)));
  adv.normalize_by_area = s.get_bool("pam.normalize_by_area", adv.normalize_by_area);
  c.classes_per_camera = s.get_int_list("model.classes", {});
  return c;
}

}  // namespace camalign
