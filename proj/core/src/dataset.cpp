#include "camalign/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "camalign/image_io.hpp"
#include "camalign/rng.hpp"

namespace camalign {

namespace fs = std::filesystem;

std::vector<int> TrackletSet::indices_in_camera(int camera) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < tracklets.size(); ++i) {
    if (tracklets[i].camera == camera) out.push_back(static_cast<int>(i));
  }
  return out;
}

int TrackletSet::label_count(int camera) const {
  int count = 0;
  for (const auto& t : tracklets) {
    if (t.camera == camera) count = std::max(count, t.pseudo_label + 1);
  }
  return count;
}

std::vector<int> TrackletSet::label_counts() const {
  std::vector<int> out(n_cameras);
  for (int c = 0; c < n_cameras; ++c) out[c] = label_count(c);
  return out;
}

const std::vector<std::string>& Dataset::ground_truth() const {
  if (!identities) {
    throw DatasetError(DatasetError::Kind::no_ground_truth,
                       "no ground truth: dataset has no identities table");
  }
  return *identities;
}

void SynthConfig::validate() const {
  if (n_cameras < 2) throw ConfigError("synth: need at least 2 cameras, got " + std::to_string(n_cameras));
  if (n_identities < 1) throw ConfigError("synth: need at least 1 identity, got " + std::to_string(n_identities));
  if (frames_per_tracklet < 1) throw ConfigError("synth: frames_per_tracklet must be >= 1");
  if (tracklets_per_identity < 1) throw ConfigError("synth: tracklets_per_identity must be >= 1");
  if (height < 8 || width < 4) throw ConfigError("synth: image must be at least 8x4");
  if (overlap < 0.0 || overlap > 1.0) throw ConfigError("synth: overlap must lie in [0, 1]");
  if (walk < 0.0 || light_drift < 0.0 || light_drift >= 2.0) {
    throw ConfigError("synth: walk must be >= 0 and light_drift in [0, 2)");
  }
  if (!presence.empty()) {
    if (static_cast<int>(presence.size()) != n_identities) {
      throw ConfigError("synth: presence lists " + std::to_string(presence.size()) +
                        " identities, expected " + std::to_string(n_identities));
    }
    for (const auto& cams : presence) {
      for (int c : cams) {
        if (c < 0 || c >= n_cameras) throw ConfigError("synth: presence camera out of range");
      }
    }
  }
  if (!shifts.empty() && static_cast<int>(shifts.size()) != n_cameras) {
    throw ConfigError("synth: shifts must list one entry per camera");
  }
}

std::vector<CameraShift> camera_shifts(const SynthConfig& config) {
  if (!config.shifts.empty()) return config.shifts;
  std::vector<CameraShift> out(config.n_cameras);
  for (int c = 0; c < config.n_cameras; ++c) {
    Rng rng(derive_seed(derive_seed(config.seed, "camera"), static_cast<std::uint64_t>(c)));
    CameraShift& s = out[c];
    s.hue_degrees = rng.uniform(-config.hue_range, config.hue_range);
    s.brightness = rng.uniform(1.0 - config.brightness_range, 1.0 + config.brightness_range);
    s.horizontal_offset = rng.uniform(-config.offset_range, config.offset_range);
    for (double& v : s.background) v = rng.uniform(0.1, 0.9);
  }
  return out;
}

namespace {

struct Appearance {
  std::array<std::array<double, 3>, 3> colors;  // head, torso, legs
  double body_width = 0.55;                     // fraction of image width
  double head_fraction = 0.2;
  double torso_fraction = 0.4;
};

Appearance identity_appearance(std::uint64_t seed, int identity) {
  Rng rng(derive_seed(derive_seed(seed, "identity"), static_cast<std::uint64_t>(identity)));
  Appearance a;
  for (auto& color : a.colors) {
    for (double& v : color) v = rng.uniform(0.05, 0.95);
  }
  a.body_width = rng.uniform(0.45, 0.7);
  a.head_fraction = rng.uniform(0.17, 0.23);
  a.torso_fraction = rng.uniform(0.35, 0.45);
  return a;
}

std::vector<int> identity_cameras(const SynthConfig& config, int local_identity) {
  if (!config.presence.empty()) {
    std::vector<int> cams = config.presence[local_identity];
    std::sort(cams.begin(), cams.end());
    cams.erase(std::unique(cams.begin(), cams.end()), cams.end());
    return cams;
  }
  const int identity = config.first_identity + local_identity;
  Rng rng(derive_seed(derive_seed(config.seed, "presence"), static_cast<std::uint64_t>(identity)));
  std::vector<bool> present(config.n_cameras);
  int count = 0;
  for (int c = 0; c < config.n_cameras; ++c) {
    present[c] = rng.uniform() < config.overlap;
    count += present[c] ? 1 : 0;
  }
  while (count < 2) {
    const int c = static_cast<int>(rng.index(config.n_cameras));
    if (!present[c]) {
      present[c] = true;
      ++count;
    }
  }
  std::vector<int> cams;
  for (int c = 0; c < config.n_cameras; ++c) {
    if (present[c]) cams.push_back(c);
  }
  return cams;
}

std::array<double, 3> rotate_hue(const std::array<double, 3>& rgb, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double cos_a = std::cos(a);
  const double sin_a = std::sin(a);
  const double k = (1.0 - cos_a) / 3.0;
  const double s = std::sqrt(1.0 / 3.0) * sin_a;
  const double m0 = cos_a + k;
  const double m1 = k - s;
  const double m2 = k + s;
  return {m0 * rgb[0] + m1 * rgb[1] + m2 * rgb[2],
          m2 * rgb[0] + m0 * rgb[1] + m1 * rgb[2],
          m1 * rgb[0] + m2 * rgb[1] + m0 * rgb[2]};
}

Image render_frame(const SynthConfig& config, const Appearance& look, const CameraShift& shift,
                   int camera, double track_dx, double light, Rng& rng) {
  const int h = config.height;
  const int w = config.width;
  const double dx = static_cast<double>(rng.index(3)) - 1.0 + track_dx;
  const double dy = static_cast<double>(rng.index(3)) - 1.0;

  std::array<std::array<double, 3>, 3> colors;
  for (int b = 0; b < 3; ++b) {
    auto rotated = rotate_hue(look.colors[b], shift.hue_degrees);
    for (int ch = 0; ch < 3; ++ch) colors[b][ch] = rotated[ch] * shift.brightness * light;
  }

  const double top = 0.06 * h + dy;
  const double bottom = 0.96 * h + dy;
  const double span = bottom - top;
  const double head_end = top + look.head_fraction * span;
  const double torso_end = head_end + look.torso_fraction * span;
  const double center = 0.5 * w + shift.horizontal_offset + dx;
  const double body_half = 0.5 * look.body_width * w;
  const double head_half = 0.55 * body_half;
  const double phase = 0.7 * camera;

  Image img(h, w, 3);
  for (int y = 0; y < h; ++y) {
    const double py = y + 0.5;
    const double texture = 1.0 + 0.08 * std::sin(2.0 * std::numbers::pi * py / 16.0 + phase);
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5;
      int band = -1;
      if (py >= top && py < bottom) {
        const double half = py < head_end ? head_half : body_half;
        if (std::abs(px - center) <= half) band = py < head_end ? 0 : (py < torso_end ? 1 : 2);
      }
      for (int ch = 0; ch < 3; ++ch) {
        double v = band >= 0 ? colors[band][ch] : shift.background[ch] * texture * shift.brightness * light;
        v += config.pixel_noise * rng.normal();
        img(y, x, ch) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

std::string identity_name(int identity) {
  std::string digits = std::to_string(identity);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "p" + digits;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  const auto shifts = camera_shifts(config);

  // (identity, repeat) entries per camera, then shuffled so tracklet order
  // carries no cross-camera information.
  std::vector<std::vector<std::pair<int, int>>> per_camera(config.n_cameras);
  for (int i = 0; i < config.n_identities; ++i) {
    for (int c : identity_cameras(config, i)) {
      for (int r = 0; r < config.tracklets_per_identity; ++r) per_camera[c].emplace_back(i, r);
    }
  }

  Dataset ds;
  ds.tracklets.n_cameras = config.n_cameras;
  ds.identities.emplace();
  for (int c = 0; c < config.n_cameras; ++c) {
    auto& entries = per_camera[c];
    Rng order(derive_seed(derive_seed(config.seed, "order"), static_cast<std::uint64_t>(c)));
    order.shuffle(std::span(entries));

    std::map<int, int> group_of_identity;
    for (const auto& [local, repeat] : entries) {
      group_of_identity.emplace(local, static_cast<int>(group_of_identity.size()));
    }

    for (std::size_t j = 0; j < entries.size(); ++j) {
      const auto [local, repeat] = entries[j];
      const int identity = config.first_identity + local;
      const Appearance look = identity_appearance(config.seed, identity);
      const std::uint64_t key = (static_cast<std::uint64_t>(identity) << 24) ^
                                (static_cast<std::uint64_t>(c) << 12) ^
                                static_cast<std::uint64_t>(repeat);
      Rng rng(derive_seed(derive_seed(config.seed, "frames"), key));
      const double track_dx = rng.uniform(-1.5, 1.5);
      const double walk_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double light_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      auto frames = std::make_shared<std::vector<Image>>();
      frames->reserve(config.frames_per_tracklet);
      for (int t = 0; t < config.frames_per_tracklet; ++t) {
        // Progress through the tracklet in [-0.5, 0.5].
        const double u = config.frames_per_tracklet > 1
                             ? static_cast<double>(t) / (config.frames_per_tracklet - 1) - 0.5
                             : 0.0;
        const double dx = track_dx + walk_sign * config.walk * u;
        const double light = 1.0 + light_sign * config.light_drift * u;
        frames->push_back(render_frame(config, look, shifts[c], c, dx, light, rng));
      }
      Tracklet tr;
      tr.camera = c;
      tr.index = static_cast<int>(j);
      tr.group = config.tracklets_per_identity > 1 ? group_of_identity.at(local) : -1;
      tr.frames = std::move(frames);
      ds.tracklets.tracklets.push_back(std::move(tr));
      ds.identities->push_back(identity_name(identity));
    }
  }
  return ds;
}

void assign_pseudo_labels(TrackletSet& set, std::uint64_t seed, bool use_groups) {
  for (int c = 0; c < set.n_cameras; ++c) {
    const auto members = set.indices_in_camera(c);
    // Each unit (a tracklet, or a group of tracklets) receives one label.
    std::vector<int> unit_of(members.size());
    std::map<int, int> unit_of_group;
    int units = 0;
    for (std::size_t m = 0; m < members.size(); ++m) {
      const int g = set.tracklets[members[m]].group;
      if (use_groups && g >= 0) {
        auto [it, inserted] = unit_of_group.emplace(g, units);
        if (inserted) ++units;
        unit_of[m] = it->second;
      } else {
        unit_of[m] = units++;
      }
    }
    std::vector<int> labels(units);
    for (int u = 0; u < units; ++u) labels[u] = u;
    Rng rng(derive_seed(derive_seed(seed, "pseudo_labels"), static_cast<std::uint64_t>(c)));
    rng.shuffle(std::span(labels));
    for (std::size_t m = 0; m < members.size(); ++m) {
      set.tracklets[members[m]].pseudo_label = labels[unit_of[m]];
    }
  }
}

Dataset fragment_ids(const Dataset& dataset, double rate_percent, std::uint64_t seed) {
  if (!(rate_percent >= 0.0 && rate_percent <= 100.0)) {
    throw ConfigError("fragment rate must lie in [0, 100], got " + std::to_string(rate_percent));
  }
  Dataset out = dataset;
  auto& tracklets = out.tracklets.tracklets;
  for (const auto& t : tracklets) {
    if (t.pseudo_label < 0) throw Error("fragment_ids requires assigned pseudo labels");
  }
  Rng rng(derive_seed(seed, "fragment"));
  for (int c = 0; c < out.tracklets.n_cameras; ++c) {
    const int n_labels = out.tracklets.label_count(c);
    const auto splits = static_cast<int>(std::llround(rate_percent * n_labels / 100.0));
    std::vector<int> labels(n_labels);
    for (int l = 0; l < n_labels; ++l) labels[l] = l;
    rng.shuffle(std::span(labels));
    labels.resize(splits);
    std::sort(labels.begin(), labels.end());

    int next_label = n_labels;
    int next_index = static_cast<int>(out.tracklets.indices_in_camera(c).size());
    for (int label : labels) {
      std::vector<int> candidates;
      for (std::size_t i = 0; i < tracklets.size(); ++i) {
        if (tracklets[i].camera == c && tracklets[i].pseudo_label == label) {
          candidates.push_back(static_cast<int>(i));
        }
      }
      const int pick = candidates[rng.index(candidates.size())];
      const auto& frames = *tracklets[pick].frames;
      if (frames.size() < 2) {
        throw Error("fragment_ids: tracklet needs at least 2 frames to split");
      }
      const auto mid = static_cast<std::ptrdiff_t>(frames.size() / 2);
      auto first = std::make_shared<std::vector<Image>>(frames.begin(), frames.begin() + mid);
      auto second = std::make_shared<std::vector<Image>>(frames.begin() + mid, frames.end());

      Tracklet tail = tracklets[pick];
      tail.index = next_index++;
      tail.pseudo_label = next_label++;
      tail.group = -1;
      tail.frames = std::move(second);
      tracklets[pick].frames = std::move(first);
      tracklets.push_back(std::move(tail));
      if (out.identities) out.identities->push_back((*out.identities)[pick]);
    }
  }
  return out;
}

namespace {

std::optional<int> numbered_entry(const std::string& name, const std::string& prefix) {
  if (name.rfind(prefix, 0) != 0) return std::nullopt;
  const std::string digits = name.substr(prefix.size());
  int value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
    return std::nullopt;
  }
  return value;
}

// Returns subdirectories `prefix<n>` sorted by n; requires n = 1..N.
std::vector<fs::path> numbered_dirs(const fs::path& dir, const std::string& prefix) {
  std::map<int, fs::path> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    if (auto n = numbered_entry(entry.path().filename().string(), prefix)) {
      found.emplace(*n, entry.path());
    }
  }
  std::vector<fs::path> out;
  int expected = 1;
  for (const auto& [n, path] : found) {
    if (n != expected) {
      throw DatasetError(DatasetError::Kind::bad_layout,
                         dir.string() + ": expected " + prefix + std::to_string(expected) +
                             ", found " + prefix + std::to_string(n));
    }
    out.push_back(path);
    ++expected;
  }
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

// Reads a camera,tracklet,<value> table keyed by (0-based camera, 0-based tracklet).
std::map<std::pair<int, int>, std::string> read_tracklet_table(const fs::path& path,
                                                               const std::string& value_column,
                                                               DatasetError::Kind kind) {
  std::ifstream in(path);
  if (!in) throw DatasetError(kind, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      split_csv(trim(line)) != std::vector<std::string>{"camera", "tracklet", value_column}) {
    throw DatasetError(kind, path.string() + ": header must be camera,tracklet," + value_column);
  }
  std::map<std::pair<int, int>, std::string> table;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3 || fields[2].empty()) {
      throw DatasetError(kind, where + ": expected 3 fields");
    }
    int cam = 0;
    int trk = 0;
    auto r1 = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), cam);
    auto r2 = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), trk);
    if (r1.ec != std::errc() || r2.ec != std::errc() || cam < 1 || trk < 1) {
      throw DatasetError(kind, where + ": camera and tracklet must be positive integers");
    }
    if (!table.emplace(std::make_pair(cam - 1, trk - 1), fields[2]).second) {
      throw DatasetError(kind, where + ": duplicate entry");
    }
  }
  return table;
}

std::string tracklet_label(int camera, int index) {
  return "camera_" + std::to_string(camera + 1) + "/tracklet_" + std::to_string(index + 1);
}

}  // namespace

Dataset load_dataset(const fs::path& root, const LoadOptions& options) {
  if (!fs::is_directory(root)) {
    throw DatasetError(DatasetError::Kind::bad_layout, "dataset root " + root.string() + " is not a directory");
  }
  const auto cameras = numbered_dirs(root, "camera_");
  if (cameras.empty()) {
    throw DatasetError(DatasetError::Kind::bad_layout, root.string() + ": no camera_<i> directories");
  }
  Dataset ds;
  ds.tracklets.n_cameras = static_cast<int>(cameras.size());
  for (int c = 0; c < ds.tracklets.n_cameras; ++c) {
    const auto tracks = numbered_dirs(cameras[c], "tracklet_");
    for (int j = 0; j < static_cast<int>(tracks.size()); ++j) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(tracks[j])) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) {
        throw DatasetError(DatasetError::Kind::missing_frames,
                           "missing frames: " + tracklet_label(c, j) + " has no .png files");
      }
      auto frames = std::make_shared<std::vector<Image>>();
      for (const auto& f : files) {
        Image img = read_png(f);
        if (!frames->empty() && !img.same_shape(frames->front())) {
          throw DatasetError(DatasetError::Kind::inconsistent_frame_size,
                             "inconsistent frame sizes in " + tracklet_label(c, j) + ": " +
                                 f.filename().string());
        }
        frames->push_back(std::move(img));
      }
      if (options.resize) {
        for (auto& img : *frames) img = resize_bilinear(img, options.height, options.width);
      }
      Tracklet tr;
      tr.camera = c;
      tr.index = j;
      tr.frames = std::move(frames);
      ds.tracklets.tracklets.push_back(std::move(tr));
    }
  }

  std::map<std::pair<int, int>, std::size_t> position;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& t = ds.tracklets.tracklets[i];
    position.emplace(std::make_pair(t.camera, t.index), i);
  }

  const auto ids_path = root / "identities.csv";
  if (fs::exists(ids_path)) {
    const auto kind = DatasetError::Kind::malformed_identities;
    auto table = read_tracklet_table(ids_path, "identity", kind);
    std::vector<std::string> ids(ds.size());
    for (const auto& [key, value] : table) {
      auto it = position.find(key);
      if (it == position.end()) {
        throw DatasetError(kind, ids_path.string() + ": unknown tracklet " +
                                     tracklet_label(key.first, key.second));
      }
      ids[it->second] = value;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ids[i].empty()) {
        const auto& t = ds.tracklets.tracklets[i];
        throw DatasetError(kind, ids_path.string() + ": no identity for " + tracklet_label(t.camera, t.index));
      }
    }
    ds.identities = std::move(ids);
  }

  const auto groups_path = root / "groups.csv";
  if (fs::exists(groups_path)) {
    const auto kind = DatasetError::Kind::malformed_groups;
    auto table = read_tracklet_table(groups_path, "group", kind);
    for (const auto& [key, value] : table) {
      auto it = position.find(key);
      int g = 0;
      auto r = std::from_chars(value.data(), value.data() + value.size(), g);
      if (it == position.end() || r.ec != std::errc() || g < 1) {
        throw DatasetError(kind, groups_path.string() + ": bad entry for " +
                                     tracklet_label(key.first, key.second));
      }
      ds.tracklets.tracklets[it->second].group = g - 1;
    }
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& root) {
  fs::create_directories(root);
  bool any_group = false;
  for (const auto& t : dataset.tracklets.tracklets) {
    const fs::path dir = root / tracklet_label(t.camera, t.index);
    fs::create_directories(dir);
    for (std::size_t f = 0; f < t.frame_count(); ++f) {
      std::string digits = std::to_string(f);
      if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
      write_png(dir / ("frame_" + digits + ".png"), t.frame(f));
    }
    any_group = any_group || t.group >= 0;
  }
  if (dataset.identities) {
    std::ofstream out(root / "identities.csv");
    out << "camera,tracklet,identity\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const auto& t = dataset.tracklets.tracklets[i];
      out << t.camera + 1 << ',' << t.index + 1 << ',' << (*dataset.identities)[i] << '\n';
    }
  }
  if (any_group) {
    std::ofstream out(root / "groups.csv");
    out << "camera,tracklet,group\n";
    for (const auto& t : dataset.tracklets.tracklets) {
      if (t.group >= 0) out << t.camera + 1 << ',' << t.index + 1 << ',' << t.group + 1 << '\n';
    }
  }
}

}  // namespace camalign
