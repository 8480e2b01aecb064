#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "camalign/error.hpp"
#include "camalign/tensor.hpp"

namespace camalign {

class DatasetError : public Error {
 public:
  enum class Kind {
    bad_layout,
    missing_frames,
    inconsistent_frame_size,
    malformed_identities,
    malformed_groups,
    no_ground_truth,
  };
  DatasetError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// One person track seen by one camera. Cameras, tracklet indices and pseudo
/// labels are 0-based here; the on-disk layout is 1-based.
struct Tracklet {
  int camera = 0;
  int index = 0;
  /// Within-camera pseudo label; -1 until assign_pseudo_labels runs.
  int pseudo_label = -1;
  /// Optional within-camera grouping supplied by the tracker (-1 when absent).
  int group = -1;
  std::shared_ptr<const std::vector<Image>> frames;

  std::size_t frame_count() const { return frames ? frames->size() : 0; }
  const Image& frame(std::size_t t) const { return (*frames)[t]; }
};

/// The training view of a dataset: tracklets without identities.
struct TrackletSet {
  int n_cameras = 0;
  std::vector<Tracklet> tracklets;

  std::vector<int> indices_in_camera(int camera) const;
  /// Number of distinct pseudo labels used in `camera` (max label + 1).
  int label_count(int camera) const;
  std::vector<int> label_counts() const;
};

/// Tracklets plus the hidden identity table used only by evaluation.
struct Dataset {
  TrackletSet tracklets;
  /// Parallel to tracklets.tracklets when present.
  std::optional<std::vector<std::string>> identities;

  bool has_ground_truth() const { return identities.has_value(); }
  /// Throws DatasetError(no_ground_truth) when the table is absent.
  const std::vector<std::string>& ground_truth() const;
  std::size_t size() const { return tracklets.tracklets.size(); }
};

struct CameraShift {
  double hue_degrees = 0.0;
  double brightness = 1.0;
  double horizontal_offset = 0.0;  // pixels
  std::array<double, 3> background{0.5, 0.5, 0.5};
};

struct SynthConfig {
  int n_cameras = 4;
  int n_identities = 40;
  /// Identities are numbered from here; a disjoint range yields a test split.
  int first_identity = 0;
  /// Probability that an identity appears in a given camera. Every identity is
  /// placed in at least two cameras.
  double overlap = 0.75;
  /// Optional explicit camera lists (0-based) per identity; overrides overlap.
  std::vector<std::vector<int>> presence;
  int frames_per_tracklet = 8;
  int tracklets_per_identity = 1;
  int height = 64;
  int width = 32;
  double pixel_noise = 0.03;
  /// Explicit per-camera shifts; derived from the seed when empty.
  std::vector<CameraShift> shifts;
  double hue_range = 10.0;
  double brightness_range = 0.1;
  double offset_range = 3.0;
  /// Horizontal distance (pixels) a figure walks over one tracklet.
  double walk = 6.0;
  /// Relative brightness change from the first to the last frame of a tracklet.
  double light_drift = 0.4;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Per-camera shifts used by generate_synthetic for this config.
std::vector<CameraShift> camera_shifts(const SynthConfig& config);

/// Renders three-band figures (head, torso, legs) under per-camera shifts.
/// Pure function of the config. Pseudo labels are left unassigned.
Dataset generate_synthetic(const SynthConfig& config);

/// Random within-camera labelling. With use_groups, tracklets sharing a
/// group id share a label.
void assign_pseudo_labels(TrackletSet& set, std::uint64_t seed, bool use_groups);

/// Splits one tracklet of rate% of the pseudo identities in every camera at
/// its temporal midpoint. The first half keeps its label and the second half
/// gets a fresh one. Requires assigned labels.
Dataset fragment_ids(const Dataset& dataset, double rate_percent, std::uint64_t seed);

struct LoadOptions {
  int height = 224;
  int width = 112;
  bool resize = true;
};

/// Reads root/camera_<i>/tracklet_<j>/*.png plus optional identities.csv
/// (camera,tracklet,identity) and groups.csv (camera,tracklet,group).
Dataset load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});

/// Writes the same layout load_dataset reads.
void save_dataset(const Dataset& dataset, const std::filesystem::path& root);

}  // namespace camalign
