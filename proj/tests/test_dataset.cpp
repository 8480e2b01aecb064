#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "camalign/dataset.hpp"
#include "camalign/image_io.hpp"
#include "support/temp_dir.hpp"

namespace camalign {
namespace {

SynthConfig small_config(int cameras, int identities, int frames) {
  SynthConfig c;
  c.n_cameras = cameras;
  c.n_identities = identities;
  c.frames_per_tracklet = frames;
  c.overlap = 1.0;
  c.seed = 3;
  return c;
}

TEST(GenerateSynthetic, SharedIdentitiesGiveOneTrackletPerCamera) {
  const Dataset ds = generate_synthetic(small_config(2, 10, 4));
  EXPECT_EQ(ds.size(), 20u);
  EXPECT_EQ(ds.tracklets.indices_in_camera(0).size(), 10u);
  EXPECT_EQ(ds.tracklets.indices_in_camera(1).size(), 10u);
  for (const auto& t : ds.tracklets.tracklets) {
    EXPECT_EQ(t.frame_count(), 4u);
    EXPECT_EQ(t.pseudo_label, -1);
  }
}

TEST(GenerateSynthetic, SameConfigGivesIdenticalFrames) {
  const auto config = small_config(2, 5, 3);
  const Dataset a = generate_synthetic(config);
  const Dataset b = generate_synthetic(config);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t f = 0; f < a.tracklets.tracklets[i].frame_count(); ++f) {
      EXPECT_EQ(a.tracklets.tracklets[i].frame(f), b.tracklets.tracklets[i].frame(f));
    }
  }
  EXPECT_EQ(a.ground_truth(), b.ground_truth());
}

TEST(GenerateSynthetic, PresenceListIsHonored) {
  auto config = small_config(4, 2, 2);
  config.presence = {{0, 1, 3}, {0, 1, 2, 3}};
  const Dataset ds = generate_synthetic(config);
  std::map<std::string, std::set<int>> cameras;
  for (std::size_t i = 0; i < ds.size(); ++i) cameras[ds.ground_truth()[i]].insert(ds.tracklets.tracklets[i].camera);
  ASSERT_EQ(cameras.size(), 2u);
  std::vector<std::set<int>> seen;
  for (const auto& [id, cams] : cameras) seen.push_back(cams);
  std::sort(seen.begin(), seen.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });
  EXPECT_EQ(seen[0], (std::set<int>{0, 1, 3}));
  EXPECT_EQ(seen[1], (std::set<int>{0, 1, 2, 3}));
  EXPECT_EQ(ds.size(), 7u);
}

TEST(GenerateSynthetic, FramesAreUnitRangeAndEqualSized) {
  const Dataset ds = generate_synthetic(small_config(3, 4, 3));
  for (const auto& t : ds.tracklets.tracklets) {
    for (std::size_t f = 0; f < t.frame_count(); ++f) {
      const Image& img = t.frame(f);
      EXPECT_EQ(img.height(), 64);
      EXPECT_EQ(img.width(), 32);
      EXPECT_EQ(img.channels(), 3);
      for (double v : img.values()) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
}

TEST(GenerateSynthetic, RejectsInvalidConfig) {
  EXPECT_THROW(generate_synthetic(small_config(0, 4, 2)), ConfigError);
  EXPECT_THROW(generate_synthetic(small_config(1, 4, 2)), ConfigError);
  EXPECT_THROW(generate_synthetic(small_config(2, 0, 2)), ConfigError);
  EXPECT_THROW(generate_synthetic(small_config(2, 4, 0)), ConfigError);
}

TEST(GenerateSynthetic, EveryIdentityAppearsInAtLeastTwoCameras) {
  auto config = small_config(4, 20, 2);
  config.overlap = 0.2;
  const Dataset ds = generate_synthetic(config);
  std::map<std::string, std::set<int>> cams;
  for (std::size_t i = 0; i < ds.size(); ++i) cams[ds.ground_truth()[i]].insert(ds.tracklets.tracklets[i].camera);
  EXPECT_EQ(cams.size(), 20u);
  for (const auto& [id, set] : cams) EXPECT_GE(set.size(), 2u) << id;
}

TrackletSet unlabeled_camera(int tracklets, std::vector<int> groups = {}) {
  TrackletSet set;
  set.n_cameras = 1;
  for (int i = 0; i < tracklets; ++i) {
    Tracklet t;
    t.index = i;
    t.group = groups.empty() ? -1 : groups[i];
    t.frames = std::make_shared<std::vector<Image>>(2, Image(4, 4, 3, 0.5));
    set.tracklets.push_back(t);
  }
  return set;
}

std::vector<int> labels_of(const TrackletSet& set) {
  std::vector<int> out;
  for (const auto& t : set.tracklets) out.push_back(t.pseudo_label);
  return out;
}

TEST(AssignPseudoLabels, UngroupedLabelsArePermutation) {
  TrackletSet set = unlabeled_camera(3);
  assign_pseudo_labels(set, 5, false);
  auto labels = labels_of(set);
  std::sort(labels.begin(), labels.end());
  EXPECT_EQ(labels, (std::vector<int>{0, 1, 2}));
}

TEST(AssignPseudoLabels, GroupsShareLabel) {
  TrackletSet set = unlabeled_camera(4, {0, 0, 1, 2});
  assign_pseudo_labels(set, 5, true);
  const auto labels = labels_of(set);
  EXPECT_EQ(labels[0], labels[1]);
  EXPECT_EQ(std::set<int>(labels.begin(), labels.end()).size(), 3u);
  EXPECT_EQ(set.label_count(0), 3);
}

TEST(AssignPseudoLabels, OtherSeedRelabelsSamePartition) {
  TrackletSet a = unlabeled_camera(8, {0, 0, 1, 2, 3, 3, 4, 5});
  TrackletSet b = a;
  assign_pseudo_labels(a, 1, true);
  assign_pseudo_labels(b, 2, true);
  const auto la = labels_of(a);
  const auto lb = labels_of(b);
  EXPECT_NE(la, lb);
  for (std::size_t i = 0; i < la.size(); ++i) {
    for (std::size_t j = 0; j < la.size(); ++j) EXPECT_EQ(la[i] == la[j], lb[i] == lb[j]);
  }
}

TEST(AssignPseudoLabels, PartitionIsExhaustiveAndDisjointPerCamera) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto config = small_config(3, 12, 2);
    config.overlap = 0.6;
    config.seed = seed;
    Dataset ds = generate_synthetic(config);
    assign_pseudo_labels(ds.tracklets, seed, false);
    for (int c = 0; c < 3; ++c) {
      std::vector<int> labels;
      for (int i : ds.tracklets.indices_in_camera(c)) labels.push_back(ds.tracklets.tracklets[i].pseudo_label);
      std::sort(labels.begin(), labels.end());
      for (std::size_t k = 0; k < labels.size(); ++k) EXPECT_EQ(labels[k], static_cast<int>(k));
    }
  }
}

Dataset labeled(int cameras, int identities, int frames, std::uint64_t seed) {
  Dataset ds = generate_synthetic(small_config(cameras, identities, frames));
  assign_pseudo_labels(ds.tracklets, seed, false);
  return ds;
}

TEST(FragmentIds, ZeroRateIsIdentity) {
  const Dataset ds = labeled(2, 6, 4, 1);
  const Dataset out = fragment_ids(ds, 0.0, 9);
  ASSERT_EQ(out.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(out.tracklets.tracklets[i].pseudo_label, ds.tracklets.tracklets[i].pseudo_label);
    EXPECT_EQ(out.tracklets.tracklets[i].frames, ds.tracklets.tracklets[i].frames);
  }
}

TEST(FragmentIds, HalfRateSplitsHalfTheIdentities) {
  const Dataset ds = labeled(2, 10, 4, 1);
  const Dataset out = fragment_ids(ds, 50.0, 9);
  for (int c = 0; c < 2; ++c) {
    EXPECT_EQ(out.tracklets.indices_in_camera(c).size(), 15u);
    EXPECT_EQ(out.tracklets.label_count(c), 15);
  }
  // Every split leaves two half-length tracklets with distinct labels.
  int halves = 0;
  for (const auto& t : out.tracklets.tracklets) halves += t.frame_count() == 2 ? 1 : 0;
  EXPECT_EQ(halves, 20);
  EXPECT_EQ(out.ground_truth().size(), out.size());
}

TEST(FragmentIds, SplitHalvesKeepFrameOrder) {
  const Dataset ds = labeled(2, 4, 5, 1);
  const Dataset out = fragment_ids(ds, 100.0, 2);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& original = ds.tracklets.tracklets[i];
    const auto& head = out.tracklets.tracklets[i];
    ASSERT_EQ(head.frame_count(), 2u);
    EXPECT_EQ(head.pseudo_label, original.pseudo_label);
    EXPECT_EQ(head.frame(0), original.frame(0));
    EXPECT_EQ(head.frame(1), original.frame(1));
  }
  for (std::size_t i = ds.size(); i < out.size(); ++i) EXPECT_EQ(out.tracklets.tracklets[i].frame_count(), 3u);
}

TEST(FragmentIds, SupportsSweepRatesAndIsDeterministic) {
  const Dataset ds = labeled(2, 10, 4, 1);
  for (double rate : {0.0, 10.0, 30.0, 50.0}) {
    const Dataset a = fragment_ids(ds, rate, 4);
    const Dataset b = fragment_ids(ds, rate, 4);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(a.size(), ds.size() + 2 * static_cast<std::size_t>(rate / 10.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.tracklets.tracklets[i].pseudo_label, b.tracklets.tracklets[i].pseudo_label);
      EXPECT_EQ(a.tracklets.tracklets[i].frame_count(), b.tracklets.tracklets[i].frame_count());
    }
  }
}

TEST(FragmentIds, RejectsRateOutOfRange) {
  const Dataset ds = labeled(2, 4, 4, 1);
  EXPECT_THROW(fragment_ids(ds, -1.0, 1), ConfigError);
  EXPECT_THROW(fragment_ids(ds, 101.0, 1), ConfigError);
}

void write_frame(const std::filesystem::path& path, int height, int width) {
  std::filesystem::create_directories(path.parent_path());
  write_png(path, Image(height, width, 3, 0.25));
}

TEST(LoadDataset, ReadsMinimalLayoutWithoutIdentities) {
  testing::TempDir dir("load_minimal");
  write_frame(dir / "camera_1/tracklet_1/f0.png", 8, 4);
  write_frame(dir / "camera_1/tracklet_1/f1.png", 8, 4);
  LoadOptions options;
  options.resize = false;
  const Dataset ds = load_dataset(dir.path(), options);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.tracklets.tracklets[0].frame_count(), 2u);
  EXPECT_FALSE(ds.has_ground_truth());
  try {
    ds.ground_truth();
    FAIL() << "expected no_ground_truth";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetError::Kind::no_ground_truth);
    EXPECT_NE(std::string(e.what()).find("no ground truth"), std::string::npos);
  }
}

DatasetError::Kind load_error(const std::filesystem::path& root, std::string* message = nullptr) {
  try {
    load_dataset(root);
  } catch (const DatasetError& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "load succeeded";
  return DatasetError::Kind::bad_layout;
}

TEST(LoadDataset, MismatchedFrameSizesNameTheTracklet) {
  testing::TempDir dir("load_sizes");
  write_frame(dir / "camera_1/tracklet_1/f0.png", 8, 4);
  write_frame(dir / "camera_1/tracklet_2/f0.png", 8, 4);
  write_frame(dir / "camera_1/tracklet_2/f1.png", 6, 4);
  std::string message;
  EXPECT_EQ(load_error(dir.path(), &message), DatasetError::Kind::inconsistent_frame_size);
  EXPECT_NE(message.find("camera_1/tracklet_2"), std::string::npos) << message;
}

TEST(LoadDataset, DistinctErrorsForMissingFramesAndBadIdentities) {
  testing::TempDir empty("load_empty");
  std::filesystem::create_directories(empty / "camera_1/tracklet_1");
  EXPECT_EQ(load_error(empty.path()), DatasetError::Kind::missing_frames);

  testing::TempDir ids("load_ids");
  write_frame(ids / "camera_1/tracklet_1/f0.png", 8, 4);
  std::ofstream(ids / "identities.csv") << "camera,tracklet,identity\n1,x,p1\n";
  EXPECT_EQ(load_error(ids.path()), DatasetError::Kind::malformed_identities);

  testing::TempDir header("load_header");
  write_frame(header / "camera_1/tracklet_1/f0.png", 8, 4);
  std::ofstream(header / "identities.csv") << "cam,track,id\n1,1,p1\n";
  EXPECT_EQ(load_error(header.path()), DatasetError::Kind::malformed_identities);

  testing::TempDir layout("load_layout");
  write_frame(layout / "camera_2/tracklet_1/f0.png", 8, 4);
  EXPECT_EQ(load_error(layout.path()), DatasetError::Kind::bad_layout);
}

TEST(LoadDataset, SaveLoadRoundTrip) {
  testing::TempDir dir("roundtrip");
  Dataset ds = generate_synthetic(small_config(2, 3, 2));
  ds.tracklets.tracklets[0].group = 4;
  save_dataset(ds, dir.path());
  EXPECT_TRUE(std::filesystem::exists(dir / "camera_1/tracklet_1/frame_0000.png"));
  LoadOptions options;
  options.resize = false;
  const Dataset back = load_dataset(dir.path(), options);
  ASSERT_EQ(back.size(), ds.size());
  EXPECT_EQ(back.ground_truth(), ds.ground_truth());
  EXPECT_EQ(back.tracklets.tracklets[0].group, 4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& a = ds.tracklets.tracklets[i];
    const auto& b = back.tracklets.tracklets[i];
    EXPECT_EQ(a.camera, b.camera);
    EXPECT_EQ(a.index, b.index);
    ASSERT_EQ(a.frame_count(), b.frame_count());
    for (std::size_t f = 0; f < a.frame_count(); ++f) {
      const auto va = a.frame(f).values();
      const auto vb = b.frame(f).values();
      for (std::size_t k = 0; k < va.size(); ++k) ASSERT_NEAR(va[k], vb[k], 0.5 / 255.0 + 1e-12);
    }
  }
}

TEST(LoadDataset, ResizesToConfiguredShape) {
  testing::TempDir dir("resize");
  write_frame(dir / "camera_1/tracklet_1/f0.png", 20, 10);
  LoadOptions options;
  options.height = 16;
  options.width = 8;
  const Dataset ds = load_dataset(dir.path(), options);
  EXPECT_EQ(ds.tracklets.tracklets[0].frame(0).height(), 16);
  EXPECT_EQ(ds.tracklets.tracklets[0].frame(0).width(), 8);
}

}  // namespace
}  // namespace camalign
