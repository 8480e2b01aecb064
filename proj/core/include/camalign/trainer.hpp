#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camalign/dataset.hpp"
#include "camalign/model.hpp"

namespace camalign {

struct TrainConfig {
  BackboneConfig backbone;
  AdversarialConfig adversarial;
  /// Keep the 1/N_{T_i} factor of the identity loss.
  bool id_normalize = true;
  double lambda = 1.0;
  double learning_rate = 0.00035;
  double weight_decay = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double lr_decay = 0.1;
  int lr_decay_interval = 200;
  int batch_size = 8;
  int frames_per_sample = 4;
  int steps = 600;
  std::uint64_t seed = 1;
  double grl_coefficient = 1.0;
  /// Ramp the reversal coefficient over this many steps (0 = off).
  int grl_warmup_steps = 0;
  /// See ReclusterPolicy.
  long pam_freeze_interval = 0;
  std::uint64_t pam_seed = 7;
  int checkpoint_interval = 0;

  void validate() const;
  ModelConfig model_config(std::vector<int> classes_per_camera) const;
};

double learning_rate_at(const TrainConfig& config, int step);
double grl_coefficient_at(const TrainConfig& config, int step);

struct LossComponents {
  double id = 0.0;
  double adv = 0.0;
  /// id + lambda * adv: the quantity one backward pass minimises once the
  /// reversal layer flips the adversarial gradient for theta_f.
  double composite = 0.0;
};

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  LossComponents loss;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int step, LossComponents loss);
  int step() const { return step_; }
  const LossComponents& loss() const { return loss_; }

 private:
  int step_;
  LossComponents loss_;
};

/// Per-sample weights for one forward/backward pass.
struct PassWeights {
  double id = 1.0;
  double adv = 1.0;
  double grl = 1.0;
  bool id_normalize = true;
};

/// Forward and backward pass of one tracklet through every head; gradients
/// accumulate into `model`. Masks are rebuilt from this pass's feature map
/// when `recompute` is set or the slot is empty. Returns NaN components when
/// the feature map is non-finite.
LossComponents process_sample(Model& model, const Tracklet& tracklet,
                              std::span<const Image* const> frames,
                              std::optional<PartMaskSet>& masks, bool recompute,
                              std::uint64_t mask_seed, const PassWeights& weights);

/// Loss of one tracklet (all frames) without touching gradients.
LossComponents total_loss(const Model& model, const Tracklet& tracklet, double lambda,
                          bool id_normalize, std::uint64_t mask_seed = 0);

struct BatchItem {
  int tracklet = 0;
  std::vector<int> frames;
};

/// Round-robin over cameras, uniform tracklet within the camera, distinct
/// random frames.
std::vector<BatchItem> sample_batch(const TrackletSet& set, int batch_size, int frames_per_sample,
                                    int step, Rng& rng);

struct TrainResult {
  Model model;
  std::vector<StepRecord> log;
};

using CheckpointCallback = std::function<void(int step, const Model& model)>;

/// Runs the GRL min-max loop: every step performs one backward pass over
/// id + lambda * adv and one optimizer update of theta_f, theta_g and theta_h.
/// Deterministic for a given (set, config).
TrainResult train(const TrackletSet& set, const TrainConfig& config,
                  const CheckpointCallback& on_checkpoint = {});

/// Writes step,lr,id_loss,adv_loss,composite.
void write_metrics_log(const std::string& path, const std::vector<StepRecord>& log);

struct SaddleProbeReport {
  std::string verdict;  // adversarial | cooperative | no adversarial coupling | inconclusive
  std::vector<double> before;
  std::vector<double> after_discriminator_step;
  std::vector<double> after_feature_step;
  int discriminator_decreases = 0;
  int feature_increases = 0;
  int feature_decreases = 0;
};

/// On three fixed batches, measures the adversarial loss before and after a
/// small normalized gradient step on theta_h alone and on theta_f alone
/// (through the reversal layer with `config.grl_coefficient`).
SaddleProbeReport saddle_direction_probe(const Model& model, const TrackletSet& set,
                                         const TrainConfig& config, double step_length = 1e-3);

}  // namespace camalign
