#include "camalign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace camalign {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("train.lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train.adam_beta1 and train.adam_beta2 must lie in [0, 1)");
  }
  if (lr_decay_interval < 1) throw ConfigError("train.lr_decay_interval must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (frames_per_sample < 1) throw ConfigError("train.frames_per_sample must be >= 1");
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (grl_warmup_steps < 0) throw ConfigError("train.grl_warmup must be >= 0");
  if (uses_parts(adversarial.variant) && adversarial.parts < 1) throw ConfigError("pam.k must be >= 1");
}

ModelConfig TrainConfig::model_config(std::vector<int> classes_per_camera) const {
  return ModelConfig{backbone, adversarial, std::move(classes_per_camera)};
}

double learning_rate_at(const TrainConfig& config, int step) {
  return config.learning_rate * std::pow(config.lr_decay, step / config.lr_decay_interval);
}

double grl_coefficient_at(const TrainConfig& config, int step) {
  if (config.grl_warmup_steps <= 0) return config.grl_coefficient;
  const double p = std::min(1.0, static_cast<double>(step) / config.grl_warmup_steps);
  return config.grl_coefficient * (2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0);
}

DivergenceError::DivergenceError(int step, LossComponents loss)
    : Error("training diverged at step " + std::to_string(step) + ": id_loss=" +
            std::to_string(loss.id) + " adv_loss=" + std::to_string(loss.adv) +
            " composite=" + std::to_string(loss.composite)),
      step_(step),
      loss_(loss) {}

LossComponents process_sample(Model& model, const Tracklet& tracklet,
                              std::span<const Image* const> frames,
                              std::optional<PartMaskSet>& masks, bool recompute,
                              std::uint64_t mask_seed, const PassWeights& weights) {
  const auto& cfg = model.config();
  if (tracklet.pseudo_label < 0) throw Error("tracklet has no pseudo label");
  TrackletCache cache;
  const FeatureMap fm = model.backbone.extract_feature_map(frames, &cache);
  if (!std::all_of(fm.values().begin(), fm.values().end(), [](double v) { return std::isfinite(v); })) {
    // Caller reports the divergence.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
  const Embedding e = pool_to_embedding(fm);
  auto& classifier = model.classifiers.at(tracklet.camera);

  const auto& adv_cfg = cfg.adversarial;
  const bool adversarial = adv_cfg.variant != Variant::none;
  if (adversarial && model.adversarial.needs_masks() && (recompute || !masks)) {
    masks = build_part_masks(fm, adv_cfg.parts, adv_cfg.mask_mode, mask_seed);
  }
  const PartMaskSet* mask_ptr = masks ? &*masks : nullptr;

  LossComponents out;
  double id = 0.0;
  const auto grad_e = id_loss_backward(classifier, e, tracklet.pseudo_label, weights.id_normalize,
                                       weights.id, &id);
  FeatureMap grad_x = pool_backward(grad_e, fm.height(), fm.width());
  out.id = id;
  if (adversarial) {
    Tensor3 grad_adv(fm.height(), fm.width(), fm.channels());
    out.adv = model.adversarial.backward(fm, tracklet.camera, mask_ptr, weights.adv, grad_adv);
    GradientReversal(weights.grl).backward_into(grad_adv, grad_x);
  }
  model.backbone.backward(grad_x, cache);
  return out;
}

LossComponents total_loss(const Model& model, const Tracklet& tracklet, double lambda,
                          bool id_normalize, std::uint64_t mask_seed) {
  const FeatureMap fm = model.backbone.extract_feature_map(tracklet);
  const Embedding e = pool_to_embedding(fm);
  LossComponents out;
  out.id = id_loss(model.classifiers.at(tracklet.camera), e, tracklet.pseudo_label, id_normalize);
  const auto& adv_cfg = model.config().adversarial;
  if (adv_cfg.variant != Variant::none) {
    std::optional<PartMaskSet> masks;
    if (model.adversarial.needs_masks()) {
      masks = build_part_masks(fm, adv_cfg.parts, adv_cfg.mask_mode, mask_seed);
    }
    out.adv = model.adversarial.loss(fm, tracklet.camera, masks ? &*masks : nullptr);
  }
  out.composite = out.id + lambda * out.adv;
  return out;
}

std::vector<BatchItem> sample_batch(const TrackletSet& set, int batch_size, int frames_per_sample,
                                    int step, Rng& rng) {
  std::vector<std::vector<int>> by_camera(set.n_cameras);
  for (std::size_t i = 0; i < set.tracklets.size(); ++i) {
    by_camera[set.tracklets[i].camera].push_back(static_cast<int>(i));
  }
  std::vector<BatchItem> batch;
  batch.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const int camera = static_cast<int>((static_cast<long>(step) * batch_size + b) % set.n_cameras);
    const auto& pool = by_camera[camera];
    BatchItem item;
    item.tracklet = pool[rng.index(pool.size())];
    const int n = static_cast<int>(set.tracklets[item.tracklet].frame_count());
    std::vector<int> order(n);
    for (int t = 0; t < n; ++t) order[t] = t;
    const int take = std::min(n, frames_per_sample);
    for (int t = 0; t < take; ++t) std::swap(order[t], order[t + rng.index(n - t)]);
    item.frames.assign(order.begin(), order.begin() + take);
    std::sort(item.frames.begin(), item.frames.end());
    batch.push_back(std::move(item));
  }
  return batch;
}

namespace {

void check_training_set(const TrackletSet& set) {
  if (set.n_cameras < 1) throw ConfigError("training set has no cameras");
  for (int c = 0; c < set.n_cameras; ++c) {
    if (set.indices_in_camera(c).empty()) {
      throw ConfigError("camera " + std::to_string(c + 1) + " has no tracklets");
    }
  }
  for (const auto& t : set.tracklets) {
    if (t.pseudo_label < 0) throw ConfigError("training set has tracklets without pseudo labels");
    if (t.frame_count() == 0) throw ConfigError("training set has an empty tracklet");
  }
}

bool all_finite(std::span<Param* const> params) {
  for (const Param* p : params) {
    for (double g : p->grad) {
      if (!std::isfinite(g)) return false;
    }
  }
  return true;
}

std::vector<const Image*> frame_pointers(const Tracklet& t, const std::vector<int>& frames) {
  std::vector<const Image*> out;
  out.reserve(frames.size());
  for (int f : frames) out.push_back(&t.frame(f));
  return out;
}

}  // namespace

TrainResult train(const TrackletSet& set, const TrainConfig& config,
                  const CheckpointCallback& on_checkpoint) {
  config.validate();
  check_training_set(set);
  TrainResult result{Model(config.model_config(set.label_counts()), derive_seed(config.seed, "model")), {}};
  Model& model = result.model;
  const ParameterPartition partition = model.partition();
  const auto params = partition.all();
  AdamOptions adam_options;
  adam_options.weight_decay = config.weight_decay;
  adam_options.beta1 = config.adam_beta1;
  adam_options.beta2 = config.adam_beta2;
  Adam adam(params, adam_options);

  Rng batch_rng(derive_seed(config.seed, "batch"));
  const ReclusterPolicy policy(config.pam_freeze_interval);
  std::vector<std::optional<PartMaskSet>> mask_cache(set.tracklets.size());
  const double inv_batch = 1.0 / config.batch_size;
  result.log.reserve(config.steps);

  for (int step = 0; step < config.steps; ++step) {
    const double lr = learning_rate_at(config, step);
    PassWeights weights;
    weights.id = inv_batch;
    weights.adv = config.lambda * inv_batch;
    weights.grl = grl_coefficient_at(config, step);
    weights.id_normalize = config.id_normalize;

    for (Param* p : params) p->zero_grad();
    const auto batch = sample_batch(set, config.batch_size, config.frames_per_sample, step, batch_rng);
    const bool recompute = policy(step);
    LossComponents sum;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Tracklet& t = set.tracklets[batch[b].tracklet];
      const auto frames = frame_pointers(t, batch[b].frames);
      const std::uint64_t mask_seed =
          derive_seed(config.pam_seed, static_cast<std::uint64_t>(step) * config.batch_size + b);
      const auto terms = process_sample(model, t, frames, mask_cache[batch[b].tracklet], recompute,
                                        mask_seed, weights);
      sum.id += terms.id;
      sum.adv += terms.adv;
    }
    StepRecord record;
    record.step = step;
    record.lr = lr;
    record.loss.id = sum.id * inv_batch;
    record.loss.adv = sum.adv * inv_batch;
    record.loss.composite = record.loss.id + config.lambda * record.loss.adv;
    if (!std::isfinite(record.loss.composite) || !all_finite(params)) {
      throw DivergenceError(step, record.loss);
    }
    result.log.push_back(record);
    adam.step(lr);

    if (on_checkpoint && config.checkpoint_interval > 0 && (step + 1) % config.checkpoint_interval == 0) {
      on_checkpoint(step + 1, model);
    }
  }
  return result;
}

void write_metrics_log(const std::string& path, const std::vector<StepRecord>& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write metrics log " + path);
  out << "step,lr,id_loss,adv_loss,composite\n";
  out << std::setprecision(10);
  for (const auto& r : log) {
    out << r.step << ',' << r.lr << ',' << r.loss.id << ',' << r.loss.adv << ',' << r.loss.composite << '\n';
  }
}

namespace {

double batch_adv_loss(const Model& model, const TrackletSet& set, const std::vector<BatchItem>& batch,
                      const std::vector<std::optional<PartMaskSet>>& masks) {
  double sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tracklet& t = set.tracklets[batch[b].tracklet];
    const auto frames = frame_pointers(t, batch[b].frames);
    const FeatureMap fm = model.backbone.extract_feature_map(frames, nullptr);
    sum += model.adversarial.loss(fm, t.camera, masks[b] ? &*masks[b] : nullptr);
  }
  return sum / static_cast<double>(batch.size());
}

void normalized_descent(std::span<Param* const> params, double length) {
  double norm2 = 0.0;
  for (const Param* p : params) {
    for (double g : p->grad) norm2 += g * g;
  }
  if (norm2 == 0.0) return;
  const double s = length / std::sqrt(norm2);
  for (Param* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) p->value[i] -= s * p->grad[i];
  }
}

}  // namespace

SaddleProbeReport saddle_direction_probe(const Model& model, const TrackletSet& set,
                                         const TrainConfig& config, double step_length) {
  SaddleProbeReport report;
  if (config.lambda == 0.0 || model.config().adversarial.variant == Variant::none) {
    report.verdict = "no adversarial coupling";
    return report;
  }
  check_training_set(set);
  Rng rng(derive_seed(config.seed, "probe"));
  const auto& adv_cfg = model.config().adversarial;
  PassWeights weights;
  weights.id = 0.0;
  weights.adv = config.lambda / config.batch_size;
  weights.grl = config.grl_coefficient;
  weights.id_normalize = config.id_normalize;

  for (int repeat = 0; repeat < 3; ++repeat) {
    const auto batch = sample_batch(set, config.batch_size, config.frames_per_sample, repeat, rng);
    // Masks are frozen for the probe so only the parameter step moves the loss.
    std::vector<std::optional<PartMaskSet>> masks(batch.size());
    if (model.adversarial.needs_masks()) {
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Tracklet& t = set.tracklets[batch[b].tracklet];
        const FeatureMap fm = model.backbone.extract_feature_map(frame_pointers(t, batch[b].frames), nullptr);
        masks[b] = build_part_masks(fm, adv_cfg.parts, adv_cfg.mask_mode, derive_seed(config.pam_seed, b));
      }
    }
    const double before = batch_adv_loss(model, set, batch, masks);

    auto stepped = [&](bool discriminator_side) {
      Model copy = model;
      copy.zero_grad();
      auto slots = masks;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Tracklet& t = set.tracklets[batch[b].tracklet];
        process_sample(copy, t, frame_pointers(t, batch[b].frames), slots[b], false, 0, weights);
      }
      const auto part = copy.partition();
      normalized_descent(discriminator_side ? part.discriminator : part.feature, step_length);
      return batch_adv_loss(copy, set, batch, masks);
    };
    const double after_h = stepped(true);
    const double after_f = stepped(false);
    report.before.push_back(before);
    report.after_discriminator_step.push_back(after_h);
    report.after_feature_step.push_back(after_f);
    report.discriminator_decreases += after_h < before ? 1 : 0;
    report.feature_increases += after_f > before ? 1 : 0;
    report.feature_decreases += after_f < before ? 1 : 0;
  }
  if (report.discriminator_decreases >= 2 && report.feature_increases >= 2) {
    report.verdict = "adversarial";
  } else if (report.feature_decreases >= 2) {
    report.verdict = "cooperative";
  } else {
    report.verdict = "inconclusive";
  }
  return report;
}

}  // namespace camalign
