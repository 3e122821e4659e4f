// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// AdamW training loop, checkpoints and the finite-difference gradient check.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "obiformer/data.hpp"
#include "obiformer/loss.hpp"
#include "obiformer/model.hpp"

namespace obiformer {

struct TrainConfig {
  double learning_rate = 2e-4;
  double weight_decay = 0.01;
  int batch_size = 10;
  int epochs = 300;
  LossWeights loss_weights;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  int validation_every = 1;  // epochs; 0 disables validation
  std::string checkpoint_dir;
  bool augment = true;
  bool cosine_schedule = false;
  double clip_norm = 0.0;    // global gradient norm; 0 disables clipping
  long max_steps = 0;        // stop early after this many steps; 0 = no limit
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
  void write(KeyValues& kv) const;
  static TrainConfig read(const KeyValues& kv, const TrainConfig& defaults);
  static TrainConfig read(const KeyValues& kv) { return read(kv, TrainConfig{}); }
};

/// True for parameters that receive decoupled weight decay: conv and
/// projection kernels (rank 4). Biases, norm affine and temperatures do not.
bool receives_weight_decay(const std::string& name, const Tensor<float>& value);

struct AdamState {
  ParameterStore m;
  ParameterStore v;
  long step = 0;

  static AdamState zeros_like(const ParameterStore& params);
  bool operator==(const AdamState&) const = default;
};

/// One AdamW update (PyTorch semantics: decay p -= lr·wd·p before the Adam step).
void adamw_step(ParameterStore& params, const ParameterStore& grads, AdamState& state, double lr,
                const TrainConfig& cfg);

/// Scales `grads` in place so their global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(ParameterStore& grads, double max_norm);

/// Learning rate for a 0-based step under cfg's schedule.
double learning_rate_at(const TrainConfig& cfg, long step, long total_steps);

struct TrainLog {
  struct Step {
    long step;
    int epoch;
    double loss;
    double lr;
    double wall_ms;
  };
  struct Validation {
    long step;
    int epoch;
    double psnr;
    double ssim;
  };
  std::vector<Step> steps;
  std::vector<Validation> validations;
  KeyValues config;

  /// step,epoch,loss,lr,wall_ms
  void write_csv(const std::string& path) const;
  /// step,epoch,psnr,ssim
  void write_validation_csv(const std::string& path) const;
  static TrainLog read_csv(const std::string& path);
};

/// Model plus optimizer state at a step boundary.
struct TrainState {
  ModelState model;
  AdamState optimizer;
};

struct TrainResult {
  TrainState last;
  ModelState best;  // best validation PSNR; equals last when validation is off
  double best_psnr = 0.0;
  long best_step = -1;
  TrainLog log;
};

/// Mini-batch tensors assembled from records.
struct Batch {
  Tensor<float> noisy, clean, skeleton;
};
Batch make_batch(const std::vector<const SampleRecord*>& records);

/// Runs AdamW from `start` until cfg.epochs (or cfg.max_steps) complete.
/// Data order and augmentation are pure functions of (seed, step), so a run
/// resumed from a checkpoint reproduces the uninterrupted run exactly.
/// `on_step`, if set, is called after every step.
TrainResult train(TrainState start, const Dataset& data, const TrainConfig& cfg, const FeatureExtractor* fx,
                  const std::function<void(const TrainLog::Step&)>& on_step = {});

/// Convenience: fresh optimizer state.
TrainResult train(const ModelState& init, const Dataset& data, const TrainConfig& cfg, const FeatureExtractor* fx);

// ---- Checkpoints -----------------------------------------------------------

struct Checkpoint {
  TrainState state;
  TrainConfig config;
};

/// Also writes `<path>.config.txt` with the key=value snapshot.
void save_checkpoint(const std::string& path, const TrainState& state, const TrainConfig& cfg);
/// Throws FormatError on bad magic/version, truncation or a record set that
/// does not match the embedded model configuration.
Checkpoint load_checkpoint(const std::string& path);
/// Model part of a checkpoint.
ModelState load_model(const std::string& path);

// ---- Gradient check --------------------------------------------------------

struct GradientCheckReport {
  struct Group {
    std::string name;
    int checked = 0;
    double max_rel_error = 0.0;
    bool pass = true;
  };
  std::vector<Group> groups;
  double rel_tol = 0.0;
  int total_checked = 0;
  bool pass() const;
};

struct GradientCheckOptions {
  double rel_tol = 1e-3;
  double step = 1e-3;
  double abs_floor = 1e-8;
  int min_elements = 200;
  std::uint64_t seed = 0;
  Mode mode = Mode::train;
};

/// Compares analytic gradients of total_loss against central differences in
/// double precision, sampling at least one element of every named array and
/// at least `min_elements` in total. Relative error is
/// |a - n| / max(|a|, |n|, abs_floor).
GradientCheckReport gradient_check(const ModelState& state, const SampleRecord& sample, const LossWeights& weights,
                                   const FeatureExtractor* fx, const GradientCheckOptions& options);

}  // namespace obiformer
