#pragma once

#include <functional>
#include <ostream>

#include "maxim/config.hpp"
#include "maxim/data.hpp"
#include "maxim/model.hpp"

namespace maxim {

struct TrainConfig {
  ModelConfig model;
  int64_t patch = 64;
  int64_t batch = 8;
  int64_t steps = 3000;
  double lr_init = 2e-4;
  double lr_final = 1e-7;
  uint64_t seed = 7;
  AugmentConfig augment;
  // dataset: "synthetic" or paired directories
  std::string data = "synthetic";
  DegradeSpec degrade;
  int64_t synth_images = 24;
  int64_t synth_size = 96;
  std::string train_input_dir, train_target_dir;
  // run control
  std::string out_dir = ".";
  int64_t ckpt_every = 1000;
  int threads = 0;  // 0 = hardware concurrency (capped by batch)

  static TrainConfig from_config(const Config& c);
  void validate() const;
};

/// Cosine annealing: lr_final + 0.5 (lr_init - lr_final)(1 + cos(pi step/total)).
double lr_at(int64_t step, int64_t total, double lr_init = 2e-4, double lr_final = 1e-7);

/// Standard bias-corrected Adam update, in place. Gradients are aligned with
/// store order. State slots are created on first use.
void adam_step(ParamStore& store, const std::vector<Tensor>& grads, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

/// Owns the model, data and optimizer state for one run. Deterministic:
/// identical seeds give identical parameter trajectories for any thread
/// count (per-sample gradients are reduced in a fixed order).
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  /// One optimization step; returns the batch loss.
  double step();
  int64_t steps_done() const { return step_; }

  const Model& model() const { return model_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }
  const TrainConfig& config() const { return cfg_; }
  const std::vector<Tensor>& clean_images() const { return clean_; }

 private:
  std::vector<Pair> sample_batch(Rng& rng);

  TrainConfig cfg_;
  ParamStore store_;
  Model model_;
  std::vector<Tensor> clean_;  // synthetic mode
  std::vector<std::pair<std::string, std::string>> files_;  // paired-dir mode
  int64_t step_ = 0;
  int threads_ = 1;
};

/// Full training run with per-step "step=<n> loss=<f> lr=<f>" log lines and
/// periodic checkpoints. Returns the final mean loss over the last 50 steps.
double run_training(const TrainConfig& cfg, std::ostream& log);

}  // namespace maxim
