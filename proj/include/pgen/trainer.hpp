// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Training loop: gradient accumulation, Adam with a scheduled learning rate,
// global-norm clipping, periodic evaluation with early stopping, and
// checkpointing that resumes bit-identically after a kill.

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pgen/batching.hpp"
#include "pgen/checkpoint.hpp"
#include "pgen/config.hpp"
#include "pgen/criterion.hpp"
#include "pgen/eval.hpp"

namespace pgen {

// The criterion dispatch seam: swapping the configured criterion changes
// only what this call resolves to.
inline Tensor forward_loss(Criterion& criterion, const Transformer& model,
                           const Batch& batch, long step, bool train,
                           Rng& rng) {
  return criterion.loss(model, batch, step, train, rng);
}

// Scalar hyperparameter schedule over the 1-based update counter. Drives the
// learning rate, and anything else that wants a per-step value (the glancing
// criterion's ratio, for one).
class RateSchedule {
 public:
  virtual ~RateSchedule() = default;
  virtual double value(long step) const = 0;
};

// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5); peaks at step = warmup.
class NoamSchedule : public RateSchedule {
 public:
  NoamSchedule(int d_model, long warmup) : d_model_(d_model), warmup_(warmup) {}
  double value(long step) const override;

 private:
  int d_model_;
  long warmup_;
};

class LinearSchedule : public RateSchedule {
 public:
  LinearSchedule(double start, double end, long total)
      : start_(start), end_(end), total_(total) {}
  double value(long step) const override;

 private:
  double start_;
  double end_;
  long total_;
};

class ConstantSchedule : public RateSchedule {
 public:
  explicit ConstantSchedule(double value) : value_(value) {}
  double value(long) const override { return value_; }

 private:
  double value_;
};

// Builds a schedule from a {class: ..., params} view:
//   noam:     d_model, warmup
//   linear:   start, end, total
//   constant: value
// Rejects unread keys; throws UnknownSchedule for an unrecognized class.
std::unique_ptr<RateSchedule> make_schedule(const ConfigView& view);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct AdamState {
  long updates = 0;  // bias-correction exponent
  std::map<std::string, Eigen::ArrayXd> m;
  std::map<std::string, Eigen::ArrayXd> v;
};

// One bias-corrected Adam update from the gradients held in params; eps sits
// outside the square root. Fresh moments start at zero; restored moments must
// match each parameter's size or this throws ShapeMismatch.
void adam_step(ParamMap& params, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// Scales all gradients so their global L2 norm is at most max_norm
// (max_norm <= 0 disables clipping); returns the pre-clip norm.
double clip_gradients(ParamMap& params, double max_norm);

struct TrainerOptions {
  long max_steps = 1;
  int accumulate = 1;       // micro-batches per update, loss scaled by 1/n
  long eval_interval = 0;   // updates between evaluations; 0 disables
  int patience = 0;         // non-improving evals tolerated; 0 disables
  double clip_norm = 1.0;
  std::string assess_by;    // "{dataset}.{metric}", required when evaluating
  int avg_k = 5;
  std::string checkpoint_dir;  // existing directory for ckpt.step<N>.bin
  std::uint64_t seed = 1;
  AdamConfig adam;
};

struct TrainResult {
  long steps = 0;
  bool stopped_early = false;
  bool evaluated = false;  // best/best_avg selected from evaluation history
  Checkpoint best;
  Checkpoint best_avg;
};

class Trainer {
 public:
  // Loss for one micro-batch. `step` is the update the batch contributes to;
  // `rng` is the trainer's single serialized stream.
  using LossFn = std::function<Tensor(const Batch&, long step, bool train,
                                      Rng& rng)>;

  Trainer(ParamMap& params, LossFn loss, const RateSchedule& schedule,
          BatchSource& data, TrainerOptions options);
  // The standard wiring: loss comes from forward_loss over the criterion.
  Trainer(Transformer& model, Criterion& criterion,
          const RateSchedule& schedule, BatchSource& data,
          TrainerOptions options);

  // Required when eval_interval > 0: scores the current parameters.
  void set_evaluator(std::function<ScoreBoard()> evaluator);

  // Restore a checkpoint this trainer wrote: parameters, optimizer moments,
  // rng, eval bookkeeping, and the position within the data stream.
  void restore(const std::string& checkpoint_path);

  TrainResult run();

  const TrainState& state() const { return state_; }
  const std::vector<double>& applied_lrs() const { return applied_lrs_; }
  const std::vector<std::pair<Checkpoint, double>>& history() const {
    return history_;
  }

 private:
  Batch next_micro_batch();
  Checkpoint checkpoint_now(bool write_through);

  ParamMap& params_;
  LossFn loss_;
  const RateSchedule& schedule_;
  BatchSource& data_;
  TrainerOptions options_;
  bool higher_is_better_ = true;

  TrainState state_;
  AdamState adam_;
  Rng rng_;
  bool epoch_open_ = false;

  std::function<ScoreBoard()> evaluator_;
  std::vector<std::pair<Checkpoint, double>> history_;
  std::vector<double> applied_lrs_;
};

}  // namespace pgen
