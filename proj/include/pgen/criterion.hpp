// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Objectives: teacher-forcing cross entropy for the autoregressive model,
// the three-stage glancing objective for the parallel model, a length-head
// objective, and weighted multi-task combination.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "pgen/model.hpp"
#include "pgen/rng.hpp"
#include "pgen/tensor.hpp"

namespace pgen {

// Row marker for positions excluded from a loss.
constexpr int kIgnoreTarget = -1;

// Flattened [B*T] next-token targets aligned with ar_forward rows: position
// (b, t) holds tgt_tokens[b, t+1], or kIgnoreTarget at and past each row's
// final real token.
std::vector<int> shifted_targets(const Batch& batch);

// Teacher-forcing cross entropy, mean over predicted positions.
Tensor ar_cross_entropy(const Transformer& model, const Batch& batch,
                        double epsilon, bool train, Rng* dropout_rng);

// Gold target tokens for the parallel decoder: bos/eos wrapping stripped.
std::vector<int> nat_gold(const Batch& batch, int row);

struct GlanceOutcome {
  std::vector<bool> reveal_mask;
  int revealed_count = 0;
  std::vector<int> first_pass_prediction;
};

// floor(ratio * Hamming distance over non-pad target positions).
int glance_count(const std::vector<int>& first_pass,
                 const std::vector<int>& target, double ratio);

// Stages 1 and 2 for one pad-free sample: ungraded all-placeholder forward,
// argmax, then a uniform draw of glance_count positions to reveal.
GlanceOutcome glance_sample(const Transformer& model,
                            const std::vector<int>& src,
                            const std::vector<int>& gold, double ratio,
                            Rng& rng);

// Full glancing objective over a batch: cross entropy only at non-revealed
// positions; all positions revealed yields zero loss with zero gradient.
Tensor glancing_loss(const Transformer& model, const Batch& batch,
                     double ratio, double epsilon, Rng& rng, bool train,
                     Rng* dropout_rng);

// Sum of weight[i] * losses[i]; gradients flow to every constituent.
Tensor multi_task_combine(const std::vector<Tensor>& losses,
                          const std::vector<double>& weights);

// Cross entropy of the length head against the clamped gold length offset.
Tensor length_loss(const Transformer& model, const Batch& batch, bool train,
                   Rng* dropout_rng);

// Training objective plugin surface; step feeds scheduled hyperparameters.
// rng is the trainer's single serialized stream: it drives dropout and any
// criterion-internal sampling, so a restored run replays the same draws.
class Criterion {
 public:
  virtual ~Criterion() = default;
  virtual Tensor loss(const Transformer& model, const Batch& batch, long step,
                      bool train, Rng& rng) = 0;
};

class CrossEntropyCriterion : public Criterion {
 public:
  explicit CrossEntropyCriterion(double epsilon) : epsilon_(epsilon) {}
  Tensor loss(const Transformer& model, const Batch& batch, long step,
              bool train, Rng& rng) override;

 private:
  double epsilon_;
};

// ratio maps the update counter to the glancing ratio, so any rate
// schedule can drive it.
class GlancingCriterion : public Criterion {
 public:
  GlancingCriterion(double epsilon, std::function<double(long)> ratio)
      : epsilon_(epsilon), ratio_(std::move(ratio)) {}
  Tensor loss(const Transformer& model, const Batch& batch, long step,
              bool train, Rng& rng) override;

 private:
  double epsilon_;
  std::function<double(long)> ratio_;
};

class LengthCriterion : public Criterion {
 public:
  Tensor loss(const Transformer& model, const Batch& batch, long step,
              bool train, Rng& rng) override;
};

class MultiTaskCriterion : public Criterion {
 public:
  MultiTaskCriterion(std::vector<std::unique_ptr<Criterion>> tasks,
                     std::vector<double> weights);
  Tensor loss(const Transformer& model, const Batch& batch, long step,
              bool train, Rng& rng) override;

 private:
  std::vector<std::unique_ptr<Criterion>> tasks_;
  std::vector<double> weights_;
};

}  // namespace pgen
