// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/criterion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pgen {

std::vector<int> shifted_targets(const Batch& batch) {
  if (!batch.has_tgt) throw ShapeMismatch("shifted_targets: no target side");
  const int b_count = batch.batch_size();
  const int t_width = static_cast<int>(batch.tgt_tokens.cols());
  std::vector<int> out(static_cast<std::size_t>(b_count * t_width),
                       kIgnoreTarget);
  for (int b = 0; b < b_count; ++b) {
    const int len = batch.tgt_lengths[b];
    for (int t = 0; t + 1 < len; ++t)
      out[static_cast<std::size_t>(b * t_width + t)] = batch.tgt_tokens(b, t + 1);
  }
  return out;
}

Tensor ar_cross_entropy(const Transformer& model, const Batch& batch,
                        double epsilon, bool train, Rng* dropout_rng) {
  Tensor logits = model.ar_forward(batch, train, dropout_rng);
  const int rows = logits.dim(0) * logits.dim(1);
  Tensor flat = reshape(logits, {rows, logits.dim(2)});
  return cross_entropy_smoothed(flat, shifted_targets(batch), epsilon,
                                kIgnoreTarget);
}

std::vector<int> nat_gold(const Batch& batch, int row) {
  if (!batch.has_tgt) throw ShapeMismatch("nat_gold: no target side");
  const int len = batch.tgt_lengths[row];
  if (len < 2) throw ShapeMismatch("nat_gold: target row too short to unwrap");
  std::vector<int> out(static_cast<std::size_t>(len - 2));
  for (int t = 1; t + 1 < len; ++t)
    out[static_cast<std::size_t>(t - 1)] = batch.tgt_tokens(row, t);
  return out;
}

int glance_count(const std::vector<int>& first_pass,
                 const std::vector<int>& target, double ratio) {
  if (first_pass.size() != target.size())
    throw LengthMismatch("glance_count: " + std::to_string(first_pass.size()) +
                         " predictions vs " + std::to_string(target.size()) +
                         " targets");
  int distance = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == Vocabulary::kPad) continue;
    if (first_pass[i] != target[i]) ++distance;
  }
  return static_cast<int>(std::floor(ratio * distance));
}

GlanceOutcome glance_sample(const Transformer& model,
                            const std::vector<int>& src,
                            const std::vector<int>& gold, double ratio,
                            Rng& rng) {
  const int length = static_cast<int>(gold.size());
  GlanceOutcome outcome;
  outcome.reveal_mask.assign(static_cast<std::size_t>(length), false);
  {
    TapePause pause;
    std::vector<int> placeholders(static_cast<std::size_t>(length),
                                  ParallelScorer::kPlaceholder);
    Tensor first = model.nat_forward_one(src, placeholders, false, nullptr);
    outcome.first_pass_prediction = argmax_rows(first);
  }
  outcome.revealed_count =
      glance_count(outcome.first_pass_prediction, gold, ratio);
  for (int i : sample_without_replacement(length, outcome.revealed_count, rng))
    outcome.reveal_mask[static_cast<std::size_t>(i)] = true;
  return outcome;
}

Tensor glancing_loss(const Transformer& model, const Batch& batch,
                     double ratio, double epsilon, Rng& rng, bool train,
                     Rng* dropout_rng) {
  if (!batch.has_tgt) throw ShapeMismatch("glancing_loss: no target side");
  std::vector<Tensor> parts;
  std::vector<int> targets;
  for (int b = 0; b < batch.batch_size(); ++b) {
    std::vector<int> src =
        Transformer::trimmed_row(batch.src_tokens, b, batch.src_lengths[b]);
    std::vector<int> gold = nat_gold(batch, b);
    if (gold.empty()) continue;
    GlanceOutcome outcome = glance_sample(model, src, gold, ratio, rng);
    std::vector<int> inputs(gold.size(), ParallelScorer::kPlaceholder);
    for (std::size_t i = 0; i < gold.size(); ++i)
      if (outcome.reveal_mask[i]) inputs[i] = gold[i];
    parts.push_back(model.nat_forward_one(src, inputs, train, dropout_rng));
    for (std::size_t i = 0; i < gold.size(); ++i)
      targets.push_back(outcome.reveal_mask[i] ? kIgnoreTarget : gold[i]);
  }
  if (parts.empty()) throw EmptyError("glancing_loss: nothing to score");
  return cross_entropy_smoothed(vstack(parts), targets, epsilon,
                                kIgnoreTarget);
}

Tensor multi_task_combine(const std::vector<Tensor>& losses,
                          const std::vector<double>& weights) {
  if (losses.empty()) throw EmptyError("multi_task: no losses to combine");
  if (losses.size() != weights.size())
    throw LengthMismatch("multi_task: " + std::to_string(losses.size()) +
                         " losses vs " + std::to_string(weights.size()) +
                         " weights");
  Tensor total = scale(losses[0], weights[0]);
  for (std::size_t i = 1; i < losses.size(); ++i)
    total = add(total, scale(losses[i], weights[i]));
  return total;
}

Tensor length_loss(const Transformer& model, const Batch& batch, bool train,
                   Rng* dropout_rng) {
  if (!batch.has_tgt) throw ShapeMismatch("length_loss: no target side");
  const int window = model.config().length_window;
  std::vector<Tensor> parts;
  std::vector<int> targets;
  for (int b = 0; b < batch.batch_size(); ++b) {
    std::vector<int> src =
        Transformer::trimmed_row(batch.src_tokens, b, batch.src_lengths[b]);
    const int gold_len = batch.tgt_lengths[b] - 2;
    const int offset = std::clamp(gold_len - static_cast<int>(src.size()),
                                  -window, window);
    parts.push_back(model.length_logits(src, train, dropout_rng));
    targets.push_back(offset + window);
  }
  return cross_entropy_smoothed(vstack(parts), targets, 0.0, kIgnoreTarget);
}

Tensor CrossEntropyCriterion::loss(const Transformer& model,
                                   const Batch& batch, long /*step*/,
                                   bool train, Rng& rng) {
  return ar_cross_entropy(model, batch, epsilon_, train, &rng);
}

Tensor GlancingCriterion::loss(const Transformer& model, const Batch& batch,
                               long step, bool train, Rng& rng) {
  return glancing_loss(model, batch, ratio_(step), epsilon_, rng, train,
                       &rng);
}

Tensor LengthCriterion::loss(const Transformer& model, const Batch& batch,
                             long /*step*/, bool train, Rng& rng) {
  return length_loss(model, batch, train, &rng);
}

MultiTaskCriterion::MultiTaskCriterion(
    std::vector<std::unique_ptr<Criterion>> tasks, std::vector<double> weights)
    : tasks_(std::move(tasks)), weights_(std::move(weights)) {
  if (tasks_.empty()) throw EmptyError("multi_task: no tasks configured");
  if (tasks_.size() != weights_.size())
    throw LengthMismatch("multi_task: task and weight counts differ");
}

Tensor MultiTaskCriterion::loss(const Transformer& model, const Batch& batch,
                                long step, bool train, Rng& rng) {
  std::vector<Tensor> losses;
  losses.reserve(tasks_.size());
  for (auto& task : tasks_)
    losses.push_back(task->loss(model, batch, step, train, rng));
  return multi_task_combine(losses, weights_);
}

}  // namespace pgen
