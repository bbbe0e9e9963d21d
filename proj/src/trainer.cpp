// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "pgen/error.hpp"

namespace pgen {

double NoamSchedule::value(long step) const {
  const double s = static_cast<double>(step);
  return std::pow(static_cast<double>(d_model_), -0.5) *
         std::min(std::pow(s, -0.5),
                  s * std::pow(static_cast<double>(warmup_), -1.5));
}

double LinearSchedule::value(long step) const {
  if (total_ <= 0) return end_;
  const double frac =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(total_));
  return start_ + (end_ - start_) * frac;
}

std::unique_ptr<RateSchedule> make_schedule(const ConfigView& view) {
  const std::string name = view.str("class");
  std::unique_ptr<RateSchedule> out;
  if (name == "noam") {
    out = std::make_unique<NoamSchedule>(
        static_cast<int>(view.integer("d_model")),
        static_cast<long>(view.integer("warmup")));
  } else if (name == "linear") {
    out = std::make_unique<LinearSchedule>(
        view.number("start"), view.number("end"),
        static_cast<long>(view.integer("total")));
  } else if (name == "constant") {
    out = std::make_unique<ConstantSchedule>(view.number("value"));
  } else {
    throw UnknownSchedule("no rate schedule named '" + name + "'");
  }
  view.ensure_consumed();
  return out;
}

void adam_step(ParamMap& params, AdamState& state, double lr,
               const AdamConfig& cfg) {
  state.updates += 1;
  const double corr1 = 1.0 - std::pow(cfg.beta1, state.updates);
  const double corr2 = 1.0 - std::pow(cfg.beta2, state.updates);
  for (auto& [name, tensor] : params.items()) {
    auto& value = tensor.array();
    const auto& grad = tensor.grad();
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Eigen::ArrayXd::Zero(value.size())).first;
      state.v.emplace(name, Eigen::ArrayXd::Zero(value.size()));
    }
    Eigen::ArrayXd& m = mit->second;
    Eigen::ArrayXd& v = state.v.at(name);
    if (m.size() != value.size() || v.size() != value.size())
      throw ShapeMismatch("adam: stale moments for parameter '" + name + "'");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.square();
    value -= lr * (m / corr1) / ((v / corr2).sqrt() + cfg.eps);
  }
}

double clip_gradients(ParamMap& params, double max_norm) {
  double total = 0.0;
  for (auto& [name, tensor] : params.items())
    total += tensor.grad().square().sum();
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double shrink = max_norm / norm;
    for (auto& [name, tensor] : params.items()) tensor.grad() *= shrink;
  }
  return norm;
}

Trainer::Trainer(ParamMap& params, LossFn loss, const RateSchedule& schedule,
                 BatchSource& data, TrainerOptions options)
    : params_(params),
      loss_(std::move(loss)),
      schedule_(schedule),
      data_(data),
      options_(std::move(options)),
      rng_(options_.seed) {
  if (options_.accumulate < 1)
    throw ConfigError("trainer: accumulate must be >= 1");
  if (options_.max_steps < 0)
    throw ConfigError("trainer: max_steps must be >= 0");
  if (options_.eval_interval > 0)
    higher_is_better_ =
        metric_higher_is_better(parse_assess_by(options_.assess_by).second);
}

Trainer::Trainer(Transformer& model, Criterion& criterion,
                 const RateSchedule& schedule, BatchSource& data,
                 TrainerOptions options)
    : Trainer(
          model.params(),
          [&model, &criterion](const Batch& batch, long step, bool train,
                               Rng& rng) {
            return forward_loss(criterion, model, batch, step, train, rng);
          },
          schedule, data, std::move(options)) {}

void Trainer::set_evaluator(std::function<ScoreBoard()> evaluator) {
  evaluator_ = std::move(evaluator);
}

Batch Trainer::next_micro_batch() {
  if (!epoch_open_) {
    data_.start_epoch(state_.epoch);
    epoch_open_ = true;
  }
  auto batch = data_.next_batch();
  if (!batch) {
    state_.epoch += 1;
    state_.micro_in_epoch = 0;
    data_.start_epoch(state_.epoch);
    batch = data_.next_batch();
    if (!batch) throw EmptyError("trainer: data source yielded an empty epoch");
  }
  state_.micro_in_epoch += 1;
  return std::move(*batch);
}

Checkpoint Trainer::checkpoint_now(bool write_through) {
  state_.rng_state = rng_.state();
  // Moments round through f32 like the parameters. A mid-training save also
  // writes the rounded values back, so saving is itself part of the
  // reproducible trajectory; a terminal snapshot leaves the state alone.
  state_.moment_m.clear();
  state_.moment_v.clear();
  auto round_through = [write_through](
                           std::map<std::string, Eigen::ArrayXd>& live,
                           std::map<std::string, std::vector<float>>& stored) {
    for (auto& [name, arr] : live) {
      std::vector<float>& out = stored[name];
      out.resize(static_cast<std::size_t>(arr.size()));
      for (Eigen::Index i = 0; i < arr.size(); ++i) {
        out[static_cast<std::size_t>(i)] = static_cast<float>(arr[i]);
        if (write_through)
          arr[i] = static_cast<double>(out[static_cast<std::size_t>(i)]);
      }
    }
  };
  round_through(adam_.m, state_.moment_m);
  round_through(adam_.v, state_.moment_v);
  return snapshot_params(params_, state_, write_through);
}

void Trainer::restore(const std::string& checkpoint_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  load_params(ckpt, params_);
  state_ = ckpt.state;
  rng_.set_state(state_.rng_state);
  adam_.updates = state_.step;
  adam_.m.clear();
  adam_.v.clear();
  auto widen = [](const std::map<std::string, std::vector<float>>& stored,
                  std::map<std::string, Eigen::ArrayXd>& live) {
    for (const auto& [name, vals] : stored) {
      Eigen::ArrayXd arr(static_cast<Eigen::Index>(vals.size()));
      for (std::size_t i = 0; i < vals.size(); ++i)
        arr[static_cast<Eigen::Index>(i)] = static_cast<double>(vals[i]);
      live[name] = std::move(arr);
    }
  };
  widen(state_.moment_m, adam_.m);
  widen(state_.moment_v, adam_.v);
  // Replay the data stream to the position the checkpoint was taken at.
  data_.start_epoch(state_.epoch);
  epoch_open_ = true;
  for (long i = 0; i < state_.micro_in_epoch; ++i)
    if (!data_.next_batch())
      throw FormatError(
          "trainer: checkpoint stream position is past the end of its epoch");
}

TrainResult Trainer::run() {
  if (options_.eval_interval > 0 && !evaluator_)
    throw ConfigError("trainer: eval_interval set but no evaluator");

  TrainResult result;
  while (state_.step < options_.max_steps) {
    const long update = state_.step + 1;
    const double lr = schedule_.value(update);
    applied_lrs_.push_back(lr);

    params_.clear_grads();
    for (int micro = 0; micro < options_.accumulate; ++micro) {
      Batch batch = next_micro_batch();
      Tape tape;
      Tensor loss = loss_(batch, update, true, rng_);
      tape.backward(scale(loss, 1.0 / options_.accumulate));
    }
    clip_gradients(params_, options_.clip_norm);
    adam_step(params_, adam_, lr, options_.adam);
    params_.clear_grads();
    state_.step = update;

    if (options_.eval_interval > 0 && update % options_.eval_interval == 0) {
      ScoreBoard board = evaluator_();
      state_.scores = board.scores;
      auto it = board.scores.find(options_.assess_by);
      if (it == board.scores.end())
        throw NotFound("trainer: assess_by '" + options_.assess_by +
                       "' not among evaluation scores");
      const double score = it->second;
      const bool improved =
          !state_.has_best || (higher_is_better_ ? score > state_.best_score
                                                 : score < state_.best_score);
      if (improved) {
        state_.has_best = true;
        state_.best_score = score;
        state_.patience_used = 0;
      } else {
        state_.patience_used += 1;
      }
      Checkpoint ckpt = checkpoint_now(true);
      if (!options_.checkpoint_dir.empty())
        save_checkpoint(ckpt, options_.checkpoint_dir + "/ckpt.step" +
                                  std::to_string(update) + ".bin");
      history_.emplace_back(std::move(ckpt), score);
      // Early stopping wins over max-step termination when both trigger.
      if (!improved && options_.patience > 0 &&
          state_.patience_used >= options_.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }

  result.steps = state_.step;
  if (!history_.empty()) {
    result.evaluated = true;
    auto picked =
        select_and_average(history_, options_.avg_k, higher_is_better_);
    result.best = std::move(picked.first);
    result.best_avg = std::move(picked.second);
  } else {
    result.best = checkpoint_now(false);
    result.best_avg = result.best;
  }
  return result;
}

}  // namespace pgen
