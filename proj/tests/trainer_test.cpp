// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "pgen/error.hpp"
#include "testutil.hpp"

using namespace pgen;

namespace {

// Linear regression harness: integer features ride in src_tokens, the label
// in tgt_tokens(b, 0), and the loss is mean squared error of X w against the
// labels. Exact gradient linearity makes accumulation equivalences sharp.

Batch feature_batch(const std::vector<std::vector<int>>& xs,
                    const std::vector<int>& ys) {
  const int n = static_cast<int>(xs.size());
  const int d = static_cast<int>(xs[0].size());
  Batch b;
  b.src_tokens.resize(n, d);
  b.tgt_tokens.resize(n, 1);
  b.src_lengths.assign(static_cast<std::size_t>(n), d);
  b.tgt_lengths.assign(static_cast<std::size_t>(n), 1);
  b.src_mask = Eigen::ArrayXXi::Ones(n, d);
  b.tgt_mask = Eigen::ArrayXXi::Ones(n, 1);
  b.has_tgt = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) b.src_tokens(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    b.tgt_tokens(i, 0) = ys[static_cast<std::size_t>(i)];
  }
  return b;
}

Tensor linear_mse(const ParamMap& params, const Batch& batch) {
  const int n = static_cast<int>(batch.src_tokens.rows());
  const int d = static_cast<int>(batch.src_tokens.cols());
  std::vector<double> xv(static_cast<std::size_t>(n * d));
  std::vector<double> yv(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j)
      xv[static_cast<std::size_t>(i * d + j)] = batch.src_tokens(i, j);
    yv[static_cast<std::size_t>(i)] = batch.tgt_tokens(i, 0);
  }
  Tensor x = Tensor::from(xv, {n, d});
  Tensor y = Tensor::from(yv, {n, 1});
  Tensor diff = sub(matmul(x, params.at("w")), y);
  return mean(mul(diff, diff));
}

// Serves a fixed list of batches per epoch, same order every epoch.
class FixedSource : public BatchSource {
 public:
  explicit FixedSource(std::vector<Batch> batches)
      : batches_(std::move(batches)) {}

  std::optional<Batch> next_batch() override {
    if (next_ >= batches_.size()) return std::nullopt;
    return batches_[next_++];
  }
  void start_epoch(long) override { next_ = 0; }

 private:
  std::vector<Batch> batches_;
  std::size_t next_ = 0;
};

ParamMap linear_params(const std::vector<double>& w0) {
  ParamMap p;
  p.add("w", Tensor::from(w0, {static_cast<int>(w0.size()), 1}, true));
  return p;
}

Trainer::LossFn mse_of(const ParamMap& params) {
  return [&params](const Batch& b, long, bool, Rng&) {
    return linear_mse(params, b);
  };
}

TransformerConfig tiny_config(int vocab) {
  TransformerConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.d_ff = 32;
  cfg.vocab_size = vocab;
  cfg.max_positions = 16;
  cfg.length_window = 2;
  return cfg;
}

Batch token_batch(const std::vector<std::vector<int>>& srcs,
                  const std::vector<std::vector<int>>& tgts) {
  std::vector<ProcessedSample> samples;
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    ProcessedSample ps;
    ps.src = srcs[i];
    ps.tgt.push_back(Vocabulary::kBos);
    ps.tgt.insert(ps.tgt.end(), tgts[i].begin(), tgts[i].end());
    ps.tgt.push_back(Vocabulary::kEos);
    ps.has_tgt = true;
    samples.push_back(std::move(ps));
  }
  return collate(samples, Vocabulary::kPad);
}

}  // namespace

TEST_CASE("adam first step matches the closed form") {
  ParamMap p = linear_params({1.0});
  p.at("w").grad()[0] = 2.0;
  AdamState st;
  adam_step(p, st, 0.1);

  const double m = 0.9 * 0.0 + (1.0 - 0.9) * 2.0;
  const double v = 0.98 * 0.0 + (1.0 - 0.98) * 4.0;
  const double corr1 = 1.0 - 0.9;
  const double corr2 = 1.0 - 0.98;
  const double want =
      1.0 - 0.1 * (m / corr1) / (std::sqrt(v / corr2) + 1e-9);
  CHECK(p.at("w").array()[0] == want);
  CHECK(p.at("w").array()[0] == doctest::Approx(0.9).epsilon(1e-8));
  CHECK(st.updates == 1);
}

TEST_CASE("adam with zero gradient advances the counter only") {
  ParamMap p = linear_params({1.5, -2.0});
  AdamState st;
  adam_step(p, st, 0.3);
  adam_step(p, st, 0.3);
  CHECK(p.at("w").array()[0] == 1.5);
  CHECK(p.at("w").array()[1] == -2.0);
  CHECK(st.updates == 2);
}

TEST_CASE("adam is deterministic across identical call sequences") {
  auto run = [] {
    ParamMap p = linear_params({0.4, -0.7, 1.1});
    AdamState st;
    for (int s = 1; s <= 5; ++s) {
      auto& g = p.at("w").grad();
      g[0] = 0.3 * s;
      g[1] = -1.0 / s;
      g[2] = 0.01;
      adam_step(p, st, 0.05 / s);
    }
    return std::vector<double>{p.at("w").array()[0], p.at("w").array()[1],
                               p.at("w").array()[2]};
  };
  CHECK(run() == run());
}

TEST_CASE("adam rejects restored moments of the wrong size") {
  ParamMap p = linear_params({1.0, 2.0});
  AdamState st;
  st.m["w"] = Eigen::ArrayXd::Zero(3);
  st.v["w"] = Eigen::ArrayXd::Zero(3);
  CHECK_THROWS_AS(adam_step(p, st, 0.1), ShapeMismatch);
}

TEST_CASE("gradient clipping scales at the global norm") {
  ParamMap p;
  p.add("a", Tensor::from({0.0}, {1}, true));
  p.add("b", Tensor::from({0.0, 0.0}, {2}, true));
  p.at("a").grad()[0] = 3.0;
  p.at("b").grad()[1] = 4.0;

  SUBCASE("above the limit") {
    CHECK(clip_gradients(p, 1.0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(p.at("a").grad()[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(p.at("b").grad()[0] == 0.0);
    CHECK(p.at("b").grad()[1] == doctest::Approx(0.8).epsilon(1e-12));
  }
  SUBCASE("below the limit") {
    CHECK(clip_gradients(p, 10.0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(p.at("a").grad()[0] == 3.0);
    CHECK(p.at("b").grad()[1] == 4.0);
  }
  SUBCASE("disabled") {
    CHECK(clip_gradients(p, 0.0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(p.at("a").grad()[0] == 3.0);
  }
}

TEST_CASE("noam schedule peaks at warmup and is monotone on both sides") {
  NoamSchedule sched(64, 100);
  CHECK(sched.value(100) == 0.0125);
  CHECK(sched.value(1) == doctest::Approx(0.125e-3).epsilon(1e-12));
  for (long s = 2; s <= 100; ++s) CHECK(sched.value(s) > sched.value(s - 1));
  for (long s = 101; s <= 200; ++s) CHECK(sched.value(s) < sched.value(s - 1));
}

TEST_CASE("linear schedule interpolates and saturates") {
  LinearSchedule sched(0.5, 0.3, 100);
  CHECK(sched.value(50) == 0.4);
  CHECK(sched.value(0) == 0.5);
  CHECK(sched.value(100) == 0.3);
  CHECK(sched.value(2500) == 0.3);
}

TEST_CASE("constant schedule ignores the step") {
  ConstantSchedule sched(0.007);
  CHECK(sched.value(1) == 0.007);
  CHECK(sched.value(1000000) == 0.007);
}

TEST_CASE("make_schedule builds each class and rejects the rest") {
  auto noam = ConfigNode::parse_string("class: noam\nd_model: 64\nwarmup: 100");
  CHECK(make_schedule(ConfigView(noam))->value(100) == 0.0125);

  auto linear =
      ConfigNode::parse_string("class: linear\nstart: 0.5\nend: 0.3\ntotal: 100");
  CHECK(make_schedule(ConfigView(linear))->value(50) == 0.4);

  auto constant = ConfigNode::parse_string("class: constant\nvalue: 0.25");
  CHECK(make_schedule(ConfigView(constant))->value(9) == 0.25);

  auto unknown = ConfigNode::parse_string("class: cosine");
  CHECK_THROWS_AS(make_schedule(ConfigView(unknown)), UnknownSchedule);

  auto extra = ConfigNode::parse_string("class: constant\nvalue: 1.0\nwarm: 2");
  CHECK_THROWS_AS(make_schedule(ConfigView(extra)), ConfigError);
}

TEST_CASE("forward_loss dispatches to the configured criterion") {
  // All-zero parameters make every logit zero, so any architecture scores a
  // uniform distribution and cross entropy is exactly ln(vocab).
  TransformerConfig cfg = tiny_config(8);
  Batch batch = token_batch({{5}}, {{6}});
  Rng rng(5);
  const double ln8 = std::log(8.0);

  Transformer ar(cfg, Transformer::Mode::kAutoregressive, 7);
  for (auto& [name, t] : ar.params().items()) t.array().setZero();
  CrossEntropyCriterion ce(0.0);
  CHECK(forward_loss(ce, ar, batch, 1, false, rng).item() ==
        doctest::Approx(ln8).epsilon(1e-12));

  Transformer nat(cfg, Transformer::Mode::kParallel, 7);
  for (auto& [name, t] : nat.params().items()) t.array().setZero();
  GlancingCriterion glancing(0.0, [](long) { return 0.0; });
  CHECK(forward_loss(glancing, nat, batch, 1, false, rng).item() ==
        doctest::Approx(ln8).epsilon(1e-12));

  std::vector<std::unique_ptr<Criterion>> tasks;
  tasks.push_back(std::make_unique<CrossEntropyCriterion>(0.0));
  tasks.push_back(std::make_unique<CrossEntropyCriterion>(0.0));
  MultiTaskCriterion multi(std::move(tasks), {1.0, 1.0});
  CHECK(forward_loss(multi, ar, batch, 1, false, rng).item() ==
        doctest::Approx(2.0 * ln8).epsilon(1e-12));
}

TEST_CASE("gradient accumulation matches one doubled batch") {
  const std::vector<std::vector<int>> x1 = {{1, 2}, {3, 1}};
  const std::vector<int> y1 = {3, 4};
  const std::vector<std::vector<int>> x2 = {{2, 2}, {0, 1}};
  const std::vector<int> y2 = {5, 1};
  std::vector<std::vector<int>> x12 = x1;
  x12.insert(x12.end(), x2.begin(), x2.end());
  std::vector<int> y12 = y1;
  y12.insert(y12.end(), y2.begin(), y2.end());

  ParamMap pa = linear_params({0.1, -0.2});
  ParamMap pb = linear_params({0.1, -0.2});
  FixedSource sa({feature_batch(x1, y1), feature_batch(x2, y2)});
  FixedSource sb({feature_batch(x12, y12)});
  ConstantSchedule sched(0.05);

  TrainerOptions oa;
  oa.max_steps = 3;
  oa.accumulate = 2;
  oa.clip_norm = 0.0;
  TrainerOptions ob = oa;
  ob.accumulate = 1;

  Trainer ta(pa, mse_of(pa), sched, sa, oa);
  Trainer tb(pb, mse_of(pb), sched, sb, ob);
  TrainResult ra = ta.run();
  TrainResult rb = tb.run();

  CHECK(ra.steps == 3);
  CHECK(rb.steps == 3);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(pa.at("w").array()[i] - pb.at("w").array()[i]) <= 1e-10);
    CHECK(std::abs(pa.at("w").array()[i] - (i == 0 ? 0.1 : -0.2)) > 1e-3);
  }

  // No evaluation ran, so the result is a terminal snapshot of the live
  // parameters, and taking it did not round them through f32.
  CHECK_FALSE(ra.evaluated);
  CHECK(ra.best.state.step == 3);
  CHECK(ra.best.entries.size() == 1);
  CHECK(ra.best.entries[0].data[0] ==
        static_cast<float>(pa.at("w").array()[0]));
  CHECK(ra.best_avg.entries[0].data == ra.best.entries[0].data);
}

TEST_CASE("trainer walks epochs and reports its position") {
  ParamMap p = linear_params({0.0, 0.0});
  FixedSource src({feature_batch({{1, 0}}, {1}), feature_batch({{0, 1}}, {1})});
  ConstantSchedule sched(0.01);
  TrainerOptions opts;
  opts.max_steps = 5;
  Trainer t(p, mse_of(p), sched, src, opts);
  t.run();
  CHECK(t.state().step == 5);
  CHECK(t.state().epoch == 2);
  CHECK(t.state().micro_in_epoch == 1);
}

TEST_CASE("an empty data source is an error") {
  ParamMap p = linear_params({0.0});
  FixedSource src({});
  ConstantSchedule sched(0.01);
  TrainerOptions opts;
  opts.max_steps = 1;
  Trainer t(p, mse_of(p), sched, src, opts);
  CHECK_THROWS_AS(t.run(), EmptyError);
}

TEST_CASE("trainer validates its options") {
  ParamMap p = linear_params({0.0});
  FixedSource src({feature_batch({{1}}, {1})});
  ConstantSchedule sched(0.01);

  TrainerOptions bad_accumulate;
  bad_accumulate.accumulate = 0;
  CHECK_THROWS_AS(Trainer(p, mse_of(p), sched, src, bad_accumulate),
                  ConfigError);

  TrainerOptions bad_assess;
  bad_assess.eval_interval = 2;
  bad_assess.assess_by = "no-dot-here";
  CHECK_THROWS_AS(Trainer(p, mse_of(p), sched, src, bad_assess), FormatError);

  TrainerOptions no_evaluator;
  no_evaluator.eval_interval = 2;
  no_evaluator.assess_by = "dev.bleu";
  Trainer t(p, mse_of(p), sched, src, no_evaluator);
  CHECK_THROWS_AS(t.run(), ConfigError);

  TrainerOptions zero_steps;
  zero_steps.max_steps = 0;
  Trainer t0(p, mse_of(p), sched, src, zero_steps);
  TrainResult r = t0.run();
  CHECK(r.steps == 0);
  CHECK_FALSE(r.evaluated);
  CHECK(r.best.state.step == 0);
}

TEST_CASE("patience stops training after exactly that many flat evals") {
  auto run_with_scores = [](std::vector<double> scores,
                            const std::string& assess) {
    ParamMap p = linear_params({0.0, 0.0});
    FixedSource src(
        {feature_batch({{1, 0}}, {1}), feature_batch({{0, 1}}, {1})});
    ConstantSchedule sched(0.01);
    TrainerOptions opts;
    opts.max_steps = 100;
    opts.eval_interval = 1;
    opts.patience = 2;
    opts.assess_by = assess;
    Trainer t(p, mse_of(p), sched, src, opts);
    std::size_t call = 0;
    t.set_evaluator([&call, scores, assess]() {
      ScoreBoard board;
      board.scores[assess] = scores.at(call++);
      board.overall = board.scores[assess];
      return board;
    });
    TrainResult r = t.run();
    return std::make_pair(r, t.state());
  };

  SUBCASE("monotonically worsening, higher is better") {
    auto [r, st] = run_with_scores({1.0, 0.5, 1.0 / 3.0}, "dev.bleu");
    CHECK(r.stopped_early);
    CHECK(r.steps == 3);
    CHECK(st.patience_used == 2);
    CHECK(st.best_score == 1.0);
    CHECK(r.evaluated);
    CHECK(r.best.state.step == 1);
    CHECK(r.best.state.scores.at("dev.bleu") == 1.0);
  }
  SUBCASE("monotonically worsening, lower is better") {
    auto [r, st] = run_with_scores({1.0, 2.0, 3.0}, "dev.loss");
    CHECK(r.stopped_early);
    CHECK(r.steps == 3);
    CHECK(r.best.state.step == 1);
  }
  SUBCASE("an improvement resets the counter") {
    auto [r, st] = run_with_scores({1.0, 0.5, 2.0, 1.9, 1.8}, "dev.bleu");
    CHECK(r.stopped_early);
    CHECK(r.steps == 5);
    CHECK(r.best.state.step == 3);
    CHECK(st.best_score == 2.0);
  }
  SUBCASE("ties are not improvements") {
    auto [r, st] = run_with_scores({1.0, 1.0, 1.0}, "dev.bleu");
    CHECK(r.stopped_early);
    CHECK(r.steps == 3);
  }
}

TEST_CASE("applied learning rates follow the schedule exactly") {
  // Constant gradient of 2 turns each Adam update into lr * 2/(2 + eps), so
  // the parameter trajectory reads the applied rate back out.
  ParamMap p = linear_params({0.0});
  std::vector<double> seen;  // parameter value entering each update
  Trainer::LossFn loss = [&p, &seen](const Batch&, long, bool, Rng&) {
    seen.push_back(p.at("w").array()[0]);
    return scale(sum(p.at("w")), 2.0);
  };
  FixedSource src({feature_batch({{1}}, {1})});
  NoamSchedule sched(64, 4);
  TrainerOptions opts;
  opts.max_steps = 6;
  opts.clip_norm = 0.0;
  Trainer t(p, loss, sched, src, opts);
  t.run();

  REQUIRE(t.applied_lrs().size() == 6);
  REQUIRE(seen.size() == 6);
  seen.push_back(p.at("w").array()[0]);
  const double unit = 2.0 / (2.0 + 1e-9);
  for (int s = 1; s <= 6; ++s) {
    CHECK(t.applied_lrs()[static_cast<std::size_t>(s - 1)] == sched.value(s));
    const double applied =
        (seen[static_cast<std::size_t>(s - 1)] -
         seen[static_cast<std::size_t>(s)]) /
        unit;
    CHECK(applied == doctest::Approx(sched.value(s)).epsilon(1e-12));
  }
}

TEST_CASE("a killed run resumes bit-identically") {
  TransformerConfig cfg = tiny_config(12);
  cfg.dropout = 0.1;

  std::vector<ProcessedSample> data;
  Rng gen(17);
  for (int i = 0; i < 6; ++i) {
    ProcessedSample ps;
    const int slen = 2 + static_cast<int>(gen.below(3));
    const int tlen = 1 + static_cast<int>(gen.below(3));
    for (int j = 0; j < slen; ++j)
      ps.src.push_back(5 + static_cast<int>(gen.below(7)));
    ps.tgt.push_back(Vocabulary::kBos);
    for (int j = 0; j < tlen; ++j)
      ps.tgt.push_back(5 + static_cast<int>(gen.below(7)));
    ps.tgt.push_back(Vocabulary::kEos);
    ps.has_tgt = true;
    data.push_back(std::move(ps));
  }
  SamplerSpec sampler;
  sampler.kind = SamplerSpec::Kind::kShuffle;
  sampler.batch_size = 2;
  sampler.seed = 3;

  NoamSchedule sched(16, 8);
  CrossEntropyCriterion ce(0.1);
  auto flat_board = [] {
    ScoreBoard board;
    board.scores["dev.accuracy"] = 0.5;
    board.overall = 0.5;
    return board;
  };
  auto options_for = [&](const std::string& dir) {
    TrainerOptions o;
    o.max_steps = 20;
    o.eval_interval = 5;
    o.assess_by = "dev.accuracy";
    o.avg_k = 2;
    o.checkpoint_dir = dir;
    o.seed = 21;
    return o;
  };

  pgentest::TempDir dir_a, dir_b, dir_c;

  Transformer model_a(cfg, Transformer::Mode::kAutoregressive, 11);
  InMemoryLoader loader_a(data, sampler, Vocabulary::kPad);
  Trainer trainer_a(model_a, ce, sched, loader_a, options_for(dir_a.path.string()));
  trainer_a.set_evaluator(flat_board);
  TrainResult ra = trainer_a.run();
  CHECK(ra.steps == 20);
  CHECK(trainer_a.history().size() == 4);

  for (int s : {5, 10, 15, 20})
    CHECK(std::filesystem::exists(
        dir_a.file("ckpt.step" + std::to_string(s) + ".bin")));
  Checkpoint last = load_checkpoint(dir_a.file("ckpt.step20.bin"));
  CHECK(last.state.step == 20);
  CHECK(last.entries.size() == model_a.params().size());

  // Same run, killed at step 10.
  Transformer model_b(cfg, Transformer::Mode::kAutoregressive, 11);
  InMemoryLoader loader_b(data, sampler, Vocabulary::kPad);
  TrainerOptions ob = options_for(dir_b.path.string());
  ob.max_steps = 10;
  Trainer trainer_b(model_b, ce, sched, loader_b, ob);
  trainer_b.set_evaluator(flat_board);
  trainer_b.run();

  // Fresh process: different init seed, parameters come from the checkpoint.
  Transformer model_c(cfg, Transformer::Mode::kAutoregressive, 99);
  InMemoryLoader loader_c(data, sampler, Vocabulary::kPad);
  Trainer trainer_c(model_c, ce, sched, loader_c, options_for(dir_c.path.string()));
  trainer_c.set_evaluator(flat_board);
  trainer_c.restore(dir_b.file("ckpt.step10.bin"));
  CHECK(trainer_c.state().step == 10);
  TrainResult rc = trainer_c.run();
  CHECK(rc.steps == 20);
  CHECK(trainer_c.history().size() == 2);

  for (std::size_t i = 0; i < model_a.params().items().size(); ++i) {
    const auto& [name_a, t_a] = model_a.params().items()[i];
    const auto& [name_c, t_c] = model_c.params().items()[i];
    CHECK(name_a == name_c);
    CHECK((t_a.array() - t_c.array()).abs().maxCoeff() == 0.0);
  }
  CHECK(trainer_a.state().epoch == trainer_c.state().epoch);
  CHECK(trainer_a.state().micro_in_epoch == trainer_c.state().micro_in_epoch);
  CHECK(trainer_a.state().rng_state == trainer_c.state().rng_state);
  CHECK(trainer_a.state().patience_used == trainer_c.state().patience_used);
}

TEST_CASE("restore rejects a stream position past the epoch end") {
  ParamMap p = linear_params({1.0});
  FixedSource src({feature_batch({{1}}, {1}), feature_batch({{2}}, {1})});
  ConstantSchedule sched(0.01);
  TrainerOptions opts;
  opts.max_steps = 1;
  Trainer t(p, mse_of(p), sched, src, opts);

  TrainState state;
  state.step = 1;
  state.micro_in_epoch = 99;
  Checkpoint ckpt = snapshot_params(p, state, false);
  pgentest::TempDir dir;
  save_checkpoint(ckpt, dir.file("ckpt.step1.bin"));
  CHECK_THROWS_AS(t.restore(dir.file("ckpt.step1.bin")), FormatError);
}
