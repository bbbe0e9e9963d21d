// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/search.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "pgen/rng.hpp"

using namespace pgen;

namespace {

// Step decoder whose next-token distribution is a pure hash of the fed
// prefix: deterministic, context-sensitive, and cheap to enumerate.
class HashDecoder : public StepDecoder {
 public:
  HashDecoder(int vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}

  int vocab() const override { return vocab_; }

  StatePtr start(const std::vector<int>& src) const override {
    auto s = std::make_shared<Hash>();
    s->h = seed_;
    for (int t : src) s->h = mix(s->h, t);
    return s;
  }

  std::pair<Eigen::VectorXd, StatePtr> step(const StatePtr& state,
                                            int token) const override {
    auto cur = std::static_pointer_cast<const Hash>(state);
    auto next = std::make_shared<Hash>();
    next->h = mix(cur->h, token);
    Rng rng(next->h);
    Eigen::VectorXd raw(vocab_);
    for (int v = 0; v < vocab_; ++v) raw[v] = rng.uniform(-3.0, 0.0);
    double m = raw.maxCoeff();
    double z = std::log((raw.array() - m).exp().sum()) + m;
    return {raw.array() - z, next};
  }

 private:
  struct Hash : State {
    std::uint64_t h = 0;
  };
  static std::uint64_t mix(std::uint64_t h, int token) {
    return (h ^ (static_cast<std::uint64_t>(token) + 0x9e3779b97f4a7c15ull)) *
           0x100000001b3ull;
  }

  int vocab_;
  std::uint64_t seed_;
};

// Emits a fixed sequence then eos, each with probability ~1.
class ScriptedDecoder : public StepDecoder {
 public:
  explicit ScriptedDecoder(std::vector<int> script, int vocab = 6)
      : script_(std::move(script)), vocab_(vocab) {}

  int vocab() const override { return vocab_; }
  StatePtr start(const std::vector<int>&) const override {
    auto s = std::make_shared<Pos>();
    s->i = 0;
    return s;
  }
  std::pair<Eigen::VectorXd, StatePtr> step(const StatePtr& state,
                                            int) const override {
    auto cur = std::static_pointer_cast<const Pos>(state);
    int want = cur->i < script_.size() ? script_[cur->i] : eos_id();
    Eigen::VectorXd lp = Eigen::VectorXd::Constant(vocab_, -20.0);
    lp[want] = std::log1p(-1e-6);
    auto next = std::make_shared<Pos>();
    next->i = cur->i + 1;
    return {lp, next};
  }

 private:
  struct Pos : State {
    std::size_t i = 0;
  };
  std::vector<int> script_;
  int vocab_;
};

// Never emits eos with meaningful mass.
class NeverEos : public StepDecoder {
 public:
  int vocab() const override { return 4; }
  StatePtr start(const std::vector<int>&) const override {
    return std::make_shared<State>();
  }
  std::pair<Eigen::VectorXd, StatePtr> step(const StatePtr& state,
                                            int) const override {
    Eigen::VectorXd lp(4);
    lp << -1.0, -2.0, -3.0, -50.0;
    return {lp, state};
  }
};

double ranked(const Hypothesis& h, double alpha) {
  return h.score /
         std::pow(static_cast<double>(std::max<std::size_t>(1, h.tokens.size())),
                  alpha);
}

// Exhaustive enumeration of every candidate beam search could produce:
// eos-terminated sequences shorter than max_len (score includes the eos
// term) and unfinished sequences of exactly max_len tokens.
void enumerate(const StepDecoder& m, const StepDecoder::StatePtr& state,
               const Eigen::VectorXd& lp, std::vector<int>& prefix,
               double score, int max_len, std::vector<Hypothesis>& out) {
  if (static_cast<int>(prefix.size()) == max_len) {
    out.push_back({prefix, score, false});
    return;
  }
  out.push_back({prefix, score + lp[m.eos_id()], true});
  for (int v = 0; v < m.vocab(); ++v) {
    if (v == m.eos_id()) continue;
    auto [lp2, s2] = m.step(state, v);
    prefix.push_back(v);
    enumerate(m, s2, lp2, prefix, score + lp[v], max_len, out);
    prefix.pop_back();
  }
}

Hypothesis brute_force(const StepDecoder& m, const std::vector<int>& src,
                       int max_len, double alpha) {
  std::vector<Hypothesis> all;
  std::vector<int> prefix;
  auto [lp, state] = m.step(m.start(src), m.bos_id());
  enumerate(m, state, lp, prefix, 0.0, max_len, all);
  const Hypothesis* best = &all.front();
  for (const Hypothesis& h : all) {
    double hs = ranked(h, alpha);
    double bs = ranked(*best, alpha);
    if (hs > bs ||
        (hs == bs && std::lexicographical_compare(
                         h.tokens.begin(), h.tokens.end(),
                         best->tokens.begin(), best->tokens.end())))
      best = &h;
  }
  return *best;
}

// Parallel scorer with a fixed per-position table; ignores revealed inputs,
// so re-prediction always reproduces kept tokens.
class TableScorer : public ParallelScorer {
 public:
  // rows[i % rows.size()] is the log-prob row for position i.
  TableScorer(Eigen::MatrixXd rows, Eigen::VectorXd length_lp, int window)
      : rows_(std::move(rows)),
        length_lp_(std::move(length_lp)),
        window_(window) {}

  int vocab() const override { return static_cast<int>(rows_.cols()); }

  Eigen::MatrixXd position_log_probs(
      const std::vector<int>&, const std::vector<int>& inputs) const override {
    std::vector<int> revealed;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (inputs[i] != kPlaceholder) revealed.push_back(static_cast<int>(i));
    reveal_log_.push_back(revealed);
    call_lengths_.push_back(static_cast<int>(inputs.size()));
    Eigen::MatrixXd out(inputs.size(), rows_.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      out.row(i) = rows_.row(i % rows_.rows());
    return out;
  }

  Eigen::VectorXd length_log_probs(const std::vector<int>&) const override {
    return length_lp_;
  }
  int length_window() const override { return window_; }

  const std::vector<std::vector<int>>& reveal_log() const {
    return reveal_log_;
  }
  const std::vector<int>& call_lengths() const { return call_lengths_; }

 private:
  Eigen::MatrixXd rows_;
  Eigen::VectorXd length_lp_;
  int window_;
  mutable std::vector<std::vector<int>> reveal_log_;
  mutable std::vector<int> call_lengths_;
};

}  // namespace

TEST_CASE("greedy follows a scripted model") {
  ScriptedDecoder m({5, 4, 5});
  Hypothesis h = greedy_decode(m, {1}, 10);
  CHECK(h.tokens == std::vector<int>{5, 4, 5});
  CHECK(h.finished);
  // Score folds in every chosen log-prob including the terminal eos.
  CHECK(h.score == doctest::Approx(4 * std::log1p(-1e-6)));
}

TEST_CASE("greedy immediate eos and truncation") {
  ScriptedDecoder eos_first({});
  Hypothesis h = greedy_decode(eos_first, {1}, 5);
  CHECK(h.tokens.empty());
  CHECK(h.finished);

  NeverEos never;
  Hypothesis t = greedy_decode(never, {1}, 7);
  CHECK(t.tokens == std::vector<int>(7, 0));
  CHECK_FALSE(t.finished);
  CHECK(t.score == doctest::Approx(-7.0));
}

TEST_CASE("beam equals brute force at exhaustive width") {
  const int max_len = 3;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    HashDecoder m(4, seed * 1000003);
    for (double alpha : {0.0, 0.7, 1.3}) {
      Hypothesis beam = beam_decode(m, {1, 2}, 64, max_len, alpha);
      Hypothesis oracle = brute_force(m, {1, 2}, max_len, alpha);
      CHECK(beam.tokens == oracle.tokens);
      CHECK(beam.score == doctest::Approx(oracle.score).epsilon(1e-12));
      CHECK(beam.finished == oracle.finished);
    }
  }
}

TEST_CASE("beam of one is greedy") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    HashDecoder m(4, seed * 77);
    Hypothesis g = greedy_decode(m, {3}, 4);
    Hypothesis b = beam_decode(m, {3}, 1, 4, 0.0);
    CHECK(g.tokens == b.tokens);
    CHECK(g.score == doctest::Approx(b.score).epsilon(1e-12));
    CHECK(g.finished == b.finished);
  }
}

TEST_CASE("beam final criterion is monotone in width") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    HashDecoder m(4, seed * 31 + 5);
    for (double alpha : {0.0, 0.7}) {
      double prev = -1e18;
      for (int k : {1, 2, 4, 8, 64}) {
        Hypothesis h = beam_decode(m, {2, 2}, k, 3, alpha);
        double s = ranked(h, alpha);
        CHECK(s >= prev - 1e-12);
        prev = std::max(prev, s);
      }
    }
  }
}

TEST_CASE("length penalty never shortens the winner on a short-biased model") {
  // eos is always the single most likely token, so alpha=0 stops instantly;
  // a large alpha amortizes the score over length and keeps hypotheses alive.
  HashDecoder m(4, 12345);
  Hypothesis short_win = beam_decode(m, {1}, 8, 3, 0.0);
  Hypothesis long_win = beam_decode(m, {1}, 8, 3, 2.5);
  CHECK(long_win.tokens.size() >= short_win.tokens.size());
}

TEST_CASE("remask schedule") {
  CHECK(remask_count(10, 10, 10) == 0);
  CHECK(remask_count(10, 1, 10) == 9);
  CHECK(remask_count(7, 2, 3) == 2);
  CHECK(remask_count(5, 3, 3) == 0);
  CHECK_THROWS_AS(remask_count(10, 0, 10), BadIteration);
  CHECK_THROWS_AS(remask_count(10, 11, 10), BadIteration);
}

TEST_CASE("mask_predict single pass and fixed point") {
  Eigen::MatrixXd rows(3, 5);
  rows << -5, -0.1, -4, -4, -4,    // argmax 1
      -0.2, -5, -4, -4, -4,        // argmax 0
      -4, -4, -4, -0.3, -4;        // argmax 3
  TableScorer m(rows, Eigen::VectorXd::Zero(5), 2);

  std::vector<int> one = mask_predict(m, {1, 2}, 6, 1);
  CHECK(one == std::vector<int>{1, 0, 3, 1, 0, 3});

  // Re-prediction reproduces kept tokens, so more iterations change nothing.
  for (int T : {2, 3, 7}) CHECK(mask_predict(m, {1, 2}, 6, T) == one);

  CHECK_THROWS_AS(mask_predict(m, {1, 2}, 6, 0), BadIteration);
}

TEST_CASE("mask_predict re-masks the lowest-confidence positions") {
  // Confidences: pos0 -0.4, pos1 -0.1, pos2 -0.4. One re-mask at T=2 picks
  // the leftmost of the tied lowest (position 0).
  Eigen::MatrixXd rows(3, 4);
  rows << -0.4, -5, -5, -5,
      -5, -0.1, -5, -5,
      -5, -5, -0.4, -5;
  TableScorer m(rows, Eigen::VectorXd::Zero(5), 2);
  mask_predict(m, {1}, 3, 2);
  REQUIRE(m.reveal_log().size() == 2);
  CHECK(m.reveal_log()[0].empty());
  CHECK(m.reveal_log()[1] == std::vector<int>{1, 2});
}

TEST_CASE("mask_predict total re-masked count follows the schedule") {
  Eigen::MatrixXd rows(1, 6);
  rows << -0.5, -1, -2, -3, -4, -5;
  const int L = 9;
  for (int T : {1, 2, 3, 5, 9}) {
    TableScorer m(rows, Eigen::VectorXd::Zero(5), 2);
    mask_predict(m, {1}, L, T);
    long remasked = 0;
    for (std::size_t call = 1; call < m.reveal_log().size(); ++call)
      remasked += L - static_cast<long>(m.reveal_log()[call].size());
    long expected = 0;
    for (int t = 2; t <= T; ++t) expected += remask_count(L, t - 1, T);
    CHECK(remasked == expected);
  }
}

TEST_CASE("npd reduces to mask_predict at the argmax length") {
  Eigen::MatrixXd rows(2, 5);
  rows << -1, -0.2, -3, -3, -3,
      -3, -3, -0.2, -3, -1;
  Eigen::VectorXd len_lp(5);
  len_lp << -4, -1, -0.2, -2, -3;  // argmax offset 0 (index 2, window 2)
  TableScorer m(rows, len_lp, 2);
  std::vector<int> via_npd = npd_decode(m, {7, 7, 7}, 1, 2);
  CHECK(via_npd == mask_predict(m, {7, 7, 7}, 3, 2));
}

TEST_CASE("npd rescoring picks the best mean and prefers shorter on ties") {
  // Constant -1 rows: every candidate scores mean -1 exactly, so the
  // shortest candidate length wins.
  Eigen::MatrixXd rows = Eigen::MatrixXd::Constant(1, 4, -1.0);
  Eigen::VectorXd len_lp(5);
  len_lp << -0.5, -0.6, -0.7, -0.8, -0.9;  // lengths 1, 2, 3 after offsets
  TableScorer m(rows, len_lp, 2);
  std::vector<int> out = npd_decode(m, {9, 9, 9}, 3, 1);
  CHECK(out.size() == 1);
}

TEST_CASE("npd keeps distinct candidate lengths only") {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Constant(1, 4, -1.0);
  Eigen::VectorXd len_lp(5);
  len_lp << -0.1, -0.2, -0.3, -0.4, -0.5;  // offsets -2, -1, 0, +1, +2
  TableScorer m(rows, len_lp, 2);
  // src length 1 collapses offsets -2, -1, 0 onto length 1; candidates are
  // the distinct lengths 1, 2, 3. Each runs mask_predict (one call at T=1)
  // plus one rescoring pass.
  npd_decode(m, {9}, 3, 1);
  CHECK(m.call_lengths() == std::vector<int>{1, 1, 2, 2, 3, 3});
}
