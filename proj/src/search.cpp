// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pgen/error.hpp"

namespace pgen {

namespace {

// First maximal coefficient, so exact ties resolve to the lowest id.
int argmax_lowest(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

double ranked_score(const Hypothesis& h, double alpha) {
  double len = static_cast<double>(std::max<std::size_t>(1, h.tokens.size()));
  return h.score / std::pow(len, alpha);
}

bool final_rank_before(const Hypothesis& a, const Hypothesis& b,
                       double alpha) {
  double sa = ranked_score(a, alpha);
  double sb = ranked_score(b, alpha);
  if (sa != sb) return sa > sb;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(),
                                      b.tokens.begin(), b.tokens.end());
}

}  // namespace

Hypothesis greedy_decode(const StepDecoder& model, const std::vector<int>& src,
                         int max_len) {
  Hypothesis hyp;
  auto [lp, state] = model.step(model.start(src), model.bos_id());
  while (true) {
    int choice = argmax_lowest(lp);
    hyp.score += lp[choice];
    if (choice == model.eos_id()) {
      hyp.finished = true;
      return hyp;
    }
    hyp.tokens.push_back(choice);
    if (static_cast<int>(hyp.tokens.size()) >= max_len) return hyp;
    std::tie(lp, state) = model.step(state, choice);
  }
}

Hypothesis beam_decode(const StepDecoder& model, const std::vector<int>& src,
                       int beam_size, int max_len, double length_penalty) {
  struct Live {
    Hypothesis hyp;
    StepDecoder::StatePtr state;  // after feeding the last token
    Eigen::VectorXd next_lp;      // log-probs for the next position
  };
  struct Candidate {
    double score;
    int parent;
    int token;
  };

  std::vector<Live> live(1);
  std::tie(live[0].next_lp, live[0].state) =
      model.step(model.start(src), model.bos_id());

  std::vector<Hypothesis> finished;
  const int eos = model.eos_id();

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(model.vocab()));
    for (int p = 0; p < static_cast<int>(live.size()); ++p)
      for (int v = 0; v < model.vocab(); ++v)
        cands.push_back({live[p].hyp.score + live[p].next_lp[v], p, v});

    std::size_t keep =
        std::min<std::size_t>(static_cast<std::size_t>(beam_size),
                              cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });

    std::vector<Live> next;
    next.reserve(keep);
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = cands[c];
      const Live& parent = live[cand.parent];
      if (cand.token == eos) {
        Hypothesis done = parent.hyp;
        done.score = cand.score;
        done.finished = true;
        finished.push_back(std::move(done));
        continue;
      }
      Live child;
      child.hyp = parent.hyp;
      child.hyp.tokens.push_back(cand.token);
      child.hyp.score = cand.score;
      std::tie(child.next_lp, child.state) =
          model.step(parent.state, cand.token);
      next.push_back(std::move(child));
    }
    live = std::move(next);
  }

  std::vector<Hypothesis> pool = std::move(finished);
  for (Live& l : live) pool.push_back(std::move(l.hyp));

  const Hypothesis* best = &pool.front();
  for (const Hypothesis& h : pool)
    if (final_rank_before(h, *best, length_penalty)) best = &h;
  return *best;
}

int remask_count(int length, int t, int iterations) {
  if (t < 1 || t > iterations)
    throw BadIteration("remask_count: iteration " + std::to_string(t) +
                       " outside [1, " + std::to_string(iterations) + "]");
  return length * (iterations - t) / iterations;
}

std::vector<int> mask_predict(const ParallelScorer& model,
                              const std::vector<int>& src, int length,
                              int iterations) {
  if (iterations < 1)
    throw BadIteration("mask_predict: needs at least one iteration");

  std::vector<int> tokens(static_cast<std::size_t>(length));
  std::vector<double> confidence(static_cast<std::size_t>(length));

  std::vector<int> inputs(static_cast<std::size_t>(length),
                          ParallelScorer::kPlaceholder);
  Eigen::MatrixXd lp = model.position_log_probs(src, inputs);
  for (int i = 0; i < length; ++i) {
    Eigen::Index best = 0;
    lp.row(i).maxCoeff(&best);
    tokens[static_cast<std::size_t>(i)] = static_cast<int>(best);
    confidence[static_cast<std::size_t>(i)] = lp(i, best);
  }

  for (int t = 2; t <= iterations; ++t) {
    int n = remask_count(length, t - 1, iterations);
    if (n == 0) continue;

    // n lowest-confidence positions; equal confidence picks the leftmost.
    std::vector<int> order(static_cast<std::size_t>(length));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return confidence[static_cast<std::size_t>(a)] <
             confidence[static_cast<std::size_t>(b)];
    });

    std::vector<char> masked(static_cast<std::size_t>(length), 0);
    for (int r = 0; r < n; ++r) masked[static_cast<std::size_t>(order[r])] = 1;

    for (int i = 0; i < length; ++i)
      inputs[static_cast<std::size_t>(i)] =
          masked[static_cast<std::size_t>(i)] ? ParallelScorer::kPlaceholder
                                              : tokens[static_cast<std::size_t>(i)];
    lp = model.position_log_probs(src, inputs);
    for (int i = 0; i < length; ++i) {
      if (!masked[static_cast<std::size_t>(i)]) continue;
      Eigen::Index best = 0;
      lp.row(i).maxCoeff(&best);
      tokens[static_cast<std::size_t>(i)] = static_cast<int>(best);
      confidence[static_cast<std::size_t>(i)] = lp(i, best);
    }
  }
  return tokens;
}

int predicted_length(const ParallelScorer& model,
                     const std::vector<int>& src) {
  Eigen::VectorXd lp = model.length_log_probs(src);
  Eigen::Index best = 0;
  lp.maxCoeff(&best);
  return length_candidate(static_cast<int>(src.size()),
                          static_cast<int>(best) - model.length_window());
}

std::vector<int> npd_decode(const ParallelScorer& model,
                            const std::vector<int>& src, int length_beam,
                            int iterations) {
  Eigen::VectorXd length_lp = model.length_log_probs(src);
  const int window = model.length_window();

  // Offsets by descending probability; equal probability prefers the smaller
  // offset. Candidate lengths clamp at 1, so near-empty sources can collapse
  // several offsets onto one length; keep distinct lengths only.
  std::vector<int> order(static_cast<std::size_t>(length_lp.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return length_lp[a] > length_lp[b];
  });

  std::vector<int> lengths;
  for (int idx : order) {
    int len = length_candidate(static_cast<int>(src.size()), idx - window);
    if (std::find(lengths.begin(), lengths.end(), len) == lengths.end())
      lengths.push_back(len);
    if (static_cast<int>(lengths.size()) == length_beam) break;
  }

  std::vector<int> best_tokens;
  double best_mean = 0.0;
  bool have_best = false;
  for (int len : lengths) {
    std::vector<int> tokens = mask_predict(model, src, len, iterations);
    std::vector<int> placeholders(static_cast<std::size_t>(len),
                                  ParallelScorer::kPlaceholder);
    Eigen::MatrixXd lp = model.position_log_probs(src, placeholders);
    double mean = 0.0;
    for (int i = 0; i < len; ++i)
      mean += lp(i, tokens[static_cast<std::size_t>(i)]);
    mean /= static_cast<double>(len);

    bool better = !have_best || mean > best_mean ||
                  (mean == best_mean && tokens.size() < best_tokens.size());
    if (better) {
      best_tokens = std::move(tokens);
      best_mean = mean;
      have_best = true;
    }
  }
  return best_tokens;
}

}  // namespace pgen
