// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoding algorithms over the model's two scoring surfaces: step-wise
// (greedy, beam) and position-parallel (mask-predict, npd). All decoders are
// deterministic; every tie has a total order (lowest token id, leftmost
// position, shorter sequence).

#pragma once

#include <vector>

#include "pgen/model.hpp"

namespace pgen {

struct Hypothesis {
  std::vector<int> tokens;  // never contains eos
  double score = 0.0;       // sum of chosen log-probs, incl. terminal eos
  bool finished = false;    // eos emitted
};

// Argmax decoding from bos until eos or max_len tokens. Ties pick the lowest
// token id. eos is excluded from the returned tokens but its log-probability
// is folded into the score of a finished hypothesis.
Hypothesis greedy_decode(const StepDecoder& model, const std::vector<int>& src,
                         int max_len);

// Standard beam search. Each step expands every live hypothesis by all V
// tokens and keeps the top-k extensions by score (ties: lower token id, then
// lower parent index). An eos extension inside the top-k finishes its
// hypothesis and occupies one of the k slots for that step. The final pool is
// the finished set plus whatever is still live at termination, ranked by
// score / max(1, len)^alpha; ranking ties prefer the lexicographically
// smaller token sequence.
Hypothesis beam_decode(const StepDecoder& model, const std::vector<int>& src,
                       int beam_size, int max_len, double length_penalty);

// Mask-predict schedule: positions still masked after iteration t of T.
// Throws BadIteration unless 1 <= t <= T.
int remask_count(int length, int t, int iterations);

// Iterative parallel decoding. Iteration 1 predicts every position;
// iteration t in 2..T re-masks the remask_count(L, t-1, T) lowest-confidence
// positions (ties: leftmost) and re-predicts only those. Confidence is the
// position's max probability. Throws BadIteration when iterations < 1.
std::vector<int> mask_predict(const ParallelScorer& model,
                              const std::vector<int>& src, int length,
                              int iterations);

// Length-beam decoding: run mask_predict at the top-B distinct candidate
// lengths by predicted length probability (ties: smaller offset), rescore
// each candidate by its mean per-token log-probability under an
// all-placeholder forward, and return the best (ties: shorter candidate).
std::vector<int> npd_decode(const ParallelScorer& model,
                            const std::vector<int>& src, int length_beam,
                            int iterations);

// Argmax of the length head mapped to a concrete candidate length.
int predicted_length(const ParallelScorer& model, const std::vector<int>& src);

// Configured decoding policy; the pluggable unit behind `search.class`.
class SearchStrategy {
 public:
  virtual ~SearchStrategy() = default;
  virtual std::vector<int> decode(const Transformer& model,
                                  const std::vector<int>& src) const = 0;
};

class GreedySearch : public SearchStrategy {
 public:
  explicit GreedySearch(int max_len) : max_len_(max_len) {}
  std::vector<int> decode(const Transformer& model,
                          const std::vector<int>& src) const override {
    return greedy_decode(model, src, max_len_).tokens;
  }

 private:
  int max_len_;
};

class BeamSearch : public SearchStrategy {
 public:
  BeamSearch(int beam, int max_len, double lenpen)
      : beam_(beam), max_len_(max_len), lenpen_(lenpen) {}
  std::vector<int> decode(const Transformer& model,
                          const std::vector<int>& src) const override {
    return beam_decode(model, src, beam_, max_len_, lenpen_).tokens;
  }

 private:
  int beam_;
  int max_len_;
  double lenpen_;
};

class MaskPredictSearch : public SearchStrategy {
 public:
  explicit MaskPredictSearch(int iterations) : iterations_(iterations) {}
  std::vector<int> decode(const Transformer& model,
                          const std::vector<int>& src) const override {
    return mask_predict(model, src, predicted_length(model, src), iterations_);
  }

 private:
  int iterations_;
};

class NpdSearch : public SearchStrategy {
 public:
  NpdSearch(int length_beam, int iterations)
      : length_beam_(length_beam), iterations_(iterations) {}
  std::vector<int> decode(const Transformer& model,
                          const std::vector<int>& src) const override {
    return npd_decode(model, src, length_beam_, iterations_);
  }

 private:
  int length_beam_;
  int iterations_;
};

}  // namespace pgen
