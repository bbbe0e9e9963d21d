// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Metrics, the dataset x metric evaluation product, and checkpoint
// selection/averaging for automatic model selection.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pgen/checkpoint.hpp"
#include "pgen/pipeline.hpp"

namespace pgen {

// Corpus BLEU in [0, 1]: clipped n-gram precisions for n = 1..max_n over
// whitespace tokens, geometric mean, brevity penalty
// exp(min(0, 1 - ref_len/hyp_len)). Any zero precision yields 0 (no
// smoothing). Throws LengthMismatch / EmptyError.
double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, int max_n = 4);

// Fraction of exactly matching lines. Throws LengthMismatch / EmptyError.
double accuracy(const std::vector<std::string>& pred,
                const std::vector<std::string>& gold);

// Multiset-overlap F1 of two token lists. Both empty -> 1, one empty -> 0.
double f1(const std::vector<std::string>& pred,
          const std::vector<std::string>& gold);

// Corpus metric over aligned hypothesis/reference lines.
class Metric {
 public:
  virtual ~Metric() = default;
  virtual std::string name() const = 0;
  virtual double score(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references) const = 0;
};

class BleuMetric : public Metric {
 public:
  std::string name() const override { return "bleu"; }
  double score(const std::vector<std::string>& hypotheses,
               const std::vector<std::string>& references) const override;
};

class AccuracyMetric : public Metric {
 public:
  std::string name() const override { return "accuracy"; }
  double score(const std::vector<std::string>& hypotheses,
               const std::vector<std::string>& references) const override;
};

// Whitespace-tokenizes each pair and averages per-pair F1 over the corpus.
class F1Metric : public Metric {
 public:
  std::string name() const override { return "f1"; }
  double score(const std::vector<std::string>& hypotheses,
               const std::vector<std::string>& references) const override;
};

// true when larger is better; "loss" is the one lower-is-better metric.
bool metric_higher_is_better(const std::string& name);

// A named evaluation corpus: batches to decode plus aligned references.
struct EvalSet {
  std::string name;
  std::vector<Batch> batches;
  std::vector<std::string> references;
};

struct ScoreBoard {
  // "dataset.metric" -> score, one entry per (dataset, metric) pair.
  std::map<std::string, double> scores;
  double overall = 0.0;  // arithmetic mean of all entries
};

// JSON form {"scores": {...}, "overall": x}.
std::string scoreboard_json(const ScoreBoard& board);

// Decode every dataset exactly once, score each metric on the outputs, and
// fill the full dataset x metric product.
ScoreBoard evaluate(
    const std::function<std::vector<std::string>(const Batch&)>& decode,
    const std::vector<EvalSet>& datasets,
    const std::vector<std::shared_ptr<Metric>>& metrics);

// "{dataset}.{metric}" with exactly one dot and both sides non-empty.
std::pair<std::string, std::string> parse_assess_by(const std::string& s);

// best = the max-score checkpoint (ties -> later entry; min-score when
// higher_is_better is false). best_avg = element-wise parameter mean of the
// at most k checkpoints ending at best (f64 sums), carrying best's training
// state and scores.
std::pair<Checkpoint, Checkpoint> select_and_average(
    const std::vector<std::pair<Checkpoint, double>>& history, int k,
    bool higher_is_better = true);

}  // namespace pgen
