// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/eval.hpp"

#include <cmath>
#include <json.hpp>
#include <map>
#include <sstream>

#include "pgen/error.hpp"

namespace pgen {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> tokens;
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

// n-gram multiset of a token list, n-grams joined with '\x1f'.
std::map<std::string, long> ngrams(const std::vector<std::string>& tokens,
                                   int n) {
  std::map<std::string, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) key += '\x1f' + tokens[i + j];
    ++counts[key];
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, int max_n) {
  if (hypotheses.size() != references.size())
    throw LengthMismatch("bleu: " + std::to_string(hypotheses.size()) +
                         " hypotheses vs " +
                         std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw EmptyError("bleu: empty corpus");

  std::vector<std::vector<std::string>> hyp_tokens, ref_tokens;
  hyp_tokens.reserve(hypotheses.size());
  ref_tokens.reserve(references.size());
  long hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_tokens.push_back(split_ws(hypotheses[i]));
    ref_tokens.push_back(split_ws(references[i]));
    hyp_len += static_cast<long>(hyp_tokens.back().size());
    ref_len += static_cast<long>(ref_tokens.back().size());
  }
  if (hyp_len == 0) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    long clipped = 0, total = 0;
    for (std::size_t i = 0; i < hyp_tokens.size(); ++i) {
      auto hyp_grams = ngrams(hyp_tokens[i], n);
      auto ref_grams = ngrams(ref_tokens[i], n);
      for (const auto& [gram, count] : hyp_grams) {
        auto it = ref_grams.find(gram);
        if (it != ref_grams.end()) clipped += std::min(count, it->second);
      }
      long slots = static_cast<long>(hyp_tokens[i].size()) - n + 1;
      if (slots > 0) total += slots;
    }
    if (total == 0 || clipped == 0) return 0.0;
    log_sum += std::log(static_cast<double>(clipped) /
                        static_cast<double>(total));
  }
  double bp = std::exp(std::min(
      0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
  return bp * std::exp(log_sum / max_n);
}

double accuracy(const std::vector<std::string>& pred,
                const std::vector<std::string>& gold) {
  if (pred.size() != gold.size())
    throw LengthMismatch("accuracy: " + std::to_string(pred.size()) +
                         " predictions vs " + std::to_string(gold.size()) +
                         " golds");
  if (pred.empty()) throw EmptyError("accuracy: empty corpus");
  long hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gold[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double f1(const std::vector<std::string>& pred,
          const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string, long> want;
  for (const std::string& t : gold) ++want[t];
  long overlap = 0;
  for (const std::string& t : pred) {
    auto it = want.find(t);
    if (it != want.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) /
                     static_cast<double>(pred.size());
  double recall = static_cast<double>(overlap) /
                  static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

double BleuMetric::score(const std::vector<std::string>& hypotheses,
                         const std::vector<std::string>& references) const {
  return bleu(hypotheses, references);
}

double AccuracyMetric::score(const std::vector<std::string>& hypotheses,
                             const std::vector<std::string>& references) const {
  return accuracy(hypotheses, references);
}

double F1Metric::score(const std::vector<std::string>& hypotheses,
                       const std::vector<std::string>& references) const {
  if (hypotheses.size() != references.size())
    throw LengthMismatch("f1: unaligned corpus");
  if (hypotheses.empty()) throw EmptyError("f1: empty corpus");
  double sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    sum += f1(split_ws(hypotheses[i]), split_ws(references[i]));
  return sum / static_cast<double>(hypotheses.size());
}

bool metric_higher_is_better(const std::string& name) {
  return name != "loss";
}

std::string scoreboard_json(const ScoreBoard& board) {
  nlohmann::json j;
  j["scores"] = board.scores;
  j["overall"] = board.overall;
  return j.dump();
}

ScoreBoard evaluate(
    const std::function<std::vector<std::string>(const Batch&)>& decode,
    const std::vector<EvalSet>& datasets,
    const std::vector<std::shared_ptr<Metric>>& metrics) {
  if (datasets.empty()) throw EmptyError("evaluate: no datasets");
  if (metrics.empty()) throw EmptyError("evaluate: no metrics");

  ScoreBoard board;
  double sum = 0.0;
  for (const EvalSet& ds : datasets) {
    std::vector<std::string> outputs;
    for (const Batch& batch : ds.batches) {
      std::vector<std::string> decoded = decode(batch);
      outputs.insert(outputs.end(), decoded.begin(), decoded.end());
    }
    if (outputs.size() != ds.references.size())
      throw LengthMismatch("evaluate: dataset " + ds.name + " decoded " +
                           std::to_string(outputs.size()) + " outputs for " +
                           std::to_string(ds.references.size()) +
                           " references");
    for (const auto& metric : metrics) {
      double s = metric->score(outputs, ds.references);
      board.scores[ds.name + "." + metric->name()] = s;
      sum += s;
    }
  }
  board.overall = sum / static_cast<double>(board.scores.size());
  return board;
}

std::pair<std::string, std::string> parse_assess_by(const std::string& s) {
  std::size_t dot = s.find('.');
  if (dot == std::string::npos || s.find('.', dot + 1) != std::string::npos)
    throw FormatError("assess_by must be {dataset}.{metric}: " + s);
  if (dot == 0 || dot + 1 == s.size())
    throw FormatError("assess_by has an empty side: " + s);
  return {s.substr(0, dot), s.substr(dot + 1)};
}

std::pair<Checkpoint, Checkpoint> select_and_average(
    const std::vector<std::pair<Checkpoint, double>>& history, int k,
    bool higher_is_better) {
  if (history.empty()) throw EmptyError("select_and_average: empty history");

  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    bool improves = higher_is_better ? history[i].second >= history[best].second
                                     : history[i].second <= history[best].second;
    if (improves) best = i;  // ties go to the later checkpoint
  }

  std::size_t first =
      best + 1 >= static_cast<std::size_t>(k) ? best + 1 - k : 0;
  const Checkpoint& anchor = history[best].first;

  Checkpoint avg;
  avg.state = anchor.state;
  avg.entries.resize(anchor.entries.size());
  std::size_t window = best - first + 1;
  for (std::size_t e = 0; e < anchor.entries.size(); ++e) {
    avg.entries[e].name = anchor.entries[e].name;
    avg.entries[e].dims = anchor.entries[e].dims;
    std::vector<double> sums(anchor.entries[e].data.size(), 0.0);
    for (std::size_t i = first; i <= best; ++i) {
      const CheckpointEntry& part = history[i].first.entries[e];
      if (part.name != anchor.entries[e].name ||
          part.dims != anchor.entries[e].dims)
        throw ShapeMismatch("select_and_average: checkpoint " +
                            std::to_string(i) + " disagrees on " +
                            anchor.entries[e].name);
      for (std::size_t x = 0; x < sums.size(); ++x)
        sums[x] += static_cast<double>(part.data[x]);
    }
    avg.entries[e].data.resize(sums.size());
    for (std::size_t x = 0; x < sums.size(); ++x)
      avg.entries[e].data[x] =
          static_cast<float>(sums[x] / static_cast<double>(window));
  }
  return {history[best].first, avg};
}

}  // namespace pgen
