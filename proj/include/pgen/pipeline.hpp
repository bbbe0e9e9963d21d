// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Text -> token ids. BPE with a "</w>" end-of-word marker, a vocabulary with
// fixed reserved ids, offline numericalization (data_collate) and online
// padding (collate).

#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pgen/data.hpp"
#include "pgen/error.hpp"

namespace pgen {

std::vector<std::string> split_whitespace(const std::string& text);
std::vector<std::string> split_codepoints(const std::string& word);

class BpeModel {
 public:
  BpeModel() = default;

  // Greedy most-frequent-pair training over whitespace-split words; ties go
  // to the lexicographically smaller pair. Stops early if no pair repeats.
  static BpeModel train(const std::vector<std::string>& lines, int num_merges);

  std::vector<std::string> encode(const std::string& text) const;
  static std::string decode(const std::vector<std::string>& tokens);

  const std::vector<std::pair<std::string, std::string>>& merges() const {
    return merges_;
  }
  void add_merge(std::string a, std::string b);

  void save(const std::string& path) const;
  static BpeModel load(const std::string& path);

  static constexpr const char* kEndOfWord = "</w>";

 private:
  std::vector<std::string> encode_word(const std::string& word) const;

  std::vector<std::pair<std::string, std::string>> merges_;
  // merge pair -> rank, for O(1) lookup during encoding
  std::map<std::pair<std::string, std::string>, int> rank_;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kMask = 4;
  static constexpr int kReserved = 5;

  Vocabulary();  // reserved tokens only

  // Reserved ids 0..4 first, then tokens by descending count, ties broken
  // lexicographically; tokens under min_count dropped.
  static Vocabulary from_counts(
      const std::map<std::string, long long>& counts, long long min_count);

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void push(std::string token, long long count);

  std::vector<std::string> tokens_;
  std::vector<long long> counts_;
  std::unordered_map<std::string, int> index_;
};

// Numericalized sample: source ids bare, target ids wrapped in bos/eos.
// Instances are live-counted for the streaming memory tests.
class ProcessedSample {
 public:
  ProcessedSample() { ++live_; }
  ProcessedSample(const ProcessedSample& o)
      : src(o.src), tgt(o.tgt), has_tgt(o.has_tgt) {
    ++live_;
  }
  ProcessedSample(ProcessedSample&& o) noexcept
      : src(std::move(o.src)), tgt(std::move(o.tgt)), has_tgt(o.has_tgt) {
    ++live_;
  }
  ProcessedSample& operator=(const ProcessedSample&) = default;
  ProcessedSample& operator=(ProcessedSample&&) = default;
  ~ProcessedSample() { --live_; }

  std::vector<int> src;
  std::vector<int> tgt;
  bool has_tgt = false;

  bool operator==(const ProcessedSample& o) const {
    return src == o.src && tgt == o.tgt && has_tgt == o.has_tgt;
  }

  static long live_count() { return live_.load(); }

 private:
  static std::atomic<long> live_;
};

struct FieldSpec {
  std::string src_field = "src";
  std::string tgt_field = "tgt";
  bool require_target = true;
};

// Offline step: tokenize + numericalize once per sample. Pure.
ProcessedSample data_collate(const Sample& sample, const Vocabulary& vocab,
                             const BpeModel& bpe, const FieldSpec& spec);

struct Batch {
  Eigen::MatrixXi src_tokens;  // [B, S], pad beyond src_lengths[b]
  Eigen::MatrixXi tgt_tokens;  // [B, T], empty when targets absent
  std::vector<int> src_lengths;
  std::vector<int> tgt_lengths;
  Eigen::ArrayXXi src_mask;  // 1 = real token, 0 = pad
  Eigen::ArrayXXi tgt_mask;
  bool has_tgt = false;

  int batch_size() const { return static_cast<int>(src_tokens.rows()); }
};

// Online step: pad a non-empty group of processed samples to per-batch max.
Batch collate(const std::vector<ProcessedSample>& samples, int pad_id);

}  // namespace pgen
