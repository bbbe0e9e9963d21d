// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Samplers produce index plans over finite datasets; loaders turn datasets
// plus plans into padded batches. The streaming loader reconciles sampling
// with one-pass input through a bounded shuffle buffer.

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pgen/data.hpp"
#include "pgen/pipeline.hpp"
#include "pgen/rng.hpp"

namespace pgen {

// Ordered list of index-batches partitioning [0, n).
using SamplerPlan = std::vector<std::vector<int>>;

SamplerPlan sequential_plan(int n, int batch_size);
SamplerPlan shuffle_plan(int n, int batch_size, std::uint64_t seed);

// Stable sort by length (after a seeded shuffle so ties rotate with the
// seed), then greedy packing with cost = batch_count * batch_max_length.
SamplerPlan token_budget_plan(const std::vector<int>& lengths, int max_tokens,
                              std::uint64_t seed);

struct SamplerSpec {
  enum class Kind { kSequential, kShuffle, kTokenBudget };
  Kind kind = Kind::kSequential;
  int batch_size = 1;
  int max_tokens = 0;
  std::uint64_t seed = 0;
};

SamplerPlan make_plan(const SamplerSpec& spec, const std::vector<int>& lengths,
                      std::uint64_t seed);

// Budget cost length of one sample.
int sample_cost(const ProcessedSample& s);

// Fixed-capacity pool of pending samples for local shuffling of streams.
class ShuffleBuffer {
 public:
  explicit ShuffleBuffer(int capacity);

  bool full() const { return static_cast<int>(slots_.size()) >= capacity_; }
  bool empty() const { return slots_.empty(); }
  int size() const { return static_cast<int>(slots_.size()); }
  int capacity() const { return capacity_; }

  void push(ProcessedSample s);
  const std::vector<ProcessedSample>& slots() const { return slots_; }
  // Remove the given slots (indices into slots()) and return them in the
  // given order.
  std::vector<ProcessedSample> take(const std::vector<int>& indices);

 private:
  int capacity_;
  std::vector<ProcessedSample> slots_;
};

class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual std::optional<Batch> next_batch() = 0;
  // Rewind to the start of the data; plans are re-derived with
  // seed = sampler seed + epoch.
  virtual void start_epoch(long epoch) = 0;
};

class InMemoryLoader : public BatchSource {
 public:
  InMemoryLoader(std::vector<ProcessedSample> data, SamplerSpec sampler,
                 int pad_id);

  std::optional<Batch> next_batch() override;
  void start_epoch(long epoch) override;

  const SamplerPlan& plan() const { return plan_; }

 private:
  std::vector<ProcessedSample> data_;
  SamplerSpec sampler_;
  int pad_id_;
  SamplerPlan plan_;
  std::size_t cursor_ = 0;
};

enum class OnError { kAbort, kSkip };

using OfflineFn = std::function<ProcessedSample(const Sample&)>;

class StreamingLoader : public BatchSource {
 public:
  StreamingLoader(StreamingDataset dataset, OfflineFn offline,
                  int buffer_capacity, SamplerSpec sampler, int pad_id,
                  OnError on_error = OnError::kAbort);

  std::optional<Batch> next_batch() override;
  void start_epoch(long epoch) override;

 private:
  void fill();
  std::vector<int> select();

  StreamingDataset dataset_;
  OfflineFn offline_;
  ShuffleBuffer buffer_;
  SamplerSpec sampler_;
  int pad_id_;
  OnError on_error_;
  Rng rng_;
};

// Runs a BatchSource on a worker thread, handing batches over a bounded
// queue of depth 2. Exceptions resurface on the consumer.
class Prefetcher {
 public:
  explicit Prefetcher(BatchSource& source);
  ~Prefetcher();

  std::optional<Batch> next_batch();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pgen
