// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/batching.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "pgen/log.hpp"

namespace pgen {

SamplerPlan sequential_plan(int n, int batch_size) {
  if (batch_size < 1) throw Error("sampler: batch_size must be >= 1");
  SamplerPlan plan;
  for (int start = 0; start < n; start += batch_size) {
    std::vector<int> batch;
    for (int i = start; i < std::min(n, start + batch_size); ++i)
      batch.push_back(i);
    plan.push_back(std::move(batch));
  }
  return plan;
}

SamplerPlan shuffle_plan(int n, int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw Error("sampler: batch_size must be >= 1");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  shuffle(order, rng);
  SamplerPlan plan;
  for (int start = 0; start < n; start += batch_size) {
    std::vector<int> batch(
        order.begin() + start,
        order.begin() + std::min(n, start + batch_size));
    plan.push_back(std::move(batch));
  }
  return plan;
}

SamplerPlan token_budget_plan(const std::vector<int>& lengths, int max_tokens,
                              std::uint64_t seed) {
  const int n = static_cast<int>(lengths.size());
  for (int i = 0; i < n; ++i)
    if (lengths[static_cast<std::size_t>(i)] > max_tokens)
      throw SampleTooLong("sample " + std::to_string(i) + " has length " +
                          std::to_string(lengths[static_cast<std::size_t>(i)]) +
                          " > budget " + std::to_string(max_tokens));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  shuffle(order, rng);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return lengths[static_cast<std::size_t>(a)] <
           lengths[static_cast<std::size_t>(b)];
  });

  SamplerPlan plan;
  std::vector<int> batch;
  int batch_max = 0;
  for (int idx : order) {
    int len = lengths[static_cast<std::size_t>(idx)];
    int new_max = std::max(batch_max, len);
    if (!batch.empty() &&
        (static_cast<long long>(batch.size()) + 1) * new_max > max_tokens) {
      plan.push_back(std::move(batch));
      batch = {};
      new_max = len;
    }
    batch.push_back(idx);
    batch_max = new_max;
  }
  if (!batch.empty()) plan.push_back(std::move(batch));
  return plan;
}

SamplerPlan make_plan(const SamplerSpec& spec, const std::vector<int>& lengths,
                      std::uint64_t seed) {
  const int n = static_cast<int>(lengths.size());
  switch (spec.kind) {
    case SamplerSpec::Kind::kSequential:
      return sequential_plan(n, spec.batch_size);
    case SamplerSpec::Kind::kShuffle:
      return shuffle_plan(n, spec.batch_size, seed);
    case SamplerSpec::Kind::kTokenBudget:
      return token_budget_plan(lengths, spec.max_tokens, seed);
  }
  return {};
}

int sample_cost(const ProcessedSample& s) {
  return std::max(static_cast<int>(s.src.size()),
                  static_cast<int>(s.tgt.size()));
}

ShuffleBuffer::ShuffleBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw Error("shuffle buffer capacity must be >= 1");
  slots_.reserve(static_cast<std::size_t>(capacity));
}

void ShuffleBuffer::push(ProcessedSample s) {
  if (full()) throw Error("shuffle buffer overflow");
  slots_.push_back(std::move(s));
}

std::vector<ProcessedSample> ShuffleBuffer::take(
    const std::vector<int>& indices) {
  std::vector<ProcessedSample> out;
  out.reserve(indices.size());
  for (int i : indices)
    out.push_back(std::move(slots_[static_cast<std::size_t>(i)]));
  // Compact with swap-remove from the highest index down so lower indices
  // stay valid.
  std::vector<int> sorted = indices;
  std::sort(sorted.begin(), sorted.end(), std::greater<int>());
  for (int i : sorted) {
    slots_[static_cast<std::size_t>(i)] = std::move(slots_.back());
    slots_.pop_back();
  }
  return out;
}

InMemoryLoader::InMemoryLoader(std::vector<ProcessedSample> data,
                               SamplerSpec sampler, int pad_id)
    : data_(std::move(data)), sampler_(sampler), pad_id_(pad_id) {
  start_epoch(0);
}

void InMemoryLoader::start_epoch(long epoch) {
  std::vector<int> lengths;
  lengths.reserve(data_.size());
  for (const ProcessedSample& s : data_) lengths.push_back(sample_cost(s));
  plan_ = make_plan(sampler_, lengths,
                    sampler_.seed + static_cast<std::uint64_t>(epoch));
  cursor_ = 0;
}

std::optional<Batch> InMemoryLoader::next_batch() {
  if (cursor_ >= plan_.size()) return std::nullopt;
  const std::vector<int>& ids = plan_[cursor_++];
  std::vector<ProcessedSample> group;
  group.reserve(ids.size());
  for (int i : ids) group.push_back(data_[static_cast<std::size_t>(i)]);
  return collate(group, pad_id_);
}

StreamingLoader::StreamingLoader(StreamingDataset dataset, OfflineFn offline,
                                 int buffer_capacity, SamplerSpec sampler,
                                 int pad_id, OnError on_error)
    : dataset_(std::move(dataset)),
      offline_(std::move(offline)),
      buffer_(buffer_capacity),
      sampler_(sampler),
      pad_id_(pad_id),
      on_error_(on_error),
      rng_(sampler.seed) {}

void StreamingLoader::start_epoch(long epoch) {
  dataset_.reset();
  buffer_ = ShuffleBuffer(buffer_.capacity());
  rng_ = Rng(sampler_.seed + static_cast<std::uint64_t>(epoch));
}

void StreamingLoader::fill() {
  while (!buffer_.full() && !dataset_.exhausted()) {
    std::optional<Sample> raw;
    try {
      raw = dataset_.next_sample();
    } catch (const ParseError& e) {
      if (on_error_ == OnError::kAbort) throw;
      log_info("skipping bad line: ", e.what());
      continue;
    }
    if (!raw) break;
    buffer_.push(offline_(*raw));
  }
}

std::vector<int> StreamingLoader::select() {
  const auto& slots = buffer_.slots();
  const int n = static_cast<int>(slots.size());
  switch (sampler_.kind) {
    case SamplerSpec::Kind::kSequential: {
      std::vector<int> ids;
      for (int i = 0; i < std::min(n, sampler_.batch_size); ++i)
        ids.push_back(i);
      return ids;
    }
    case SamplerSpec::Kind::kShuffle:
      return sample_without_replacement(n, std::min(n, sampler_.batch_size),
                                        rng_);
    case SamplerSpec::Kind::kTokenBudget: {
      std::vector<int> lengths;
      lengths.reserve(slots.size());
      for (const ProcessedSample& s : slots) lengths.push_back(sample_cost(s));
      SamplerPlan plan =
          token_budget_plan(lengths, sampler_.max_tokens, rng_.next_u64());
      return plan.empty() ? std::vector<int>{} : plan.front();
    }
  }
  return {};
}

std::optional<Batch> StreamingLoader::next_batch() {
  fill();
  if (buffer_.empty()) return std::nullopt;
  std::vector<int> ids = select();
  std::vector<ProcessedSample> group = buffer_.take(ids);
  return collate(group, pad_id_);
}

struct Prefetcher::Impl {
  explicit Impl(BatchSource& source) : src(source) {
    worker = std::thread([this] { run(); });
  }
  ~Impl() {
    {
      std::lock_guard lock(mu);
      stop = true;
      cv_slots.notify_all();
    }
    if (worker.joinable()) worker.join();
  }

  void run() {
    while (true) {
      std::optional<Batch> batch;
      std::exception_ptr err;
      try {
        batch = src.next_batch();
      } catch (...) {
        err = std::current_exception();
      }
      std::unique_lock lock(mu);
      cv_slots.wait(lock, [this] { return queue.size() < 2 || stop; });
      if (stop) return;
      if (err) {
        error = err;
        done = true;
        cv_items.notify_all();
        return;
      }
      if (!batch) {
        done = true;
        cv_items.notify_all();
        return;
      }
      queue.push_back(std::move(*batch));
      cv_items.notify_all();
    }
  }

  std::optional<Batch> next() {
    std::unique_lock lock(mu);
    cv_items.wait(lock, [this] { return !queue.empty() || done; });
    if (!queue.empty()) {
      Batch b = std::move(queue.front());
      queue.pop_front();
      cv_slots.notify_all();
      return b;
    }
    if (error) std::rethrow_exception(error);
    return std::nullopt;
  }

  BatchSource& src;
  std::mutex mu;
  std::condition_variable cv_slots;
  std::condition_variable cv_items;
  std::deque<Batch> queue;
  bool done = false;
  bool stop = false;
  std::exception_ptr error;
  std::thread worker;
};

Prefetcher::Prefetcher(BatchSource& source)
    : impl_(std::make_unique<Impl>(source)) {}

Prefetcher::~Prefetcher() = default;

std::optional<Batch> Prefetcher::next_batch() { return impl_->next(); }

}  // namespace pgen
