// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Raw-data layer: Sample records plus in-memory and streaming datasets.
// Sample keeps a process-wide live-instance count so constant-memory claims
// about streaming are testable instead of taken on faith.

#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/io.hpp"

namespace pgen {

struct FieldValue {
  enum class Type { kString, kNumber, kStringList };

  Type type = Type::kString;
  std::string str;
  double num = 0.0;
  std::vector<std::string> list;

  static FieldValue string(std::string s) {
    FieldValue v;
    v.type = Type::kString;
    v.str = std::move(s);
    return v;
  }
  static FieldValue number(double x) {
    FieldValue v;
    v.type = Type::kNumber;
    v.num = x;
    return v;
  }
  static FieldValue string_list(std::vector<std::string> xs) {
    FieldValue v;
    v.type = Type::kStringList;
    v.list = std::move(xs);
    return v;
  }

  bool operator==(const FieldValue& o) const {
    if (type != o.type) return false;
    switch (type) {
      case Type::kString: return str == o.str;
      case Type::kNumber: return num == o.num;
      case Type::kStringList: return list == o.list;
    }
    return false;
  }
};

// Ordered field-name -> value record, the universal raw-data unit.
class Sample {
 public:
  Sample() { ++live_; }
  Sample(const Sample& o) : fields_(o.fields_) { ++live_; }
  Sample(Sample&& o) noexcept : fields_(std::move(o.fields_)) { ++live_; }
  Sample& operator=(const Sample&) = default;
  Sample& operator=(Sample&&) = default;
  ~Sample() { --live_; }

  void set(const std::string& name, FieldValue value);
  const FieldValue* find(const std::string& name) const;
  const FieldValue& at(const std::string& name) const;  // MissingField
  const std::vector<std::pair<std::string, FieldValue>>& fields() const {
    return fields_;
  }
  bool operator==(const Sample& o) const { return fields_ == o.fields_; }

  static long live_count() { return live_.load(); }

 private:
  std::vector<std::pair<std::string, FieldValue>> fields_;
  static std::atomic<long> live_;
};

using LineParser = std::function<Sample(const std::string&)>;

// Parsers for the supported on-disk formats. The JSON one accepts only flat
// objects of strings, numbers, and string lists; it throws FormatError
// without a line number (callers attach it).
Sample parse_jsonl_line(const std::string& line);
LineParser make_text_parser(std::string field);
LineParser make_tsv_parser(std::vector<std::string> fields);

std::vector<Sample> load_parallel(const std::string& src_uri,
                                  const std::string& tgt_uri,
                                  const std::string& src_field,
                                  const std::string& tgt_field);
std::vector<Sample> load_jsonl(const std::string& uri);

// One pass over a line file with O(1) resident samples. A parse failure
// throws ParseError with the line number and leaves the stream positioned
// after the bad line.
class StreamingDataset {
 public:
  StreamingDataset(std::string uri, LineParser parser);

  std::optional<Sample> next_sample();
  void reset();
  bool exhausted() const { return exhausted_; }

  const std::string& uri() const { return uri_; }
  const LineParser& parser() const { return parser_; }

 private:
  friend StreamingDataset shard_stream(const StreamingDataset&, int, int);

  std::string uri_;
  LineParser parser_;
  LineReader reader_;
  std::uint64_t pos_ = 0;  // 0-based position in the unsharded stream
  int shard_offset_ = 0;
  int shard_stride_ = 1;
  bool exhausted_ = false;
};

// Round-robin shard: positions congruent to worker_id modulo num_workers.
StreamingDataset shard_stream(const StreamingDataset& source, int worker_id,
                              int num_workers);

}  // namespace pgen
