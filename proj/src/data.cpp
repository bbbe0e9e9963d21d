// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/data.hpp"

#include <json.hpp>

namespace pgen {

std::atomic<long> Sample::live_{0};

void Sample::set(const std::string& name, FieldValue value) {
  for (auto& [k, v] : fields_) {
    if (k == name) {
      v = std::move(value);
      return;
    }
  }
  fields_.emplace_back(name, std::move(value));
}

const FieldValue* Sample::find(const std::string& name) const {
  for (const auto& [k, v] : fields_)
    if (k == name) return &v;
  return nullptr;
}

const FieldValue& Sample::at(const std::string& name) const {
  const FieldValue* v = find(name);
  if (v == nullptr) throw MissingField("sample has no field '" + name + "'");
  return *v;
}

Sample parse_jsonl_line(const std::string& line) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("JSON line is not an object");
  if (j.empty()) throw FormatError("JSON object has no fields");
  Sample s;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& v = it.value();
    if (v.is_string()) {
      s.set(it.key(), FieldValue::string(v.get<std::string>()));
    } else if (v.is_number()) {
      s.set(it.key(), FieldValue::number(v.get<double>()));
    } else if (v.is_array()) {
      std::vector<std::string> xs;
      for (const auto& e : v) {
        if (!e.is_string())
          throw FormatError("field '" + it.key() +
                            "': lists may hold only strings");
        xs.push_back(e.get<std::string>());
      }
      s.set(it.key(), FieldValue::string_list(std::move(xs)));
    } else {
      throw FormatError("field '" + it.key() +
                        "': only flat strings, numbers, and string lists");
    }
  }
  return s;
}

LineParser make_text_parser(std::string field) {
  return [field = std::move(field)](const std::string& line) {
    Sample s;
    s.set(field, FieldValue::string(line));
    return s;
  };
}

LineParser make_tsv_parser(std::vector<std::string> fields) {
  return [fields = std::move(fields)](const std::string& line) {
    Sample s;
    std::size_t start = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      std::size_t tab = line.find('\t', start);
      if (i + 1 < fields.size() && tab == std::string::npos)
        throw FormatError("expected " + std::to_string(fields.size()) +
                          " tab-separated columns");
      std::string cell = line.substr(
          start, tab == std::string::npos ? std::string::npos : tab - start);
      s.set(fields[i], FieldValue::string(std::move(cell)));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    return s;
  };
}

std::vector<Sample> load_parallel(const std::string& src_uri,
                                  const std::string& tgt_uri,
                                  const std::string& src_field,
                                  const std::string& tgt_field) {
  LineReader src(src_uri);
  LineReader tgt(tgt_uri);
  std::vector<Sample> out;
  while (true) {
    auto a = src.next();
    auto b = tgt.next();
    if (!a && !b) break;
    if (!a || !b)
      throw LengthMismatch(src_uri + " and " + tgt_uri +
                           " have different line counts");
    Sample s;
    s.set(src_field, FieldValue::string(std::move(*a)));
    s.set(tgt_field, FieldValue::string(std::move(*b)));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> load_jsonl(const std::string& uri) {
  LineReader reader(uri);
  std::vector<Sample> out;
  while (auto line = reader.next()) {
    try {
      out.push_back(parse_jsonl_line(*line));
    } catch (const FormatError& e) {
      throw ParseError(uri + ": " + e.what(),
                       static_cast<long>(reader.line_number()));
    }
  }
  return out;
}

StreamingDataset::StreamingDataset(std::string uri, LineParser parser)
    : uri_(std::move(uri)), parser_(std::move(parser)), reader_(uri_) {}

std::optional<Sample> StreamingDataset::next_sample() {
  if (exhausted_) return std::nullopt;
  while (true) {
    auto line = reader_.next();
    if (!line) {
      exhausted_ = true;
      return std::nullopt;
    }
    std::uint64_t pos = pos_++;
    if (static_cast<int>(pos % static_cast<std::uint64_t>(shard_stride_)) !=
        shard_offset_)
      continue;
    try {
      return parser_(*line);
    } catch (const Error& e) {
      throw ParseError(uri_ + ": " + e.what(),
                       static_cast<long>(reader_.line_number()));
    }
  }
}

void StreamingDataset::reset() {
  reader_.reset();
  pos_ = 0;
  exhausted_ = false;
}

StreamingDataset shard_stream(const StreamingDataset& source, int worker_id,
                              int num_workers) {
  if (num_workers < 1 || worker_id < 0 || worker_id >= num_workers)
    throw BadShard("worker " + std::to_string(worker_id) + " of " +
                   std::to_string(num_workers));
  StreamingDataset shard(source.uri_, source.parser_);
  shard.shard_offset_ = worker_id;
  shard.shard_stride_ = num_workers;
  return shard;
}

}  // namespace pgen
