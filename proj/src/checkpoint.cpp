// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>

#include "pgen/error.hpp"
#include "pgen/io.hpp"

namespace pgen {

namespace {

constexpr char kMagic[] = "PGEN1";
constexpr std::size_t kMagicLen = 5;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw FormatError("checkpoint: truncated at byte " +
                        std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json moments_json(const std::map<std::string, std::vector<float>>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, values] : m) j[name] = values;
  return j;
}

std::map<std::string, std::vector<float>> moments_from_json(
    const nlohmann::json& j) {
  std::map<std::string, std::vector<float>> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[it.key()] = it.value().get<std::vector<float>>();
  return out;
}

nlohmann::json state_json(const TrainState& s) {
  return nlohmann::json{{"step", s.step},
                        {"epoch", s.epoch},
                        {"micro_in_epoch", s.micro_in_epoch},
                        // u64 exceeds JSON's exact double range
                        {"rng", std::to_string(s.rng_state)},
                        {"has_best", s.has_best},
                        {"best_score", s.best_score},
                        {"patience", s.patience_used},
                        {"m", moments_json(s.moment_m)},
                        {"v", moments_json(s.moment_v)},
                        {"scores", s.scores}};
}

TrainState state_from_json(const nlohmann::json& j) {
  TrainState s;
  s.step = j.at("step").get<long>();
  s.epoch = j.at("epoch").get<long>();
  s.micro_in_epoch = j.at("micro_in_epoch").get<long>();
  s.rng_state = std::stoull(j.at("rng").get<std::string>());
  s.has_best = j.at("has_best").get<bool>();
  s.best_score = j.at("best_score").get<double>();
  s.patience_used = j.at("patience").get<long>();
  s.moment_m = moments_from_json(j.at("m"));
  s.moment_v = moments_from_json(j.at("v"));
  s.scores = j.at("scores").get<std::map<std::string, double>>();
  return s;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, kMagicLen);
  put_u32(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const CheckpointEntry& e : ckpt.entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (int d : e.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : e.data) put_f32(out, f);
  }
  std::string blob = state_json(ckpt.state).dump();
  put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out += blob;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.str(kMagicLen) != kMagic)
    throw FormatError("checkpoint: bad magic");
  Checkpoint ckpt;
  std::uint32_t count = r.u32();
  ckpt.entries.resize(count);
  for (CheckpointEntry& e : ckpt.entries) {
    e.name = r.str(r.u32());
    std::uint32_t rank = r.u32();
    e.dims.resize(rank);
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.dims[d] = static_cast<int>(r.u32());
      total *= static_cast<std::size_t>(e.dims[d]);
    }
    e.data.resize(total);
    for (float& f : e.data) f = r.f32();
  }
  std::string blob = r.str(r.u32());
  if (!r.exhausted()) throw FormatError("checkpoint: trailing bytes");
  try {
    ckpt.state = state_from_json(nlohmann::json::parse(blob));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad state blob: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  AsyncWriter writer(path);
  writer.submit(encode_checkpoint(ckpt));
  writer.flush_barrier();
  writer.close();
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint snapshot_params(ParamMap& params, const TrainState& state,
                           bool write_through) {
  Checkpoint ckpt;
  ckpt.state = state;
  ckpt.entries.reserve(params.items().size());
  for (auto& [name, tensor] : params.items()) {
    CheckpointEntry e;
    e.name = name;
    e.dims = tensor.shape();
    e.data.resize(static_cast<std::size_t>(tensor.size()));
    auto& values = tensor.array();
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      float f = static_cast<float>(values[i]);
      if (write_through) values[i] = static_cast<double>(f);
      e.data[static_cast<std::size_t>(i)] = f;
    }
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

void load_params(const Checkpoint& ckpt, ParamMap& params) {
  if (ckpt.entries.size() != params.items().size())
    throw FormatError("checkpoint: entry count " +
                      std::to_string(ckpt.entries.size()) +
                      " does not match model parameter count " +
                      std::to_string(params.items().size()));
  for (const CheckpointEntry& e : ckpt.entries) {
    Tensor& t = params.at(e.name);  // NotFound on unknown name
    if (e.dims != t.shape())
      throw ShapeMismatch("checkpoint: shape mismatch for " + e.name);
    auto& values = t.array();
    for (Eigen::Index i = 0; i < t.size(); ++i)
      values[i] = static_cast<double>(e.data[static_cast<std::size_t>(i)]);
  }
}

}  // namespace pgen
