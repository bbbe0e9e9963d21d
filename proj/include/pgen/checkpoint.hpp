// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint wire format and the training-state snapshot it carries.
// Parameters are stored as f32; training math runs in f64, so snapshots
// round the live parameters through f32 and write the rounded values back.
// A resumed run therefore continues from bit-identical state.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pgen/model.hpp"

namespace pgen {

struct TrainState {
  long step = 0;   // optimizer updates so far
  long epoch = 0;  // completed passes over the training data
  long micro_in_epoch = 0;  // micro-batches consumed in the current epoch
  std::uint64_t rng_state = 0;
  bool has_best = false;
  double best_score = 0.0;
  long patience_used = 0;  // consecutive non-improving evaluations
  // Adam moments per parameter, f32-rounded like the parameters.
  std::map<std::string, std::vector<float>> moment_m;
  std::map<std::string, std::vector<float>> moment_v;
  // Latest evaluation scores, keyed "dataset.metric".
  std::map<std::string, double> scores;
};

struct CheckpointEntry {
  std::string name;
  std::vector<int> dims;
  std::vector<float> data;
};

struct Checkpoint {
  std::vector<CheckpointEntry> entries;  // model parameters only
  TrainState state;
};

// Layout: magic "PGEN1"; u32 entry count; per entry u32 name length, name
// bytes, u32 rank, u32 per dim, then raw f32 payload; finally a u32-length-
// prefixed JSON blob holding TrainState. All scalars little-endian.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);  // FormatError

// save goes through AsyncWriter with a flush barrier, so the file is
// complete once this returns.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);  // IoError, FormatError

// f32 snapshot of the live parameters. With write_through set the rounded
// values are written back (see header comment), which is what a mid-training
// save needs; a terminal snapshot passes false and leaves the model alone.
Checkpoint snapshot_params(ParamMap& params, const TrainState& state,
                           bool write_through = true);

// Strict restore: entry names and shapes must match params exactly.
void load_params(const Checkpoint& ckpt, ParamMap& params);

}  // namespace pgen
