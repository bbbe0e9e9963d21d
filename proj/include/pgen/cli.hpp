// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: preprocess, train, generate, evaluate. All real work
// lives in the library; this layer reads one config tree, builds plugins
// through the registry, and wires them together.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pgen/batching.hpp"
#include "pgen/config.hpp"
#include "pgen/data.hpp"
#include "pgen/model.hpp"
#include "pgen/pipeline.hpp"
#include "pgen/registry.hpp"
#include "pgen/trainer.hpp"

namespace pgen {

// ---------------------------------------------------------------------------
// Plugin payloads. A factory only sees its own config subtree, so anything
// that depends on a sibling object (the vocabulary, a derived seed, the
// model) is described by a small spec here and assembled by the driver.

// What a dataset plugin yields: either a finite sample list or a factory for
// fresh one-pass streams over the underlying file.
struct DataSource {
  std::vector<Sample> samples;
  std::function<StreamingDataset()> open_stream;
  bool streaming = false;
  std::string src_field = "src";
  std::string tgt_field = "tgt";
  OnError on_error = OnError::kAbort;
};

struct LoaderSpec {
  bool streaming = false;
  int buffer_size = 1024;
  bool prefetch = false;
  int num_workers = 1;
  int worker_id = 0;
};

struct TokenizerBundle {
  Vocabulary vocab;
  BpeModel bpe;
};

struct ModelSpec {
  TransformerConfig config;  // vocab_size 0 = take it from the tokenizer
  Transformer::Mode mode = Transformer::Mode::kAutoregressive;
};

struct OptimizerSpec {
  AdamConfig adam;
};

struct GeneratorSpec {
  ConfigNode search;  // forwarded to the search registry
  int batch_size = 8;
  std::string output;  // hypotheses file, one line per source
};

struct TrainerSpec {
  TrainerOptions options;  // seed filled in by the driver
  std::shared_ptr<RateSchedule> schedule;
  std::string resume;  // checkpoint to restore, empty = fresh start
};

struct EvaluatorSpec {
  std::vector<std::pair<std::string, ConfigNode>> datasets;  // name -> config
  std::vector<std::string> metrics;
  ConfigNode search;
  int batch_size = 8;
  std::string output;  // scoreboard json file, empty = stdout only
};

// ---------------------------------------------------------------------------
// Logging. PGEN_LOG selects error, info (default), or debug; read once.

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level();
void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

// ---------------------------------------------------------------------------
// Driver pieces, exposed separately so they can be tested without a process
// boundary.

// Parses the file, then applies each "key.path=value" override in order
// (last one wins). Overrides are typed by the existing value.
ConfigNode load_config(const std::string& path,
                       const std::vector<std::string>& overrides);

void run_preprocess(const ConfigNode& config);
void run_train(const ConfigNode& config);
void run_generate(const ConfigNode& config);
void run_evaluate(const ConfigNode& config);

// Full driver: parse argv, load the config, dispatch the subcommand.
// Returns the process exit code: 0 success, 1 handled error, 2 config or
// usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace pgen
