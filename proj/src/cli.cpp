// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "pgen/checkpoint.hpp"
#include "pgen/criterion.hpp"
#include "pgen/eval.hpp"
#include "pgen/generator.hpp"
#include "pgen/io.hpp"
#include "pgen/search.hpp"

namespace pgen {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("PGEN_LOG");
    if (env == nullptr) return LogLevel::kInfo;
    const std::string value(env);
    if (value == "error") return LogLevel::kError;
    if (value == "debug") return LogLevel::kDebug;
    return LogLevel::kInfo;
  }();
  return level;
}

void log_error(const std::string& msg) {
  std::cerr << "[error] " << msg << "\n";
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::kDebug) std::cerr << "[debug] " << msg << "\n";
}

ConfigNode load_config(const std::string& path,
                       const std::vector<std::string>& overrides) {
  ConfigNode config = ConfigNode::parse_file(path);
  for (const std::string& item : overrides) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("config: --set expects key.path=value, got '" + item +
                        "'");
    config.set_path(item.substr(0, eq), item.substr(eq + 1));
  }
  return config;
}

namespace {

// Epoch-aware shell over Prefetcher: restarting an epoch tears the worker
// down so the re-derived plan starts clean.
class PrefetchingSource : public BatchSource {
 public:
  explicit PrefetchingSource(BatchSource& inner) : inner_(inner) {}

  std::optional<Batch> next_batch() override {
    if (!prefetcher_) prefetcher_ = std::make_unique<Prefetcher>(inner_);
    return prefetcher_->next_batch();
  }
  void start_epoch(long epoch) override {
    prefetcher_.reset();
    inner_.start_epoch(epoch);
  }

 private:
  BatchSource& inner_;
  std::unique_ptr<Prefetcher> prefetcher_;
};

Transformer build_model(const ModelSpec& spec, const Vocabulary& vocab,
                        std::uint64_t seed) {
  TransformerConfig config = spec.config;
  if (config.vocab_size == 0) config.vocab_size = vocab.size();
  return Transformer(config, spec.mode, seed);
}

// A glancing ratio given as {start, end} decays over the whole run.
ConfigNode with_ratio_total(const ConfigNode& node, long long max_steps) {
  if (!node.is_map()) return node;
  ConfigNode out = ConfigNode::map();
  for (const auto& [key, child] : node.items()) {
    if (key == "glancing_ratio" && child.is_map() &&
        child.find("class") == nullptr && child.find("total") == nullptr) {
      ConfigNode filled = child;
      filled.insert("total", ConfigNode::scalar(std::to_string(max_steps)));
      out.insert(key, filled);
    } else if (key == "tasks" && child.is_list()) {
      ConfigNode tasks = ConfigNode::list();
      for (const ConfigNode& element : child.elements())
        tasks.append(with_ratio_total(element, max_steps));
      out.insert(key, tasks);
    } else {
      out.insert(key, child);
    }
  }
  return out;
}

std::vector<ProcessedSample> offline_all(const std::vector<Sample>& samples,
                                         const TokenizerBundle& tok,
                                         const FieldSpec& fields) {
  std::vector<ProcessedSample> out;
  out.reserve(samples.size());
  for (const Sample& sample : samples)
    out.push_back(data_collate(sample, tok.vocab, tok.bpe, fields));
  return out;
}

std::vector<EvalSet> build_eval_sets(Registry& reg, const EvaluatorSpec& spec,
                                     const TokenizerBundle& tok) {
  std::vector<EvalSet> sets;
  for (const auto& [name, node] : spec.datasets) {
    auto data = reg.create<DataSource>(PluginKind::kDataset, node);
    if (data->streaming)
      throw ConfigError("evaluator: dataset '" + name +
                        "' must be finite, not streaming");
    EvalSet set;
    set.name = name;
    const FieldSpec fields{data->src_field, data->tgt_field, true};
    std::vector<ProcessedSample> group;
    for (const Sample& sample : data->samples) {
      const FieldValue& ref = sample.at(data->tgt_field);
      if (ref.type != FieldValue::Type::kString)
        throw FormatError("evaluator: reference field '" + data->tgt_field +
                          "' in dataset '" + name + "' is not a string");
      set.references.push_back(ref.str);
      group.push_back(data_collate(sample, tok.vocab, tok.bpe, fields));
      if (static_cast<int>(group.size()) >= spec.batch_size) {
        set.batches.push_back(collate(group, Vocabulary::kPad));
        group.clear();
      }
    }
    if (!group.empty()) set.batches.push_back(collate(group, Vocabulary::kPad));
    if (set.references.empty())
      throw EmptyError("evaluator: dataset '" + name + "' is empty");
    sets.push_back(std::move(set));
  }
  return sets;
}

std::vector<std::shared_ptr<Metric>> build_metrics(
    Registry& reg, const std::vector<std::string>& names) {
  std::vector<std::shared_ptr<Metric>> out;
  for (const std::string& name : names) {
    ConfigNode node = ConfigNode::map();
    node.insert("class", ConfigNode::scalar(name));
    out.push_back(reg.create<Metric>(PluginKind::kMetric, node));
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& payload) {
  AsyncWriter writer(path);
  writer.submit(payload);
  writer.flush_barrier();
  writer.close();
}

}  // namespace

void run_preprocess(const ConfigNode& root) {
  ConfigView top(root);
  if (top.has("seed")) top.integer("seed");  // accepted; nothing here draws
  ConfigView p = top.sub("preprocess");
  const std::string src = p.str("src");
  const std::string tgt = p.str_or("tgt", "");
  const int merges = static_cast<int>(p.integer_or("merges", 200));
  const long long min_count = p.integer_or("min_count", 1);
  const std::string vocab_path = p.str("vocab");
  const std::string bpe_path = p.str("bpe");
  top.ensure_consumed();

  std::vector<std::string> lines;
  for (const std::string& path : {src, tgt}) {
    if (path.empty()) continue;
    LineReader reader(path);
    while (auto line = reader.next()) lines.push_back(std::move(*line));
  }

  const BpeModel bpe = BpeModel::train(lines, merges);
  std::map<std::string, long long> counts;
  for (const std::string& line : lines)
    for (const std::string& token : bpe.encode(line)) counts[token] += 1;
  const Vocabulary vocab = Vocabulary::from_counts(counts, min_count);

  bpe.save(bpe_path);
  vocab.save(vocab_path);
  log_info("preprocess: " + std::to_string(lines.size()) + " lines, " +
           std::to_string(bpe.merges().size()) + " merges, vocab size " +
           std::to_string(vocab.size()));
}

void run_train(const ConfigNode& root) {
  Registry& reg = global_registry();
  ConfigView top(root);
  const auto seed = static_cast<std::uint64_t>(top.integer_or("seed", 1));

  const auto tok =
      reg.create<TokenizerBundle>(PluginKind::kTokenizer, top.blob("tokenizer"));
  const auto data = reg.create<DataSource>(PluginKind::kDataset, top.blob("data"));

  SamplerSpec sampler =
      *reg.create<SamplerSpec>(PluginKind::kSampler, top.blob("sampler"));
  const ConfigNode* sampler_node = root.find("sampler");
  if (sampler_node != nullptr && sampler_node->find("seed") == nullptr)
    sampler.seed = derive_seed(seed, "sampler");

  LoaderSpec loader;
  loader.streaming = data->streaming;
  if (top.has("dataloader")) {
    loader = *reg.create<LoaderSpec>(PluginKind::kDataloader,
                                     top.blob("dataloader"));
    if (loader.streaming != data->streaming)
      throw ConfigError(
          "dataloader: class does not match the dataset (finite vs streaming)");
  }

  const auto mspec = reg.create<ModelSpec>(PluginKind::kModel, top.blob("model"));
  Transformer model = build_model(*mspec, tok->vocab, derive_seed(seed, "model"));

  const auto tspec =
      reg.create<TrainerSpec>(PluginKind::kTrainer, top.blob("trainer"));
  TrainerOptions options = tspec->options;
  options.seed = derive_seed(seed, "trainer");

  const ConfigNode criterion_node =
      with_ratio_total(top.blob("criterion"), options.max_steps);
  const auto criterion =
      reg.create<Criterion>(PluginKind::kCriterion, criterion_node);

  std::shared_ptr<EvaluatorSpec> espec;
  std::vector<EvalSet> eval_sets;
  std::vector<std::shared_ptr<Metric>> metrics;
  std::shared_ptr<SearchStrategy> eval_search;
  if (top.has("evaluator")) {
    espec = reg.create<EvaluatorSpec>(PluginKind::kEvaluator,
                                      top.blob("evaluator"));
    eval_sets = build_eval_sets(reg, *espec, *tok);
    metrics = build_metrics(reg, espec->metrics);
    eval_search = reg.create<SearchStrategy>(PluginKind::kSearch, espec->search);
  }
  top.ensure_consumed();

  const FieldSpec fields{data->src_field, data->tgt_field, true};
  std::unique_ptr<BatchSource> source;
  if (data->streaming) {
    StreamingDataset stream = data->open_stream();
    if (loader.num_workers > 1)
      stream = shard_stream(stream, loader.worker_id, loader.num_workers);
    OfflineFn offline = [tok, fields](const Sample& sample) {
      return data_collate(sample, tok->vocab, tok->bpe, fields);
    };
    source = std::make_unique<StreamingLoader>(std::move(stream),
                                               std::move(offline),
                                               loader.buffer_size, sampler,
                                               Vocabulary::kPad, data->on_error);
  } else {
    source = std::make_unique<InMemoryLoader>(
        offline_all(data->samples, *tok, fields), sampler, Vocabulary::kPad);
  }
  BatchSource* batches = source.get();
  std::unique_ptr<PrefetchingSource> prefetching;
  if (loader.prefetch) {
    prefetching = std::make_unique<PrefetchingSource>(*source);
    batches = prefetching.get();
  }

  Trainer trainer(model, *criterion, *tspec->schedule, *batches, options);
  if (espec) {
    trainer.set_evaluator([&model, tok, eval_search, &eval_sets, &metrics] {
      const auto decode = [&](const Batch& batch) {
        return generate(model, *eval_search, tok->vocab, batch);
      };
      return evaluate(decode, eval_sets, metrics);
    });
  }
  if (!tspec->resume.empty()) {
    trainer.restore(tspec->resume);
    log_info("train: resumed from " + tspec->resume + " at update " +
             std::to_string(trainer.state().step));
  }

  const TrainResult result = trainer.run();

  if (!options.checkpoint_dir.empty()) {
    save_checkpoint(result.best, options.checkpoint_dir + "/ckpt.best.bin");
    save_checkpoint(result.best_avg,
                    options.checkpoint_dir + "/ckpt.best_avg.bin");
  }
  log_info("train: " + std::to_string(result.steps) + " updates" +
           (result.stopped_early ? " (stopped early)" : ""));

  nlohmann::json summary{{"steps", result.steps},
                         {"stopped_early", result.stopped_early},
                         {"best_step", result.best.state.step}};
  if (result.evaluated) summary["scores"] = result.best.state.scores;
  std::cout << summary.dump() << "\n";
}

void run_generate(const ConfigNode& root) {
  Registry& reg = global_registry();
  ConfigView top(root);
  const auto seed = static_cast<std::uint64_t>(top.integer_or("seed", 1));

  const auto tok =
      reg.create<TokenizerBundle>(PluginKind::kTokenizer, top.blob("tokenizer"));
  const auto data = reg.create<DataSource>(PluginKind::kDataset, top.blob("data"));
  const auto mspec = reg.create<ModelSpec>(PluginKind::kModel, top.blob("model"));
  const auto gspec =
      reg.create<GeneratorSpec>(PluginKind::kGenerator, top.blob("generator"));
  const std::string checkpoint = top.str_or("checkpoint", "");
  top.ensure_consumed();

  Transformer model = build_model(*mspec, tok->vocab, derive_seed(seed, "model"));
  if (!checkpoint.empty())
    load_params(load_checkpoint(checkpoint), model.params());
  const auto search = reg.create<SearchStrategy>(PluginKind::kSearch,
                                                 gspec->search);

  const FieldSpec fields{data->src_field, data->tgt_field, false};
  AsyncWriter writer(gspec->output);
  long written = 0;
  std::vector<ProcessedSample> pending;
  const auto flush = [&] {
    if (pending.empty()) return;
    const Batch batch = collate(pending, Vocabulary::kPad);
    write_outputs(writer, generate(model, *search, tok->vocab, batch));
    written += static_cast<long>(pending.size());
    pending.clear();
  };
  const auto push = [&](const Sample& sample) {
    pending.push_back(data_collate(sample, tok->vocab, tok->bpe, fields));
    if (static_cast<int>(pending.size()) >= gspec->batch_size) flush();
  };
  if (data->streaming) {
    StreamingDataset stream = data->open_stream();
    while (auto sample = stream.next_sample()) push(*sample);
  } else {
    for (const Sample& sample : data->samples) push(sample);
  }
  flush();
  writer.flush_barrier();
  writer.close();
  log_info("generate: wrote " + std::to_string(written) + " lines to " +
           gspec->output);
}

void run_evaluate(const ConfigNode& root) {
  Registry& reg = global_registry();
  ConfigView top(root);
  const auto seed = static_cast<std::uint64_t>(top.integer_or("seed", 1));

  const auto tok =
      reg.create<TokenizerBundle>(PluginKind::kTokenizer, top.blob("tokenizer"));
  const auto mspec = reg.create<ModelSpec>(PluginKind::kModel, top.blob("model"));
  const auto espec =
      reg.create<EvaluatorSpec>(PluginKind::kEvaluator, top.blob("evaluator"));
  const std::string checkpoint = top.str_or("checkpoint", "");
  top.ensure_consumed();

  Transformer model = build_model(*mspec, tok->vocab, derive_seed(seed, "model"));
  if (!checkpoint.empty())
    load_params(load_checkpoint(checkpoint), model.params());
  const auto search =
      reg.create<SearchStrategy>(PluginKind::kSearch, espec->search);
  const std::vector<EvalSet> sets = build_eval_sets(reg, *espec, *tok);
  const std::vector<std::shared_ptr<Metric>> metrics =
      build_metrics(reg, espec->metrics);

  const auto decode = [&](const Batch& batch) {
    return generate(model, *search, tok->vocab, batch);
  };
  const ScoreBoard board = evaluate(decode, sets, metrics);
  const std::string report = scoreboard_json(board);
  std::cout << report << "\n";
  if (!espec->output.empty()) write_text_file(espec->output, report + "\n");
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"parallel and autoregressive text generation toolkit", "pgen"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool dump = false;
  const std::pair<const char*, const char*> commands[] = {
      {"preprocess", "train the BPE merges and vocabulary"},
      {"train", "train a model"},
      {"generate", "decode a file with a trained model"},
      {"evaluate", "score a trained model on reference data"},
  };
  for (const auto& [name, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "run configuration file")
        ->required();
    sub->add_option("--set", overrides,
                    "override a config key: key.path=value (repeatable)")
        ->type_size(1);
    sub->add_flag("--dump-config", dump,
                  "print the effective config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  ConfigNode config;
  try {
    config = load_config(config_path, overrides);
  } catch (const std::exception& e) {
    log_error(e.what());
    return 2;
  }
  if (dump) {
    std::cout << config.dump();
    return 0;
  }

  static std::once_flag builtins_once;
  std::call_once(builtins_once, [] { register_builtins(global_registry()); });

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "preprocess") {
      run_preprocess(config);
    } else if (command == "train") {
      run_train(config);
    } else if (command == "generate") {
      run_generate(config);
    } else {
      run_evaluate(config);
    }
  } catch (const ConfigError& e) {
    log_error(e.what());
    return 2;
  } catch (const UnknownPlugin& e) {
    log_error(e.what());
    return 2;
  } catch (const UnknownSchedule& e) {
    log_error(e.what());
    return 2;
  } catch (const Error& e) {
    log_error(e.what());
    return 1;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 0;
}

}  // namespace pgen
