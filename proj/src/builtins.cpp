// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Built-in plugins for every registry kind. Factories that need nested
// plugins (multi_task tasks, the trainer's schedule) resolve them through
// the same registry they were registered into, so a test registry stays
// self-contained.

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pgen/cli.hpp"
#include "pgen/criterion.hpp"
#include "pgen/eval.hpp"
#include "pgen/search.hpp"

namespace pgen {
namespace {

OnError parse_on_error(const std::string& value) {
  if (value == "abort") return OnError::kAbort;
  if (value == "skip") return OnError::kSkip;
  throw ConfigError("data: on_error must be 'abort' or 'skip', got '" +
                    value + "'");
}

// Drains a stream into memory; kSkip drops records that fail to parse.
std::vector<Sample> collect_stream(StreamingDataset stream, OnError on_error) {
  std::vector<Sample> out;
  while (true) {
    try {
      auto sample = stream.next_sample();
      if (!sample) break;
      out.push_back(std::move(*sample));
    } catch (const ParseError& e) {
      if (on_error == OnError::kAbort) throw;
      log_debug(std::string("dataset: skipping bad record: ") + e.what());
    }
  }
  return out;
}

// Glancing-ratio schedule. A subtree with a "class" key is a full rate
// schedule; the {start, end, total} shorthand is a linear decay. A bare
// constant needs only "start".
std::function<double(long)> ratio_fn(const ConfigNode& node) {
  if (node.is_map() && node.find("class") != nullptr) {
    std::shared_ptr<RateSchedule> sched = make_schedule(ConfigView(node));
    return [sched](long step) { return sched->value(step); };
  }
  ConfigView v(node);
  const double start = v.number("start");
  const double end = v.number_or("end", start);
  const long long total = v.integer_or("total", 0);
  v.ensure_consumed();
  if (total <= 0 && start != end)
    throw ConfigError("criterion: a decaying glancing_ratio needs 'total'");
  if (total <= 0) return [start](long) { return start; };
  auto sched = std::make_shared<LinearSchedule>(start, end, total);
  return [sched](long step) { return sched->value(step); };
}

// MultiTaskCriterion owns its tasks; registry instances are shared. This
// shim bridges the two ownership styles.
class SharedCriterion : public Criterion {
 public:
  explicit SharedCriterion(std::shared_ptr<Criterion> inner)
      : inner_(std::move(inner)) {}
  Tensor loss(const Transformer& model, const Batch& batch, long step,
              bool train, Rng& rng) override {
    return inner_->loss(model, batch, step, train, rng);
  }

 private:
  std::shared_ptr<Criterion> inner_;
};

void register_datasets(Registry& reg) {
  reg.add_typed<DataSource>(
      PluginKind::kDataset, "parallel", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<DataSource>();
        out->src_field = v.str_or("src_field", "src");
        out->tgt_field = v.str_or("tgt_field", "tgt");
        const std::string src = v.str("src");
        const std::string tgt = v.str("tgt");
        v.ensure_consumed();
        out->samples = load_parallel(src, tgt, out->src_field, out->tgt_field);
        return out;
      });

  reg.add_typed<DataSource>(
      PluginKind::kDataset, "jsonl", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<DataSource>();
        out->src_field = v.str_or("src_field", "src");
        out->tgt_field = v.str_or("tgt_field", "tgt");
        out->on_error = parse_on_error(v.str_or("on_error", "abort"));
        const std::string path = v.str("path");
        v.ensure_consumed();
        out->samples = collect_stream(StreamingDataset(path, parse_jsonl_line),
                                      out->on_error);
        return out;
      });

  reg.add_typed<DataSource>(
      PluginKind::kDataset, "stream_jsonl", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<DataSource>();
        out->src_field = v.str_or("src_field", "src");
        out->tgt_field = v.str_or("tgt_field", "tgt");
        out->on_error = parse_on_error(v.str_or("on_error", "abort"));
        const std::string path = v.str("path");
        v.ensure_consumed();
        out->streaming = true;
        out->open_stream = [path] {
          return StreamingDataset(path, parse_jsonl_line);
        };
        return out;
      });

  reg.add_typed<DataSource>(
      PluginKind::kDataset, "stream_text", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<DataSource>();
        const std::string field = v.str_or("field", "src");
        out->on_error = parse_on_error(v.str_or("on_error", "abort"));
        const std::string path = v.str("path");
        v.ensure_consumed();
        out->src_field = field;
        out->streaming = true;
        out->open_stream = [path, field] {
          return StreamingDataset(path, make_text_parser(field));
        };
        return out;
      });
}

void register_samplers(Registry& reg) {
  reg.add_typed<SamplerSpec>(
      PluginKind::kSampler, "sequential", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<SamplerSpec>();
        out->kind = SamplerSpec::Kind::kSequential;
        out->batch_size = static_cast<int>(v.integer_or("batch_size", 1));
        v.ensure_consumed();
        return out;
      });

  reg.add_typed<SamplerSpec>(
      PluginKind::kSampler, "shuffle", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<SamplerSpec>();
        out->kind = SamplerSpec::Kind::kShuffle;
        out->batch_size = static_cast<int>(v.integer_or("batch_size", 1));
        out->seed = static_cast<std::uint64_t>(v.integer_or("seed", 0));
        v.ensure_consumed();
        return out;
      });

  reg.add_typed<SamplerSpec>(
      PluginKind::kSampler, "token_budget", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<SamplerSpec>();
        out->kind = SamplerSpec::Kind::kTokenBudget;
        out->max_tokens = static_cast<int>(v.integer("max_tokens"));
        out->seed = static_cast<std::uint64_t>(v.integer_or("seed", 0));
        v.ensure_consumed();
        return out;
      });
}

void register_dataloaders(Registry& reg) {
  reg.add_typed<LoaderSpec>(
      PluginKind::kDataloader, "in_memory", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<LoaderSpec>();
        out->streaming = false;
        out->prefetch = v.boolean_or("prefetch", false);
        v.ensure_consumed();
        return out;
      });

  reg.add_typed<LoaderSpec>(
      PluginKind::kDataloader, "streaming", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<LoaderSpec>();
        out->streaming = true;
        out->buffer_size = static_cast<int>(v.integer_or("buffer_size", 1024));
        out->prefetch = v.boolean_or("prefetch", false);
        out->num_workers = static_cast<int>(v.integer_or("num_workers", 1));
        out->worker_id = static_cast<int>(v.integer_or("worker_id", 0));
        v.ensure_consumed();
        return out;
      });
}

void register_tokenizers(Registry& reg) {
  reg.add_typed<TokenizerBundle>(
      PluginKind::kTokenizer, "bpe", [](const ConfigNode& params) {
        ConfigView v(params);
        const std::string vocab_path = v.str("vocab");
        const std::string merges_path = v.str("merges");
        v.ensure_consumed();
        auto out = std::make_shared<TokenizerBundle>();
        out->vocab = Vocabulary::load(vocab_path);
        out->bpe = BpeModel::load(merges_path);
        return out;
      });
}

std::shared_ptr<ModelSpec> model_spec(const ConfigNode& params,
                                      Transformer::Mode mode) {
  ConfigView v(params);
  auto out = std::make_shared<ModelSpec>();
  out->mode = mode;
  TransformerConfig& c = out->config;
  c.d_model = static_cast<int>(v.integer_or("d_model", c.d_model));
  c.n_heads = static_cast<int>(v.integer_or("n_heads", c.n_heads));
  c.n_enc_layers = static_cast<int>(v.integer_or("n_enc_layers", c.n_enc_layers));
  c.n_dec_layers = static_cast<int>(v.integer_or("n_dec_layers", c.n_dec_layers));
  c.d_ff = static_cast<int>(v.integer_or("d_ff", c.d_ff));
  c.vocab_size = static_cast<int>(v.integer_or("vocab_size", 0));
  c.max_positions = static_cast<int>(v.integer_or("max_positions", c.max_positions));
  c.dropout = v.number_or("dropout", c.dropout);
  c.length_window = static_cast<int>(v.integer_or("length_window", c.length_window));
  v.ensure_consumed();
  return out;
}

void register_models(Registry& reg) {
  reg.add_typed<ModelSpec>(
      PluginKind::kModel, "transformer", [](const ConfigNode& params) {
        return model_spec(params, Transformer::Mode::kAutoregressive);
      });
  reg.add_typed<ModelSpec>(
      PluginKind::kModel, "nat_transformer", [](const ConfigNode& params) {
        return model_spec(params, Transformer::Mode::kParallel);
      });
}

void register_generators(Registry& reg) {
  reg.add_typed<GeneratorSpec>(
      PluginKind::kGenerator, "sequence", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<GeneratorSpec>();
        out->search = v.blob("search");
        out->batch_size = static_cast<int>(v.integer_or("batch_size", 8));
        out->output = v.str("output");
        v.ensure_consumed();
        if (out->batch_size < 1)
          throw ConfigError("generator: batch_size must be positive");
        return out;
      });
}

void register_criteria(Registry& reg) {
  reg.add_typed<Criterion>(
      PluginKind::kCriterion, "cross_entropy", [](const ConfigNode& params) {
        ConfigView v(params);
        const double epsilon = v.number_or("epsilon", 0.1);
        v.ensure_consumed();
        return std::make_shared<CrossEntropyCriterion>(epsilon);
      });

  reg.add_typed<Criterion>(
      PluginKind::kCriterion, "glancing", [](const ConfigNode& params) {
        ConfigView v(params);
        const double epsilon = v.number_or("epsilon", 0.1);
        std::function<double(long)> ratio = [](long) { return 0.5; };
        if (v.has("glancing_ratio")) ratio = ratio_fn(v.blob("glancing_ratio"));
        v.ensure_consumed();
        return std::make_shared<GlancingCriterion>(epsilon, std::move(ratio));
      });

  reg.add_typed<Criterion>(
      PluginKind::kCriterion, "length", [](const ConfigNode& params) {
        ConfigView(params).ensure_consumed();
        return std::make_shared<LengthCriterion>();
      });

  Registry* self = &reg;
  reg.add_typed<Criterion>(
      PluginKind::kCriterion, "multi_task",
      [self](const ConfigNode& params) -> std::shared_ptr<Criterion> {
        ConfigView v(params);
        const std::vector<const ConfigNode*> nodes = v.node_list("tasks");
        v.ensure_consumed();
        if (nodes.empty())
          throw ConfigError("criterion: multi_task needs at least one task");
        std::vector<std::unique_ptr<Criterion>> tasks;
        std::vector<double> weights;
        for (const ConfigNode* node : nodes) {
          if (!node->is_map())
            throw ConfigError("criterion: each task must be a map");
          double weight = 1.0;
          ConfigNode sub = ConfigNode::map();
          for (const auto& [key, value] : node->items()) {
            if (key == "weight")
              weight = value.to_double();
            else
              sub.insert(key, value);
          }
          tasks.push_back(std::make_unique<SharedCriterion>(
              self->create<Criterion>(PluginKind::kCriterion, sub)));
          weights.push_back(weight);
        }
        return std::make_shared<MultiTaskCriterion>(std::move(tasks),
                                                    std::move(weights));
      });
}

void register_searches(Registry& reg) {
  reg.add_typed<SearchStrategy>(
      PluginKind::kSearch, "greedy", [](const ConfigNode& params) {
        ConfigView v(params);
        const int max_len = static_cast<int>(v.integer_or("max_len", 64));
        v.ensure_consumed();
        return std::make_shared<GreedySearch>(max_len);
      });

  reg.add_typed<SearchStrategy>(
      PluginKind::kSearch, "beam", [](const ConfigNode& params) {
        ConfigView v(params);
        const int beam = static_cast<int>(v.integer_or("beam", 4));
        const int max_len = static_cast<int>(v.integer_or("max_len", 64));
        const double lenpen = v.number_or("lenpen", 1.0);
        v.ensure_consumed();
        return std::make_shared<BeamSearch>(beam, max_len, lenpen);
      });

  reg.add_typed<SearchStrategy>(
      PluginKind::kSearch, "mask_predict", [](const ConfigNode& params) {
        ConfigView v(params);
        const int iterations = static_cast<int>(v.integer_or("iterations", 1));
        v.ensure_consumed();
        return std::make_shared<MaskPredictSearch>(iterations);
      });

  reg.add_typed<SearchStrategy>(
      PluginKind::kSearch, "npd", [](const ConfigNode& params) {
        ConfigView v(params);
        const int length_beam = static_cast<int>(v.integer_or("length_beam", 5));
        const int iterations = static_cast<int>(v.integer_or("iterations", 1));
        v.ensure_consumed();
        return std::make_shared<NpdSearch>(length_beam, iterations);
      });
}

void register_optimizers(Registry& reg) {
  reg.add_typed<OptimizerSpec>(
      PluginKind::kOptimizer, "adam", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<OptimizerSpec>();
        out->adam.beta1 = v.number_or("beta1", out->adam.beta1);
        out->adam.beta2 = v.number_or("beta2", out->adam.beta2);
        out->adam.eps = v.number_or("eps", out->adam.eps);
        v.ensure_consumed();
        return out;
      });
}

void register_rate_schedulers(Registry& reg) {
  reg.add_typed<RateSchedule>(
      PluginKind::kRateScheduler, "noam", [](const ConfigNode& params) {
        ConfigView v(params);
        const long long d_model = v.integer("d_model");
        const long long warmup = v.integer("warmup");
        v.ensure_consumed();
        return std::make_shared<NoamSchedule>(d_model, warmup);
      });

  reg.add_typed<RateSchedule>(
      PluginKind::kRateScheduler, "linear", [](const ConfigNode& params) {
        ConfigView v(params);
        const double start = v.number("start");
        const double end = v.number("end");
        const long long total = v.integer("total");
        v.ensure_consumed();
        return std::make_shared<LinearSchedule>(start, end, total);
      });

  reg.add_typed<RateSchedule>(
      PluginKind::kRateScheduler, "constant", [](const ConfigNode& params) {
        ConfigView v(params);
        const double value = v.number("value");
        v.ensure_consumed();
        return std::make_shared<ConstantSchedule>(value);
      });
}

void register_trainers(Registry& reg) {
  Registry* self = &reg;
  reg.add_typed<TrainerSpec>(
      PluginKind::kTrainer, "standard", [self](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<TrainerSpec>();
        TrainerOptions& o = out->options;
        o.max_steps = v.integer("max_steps");
        o.accumulate = static_cast<int>(v.integer_or("accumulate", 1));
        o.eval_interval = v.integer_or("eval_interval", 0);
        o.patience = static_cast<int>(v.integer_or("patience", 0));
        o.clip_norm = v.number_or("clip_norm", 1.0);
        o.assess_by = v.str_or("assess_by", "");
        o.avg_k = static_cast<int>(v.integer_or("avg_k", 5));
        o.checkpoint_dir = v.str_or("checkpoint_dir", "");
        out->resume = v.str_or("resume", "");
        out->schedule = self->create<RateSchedule>(PluginKind::kRateScheduler,
                                                   v.blob("rate_scheduler"));
        if (v.has("optimizer"))
          o.adam = self->create<OptimizerSpec>(PluginKind::kOptimizer,
                                               v.blob("optimizer"))
                       ->adam;
        v.ensure_consumed();
        return out;
      });
}

void register_evaluators(Registry& reg) {
  reg.add_typed<EvaluatorSpec>(
      PluginKind::kEvaluator, "standard", [](const ConfigNode& params) {
        ConfigView v(params);
        auto out = std::make_shared<EvaluatorSpec>();
        const ConfigNode& sets = v.blob("datasets");
        if (!sets.is_map())
          throw ConfigError("evaluator: datasets must be a map");
        for (const auto& [name, node] : sets.items())
          out->datasets.emplace_back(name, node);
        out->metrics = v.str_list("metrics");
        out->search = v.blob("search");
        out->batch_size = static_cast<int>(v.integer_or("batch_size", 8));
        out->output = v.str_or("output", "");
        v.ensure_consumed();
        if (out->datasets.empty())
          throw ConfigError("evaluator: datasets must not be empty");
        if (out->metrics.empty())
          throw ConfigError("evaluator: metrics must not be empty");
        return out;
      });
}

void register_metrics(Registry& reg) {
  reg.add_typed<Metric>(PluginKind::kMetric, "bleu",
                        [](const ConfigNode& params) {
                          ConfigView(params).ensure_consumed();
                          return std::make_shared<BleuMetric>();
                        });
  reg.add_typed<Metric>(PluginKind::kMetric, "accuracy",
                        [](const ConfigNode& params) {
                          ConfigView(params).ensure_consumed();
                          return std::make_shared<AccuracyMetric>();
                        });
  reg.add_typed<Metric>(PluginKind::kMetric, "f1",
                        [](const ConfigNode& params) {
                          ConfigView(params).ensure_consumed();
                          return std::make_shared<F1Metric>();
                        });
}

}  // namespace

void register_builtins(Registry& registry) {
  register_datasets(registry);
  register_samplers(registry);
  register_dataloaders(registry);
  register_tokenizers(registry);
  register_models(registry);
  register_generators(registry);
  register_criteria(registry);
  register_searches(registry);
  register_optimizers(registry);
  register_rate_schedulers(registry);
  register_trainers(registry);
  register_evaluators(registry);
  register_metrics(registry);
}

}  // namespace pgen
