// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/cli.hpp"

#include <doctest.h>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pgen/checkpoint.hpp"
#include "pgen/criterion.hpp"
#include "pgen/eval.hpp"
#include "pgen/search.hpp"
#include "testutil.hpp"

using namespace pgen;
using pgentest::TempDir;
using pgentest::read_file;
using pgentest::write_file;

namespace {

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"pgen"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

struct CaptureStdout {
  CaptureStdout() : old(std::cout.rdbuf(buffer.rdbuf())) {}
  ~CaptureStdout() { std::cout.rdbuf(old); }
  std::string str() const { return buffer.str(); }

  std::ostringstream buffer;
  std::streambuf* old;
};

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// Six-line copy corpus plus the preprocessed vocab/merges, the shared
// fixture for end-to-end runs.
struct Workspace {
  Workspace() {
    write_file(dir.file("train.src"), corpus());
    write_file(dir.file("train.tgt"), corpus());
    write_file(dir.file("dev.src"), "a b c\nc a b\n");
    write_file(dir.file("dev.tgt"), "a b c\nc a b\n");
    write_file(dir.file("pre.yaml"),
               "preprocess:\n"
               "  src: " + dir.file("train.src") + "\n"
               "  merges: 8\n"
               "  vocab: " + dir.file("vocab.txt") + "\n"
               "  bpe: " + dir.file("bpe.txt") + "\n");
    REQUIRE(cli({"preprocess", "--config", dir.file("pre.yaml")}) == 0);
  }

  static std::string corpus() {
    return "a b c\nb c a\nc a b\na c b\nb a c\nc b a\n";
  }

  std::string model_block(const std::string& cls) const {
    return "model:\n"
           "  class: " + cls + "\n"
           "  d_model: 16\n"
           "  n_heads: 2\n"
           "  n_enc_layers: 1\n"
           "  n_dec_layers: 1\n"
           "  d_ff: 32\n"
           "  max_positions: 16\n";
  }

  std::string tokenizer_block() const {
    return "tokenizer:\n"
           "  class: bpe\n"
           "  vocab: " + dir.file("vocab.txt") + "\n"
           "  merges: " + dir.file("bpe.txt") + "\n";
  }

  TempDir dir;
};

}  // namespace

TEST_CASE("load_config applies overrides in order") {
  TempDir dir;
  write_file(dir.file("c.yaml"),
             "seed: 1\n"
             "trainer:\n"
             "  lr: 0.5\n"
             "  steps: 10\n");

  SUBCASE("last one wins") {
    ConfigNode c = load_config(dir.file("c.yaml"),
                               {"trainer.lr=0.25", "seed=3", "trainer.lr=2.0"});
    CHECK(c.find("trainer")->find("lr")->to_double() == 2.0);
    CHECK(c.find("seed")->to_int() == 3);
  }

  SUBCASE("type error names the key") {
    try {
      load_config(dir.file("c.yaml"), {"trainer.lr=abc"});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("trainer.lr") != std::string::npos);
    }
  }

  SUBCASE("malformed override item") {
    CHECK_THROWS_AS(load_config(dir.file("c.yaml"), {"no-equals-sign"}),
                    ConfigError);
  }

  SUBCASE("missing file names the path") {
    try {
      load_config(dir.file("nope.yaml"), {});
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(dir.file("nope.yaml")) !=
            std::string::npos);
    }
  }
}

TEST_CASE("exit codes: usage and config errors are 2") {
  CHECK(cli({"train", "--config", "definitely_missing.yaml"}) == 2);
  CHECK(cli({"bogus_command"}) == 2);
  CHECK(cli({"train"}) == 2);  // --config is required

  TempDir dir;
  write_file(dir.file("c.yaml"), "seed: 1\n");
  CHECK(cli({"train", "--config", dir.file("c.yaml"),
             "--set", "seed=abc"}) == 2);
}

TEST_CASE("register_builtins fills every kind") {
  Registry reg;
  register_builtins(reg);
  for (int k = 0; k < kPluginKindCount; ++k)
    CHECK(!reg.list_registered(static_cast<PluginKind>(k)).empty());

  CHECK(reg.list_registered(PluginKind::kDataset).count("parallel") == 1);
  CHECK(reg.list_registered(PluginKind::kSearch) ==
        std::set<std::string>{"beam", "greedy", "mask_predict", "npd"});
  CHECK(reg.list_registered(PluginKind::kMetric) ==
        std::set<std::string>{"accuracy", "bleu", "f1"});
}

TEST_CASE("builtin factories build real objects") {
  Registry reg;
  register_builtins(reg);

  SUBCASE("rate schedulers") {
    ConfigNode c = ConfigNode::parse_string(
        "class: noam\nd_model: 64\nwarmup: 100\n");
    auto s = reg.create<RateSchedule>(PluginKind::kRateScheduler, c);
    CHECK(s->value(100) == 0.0125);
  }

  SUBCASE("strict keys") {
    ConfigNode c = ConfigNode::parse_string("class: greedy\nmax_len: 4\nbeam: 2\n");
    CHECK_THROWS_AS(reg.create<SearchStrategy>(PluginKind::kSearch, c),
                    ConfigError);
  }

  SUBCASE("unknown class") {
    ConfigNode c = ConfigNode::parse_string("class: warp_drive\n");
    CHECK_THROWS_AS(reg.create<SearchStrategy>(PluginKind::kSearch, c),
                    UnknownPlugin);
  }

  SUBCASE("multi_task nests criteria with weights") {
    ConfigNode c = ConfigNode::parse_string(
        "class: multi_task\n"
        "tasks:\n"
        "  - class: glancing\n"
        "    epsilon: 0.1\n"
        "    glancing_ratio:\n"
        "      start: 0.5\n"
        "      end: 0.3\n"
        "      total: 100\n"
        "  - class: length\n"
        "    weight: 0.5\n");
    auto crit = reg.create<Criterion>(PluginKind::kCriterion, c);
    CHECK(crit != nullptr);
  }

  SUBCASE("decaying glancing ratio needs a horizon") {
    ConfigNode c = ConfigNode::parse_string(
        "class: glancing\n"
        "glancing_ratio:\n"
        "  start: 0.5\n"
        "  end: 0.3\n");
    CHECK_THROWS_AS(reg.create<Criterion>(PluginKind::kCriterion, c),
                    ConfigError);
  }

  SUBCASE("optimizer spec defaults") {
    ConfigNode c = ConfigNode::parse_string("class: adam\nbeta2: 0.999\n");
    auto o = reg.create<OptimizerSpec>(PluginKind::kOptimizer, c);
    CHECK(o->adam.beta1 == 0.9);
    CHECK(o->adam.beta2 == 0.999);
  }

  SUBCASE("dataset on_error is validated") {
    ConfigNode c = ConfigNode::parse_string(
        "class: jsonl\npath: x.jsonl\non_error: explode\n");
    CHECK_THROWS_AS(reg.create<DataSource>(PluginKind::kDataset, c),
                    ConfigError);
  }
}

TEST_CASE("dump-config closure: echoed config reproduces itself") {
  TempDir dir;
  write_file(dir.file("c.yaml"),
             "seed: 1\n"
             "trainer:\n"
             "  lr: 0.5\n"
             "metrics: [bleu, f1]\n");

  std::string first;
  {
    CaptureStdout cap;
    REQUIRE(cli({"train", "--config", dir.file("c.yaml"),
                 "--set", "trainer.lr=0.125", "--dump-config"}) == 0);
    first = cap.str();
  }
  CHECK(first.find("lr: 0.125") != std::string::npos);

  write_file(dir.file("echoed.yaml"), first);
  std::string second;
  {
    CaptureStdout cap;
    REQUIRE(cli({"train", "--config", dir.file("echoed.yaml"),
                 "--dump-config"}) == 0);
    second = cap.str();
  }
  CHECK(first == second);
}

TEST_CASE("end-to-end: preprocess, train, generate, evaluate") {
  Workspace ws;
  const TempDir& dir = ws.dir;
  REQUIRE(std::filesystem::create_directory(dir.path / "ckpt"));

  const std::string train_yaml =
      "seed: 7\n"
      "data:\n"
      "  class: parallel\n"
      "  src: " + dir.file("train.src") + "\n"
      "  tgt: " + dir.file("train.tgt") + "\n" +
      ws.tokenizer_block() +
      "sampler:\n"
      "  class: shuffle\n"
      "  batch_size: 3\n"
      "dataloader:\n"
      "  class: in_memory\n"
      "  prefetch: true\n" +
      ws.model_block("transformer") +
      "criterion:\n"
      "  class: cross_entropy\n"
      "  epsilon: 0.1\n"
      "trainer:\n"
      "  class: standard\n"
      "  max_steps: 30\n"
      "  eval_interval: 15\n"
      "  assess_by: dev.accuracy\n"
      "  checkpoint_dir: " + dir.file("ckpt") + "\n"
      "  rate_scheduler:\n"
      "    class: constant\n"
      "    value: 0.01\n"
      "evaluator:\n"
      "  class: standard\n"
      "  datasets:\n"
      "    dev:\n"
      "      class: parallel\n"
      "      src: " + dir.file("dev.src") + "\n"
      "      tgt: " + dir.file("dev.tgt") + "\n"
      "  metrics: [accuracy]\n"
      "  search:\n"
      "    class: greedy\n"
      "    max_len: 8\n";
  write_file(dir.file("train.yaml"), train_yaml);

  std::string summary;
  {
    CaptureStdout cap;
    REQUIRE(cli({"train", "--config", dir.file("train.yaml")}) == 0);
    summary = cap.str();
  }
  CHECK(summary.find("\"steps\":30") != std::string::npos);
  CHECK(summary.find("dev.accuracy") != std::string::npos);
  CHECK(std::filesystem::exists(dir.path / "ckpt" / "ckpt.best.bin"));
  CHECK(std::filesystem::exists(dir.path / "ckpt" / "ckpt.best_avg.bin"));

  // Two-line input produces exactly two output lines, in input order.
  const std::string gen_yaml =
      "checkpoint: " + dir.file("ckpt") + "/ckpt.best.bin\n"
      "data:\n"
      "  class: stream_text\n"
      "  path: " + dir.file("dev.src") + "\n" +
      ws.tokenizer_block() + ws.model_block("transformer") +
      "generator:\n"
      "  class: sequence\n"
      "  batch_size: 2\n"
      "  output: " + dir.file("hyp.txt") + "\n"
      "  search:\n"
      "    class: greedy\n"
      "    max_len: 8\n";
  write_file(dir.file("gen.yaml"), gen_yaml);
  REQUIRE(cli({"generate", "--config", dir.file("gen.yaml")}) == 0);
  const std::string hyp = read_file(dir.file("hyp.txt"));
  CHECK(count_lines(hyp) == 2);
  CHECK(hyp == "a b c\nc a b\n");

  const std::string eval_yaml =
      "checkpoint: " + dir.file("ckpt") + "/ckpt.best.bin\n" +
      ws.tokenizer_block() + ws.model_block("transformer") +
      "evaluator:\n"
      "  class: standard\n"
      "  datasets:\n"
      "    dev:\n"
      "      class: parallel\n"
      "      src: " + dir.file("dev.src") + "\n"
      "      tgt: " + dir.file("dev.tgt") + "\n"
      "  metrics: [accuracy, f1]\n"
      "  search:\n"
      "    class: greedy\n"
      "    max_len: 8\n"
      "  output: " + dir.file("scores.json") + "\n";
  write_file(dir.file("eval.yaml"), eval_yaml);
  std::string report;
  {
    CaptureStdout cap;
    REQUIRE(cli({"evaluate", "--config", dir.file("eval.yaml")}) == 0);
    report = cap.str();
  }
  CHECK(report.find("\"dev.accuracy\":1.0") != std::string::npos);
  CHECK(read_file(dir.file("scores.json")) == report);
}

TEST_CASE("training is reproducible from the config alone") {
  Workspace ws;
  const TempDir& dir = ws.dir;
  REQUIRE(std::filesystem::create_directory(dir.path / "a"));
  REQUIRE(std::filesystem::create_directory(dir.path / "b"));

  const auto config_for = [&](const std::string& out) {
    return "seed: 11\n"
           "data:\n"
           "  class: parallel\n"
           "  src: " + dir.file("train.src") + "\n"
           "  tgt: " + dir.file("train.tgt") + "\n" +
           ws.tokenizer_block() +
           "sampler:\n"
           "  class: shuffle\n"
           "  batch_size: 2\n" +
           ws.model_block("nat_transformer") +
           "criterion:\n"
           "  class: multi_task\n"
           "  tasks:\n"
           "    - class: glancing\n"
           "      epsilon: 0.1\n"
           "      glancing_ratio:\n"
           "        start: 0.5\n"
           "        end: 0.3\n"
           "    - class: length\n"
           "      weight: 0.1\n"
           "trainer:\n"
           "  class: standard\n"
           "  max_steps: 6\n"
           "  checkpoint_dir: " + dir.file(out) + "\n"
           "  rate_scheduler:\n"
           "    class: noam\n"
           "    d_model: 16\n"
           "    warmup: 4\n";
  };
  write_file(dir.file("a.yaml"), config_for("a"));
  write_file(dir.file("b.yaml"), config_for("b"));

  {
    CaptureStdout cap;
    REQUIRE(cli({"train", "--config", dir.file("a.yaml")}) == 0);
    REQUIRE(cli({"train", "--config", dir.file("b.yaml")}) == 0);
  }
  CHECK(read_file(dir.file("a") + "/ckpt.best.bin") ==
        read_file(dir.file("b") + "/ckpt.best.bin"));

  // A different global seed reaches different parameters.
  write_file(dir.file("c.yaml"), config_for("a"));
  ConfigNode c = load_config(dir.file("c.yaml"), {"seed=12"});
  CHECK(c.find("seed")->to_int() == 12);
  {
    CaptureStdout cap;
    REQUIRE(cli({"train", "--config", dir.file("b.yaml"), "--set", "seed=12"}) ==
            0);
  }
  CHECK(read_file(dir.file("a") + "/ckpt.best.bin") !=
        read_file(dir.file("b") + "/ckpt.best.bin"));
}

TEST_CASE("malformed records: abort exits 1, skip trains on") {
  Workspace ws;
  const TempDir& dir = ws.dir;
  write_file(dir.file("data.jsonl"),
             "{\"src\": \"a b\", \"tgt\": \"a b\"}\n"
             "{this is not json\n"
             "{\"src\": \"b c\", \"tgt\": \"b c\"}\n");

  const auto config_for = [&](const std::string& on_error) {
    return "data:\n"
           "  class: jsonl\n"
           "  path: " + dir.file("data.jsonl") + "\n"
           "  on_error: " + on_error + "\n" +
           ws.tokenizer_block() +
           "sampler:\n"
           "  class: sequential\n"
           "  batch_size: 2\n" +
           ws.model_block("transformer") +
           "criterion:\n"
           "  class: cross_entropy\n"
           "trainer:\n"
           "  class: standard\n"
           "  max_steps: 1\n"
           "  rate_scheduler:\n"
           "    class: constant\n"
           "    value: 0.01\n";
  };
  write_file(dir.file("abort.yaml"), config_for("abort"));
  write_file(dir.file("skip.yaml"), config_for("skip"));

  CHECK(cli({"train", "--config", dir.file("abort.yaml")}) == 1);
  {
    CaptureStdout cap;
    CHECK(cli({"train", "--config", dir.file("skip.yaml")}) == 0);
  }
}

TEST_CASE("unknown top-level keys are rejected") {
  Workspace ws;
  const TempDir& dir = ws.dir;
  write_file(dir.file("bad.yaml"),
             "preprocess:\n"
             "  src: " + dir.file("train.src") + "\n"
             "  vocab: " + dir.file("v2.txt") + "\n"
             "  bpe: " + dir.file("b2.txt") + "\n"
             "stray_section:\n"
             "  x: 1\n");
  CHECK(cli({"preprocess", "--config", dir.file("bad.yaml")}) == 2);
}
