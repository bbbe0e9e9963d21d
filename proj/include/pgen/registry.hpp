// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Every pluggable component (datasets, models, search strategies, ...) is
// constructed from a config subtree of the form {class: <name>, <params>}.
// Factories are registered at startup; the registry freezes on first create.

#pragma once

#include <any>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <utility>

#include "pgen/config.hpp"
#include "pgen/error.hpp"

namespace pgen {

enum class PluginKind {
  kDataset,
  kSampler,
  kDataloader,
  kTokenizer,
  kModel,
  kGenerator,
  kCriterion,
  kSearch,
  kOptimizer,
  kRateScheduler,
  kTrainer,
  kEvaluator,
  kMetric,
};

inline constexpr int kPluginKindCount = 13;

const char* kind_name(PluginKind kind);

class Registry {
 public:
  // A factory receives the config subtree minus its `class` key and returns
  // a shared_ptr to the kind's interface, wrapped in std::any.
  using Factory = std::function<std::any(const ConfigNode&)>;

  void add(PluginKind kind, const std::string& name, Factory factory);
  std::any create_any(PluginKind kind, const ConfigNode& config) const;
  std::set<std::string> list_registered(PluginKind kind) const;

  template <class Iface>
  void add_typed(PluginKind kind, const std::string& name,
                 std::function<std::shared_ptr<Iface>(const ConfigNode&)> f) {
    add(kind, name, [f = std::move(f)](const ConfigNode& cfg) {
      return std::any(f(cfg));
    });
  }

  template <class Iface>
  std::shared_ptr<Iface> create(PluginKind kind,
                                const ConfigNode& config) const {
    std::any instance = create_any(kind, config);
    auto* typed = std::any_cast<std::shared_ptr<Iface>>(&instance);
    if (typed == nullptr)
      throw Error(std::string("registry: ") + kind_name(kind) +
                  " factory produced an unexpected interface");
    return *typed;
  }

 private:
  mutable std::mutex mu_;
  mutable bool frozen_ = false;
  std::map<std::pair<PluginKind, std::string>, Factory> entries_;
};

// Process-wide registry; built-ins are installed by register_builtins().
Registry& global_registry();
void register_builtins(Registry& registry);

}  // namespace pgen
