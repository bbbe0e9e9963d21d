// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/registry.hpp"

namespace pgen {

const char* kind_name(PluginKind kind) {
  switch (kind) {
    case PluginKind::kDataset: return "dataset";
    case PluginKind::kSampler: return "sampler";
    case PluginKind::kDataloader: return "dataloader";
    case PluginKind::kTokenizer: return "tokenizer";
    case PluginKind::kModel: return "model";
    case PluginKind::kGenerator: return "generator";
    case PluginKind::kCriterion: return "criterion";
    case PluginKind::kSearch: return "search";
    case PluginKind::kOptimizer: return "optimizer";
    case PluginKind::kRateScheduler: return "rate_scheduler";
    case PluginKind::kTrainer: return "trainer";
    case PluginKind::kEvaluator: return "evaluator";
    case PluginKind::kMetric: return "metric";
  }
  return "?";
}

void Registry::add(PluginKind kind, const std::string& name, Factory factory) {
  if (name.empty()) throw Error("registry: empty plugin name");
  std::lock_guard lock(mu_);
  if (frozen_)
    throw Error(std::string("registry: cannot register '") + kind_name(kind) +
                "/" + name + "' after first create");
  auto [it, inserted] = entries_.emplace(std::make_pair(kind, name),
                                         std::move(factory));
  if (!inserted)
    throw DuplicateRegistration(std::string(kind_name(kind)) + "/" + name +
                                " is already registered");
}

std::any Registry::create_any(PluginKind kind, const ConfigNode& config) const {
  if (!config.is_map())
    throw ConfigError(std::string("registry: ") + kind_name(kind) +
                      " config must be a map");
  const ConfigNode* cls = config.find("class");
  if (cls == nullptr)
    throw ConfigError(std::string("registry: ") + kind_name(kind) +
                      " config is missing 'class'");
  const std::string name = cls->raw();

  Factory factory;
  {
    std::lock_guard lock(mu_);
    frozen_ = true;
    auto it = entries_.find(std::make_pair(kind, name));
    if (it == entries_.end())
      throw UnknownPlugin(std::string("no ") + kind_name(kind) +
                          " named '" + name + "'");
    factory = it->second;
  }

  ConfigNode params = ConfigNode::map();
  for (const auto& [k, v] : config.items())
    if (k != "class") params.insert(k, v);
  return factory(params);
}

std::set<std::string> Registry::list_registered(PluginKind kind) const {
  std::lock_guard lock(mu_);
  std::set<std::string> out;
  for (const auto& [key, factory] : entries_)
    if (key.first == kind) out.insert(key.second);
  return out;
}

Registry& global_registry() {
  static Registry registry;
  return registry;
}

}  // namespace pgen
