// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Strict indentation-based key tree: scalars, maps, lists. No anchors, no
// tags, no multi-line scalars. Every run is driven by one of these trees;
// unknown keys are rejected at plugin construction (see ConfigView).

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pgen/error.hpp"

namespace pgen {

class ConfigNode {
 public:
  enum class Type { kScalar, kMap, kList };

  ConfigNode() : type_(Type::kMap) {}
  static ConfigNode scalar(std::string raw);
  static ConfigNode map();
  static ConfigNode list();

  static ConfigNode parse_string(const std::string& text);
  static ConfigNode parse_file(const std::string& path);

  // Canonical form: 2-space indent, maps in insertion order, scalar lists as
  // flow lists. parse_string(dump()) == *this.
  std::string dump() const;

  Type type() const { return type_; }
  bool is_scalar() const { return type_ == Type::kScalar; }
  bool is_map() const { return type_ == Type::kMap; }
  bool is_list() const { return type_ == Type::kList; }

  // Scalar access. Typed getters parse strictly: the whole token must parse.
  const std::string& raw() const;
  long long to_int() const;
  double to_double() const;
  bool to_bool() const;

  // Map access.
  const ConfigNode* find(const std::string& key) const;
  ConfigNode& insert(const std::string& key, ConfigNode value);
  const std::vector<std::pair<std::string, ConfigNode>>& items() const;
  std::vector<std::pair<std::string, ConfigNode>>& items();

  // List access.
  const std::vector<ConfigNode>& elements() const;
  void append(ConfigNode value);

  // Applies one "--set key.path=value" override. The path must name an
  // existing scalar; the replacement is typed by the existing value.
  void set_path(const std::string& dotted_path, const std::string& value);

  bool operator==(const ConfigNode& other) const;

 private:
  void dump_into(std::string& out, int indent) const;

  Type type_;
  std::string scalar_;
  std::vector<std::pair<std::string, ConfigNode>> map_;
  std::vector<ConfigNode> list_;
};

// Inferred scalar type, used for dump quoting and typed overrides.
enum class ScalarKind { kInt, kDouble, kBool, kString };
ScalarKind infer_scalar_kind(const std::string& raw);

// Strict accessor over a map node. Every key a factory reads is marked
// consumed; ensure_consumed() rejects leftovers, which is how config typos
// surface as errors instead of silently-ignored keys.
class ConfigView {
 public:
  explicit ConfigView(const ConfigNode& node, std::string path = "");

  bool has(const std::string& key) const;

  std::string str(const std::string& key) const;
  std::string str_or(const std::string& key, const std::string& fallback) const;
  long long integer(const std::string& key) const;
  long long integer_or(const std::string& key, long long fallback) const;
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  bool boolean(const std::string& key) const;
  bool boolean_or(const std::string& key, bool fallback) const;

  // Child map, tracked by the same consumption checker.
  ConfigView sub(const std::string& key) const;

  // Whole child consumed opaquely (e.g. forwarded to another factory).
  const ConfigNode& blob(const std::string& key) const;

  // List of scalars / list of arbitrary nodes.
  std::vector<std::string> str_list(const std::string& key) const;
  std::vector<const ConfigNode*> node_list(const std::string& key) const;

  // Keys present in the underlying map (does not mark anything consumed).
  std::vector<std::string> keys() const;

  const std::string& path() const { return path_; }
  const ConfigNode& node() const { return *node_; }

  // Throws ConfigError naming the first key that was present but never read,
  // across this view and every sub() view derived from it.
  void ensure_consumed() const;

 private:
  struct Tracker {
    std::map<const ConfigNode*, std::set<std::string>> touched;
    std::map<const ConfigNode*, std::string> opened;  // node -> path
  };

  ConfigView(const ConfigNode& node, std::string path,
             std::shared_ptr<Tracker> tracker);
  const ConfigNode& require(const std::string& key) const;
  void touch(const std::string& key) const;
  std::string key_path(const std::string& key) const;

  const ConfigNode* node_;
  std::string path_;
  std::shared_ptr<Tracker> tracker_;
};

}  // namespace pgen
