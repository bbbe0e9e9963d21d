// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/config.hpp"

#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace pgen {

namespace {

struct Line {
  int indent;
  std::string content;
  long number;
};

[[noreturn]] void fail(long line, const std::string& msg) {
  throw ConfigError("config: " + msg + " (line " + std::to_string(line) + ")");
}

std::vector<Line> split_lines(const std::string& text) {
  std::vector<Line> out;
  std::size_t pos = 0;
  long number = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    std::string raw = text.substr(
        pos, end == std::string::npos ? std::string::npos : end - pos);
    ++number;
    pos = end == std::string::npos ? text.size() + 1 : end + 1;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();

    int indent = 0;
    std::size_t i = 0;
    for (; i < raw.size() && raw[i] == ' '; ++i) ++indent;
    if (i < raw.size() && raw[i] == '\t') fail(number, "tab indentation");
    std::string content = raw.substr(i);
    while (!content.empty() && content.back() == ' ') content.pop_back();
    if (content.empty() || content[0] == '#') continue;
    out.push_back({indent, content, number});
  }
  return out;
}

bool needs_quotes(const std::string& s) {
  if (s.empty()) return true;
  if (std::isspace(static_cast<unsigned char>(s.front())) ||
      std::isspace(static_cast<unsigned char>(s.back())))
    return true;
  if (s[0] == '-' || s[0] == '"' || s[0] == '[' || s[0] == '{') return true;
  for (char c : s) {
    if (c == ':' || c == '#' || c == ',' || c == ']' || c == '}' || c == '\n')
      return true;
  }
  return false;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string unquote(const std::string& s, long line) {
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (s[i] == '\\') {
      ++i;
      if (i + 1 >= s.size() + 1) fail(line, "dangling escape");
    }
    out.push_back(s[i]);
  }
  if (s.size() < 2 || s.back() != '"') fail(line, "unterminated quote");
  return out;
}

std::string render_scalar(const std::string& raw) {
  return needs_quotes(raw) ? quote(raw) : raw;
}

class Parser {
 public:
  explicit Parser(std::vector<Line> lines) : lines_(std::move(lines)) {}

  ConfigNode parse() {
    if (lines_.empty()) return ConfigNode::map();
    ConfigNode root = parse_block(lines_[0].indent);
    if (pos_ < lines_.size())
      fail(lines_[pos_].number, "unexpected dedent/indent structure");
    return root;
  }

 private:
  const Line& cur() const { return lines_[pos_]; }
  bool done() const { return pos_ >= lines_.size(); }

  ConfigNode parse_block(int indent) {
    if (done()) fail(lines_.back().number, "expected a nested block");
    if (cur().indent != indent)
      fail(cur().number, "inconsistent indentation");
    if (cur().content[0] == '-' &&
        (cur().content.size() == 1 || cur().content[1] == ' '))
      return parse_list(indent);
    return parse_map(indent);
  }

  ConfigNode parse_map(int indent) {
    ConfigNode node = ConfigNode::map();
    while (!done() && cur().indent == indent) {
      const Line line = cur();
      if (line.content[0] == '-') fail(line.number, "mixed map and list");
      std::size_t colon = find_key_colon(line.content, line.number);
      std::string key = line.content.substr(0, colon);
      while (!key.empty() && key.back() == ' ') key.pop_back();
      if (key.empty()) fail(line.number, "empty key");
      if (node.find(key) != nullptr)
        fail(line.number, "duplicate key '" + key + "'");
      std::string rest = line.content.substr(colon + 1);
      std::size_t skip = 0;
      while (skip < rest.size() && rest[skip] == ' ') ++skip;
      rest = rest.substr(skip);
      ++pos_;
      if (rest.empty()) {
        if (done() || cur().indent <= indent)
          fail(line.number, "key '" + key + "' has no value");
        node.insert(key, parse_block(cur().indent));
      } else {
        node.insert(key, parse_value(rest, line.number));
      }
    }
    if (!done() && cur().indent > indent)
      fail(cur().number, "unexpected indent");
    return node;
  }

  ConfigNode parse_list(int indent) {
    ConfigNode node = ConfigNode::list();
    while (!done() && cur().indent == indent && cur().content[0] == '-') {
      const Line line = cur();
      std::string rest = line.content.size() > 1 ? line.content.substr(2) : "";
      if (line.content.size() > 1 && line.content[1] != ' ')
        fail(line.number, "expected space after '-'");
      if (rest.empty()) {
        ++pos_;
        if (done() || cur().indent <= indent)
          fail(line.number, "list item has no value");
        node.append(parse_block(cur().indent));
      } else if (is_map_entry(rest)) {
        // "- key: value": the item is a map whose first entry sits on the
        // dash line; continuation lines are indented to the key column.
        lines_[pos_] = {indent + 2, rest, line.number};
        node.append(parse_map(indent + 2));
      } else {
        ++pos_;
        node.append(parse_value(rest, line.number));
      }
    }
    if (!done() && cur().indent > indent)
      fail(cur().number, "unexpected indent");
    return node;
  }

  static bool is_map_entry(const std::string& s) {
    if (!s.empty() && s[0] == '"') return false;
    std::size_t colon = s.find(':');
    if (colon == std::string::npos || colon == 0) return false;
    return colon + 1 == s.size() || s[colon + 1] == ' ';
  }

  static std::size_t find_key_colon(const std::string& s, long line) {
    std::size_t colon = s.find(':');
    if (colon == std::string::npos || colon == 0)
      fail(line, "expected 'key: value'");
    if (colon + 1 != s.size() && s[colon + 1] != ' ')
      fail(line, "expected space after ':'");
    return colon;
  }

  static ConfigNode parse_value(const std::string& rest, long line) {
    if (rest[0] == '[') {
      if (rest.back() != ']') fail(line, "unterminated flow list");
      ConfigNode node = ConfigNode::list();
      std::string body = rest.substr(1, rest.size() - 2);
      if (body.find_first_not_of(' ') == std::string::npos) return node;
      std::size_t start = 0;
      while (true) {
        std::size_t comma = body.find(',', start);
        std::string item = body.substr(
            start, comma == std::string::npos ? std::string::npos
                                              : comma - start);
        std::size_t a = item.find_first_not_of(' ');
        std::size_t b = item.find_last_not_of(' ');
        if (a == std::string::npos) fail(line, "empty flow list item");
        item = item.substr(a, b - a + 1);
        node.append(parse_scalar(item, line));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return node;
    }
    return parse_scalar(rest, line);
  }

  static ConfigNode parse_scalar(const std::string& raw, long line) {
    if (!raw.empty() && raw[0] == '"')
      return ConfigNode::scalar(unquote(raw, line));
    if (raw.find('&') == 0 || raw.find('*') == 0 || raw.find('!') == 0)
      fail(line, "anchors/tags are not supported");
    return ConfigNode::scalar(raw);
  }

  std::vector<Line> lines_;
  std::size_t pos_ = 0;
};

}  // namespace

ConfigNode ConfigNode::scalar(std::string raw) {
  ConfigNode n;
  n.type_ = Type::kScalar;
  n.scalar_ = std::move(raw);
  return n;
}

ConfigNode ConfigNode::map() {
  ConfigNode n;
  n.type_ = Type::kMap;
  return n;
}

ConfigNode ConfigNode::list() {
  ConfigNode n;
  n.type_ = Type::kList;
  return n;
}

ConfigNode ConfigNode::parse_string(const std::string& text) {
  return Parser(split_lines(text)).parse();
}

ConfigNode ConfigNode::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str());
}

const std::string& ConfigNode::raw() const {
  if (!is_scalar()) throw ConfigError("config: expected a scalar value");
  return scalar_;
}

long long ConfigNode::to_int() const {
  const std::string& s = raw();
  errno = 0;
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size() || s.empty())
    throw ConfigError("config: '" + s + "' is not an integer");
  return v;
}

double ConfigNode::to_double() const {
  const std::string& s = raw();
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size() || s.empty())
    throw ConfigError("config: '" + s + "' is not a number");
  return v;
}

bool ConfigNode::to_bool() const {
  const std::string& s = raw();
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("config: '" + s + "' is not a boolean");
}

const ConfigNode* ConfigNode::find(const std::string& key) const {
  if (!is_map()) return nullptr;
  for (const auto& [k, v] : map_)
    if (k == key) return &v;
  return nullptr;
}

ConfigNode& ConfigNode::insert(const std::string& key, ConfigNode value) {
  if (!is_map()) throw ConfigError("config: insert into non-map");
  map_.emplace_back(key, std::move(value));
  return map_.back().second;
}

const std::vector<std::pair<std::string, ConfigNode>>& ConfigNode::items()
    const {
  if (!is_map()) throw ConfigError("config: expected a map");
  return map_;
}

std::vector<std::pair<std::string, ConfigNode>>& ConfigNode::items() {
  if (!is_map()) throw ConfigError("config: expected a map");
  return map_;
}

const std::vector<ConfigNode>& ConfigNode::elements() const {
  if (!is_list()) throw ConfigError("config: expected a list");
  return list_;
}

void ConfigNode::append(ConfigNode value) {
  if (!is_list()) throw ConfigError("config: append to non-list");
  list_.push_back(std::move(value));
}

ScalarKind infer_scalar_kind(const std::string& raw) {
  if (raw == "true" || raw == "false") return ScalarKind::kBool;
  if (raw.empty()) return ScalarKind::kString;
  errno = 0;
  char* end = nullptr;
  std::strtoll(raw.c_str(), &end, 10);
  if (errno == 0 && end == raw.c_str() + raw.size()) return ScalarKind::kInt;
  errno = 0;
  end = nullptr;
  std::strtod(raw.c_str(), &end);
  if (errno == 0 && end == raw.c_str() + raw.size())
    return ScalarKind::kDouble;
  return ScalarKind::kString;
}

void ConfigNode::set_path(const std::string& dotted_path,
                          const std::string& value) {
  ConfigNode* node = this;
  std::size_t start = 0;
  std::string walked;
  while (true) {
    std::size_t dot = dotted_path.find('.', start);
    std::string key = dotted_path.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty())
      throw ConfigError("config: bad override path '" + dotted_path + "'");
    walked = walked.empty() ? key : walked + "." + key;
    if (!node->is_map())
      throw ConfigError("config: override path '" + walked +
                        "' walks through a non-map");
    ConfigNode* child = nullptr;
    for (auto& [k, v] : node->map_)
      if (k == key) child = &v;
    if (child == nullptr)
      throw ConfigError("config: override names unknown key '" + walked +
                        "'");
    node = child;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!node->is_scalar())
    throw ConfigError("config: override target '" + dotted_path +
                      "' is not a scalar");
  switch (infer_scalar_kind(node->scalar_)) {
    case ScalarKind::kInt:
      if (infer_scalar_kind(value) != ScalarKind::kInt)
        throw ConfigError("config: key '" + dotted_path +
                          "' expects an integer, got '" + value + "'");
      break;
    case ScalarKind::kDouble:
      if (infer_scalar_kind(value) != ScalarKind::kInt &&
          infer_scalar_kind(value) != ScalarKind::kDouble)
        throw ConfigError("config: key '" + dotted_path +
                          "' expects a number, got '" + value + "'");
      break;
    case ScalarKind::kBool:
      if (infer_scalar_kind(value) != ScalarKind::kBool)
        throw ConfigError("config: key '" + dotted_path +
                          "' expects a boolean, got '" + value + "'");
      break;
    case ScalarKind::kString:
      break;
  }
  node->scalar_ = value;
}

bool ConfigNode::operator==(const ConfigNode& other) const {
  if (type_ != other.type_) return false;
  switch (type_) {
    case Type::kScalar:
      return scalar_ == other.scalar_;
    case Type::kMap:
      return map_ == other.map_;
    case Type::kList:
      return list_ == other.list_;
  }
  return false;
}

void ConfigNode::dump_into(std::string& out, int indent) const {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  switch (type_) {
    case Type::kScalar:
      out += render_scalar(scalar_);
      break;
    case Type::kMap:
      for (const auto& [k, v] : map_) {
        out += pad + k + ":";
        if (v.is_scalar()) {
          out += " " + render_scalar(v.scalar_) + "\n";
        } else if (v.is_list() && v.list_.empty()) {
          out += " []\n";
        } else if (v.is_list() && !v.list_.empty() &&
                   v.list_[0].is_scalar()) {
          out += " [";
          for (std::size_t i = 0; i < v.list_.size(); ++i) {
            if (i) out += ", ";
            out += render_scalar(v.list_[i].scalar_);
          }
          out += "]\n";
        } else {
          out += "\n";
          v.dump_into(out, indent + 1);
        }
      }
      break;
    case Type::kList:
      for (const ConfigNode& item : list_) {
        if (item.is_scalar()) {
          out += pad + "- " + render_scalar(item.scalar_) + "\n";
        } else if (item.is_map() && !item.map_.empty()) {
          // First entry shares the dash line.
          std::string body;
          item.dump_into(body, indent + 1);
          std::size_t lead = static_cast<std::size_t>(indent + 1) * 2;
          body.replace(0, lead, pad + "- ");
          out += body;
        } else {
          throw ConfigError("config: cannot dump empty/nested list item");
        }
      }
      break;
  }
}

std::string ConfigNode::dump() const {
  std::string out;
  dump_into(out, 0);
  return out;
}

ConfigView::ConfigView(const ConfigNode& node, std::string path)
    : ConfigView(node, std::move(path), std::make_shared<Tracker>()) {}

ConfigView::ConfigView(const ConfigNode& node, std::string path,
                       std::shared_ptr<Tracker> tracker)
    : node_(&node), path_(std::move(path)), tracker_(std::move(tracker)) {
  if (!node_->is_map())
    throw ConfigError("config: '" + (path_.empty() ? "<root>" : path_) +
                      "' must be a map");
  tracker_->opened.emplace(node_, path_);
}

std::string ConfigView::key_path(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

bool ConfigView::has(const std::string& key) const {
  return node_->find(key) != nullptr;
}

void ConfigView::touch(const std::string& key) const {
  tracker_->touched[node_].insert(key);
}

const ConfigNode& ConfigView::require(const std::string& key) const {
  const ConfigNode* child = node_->find(key);
  if (child == nullptr)
    throw ConfigError("config: missing key '" + key_path(key) + "'");
  touch(key);
  return *child;
}

std::string ConfigView::str(const std::string& key) const {
  return require(key).raw();
}

std::string ConfigView::str_or(const std::string& key,
                               const std::string& fallback) const {
  if (!has(key)) return fallback;
  return str(key);
}

long long ConfigView::integer(const std::string& key) const {
  try {
    return require(key).to_int();
  } catch (const ConfigError&) {
    throw ConfigError("config: key '" + key_path(key) +
                      "' is not an integer");
  }
}

long long ConfigView::integer_or(const std::string& key,
                                 long long fallback) const {
  if (!has(key)) return fallback;
  return integer(key);
}

double ConfigView::number(const std::string& key) const {
  try {
    return require(key).to_double();
  } catch (const ConfigError&) {
    throw ConfigError("config: key '" + key_path(key) + "' is not a number");
  }
}

double ConfigView::number_or(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  return number(key);
}

bool ConfigView::boolean(const std::string& key) const {
  try {
    return require(key).to_bool();
  } catch (const ConfigError&) {
    throw ConfigError("config: key '" + key_path(key) + "' is not a boolean");
  }
}

bool ConfigView::boolean_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  return boolean(key);
}

ConfigView ConfigView::sub(const std::string& key) const {
  const ConfigNode& child = require(key);
  return ConfigView(child, key_path(key), tracker_);
}

const ConfigNode& ConfigView::blob(const std::string& key) const {
  return require(key);
}

std::vector<std::string> ConfigView::str_list(const std::string& key) const {
  const ConfigNode& child = require(key);
  std::vector<std::string> out;
  for (const ConfigNode& item : child.elements()) out.push_back(item.raw());
  return out;
}

std::vector<const ConfigNode*> ConfigView::node_list(
    const std::string& key) const {
  const ConfigNode& child = require(key);
  std::vector<const ConfigNode*> out;
  for (const ConfigNode& item : child.elements()) out.push_back(&item);
  return out;
}

std::vector<std::string> ConfigView::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : node_->items()) out.push_back(k);
  return out;
}

void ConfigView::ensure_consumed() const {
  for (const auto& [node, path] : tracker_->opened) {
    const auto it = tracker_->touched.find(node);
    for (const auto& [k, v] : node->items()) {
      if (it == tracker_->touched.end() || it->second.count(k) == 0) {
        std::string full = path.empty() ? k : path + "." + k;
        throw ConfigError("config: unknown key '" + full + "'");
      }
    }
  }
}

}  // namespace pgen
