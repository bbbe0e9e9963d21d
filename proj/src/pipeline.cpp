// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pgen/io.hpp"

namespace pgen {

std::atomic<long> ProcessedSample::live_{0};

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    std::size_t start = i;
    while (i < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::vector<std::string> split_codepoints(const std::string& word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    unsigned char c = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > word.size()) len = 1;
    out.push_back(word.substr(i, len));
    i += len;
  }
  return out;
}

namespace {

std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> symbols = split_codepoints(word);
  if (!symbols.empty()) symbols.back() += BpeModel::kEndOfWord;
  return symbols;
}

void merge_in_place(std::vector<std::string>& symbols, const std::string& a,
                    const std::string& b) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < symbols.size(); ++r) {
    if (r + 1 < symbols.size() && symbols[r] == a && symbols[r + 1] == b) {
      symbols[w] = a + b;
      ++r;
    } else if (w != r) {
      symbols[w] = std::move(symbols[r]);
    }
    ++w;
  }
  symbols.resize(w);
}

}  // namespace

BpeModel BpeModel::train(const std::vector<std::string>& lines,
                         int num_merges) {
  std::map<std::string, long long> word_counts;
  for (const std::string& line : lines)
    for (const std::string& w : split_whitespace(line)) ++word_counts[w];
  if (word_counts.empty()) throw EmptyError("bpe: empty training corpus");

  std::vector<std::pair<std::vector<std::string>, long long>> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) words.emplace_back(word_symbols(w), c);

  BpeModel model;
  for (int step = 0; step < num_merges; ++step) {
    std::map<std::pair<std::string, std::string>, long long> pair_counts;
    for (const auto& [symbols, count] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i)
        pair_counts[{symbols[i], symbols[i + 1]}] += count;
    if (pair_counts.empty()) break;
    // std::map iterates pairs in lexicographic order, so strict > keeps the
    // smallest pair among equals.
    auto best = pair_counts.begin();
    for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [a, b] = best->first;
    for (auto& [symbols, count] : words) merge_in_place(symbols, a, b);
    model.add_merge(a, b);
  }
  return model;
}

void BpeModel::add_merge(std::string a, std::string b) {
  rank_[{a, b}] = static_cast<int>(merges_.size());
  merges_.emplace_back(std::move(a), std::move(b));
}

std::vector<std::string> BpeModel::encode_word(const std::string& word) const {
  std::vector<std::string> symbols = word_symbols(word);
  for (const auto& [a, b] : merges_) merge_in_place(symbols, a, b);
  return symbols;
}

std::vector<std::string> BpeModel::encode(const std::string& text) const {
  std::vector<std::string> out;
  for (const std::string& word : split_whitespace(text)) {
    std::vector<std::string> symbols = encode_word(word);
    out.insert(out.end(), symbols.begin(), symbols.end());
  }
  return out;
}

std::string BpeModel::decode(const std::vector<std::string>& tokens) {
  std::string joined;
  for (const std::string& t : tokens) joined += t;
  std::string out;
  std::size_t i = 0;
  const std::string marker = kEndOfWord;
  while (i < joined.size()) {
    if (joined.compare(i, marker.size(), marker) == 0) {
      out.push_back(' ');
      i += marker.size();
    } else {
      out.push_back(joined[i]);
      ++i;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void BpeModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write: " + path);
  out << "#merges:" << merges_.size() << "\n";
  for (const auto& [a, b] : merges_) out << a << " " << b << "\n";
  if (!out) throw IoError("write failed: " + path);
}

BpeModel BpeModel::load(const std::string& path) {
  LineReader reader(path);
  auto header = reader.next();
  if (!header || header->rfind("#merges:", 0) != 0)
    throw FormatError(path + ": missing '#merges:<N>' header");
  long expected = std::stol(header->substr(8));
  BpeModel model;
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    std::size_t space = line->find(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line->size())
      throw FormatError(path + ": bad merge line '" + *line + "'");
    model.add_merge(line->substr(0, space), line->substr(space + 1));
  }
  if (static_cast<long>(model.merges_.size()) != expected)
    throw FormatError(path + ": header says " + std::to_string(expected) +
                      " merges, found " +
                      std::to_string(model.merges_.size()));
  return model;
}

Vocabulary::Vocabulary() {
  push("<pad>", 0);
  push("<unk>", 0);
  push("<bos>", 0);
  push("<eos>", 0);
  push("<mask>", 0);
}

void Vocabulary::push(std::string token, long long count) {
  index_[token] = static_cast<int>(tokens_.size());
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

Vocabulary Vocabulary::from_counts(
    const std::map<std::string, long long>& counts, long long min_count) {
  Vocabulary v;
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, c] : counts)
    if (c >= min_count && !v.contains(tok)) kept.emplace_back(tok, c);
  std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  for (auto& [tok, c] : kept) v.push(std::move(tok), c);
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw FormatError("vocabulary id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write: " + path);
  for (int i = 0; i < size(); ++i)
    out << tokens_[static_cast<std::size_t>(i)] << "\t"
        << counts_[static_cast<std::size_t>(i)] << "\n";
  if (!out) throw IoError("write failed: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  LineReader reader(path);
  Vocabulary v;
  int row = 0;
  while (auto line = reader.next()) {
    std::size_t tab = line->find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ": expected '<token>\\t<count>'",
                       static_cast<long>(reader.line_number()));
    std::string tok = line->substr(0, tab);
    long long count = std::stoll(line->substr(tab + 1));
    if (row < kReserved) {
      if (tok != v.tokens_[static_cast<std::size_t>(row)])
        throw FormatError(path + ": reserved token row " +
                          std::to_string(row) + " must be " +
                          v.tokens_[static_cast<std::size_t>(row)]);
    } else {
      if (v.contains(tok))
        throw FormatError(path + ": duplicate token '" + tok + "'");
      v.push(std::move(tok), count);
    }
    ++row;
  }
  if (row < kReserved)
    throw FormatError(path + ": fewer than the 5 reserved tokens");
  return v;
}

namespace {

std::vector<int> numericalize(const std::string& text, const Vocabulary& vocab,
                              const BpeModel& bpe) {
  std::vector<int> ids;
  for (const std::string& tok : bpe.encode(text)) ids.push_back(vocab.id(tok));
  return ids;
}

}  // namespace

ProcessedSample data_collate(const Sample& sample, const Vocabulary& vocab,
                             const BpeModel& bpe, const FieldSpec& spec) {
  ProcessedSample out;
  const FieldValue& src = sample.at(spec.src_field);
  if (src.type != FieldValue::Type::kString)
    throw MissingField("field '" + spec.src_field + "' is not a string");
  out.src = numericalize(src.str, vocab, bpe);

  const FieldValue* tgt = sample.find(spec.tgt_field);
  if (tgt == nullptr) {
    if (spec.require_target)
      throw MissingField("sample has no field '" + spec.tgt_field + "'");
    return out;
  }
  if (tgt->type != FieldValue::Type::kString)
    throw MissingField("field '" + spec.tgt_field + "' is not a string");
  out.has_tgt = true;
  out.tgt.push_back(Vocabulary::kBos);
  for (int id : numericalize(tgt->str, vocab, bpe)) out.tgt.push_back(id);
  out.tgt.push_back(Vocabulary::kEos);
  return out;
}

Batch collate(const std::vector<ProcessedSample>& samples, int pad_id) {
  if (samples.empty()) throw EmptyError("collate: empty batch");
  const int B = static_cast<int>(samples.size());
  int S = 0;
  int T = 0;
  bool has_tgt = true;
  for (const ProcessedSample& s : samples) {
    S = std::max(S, static_cast<int>(s.src.size()));
    T = std::max(T, static_cast<int>(s.tgt.size()));
    has_tgt = has_tgt && s.has_tgt;
  }
  Batch b;
  b.has_tgt = has_tgt;
  b.src_tokens = Eigen::MatrixXi::Constant(B, S, pad_id);
  b.src_mask = Eigen::ArrayXXi::Zero(B, S);
  b.tgt_tokens = Eigen::MatrixXi::Constant(B, has_tgt ? T : 0, pad_id);
  b.tgt_mask = Eigen::ArrayXXi::Zero(B, has_tgt ? T : 0);
  for (int i = 0; i < B; ++i) {
    const ProcessedSample& s = samples[static_cast<std::size_t>(i)];
    b.src_lengths.push_back(static_cast<int>(s.src.size()));
    for (std::size_t j = 0; j < s.src.size(); ++j) {
      b.src_tokens(i, static_cast<int>(j)) = s.src[j];
      b.src_mask(i, static_cast<int>(j)) = 1;
    }
    if (has_tgt) {
      b.tgt_lengths.push_back(static_cast<int>(s.tgt.size()));
      for (std::size_t j = 0; j < s.tgt.size(); ++j) {
        b.tgt_tokens(i, static_cast<int>(j)) = s.tgt[j];
        b.tgt_mask(i, static_cast<int>(j)) = 1;
      }
    }
  }
  return b;
}

}  // namespace pgen
