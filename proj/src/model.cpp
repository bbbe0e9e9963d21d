// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0

#include "pgen/model.hpp"

#include <cmath>

namespace pgen {

void TransformerConfig::validate() const {
  if (d_model < 1 || n_heads < 1)
    throw ConfigError("model: d_model and n_heads must be positive");
  if (d_model % n_heads != 0)
    throw ConfigError("model: d_model " + std::to_string(d_model) +
                      " not divisible by n_heads " + std::to_string(n_heads));
  if (vocab_size < 5)
    throw ConfigError("model: vocab_size " + std::to_string(vocab_size) +
                      " smaller than the reserved id range");
  if (n_enc_layers < 1 || n_dec_layers < 1)
    throw ConfigError("model: need at least one layer per stack");
  if (d_ff < 1) throw ConfigError("model: d_ff must be positive");
  if (max_positions < 1)
    throw ConfigError("model: max_positions must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("model: dropout must be in [0, 1)");
  if (length_window < 0)
    throw ConfigError("model: length_window must be non-negative");
}

Tensor& ParamMap::add(const std::string& name, Tensor t) {
  if (index_.count(name))
    throw DuplicateRegistration("parameter " + name + " added twice");
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamMap::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFound("parameter " + name);
  return items_[it->second].second;
}

const Tensor& ParamMap::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFound("parameter " + name);
  return items_[it->second].second;
}

bool ParamMap::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

void ParamMap::clear_grads() {
  for (auto& [name, t] : items_) t.clear_grad();
}

namespace {

// "<block>.<layer>." for attention/ffn/norm parameter names.
std::string layer_prefix(const char* block, int layer) {
  return std::string(block) + "." + std::to_string(layer) + ".";
}

}  // namespace

Transformer::Transformer(TransformerConfig config, Mode mode,
                         std::uint64_t seed)
    : config_(config), mode_(mode) {
  config_.validate();
  Rng rng(seed);
  const int d = config_.d_model;
  const int f = config_.d_ff;
  const int v = config_.vocab_size;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));

  auto matrix = [&](std::vector<int> shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.array()[i] = rng.uniform(-bound, bound);
    return t;
  };
  auto bias = [&](int n) { return Tensor::zeros({n}, true); };
  auto gain = [&](int n) {
    Tensor t = Tensor::constant({n}, 1.0);
    t.node()->requires_grad = true;
    return t;
  };
  auto add_attention = [&](const std::string& p) {
    params_.add(p + "_wq", matrix({d, d}));
    params_.add(p + "_bq", bias(d));
    params_.add(p + "_wk", matrix({d, d}));
    params_.add(p + "_bk", bias(d));
    params_.add(p + "_wv", matrix({d, d}));
    params_.add(p + "_bv", bias(d));
    params_.add(p + "_wo", matrix({d, d}));
    params_.add(p + "_bo", bias(d));
  };
  auto add_ffn = [&](const std::string& p) {
    params_.add(p + "_w1", matrix({d, f}));
    params_.add(p + "_b1", bias(f));
    params_.add(p + "_w2", matrix({f, d}));
    params_.add(p + "_b2", bias(d));
  };
  auto add_norm = [&](const std::string& p) {
    params_.add(p + "gain", gain(d));
    params_.add(p + "bias", bias(d));
  };

  params_.add("embed.0.weight", matrix({v, d}));
  for (int l = 0; l < config_.n_enc_layers; ++l) {
    std::string p = layer_prefix("encoder", l);
    add_norm(p + "ln1_");
    add_attention(p + "attn");
    add_norm(p + "ln2_");
    add_ffn(p + "ffn");
  }
  add_norm("encoder.norm.");
  for (int l = 0; l < config_.n_dec_layers; ++l) {
    std::string p = layer_prefix("decoder", l);
    add_norm(p + "ln1_");
    add_attention(p + "self");
    add_norm(p + "ln2_");
    add_attention(p + "cross");
    add_norm(p + "ln3_");
    add_ffn(p + "ffn");
  }
  add_norm("decoder.norm.");
  params_.add("output.0.weight", matrix({d, v}));
  params_.add("output.0.bias", bias(v));
  if (mode_ == Mode::kParallel) {
    params_.add("placeholder.0.weight", matrix({1, d}));
    params_.add("length.0.weight", matrix({d, 2 * config_.length_window + 1}));
    params_.add("length.0.bias", bias(2 * config_.length_window + 1));
  }
}

void Transformer::require_mode(Mode m, const char* op) const {
  if (mode_ != m)
    throw Error(std::string(op) + ": wrong decoder variant for this model");
}

std::vector<int> Transformer::trimmed_row(const Eigen::MatrixXi& m, int row,
                                          int length) {
  std::vector<int> out(static_cast<std::size_t>(length));
  for (int j = 0; j < length; ++j) out[static_cast<std::size_t>(j)] = m(row, j);
  return out;
}

Tensor Transformer::positional(int from, int count) const {
  const int d = config_.d_model;
  Tensor pe = Tensor::zeros({count, d});
  auto m = pe.matrix();
  for (int p = 0; p < count; ++p) {
    for (int j = 0; j < d; ++j) {
      double angle = static_cast<double>(from + p) /
                     std::pow(10000.0, static_cast<double>(2 * (j / 2)) / d);
      m(p, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Tensor Transformer::causal_mask(int n) const {
  Tensor mask = Tensor::zeros({n, n});
  auto m = mask.matrix();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m(i, j) = -1e9;
  return mask;
}

Tensor Transformer::maybe_dropout(const Tensor& x, bool train,
                                  Rng* rng) const {
  if (!train || config_.dropout <= 0.0) return x;
  if (rng == nullptr)
    throw Error("dropout active but no rng supplied to the forward pass");
  return dropout(x, config_.dropout, *rng);
}

Tensor Transformer::embed_positioned(const Tensor& emb, int from) const {
  Tensor scaled = scale(emb, std::sqrt(static_cast<double>(config_.d_model)));
  return add(scaled, positional(from, emb.dim(0)));
}

Tensor Transformer::ffn(const std::string& prefix, const Tensor& x) const {
  Tensor h = relu(add_rowwise(matmul(x, params_.at(prefix + "_w1")),
                              params_.at(prefix + "_b1")));
  return add_rowwise(matmul(h, params_.at(prefix + "_w2")),
                     params_.at(prefix + "_b2"));
}

Tensor Transformer::attend(const std::string& prefix, const Tensor& q,
                           const Tensor& k, const Tensor& v,
                           const Tensor* mask) const {
  const int dh = config_.d_model / config_.n_heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(config_.n_heads));
  for (int h = 0; h < config_.n_heads; ++h) {
    Tensor qh = cols(q, h * dh, dh);
    Tensor kh = cols(k, h * dh, dh);
    Tensor vh = cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv);
    if (mask != nullptr) scores = add(scores, *mask);
    heads.push_back(matmul(softmax(scores), vh));
  }
  Tensor cat = concat_cols(heads);
  return add_rowwise(matmul(cat, params_.at(prefix + "_wo")),
                     params_.at(prefix + "_bo"));
}

Tensor Transformer::attention(const std::string& prefix, const Tensor& q_in,
                              const Tensor& kv_in, const Tensor* mask) const {
  Tensor q = add_rowwise(matmul(q_in, params_.at(prefix + "_wq")),
                         params_.at(prefix + "_bq"));
  Tensor k = add_rowwise(matmul(kv_in, params_.at(prefix + "_wk")),
                         params_.at(prefix + "_bk"));
  Tensor v = add_rowwise(matmul(kv_in, params_.at(prefix + "_wv")),
                         params_.at(prefix + "_bv"));
  return attend(prefix, q, k, v, mask);
}

Tensor Transformer::encode_one(const std::vector<int>& src, bool train,
                               Rng* rng) const {
  if (src.empty()) throw EmptyError("encode: empty source");
  if (static_cast<int>(src.size()) > config_.max_positions)
    throw PositionOverflow("source length " + std::to_string(src.size()) +
                           " exceeds max_positions " +
                           std::to_string(config_.max_positions));
  Tensor x = embed_positioned(embed(params_.at("embed.0.weight"), src), 0);
  x = maybe_dropout(x, train, rng);
  for (int l = 0; l < config_.n_enc_layers; ++l) {
    std::string p = layer_prefix("encoder", l);
    Tensor h = layer_norm(x, params_.at(p + "ln1_gain"),
                          params_.at(p + "ln1_bias"), 1e-5);
    x = add(x, maybe_dropout(attention(p + "attn", h, h, nullptr), train, rng));
    h = layer_norm(x, params_.at(p + "ln2_gain"), params_.at(p + "ln2_bias"),
                   1e-5);
    x = add(x, maybe_dropout(ffn(p + "ffn", h), train, rng));
  }
  return layer_norm(x, params_.at("encoder.norm.gain"),
                    params_.at("encoder.norm.bias"), 1e-5);
}

Tensor Transformer::decode_stack(const Tensor& dec_in, const Tensor& enc,
                                 bool causal, bool train, Rng* rng) const {
  Tensor x = dec_in;
  Tensor mask;
  const Tensor* mp = nullptr;
  if (causal) {
    mask = causal_mask(dec_in.dim(0));
    mp = &mask;
  }
  for (int l = 0; l < config_.n_dec_layers; ++l) {
    std::string p = layer_prefix("decoder", l);
    Tensor h = layer_norm(x, params_.at(p + "ln1_gain"),
                          params_.at(p + "ln1_bias"), 1e-5);
    x = add(x, maybe_dropout(attention(p + "self", h, h, mp), train, rng));
    h = layer_norm(x, params_.at(p + "ln2_gain"), params_.at(p + "ln2_bias"),
                   1e-5);
    x = add(x,
            maybe_dropout(attention(p + "cross", h, enc, nullptr), train, rng));
    h = layer_norm(x, params_.at(p + "ln3_gain"), params_.at(p + "ln3_bias"),
                   1e-5);
    x = add(x, maybe_dropout(ffn(p + "ffn", h), train, rng));
  }
  return layer_norm(x, params_.at("decoder.norm.gain"),
                    params_.at("decoder.norm.bias"), 1e-5);
}

Tensor Transformer::out_proj(const Tensor& x) const {
  return add_rowwise(matmul(x, params_.at("output.0.weight")),
                     params_.at("output.0.bias"));
}

Tensor Transformer::ar_forward(const Batch& batch, bool train,
                               Rng* rng) const {
  require_mode(Mode::kAutoregressive, "ar_forward");
  if (!batch.has_tgt)
    throw ShapeMismatch("ar_forward: batch has no target side");
  const int b_count = batch.batch_size();
  const int t_width = static_cast<int>(batch.tgt_tokens.cols());
  const int v = config_.vocab_size;
  if (t_width > config_.max_positions)
    throw PositionOverflow("target width " + std::to_string(t_width) +
                           " exceeds max_positions " +
                           std::to_string(config_.max_positions));
  std::vector<Tensor> per_sample;
  per_sample.reserve(static_cast<std::size_t>(b_count));
  for (int b = 0; b < b_count; ++b) {
    std::vector<int> src =
        trimmed_row(batch.src_tokens, b, batch.src_lengths[b]);
    std::vector<int> tgt =
        trimmed_row(batch.tgt_tokens, b, batch.tgt_lengths[b]);
    Tensor enc = encode_one(src, train, rng);
    Tensor dec_in = maybe_dropout(
        embed_positioned(embed(params_.at("embed.0.weight"), tgt), 0), train,
        rng);
    Tensor logits = out_proj(decode_stack(dec_in, enc, true, train, rng));
    const int pad_rows = t_width - static_cast<int>(tgt.size());
    if (pad_rows > 0)
      logits = vstack<double>({logits, Tensor::zeros({pad_rows, v})});
    per_sample.push_back(logits);
  }
  return reshape(vstack(per_sample), {b_count, t_width, v});
}

Tensor Transformer::nat_forward_one(const std::vector<int>& src,
                                    const std::vector<int>& inputs, bool train,
                                    Rng* rng) const {
  require_mode(Mode::kParallel, "nat_forward");
  const int length = static_cast<int>(inputs.size());
  if (length < 1) throw EmptyError("parallel decode needs length >= 1");
  if (length > config_.max_positions)
    throw PositionOverflow("target length " + std::to_string(length) +
                           " exceeds max_positions " +
                           std::to_string(config_.max_positions));
  Tensor enc = encode_one(src, train, rng);
  const Tensor& table = params_.at("embed.0.weight");
  const Tensor& placeholder = params_.at("placeholder.0.weight");
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(length));
  for (int tok : inputs)
    rows.push_back(tok < 0 ? placeholder : embed(table, {tok}));
  Tensor dec_in =
      maybe_dropout(embed_positioned(vstack(rows), 0), train, rng);
  return out_proj(decode_stack(dec_in, enc, false, train, rng));
}

Tensor Transformer::nat_forward(const Batch& batch, int length, bool train,
                                Rng* rng) const {
  require_mode(Mode::kParallel, "nat_forward");
  const int b_count = batch.batch_size();
  std::vector<int> placeholders(static_cast<std::size_t>(length),
                                ParallelScorer::kPlaceholder);
  std::vector<Tensor> per_sample;
  per_sample.reserve(static_cast<std::size_t>(b_count));
  for (int b = 0; b < b_count; ++b) {
    std::vector<int> src =
        trimmed_row(batch.src_tokens, b, batch.src_lengths[b]);
    per_sample.push_back(nat_forward_one(src, placeholders, train, rng));
  }
  return reshape(vstack(per_sample), {b_count, length, config_.vocab_size});
}

Tensor Transformer::length_logits(const std::vector<int>& src, bool train,
                                  Rng* rng) const {
  require_mode(Mode::kParallel, "predict_length");
  Tensor enc = encode_one(src, train, rng);
  const int s = enc.dim(0);
  Tensor pool = Tensor::constant({1, s}, 1.0 / s);
  Tensor pooled = matmul(pool, enc);
  return add_rowwise(matmul(pooled, params_.at("length.0.weight")),
                     params_.at("length.0.bias"));
}

Tensor Transformer::predict_length(const std::vector<int>& src) const {
  Tensor probs = softmax(length_logits(src, false, nullptr));
  return reshape(probs, {2 * config_.length_window + 1});
}

Transformer::DecodeStatePtr Transformer::decode_start(
    const std::vector<int>& src) const {
  require_mode(Mode::kAutoregressive, "decode");
  TapePause pause;
  auto state = std::make_shared<DecodeState>();
  Tensor enc = encode_one(src, false, nullptr);
  const int d = config_.d_model;
  for (int l = 0; l < config_.n_dec_layers; ++l) {
    std::string p = layer_prefix("decoder", l) + "cross";
    state->cross_k.push_back(
        add_rowwise(matmul(enc, params_.at(p + "_wk")), params_.at(p + "_bk")));
    state->cross_v.push_back(
        add_rowwise(matmul(enc, params_.at(p + "_wv")), params_.at(p + "_bv")));
    state->self_k.push_back(Tensor::zeros({0, d}));
    state->self_v.push_back(Tensor::zeros({0, d}));
  }
  return state;
}

std::pair<Tensor, Transformer::DecodeStatePtr> Transformer::ar_decode_step(
    const DecodeStatePtr& state, int token) const {
  require_mode(Mode::kAutoregressive, "decode");
  TapePause pause;
  if (state->position >= config_.max_positions)
    throw PositionOverflow("decode step at position " +
                           std::to_string(state->position) +
                           " would exceed max_positions");
  const int pos = state->position;
  auto next = std::make_shared<DecodeState>(*state);
  Tensor x = embed_positioned(embed(params_.at("embed.0.weight"), {token}),
                              pos);
  for (int l = 0; l < config_.n_dec_layers; ++l) {
    std::string p = layer_prefix("decoder", l);
    std::size_t li = static_cast<std::size_t>(l);
    Tensor h = layer_norm(x, params_.at(p + "ln1_gain"),
                          params_.at(p + "ln1_bias"), 1e-5);
    Tensor q = add_rowwise(matmul(h, params_.at(p + "self_wq")),
                           params_.at(p + "self_bq"));
    Tensor k_new = add_rowwise(matmul(h, params_.at(p + "self_wk")),
                               params_.at(p + "self_bk"));
    Tensor v_new = add_rowwise(matmul(h, params_.at(p + "self_wv")),
                               params_.at(p + "self_bv"));
    Tensor k_all = next->self_k[li].dim(0) == 0
                       ? k_new
                       : vstack<double>({next->self_k[li], k_new});
    Tensor v_all = next->self_v[li].dim(0) == 0
                       ? v_new
                       : vstack<double>({next->self_v[li], v_new});
    next->self_k[li] = k_all;
    next->self_v[li] = v_all;
    x = add(x, attend(p + "self", q, k_all, v_all, nullptr));
    h = layer_norm(x, params_.at(p + "ln2_gain"), params_.at(p + "ln2_bias"),
                   1e-5);
    Tensor q2 = add_rowwise(matmul(h, params_.at(p + "cross_wq")),
                            params_.at(p + "cross_bq"));
    x = add(x, attend(p + "cross", q2, next->cross_k[li], next->cross_v[li],
                      nullptr));
    h = layer_norm(x, params_.at(p + "ln3_gain"), params_.at(p + "ln3_bias"),
                   1e-5);
    x = add(x, ffn(p + "ffn", h));
  }
  x = layer_norm(x, params_.at("decoder.norm.gain"),
                 params_.at("decoder.norm.bias"), 1e-5);
  Tensor logits = out_proj(x);
  next->position = pos + 1;
  return {reshape(logits, {config_.vocab_size}), next};
}

StepDecoder::StatePtr Transformer::start(const std::vector<int>& src) const {
  return decode_start(src);
}

std::pair<Eigen::VectorXd, StepDecoder::StatePtr> Transformer::step(
    const StatePtr& state, int token) const {
  auto ds = std::dynamic_pointer_cast<const DecodeState>(state);
  if (!ds) throw Error("step: state does not belong to this decoder");
  auto [logits, next] = ar_decode_step(ds, token);
  auto lp = log_softmax_rows(logits);
  Eigen::VectorXd out = lp.row(0).transpose();
  return {out, next};
}

Eigen::MatrixXd Transformer::position_log_probs(
    const std::vector<int>& src, const std::vector<int>& inputs) const {
  TapePause pause;
  Tensor logits = nat_forward_one(src, inputs, false, nullptr);
  return log_softmax_rows(logits);
}

Eigen::VectorXd Transformer::length_log_probs(
    const std::vector<int>& src) const {
  TapePause pause;
  Tensor logits = length_logits(src, false, nullptr);
  auto lp = log_softmax_rows(logits);
  return lp.row(0).transpose();
}

}  // namespace pgen
