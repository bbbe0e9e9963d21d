// Copyright 2026 the pgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder-decoder transformers over the autodiff tensor core: an
// autoregressive decoder with incremental key/value caching and a parallel
// decoder fed by a learned placeholder embedding, plus a length-offset
// prediction head. Both variants share one encoder implementation.
//
// Teacher-forcing alignment: ar_forward row t holds the logits for the token
// FOLLOWING tgt_tokens[b, t], so an incremental step chain over a prefix
// reproduces the forward rows one-to-one.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/pipeline.hpp"
#include "pgen/rng.hpp"
#include "pgen/tensor.hpp"

namespace pgen {

struct TransformerConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int d_ff = 128;
  int vocab_size = 0;
  int max_positions = 256;
  double dropout = 0.0;
  // Length prediction offsets span [-length_window, +length_window].
  int length_window = 10;

  void validate() const;
};

// Ordered name -> tensor map. Iteration order is registration order, which
// fixes the checkpoint layout and the optimizer state layout.
class ParamMap {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  std::size_t size() const { return items_.size(); }

  void clear_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Step-wise decoding surface the search module consumes. States are
// immutable; step() returns a fresh state, so beams branch freely from a
// shared prefix. Everything here is value-only (log domain, no gradients).
class StepDecoder {
 public:
  virtual ~StepDecoder() = default;

  struct State {
    virtual ~State() = default;
  };
  using StatePtr = std::shared_ptr<const State>;

  virtual int vocab() const = 0;
  virtual int bos_id() const { return Vocabulary::kBos; }
  virtual int eos_id() const { return Vocabulary::kEos; }

  virtual StatePtr start(const std::vector<int>& src) const = 0;
  // Consume one token; log-probabilities for the next position.
  virtual std::pair<Eigen::VectorXd, StatePtr> step(const StatePtr& state,
                                                    int token) const = 0;
};

// Position-parallel scoring surface for mask-predict style search.
class ParallelScorer {
 public:
  // Marks a position whose content is unknown to the decoder.
  static constexpr int kPlaceholder = -1;

  virtual ~ParallelScorer() = default;
  virtual int vocab() const = 0;

  // inputs[i] == kPlaceholder selects the placeholder embedding; any other
  // value reveals that token to the decoder. Returns [L, V] log-probs.
  virtual Eigen::MatrixXd position_log_probs(
      const std::vector<int>& src, const std::vector<int>& inputs) const = 0;

  // Log-probabilities over length offsets [-window, +window].
  virtual Eigen::VectorXd length_log_probs(
      const std::vector<int>& src) const = 0;
  virtual int length_window() const = 0;
};

// Candidate target length implied by a predicted offset.
inline int length_candidate(int src_len, int offset) {
  return std::max(1, src_len + offset);
}

class Transformer : public StepDecoder, public ParallelScorer {
 public:
  enum class Mode { kAutoregressive, kParallel };

  Transformer(TransformerConfig config, Mode mode, std::uint64_t seed);

  const TransformerConfig& config() const { return config_; }
  Mode mode() const { return mode_; }
  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }

  // ---- training-time forwards (record onto the active tape) ----

  // Teacher forcing over a padded batch; [B, T, V] with zero rows past each
  // sample's true target length. Pad positions never influence real rows.
  Tensor ar_forward(const Batch& batch, bool train, Rng* rng) const;

  // Parallel decoder, one sample. inputs[i] < 0 selects the placeholder.
  // Returns [L, V].
  Tensor nat_forward_one(const std::vector<int>& src,
                         const std::vector<int>& inputs, bool train,
                         Rng* rng) const;

  // All-placeholder parallel decode of every sample at a common length.
  // Returns [B, L, V].
  Tensor nat_forward(const Batch& batch, int length, bool train,
                     Rng* rng) const;

  // Raw length-offset logits, [1, 2w+1]; trainable head.
  Tensor length_logits(const std::vector<int>& src, bool train,
                       Rng* rng) const;
  // Softmax of the above as a rank-1 distribution, [2w+1].
  Tensor predict_length(const std::vector<int>& src) const;

  // ---- incremental decoding (always value-only) ----

  struct DecodeState : StepDecoder::State {
    int position = 0;
    std::vector<Tensor> self_k, self_v;    // per layer, [position, d_model]
    std::vector<Tensor> cross_k, cross_v;  // per layer, [S, d_model]
    int cache_length() const {
      return self_k.empty() ? 0 : self_k[0].dim(0);
    }
  };
  using DecodeStatePtr = std::shared_ptr<const DecodeState>;

  DecodeStatePtr decode_start(const std::vector<int>& src) const;
  // Consume one token; logits [V] for the next position plus the grown state.
  std::pair<Tensor, DecodeStatePtr> ar_decode_step(const DecodeStatePtr& state,
                                                   int token) const;

  // ---- search surfaces ----

  int vocab() const override { return config_.vocab_size; }
  StatePtr start(const std::vector<int>& src) const override;
  std::pair<Eigen::VectorXd, StatePtr> step(const StatePtr& state,
                                            int token) const override;
  Eigen::MatrixXd position_log_probs(
      const std::vector<int>& src,
      const std::vector<int>& inputs) const override;
  Eigen::VectorXd length_log_probs(const std::vector<int>& src) const override;
  int length_window() const override { return config_.length_window; }

  // Encoder over a pad-free source; [S, d_model]. Shared by both modes.
  Tensor encode_one(const std::vector<int>& src, bool train, Rng* rng) const;

  static std::vector<int> trimmed_row(const Eigen::MatrixXi& m, int row,
                                      int length);

 private:
  Tensor positional(int from, int count) const;
  Tensor causal_mask(int n) const;
  Tensor maybe_dropout(const Tensor& x, bool train, Rng* rng) const;
  Tensor ffn(const std::string& prefix, const Tensor& x) const;
  // Multi-head attention over already-projected q/k/v, then output proj.
  Tensor attend(const std::string& prefix, const Tensor& q, const Tensor& k,
                const Tensor& v, const Tensor* mask) const;
  // Full projection + attention for a block named `prefix`.
  Tensor attention(const std::string& prefix, const Tensor& q_in,
                   const Tensor& kv_in, const Tensor* mask) const;
  Tensor decode_stack(const Tensor& dec_in, const Tensor& enc, bool causal,
                      bool train, Rng* rng) const;
  Tensor out_proj(const Tensor& x) const;
  Tensor embed_positioned(const Tensor& emb, int from) const;
  void require_mode(Mode m, const char* op) const;

  TransformerConfig config_;
  Mode mode_;
  ParamMap params_;
};

}  // namespace pgen
