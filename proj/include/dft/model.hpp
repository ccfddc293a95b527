#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dft/tensor.hpp"

namespace dft::model {

// Reserved token ids present in every vocabulary.
constexpr int kPadToken = 0;
constexpr int kEosToken = 1;

struct ModelConfig {
  int n_layers = 2;
  int hidden = 32;
  int n_heads = 2;
  int vocab = 64;
  int max_seq_len = 64;
  bool tie_output_head = false;

  int head_dim() const { return hidden / n_heads; }
  int ffn_hidden() const { return 4 * hidden; }
  void validate() const;
};

struct LayerParams {
  ad::Tensor attn_norm_g;               // [d]
  ad::Tensor wq, wk, wv, wo;            // [d,d]
  ad::Tensor bq, bk, bv, bo;            // [d]
  ad::Tensor ffn_norm_g;                // [d]
  ad::Tensor w1, b1;                    // [d,f], [f]
  ad::Tensor w2, b2;                    // [f,d], [d]
};

/// All learnable parameters. With tie_output_head the head reuses the token
/// embedding (transposed) and w_out is absent from the parameter list.
struct ModelParams {
  ModelConfig config;
  std::uint64_t init_seed = 0;
  ad::Tensor token_emb;                 // [V,d]
  ad::Tensor pos_emb;                   // [max_seq,d]
  std::vector<LayerParams> layers;
  ad::Tensor final_norm_g;              // [d]
  ad::Tensor w_out;                     // [d,V]; invalid handle when tied

  /// Fixed-order (name, tensor) view used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, ad::Tensor>> named() const;
  std::size_t param_count() const;
  void zero_grads() const;
  /// Bit-pattern hash over all parameter values, in named() order.
  std::uint64_t content_hash() const;
};

/// Per-layer hidden states of one forward pass: h[0] is the embedding
/// output, h[k] for 0 < k < L the residual stream after block k, and h[L]
/// the post-final-norm state that feeds the output head.
struct LayerActivations {
  std::vector<ad::Tensor> h;
  int final_layer() const { return static_cast<int>(h.size()) - 1; }
};

struct ForwardResult {
  ad::Tensor logits;  // [T,V]
  LayerActivations acts;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Causal decoder pass exposing every layer's hidden state.
ForwardResult forward(const ModelParams& params, std::span<const int> tokens);

/// Logit lens: final normalization then the output head applied to h[layer].
/// The head (and the normalization gain it borrows) is frozen on this path:
/// both enter as detached values, so no loss built on top of this function
/// can move them. At layer == L the stored state is already normalized and
/// the result is bit-identical to the forward logits.
ad::Tensor early_exit_logits(const LayerActivations& acts, int layer, const ModelParams& params);

/// Greedy autoregressive continuation; stops at EOS, max_new tokens, or the
/// model's context limit. With at_layer set, next-token choices come from
/// early_exit_logits at that layer. Returns prompt + generated tokens.
std::vector<int> greedy_decode(const ModelParams& params, std::span<const int> prompt, int max_new,
                               std::optional<int> at_layer = std::nullopt);

// Checkpoint container: self-describing header (version, config, seed)
// followed by named little-endian float64 tensors. Round-trips bit-exactly.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace dft::model
