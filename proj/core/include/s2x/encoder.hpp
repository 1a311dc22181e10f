#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2x/params.hpp"
#include "s2x/tensor.hpp"
#include "s2x/tokens.hpp"

namespace s2x {

// Dual-branch conditional transformer encoder. The spatial branch sees only
// visible tokens, the spectral branch sees the full sequence through a
// depthwise spectral convolution; a bidirectional cross-attention stage
// exchanges mean-pooled context between the branches and a fusion stage
// produces one feature per visible token.
struct EncoderConfig {
  int64_t width = 64;        // model width D
  int64_t heads = 4;         // attention heads; head dim = width / heads
  int64_t cross_layers = 2;  // bidirectional cross-attention layers
  int64_t conv_kernel = 3;   // spectral conv taps, odd
  int64_t bands = 30;        // token channel count C
  int64_t ffn_mult = 2;      // feed-forward hidden = ffn_mult * width
  double masking_ratio = 0.75;
  bool use_cross_attention = true;  // false: cross stage is a pass-through
  bool with_class_token = false;    // classification mode prepends a token

  int64_t head_dim() const { return width / heads; }
  int64_t ffn_hidden() const { return ffn_mult * width; }
  void validate() const;
};

struct EncodeResult {
  Tensor fused;                // B x N_vis x D (plus the class slot if enabled)
  Tensor spectral;             // B x N x D, final spectral-branch features
  std::vector<Tensor> skips;   // spatial trunk taps, shallow to deep
};

// Fresh parameter tree with slash-delimited names under "encoder/".
// Weights draw from a seeded normal (std 0.02); adaptive-norm generators
// start as identity (zero weight, unit alpha bias); the spectral conv
// kernel starts as a centered delta so the branch begins as a projection.
ParamStore init_encoder_params(const EncoderConfig& config, uint64_t seed);

// Shared helper for decoder parameter trees that reuse the block layout.
void add_block_params(ParamStore& ps, const std::string& prefix, int64_t width, int64_t hidden,
                      Rng& rng);

// t-conditioned scale/shift around a parameter-free layer norm:
// alpha(t) * normalize(x) + beta(t), generators read from prefix + "/alpha",
// "/beta" (weight D x D, bias D applied to the 1 x D time embedding).
Tensor adaptive_norm(const Tensor& x, const Tensor& t_emb, const ParamStore& ps,
                     const std::string& prefix);

Tensor multi_head_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                            const Tensor& wo, int64_t heads);

// Pre-norm conditional transformer block under prefix: adaptive norm ->
// self-attention -> residual -> adaptive norm -> feed-forward -> residual.
Tensor cond_block(const Tensor& x, const Tensor& t_emb, const ParamStore& ps,
                  const std::string& prefix, int64_t heads);

Tensor embed_spatial(const Tensor& visible_tokens, const Tensor& t_emb, const Tensor& w_spa);
Tensor embed_spectral(const Tensor& tokens, const Tensor& kernel, const Tensor& w_spec,
                      const Tensor& t_emb);

// One bidirectional exchange: each stream attends to the other stream's
// mean-pooled token (queries per token, a single key/value), residual add.
// Both updates read the pre-update streams.
std::pair<Tensor, Tensor> bi_cross_attend(const Tensor& z_spa, const Tensor& z_spec,
                                          const ParamStore& ps, const std::string& prefix,
                                          int64_t heads);

// Pairs every spatial token with the sample's mean spectral feature and
// maps the 2D concat back to width D.
Tensor fuse_project(const Tensor& z_spa, const Tensor& z_spec, const Tensor& weight,
                    const Tensor& bias);

// Full forward pass. tokens is B x N x C (already noised as the caller
// wants); visible_idx selects the spatial branch's tokens per sample and
// must have the same count for every sample. t_emb is a 1 x D embedding
// shared by the batch or a B x 1 x D embedding with one timestep per sample.
EncodeResult encode(const Tensor& tokens, const std::vector<std::vector<int64_t>>& visible_idx,
                    const Tensor& t_emb, const ParamStore& ps, const EncoderConfig& config);
EncodeResult encode(const Tensor& tokens, const std::vector<std::vector<int64_t>>& visible_idx,
                    int64_t t, const ParamStore& ps, const EncoderConfig& config);

}  // namespace s2x
