#include "s2x/encoder.hpp"

#include <cmath>

#include "s2x/diffusion.hpp"
#include "s2x/ops.hpp"

namespace s2x {

void EncoderConfig::validate() const {
  if (width < 2 || width % 2 != 0)
    throw ParamError("encoder width must be even and >= 2, got " + std::to_string(width));
  if (heads < 1 || width % heads != 0)
    throw ParamError("heads (" + std::to_string(heads) + ") must divide width (" +
                     std::to_string(width) + ")");
  if (cross_layers < 0) throw ParamError("cross_layers must be >= 0");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    throw ParamError("conv kernel must be odd and >= 1, got " + std::to_string(conv_kernel));
  if (bands < 1) throw ParamError("bands must be >= 1");
  if (ffn_mult < 1) throw ParamError("ffn_mult must be >= 1");
  if (!(masking_ratio >= 0.0 && masking_ratio < 1.0))
    throw ParamError("masking ratio must be in [0,1)");
}

void add_block_params(ParamStore& ps, const std::string& prefix, int64_t width, int64_t hidden,
                      Rng& rng) {
  auto nrm = [&](const Shape& s) { return Tensor::randn(s, rng, 0.0, 0.02); };
  for (const char* norm : {"/norm1", "/norm2"}) {
    ps.add(prefix + norm + "/alpha/weight", Tensor::zeros({width, width}));
    ps.add(prefix + norm + "/alpha/bias", Tensor::full({width}, 1.0));
    ps.add(prefix + norm + "/beta/weight", Tensor::zeros({width, width}));
    ps.add(prefix + norm + "/beta/bias", Tensor::zeros({width}));
  }
  ps.add(prefix + "/attn/wq", nrm({width, width}));
  ps.add(prefix + "/attn/wk", nrm({width, width}));
  ps.add(prefix + "/attn/wv", nrm({width, width}));
  ps.add(prefix + "/attn/wo", nrm({width, width}));
  ps.add(prefix + "/ffn/w1", nrm({width, hidden}));
  ps.add(prefix + "/ffn/b1", Tensor::zeros({hidden}));
  ps.add(prefix + "/ffn/w2", nrm({hidden, width}));
  ps.add(prefix + "/ffn/b2", Tensor::zeros({width}));
}

ParamStore init_encoder_params(const EncoderConfig& config, uint64_t seed) {
  config.validate();
  const int64_t D = config.width;
  const int64_t C = config.bands;
  const int64_t H = config.ffn_hidden();
  Rng rng(derive_seed(seed, seed_tag::init));
  auto nrm = [&](const Shape& s) { return Tensor::randn(s, rng, 0.0, 0.02); };

  ParamStore ps;
  ps.add("encoder/spa_embed/weight", nrm({C, D}));
  Tensor kern = Tensor::zeros({config.conv_kernel, C});
  {
    auto& v = kern.mutable_values();
    int64_t center = config.conv_kernel / 2;
    for (int64_t c = 0; c < C; ++c) v[static_cast<size_t>(center * C + c)] = 1.0;
  }
  ps.add("encoder/spec_conv/kernel", kern);
  ps.add("encoder/spec_embed/weight", nrm({C, D}));
  for (const char* name : {"spa_block0", "spa_block1", "spec_block0", "spec_block1"})
    add_block_params(ps, std::string("encoder/") + name, D, H, rng);
  for (int64_t i = 0; i < config.cross_layers; ++i)
    for (const char* dir : {"/to_spa", "/to_spec"}) {
      std::string prefix = "encoder/cross" + std::to_string(i) + dir;
      ps.add(prefix + "/wq", nrm({D, D}));
      ps.add(prefix + "/wk", nrm({D, D}));
      ps.add(prefix + "/wv", nrm({D, D}));
    }
  ps.add("encoder/fuse_proj/weight", nrm({2 * D, D}));
  ps.add("encoder/fuse_proj/bias", Tensor::zeros({D}));
  for (const char* name : {"fuse_block0", "fuse_block1"})
    add_block_params(ps, std::string("encoder/") + name, D, H, rng);
  ps.add("encoder/out_norm/gamma", Tensor::full({D}, 1.0));
  ps.add("encoder/out_norm/beta", Tensor::zeros({D}));
  ps.add("encoder/out_proj/weight", nrm({D, D}));
  ps.add("encoder/out_proj/bias", Tensor::zeros({D}));
  if (config.with_class_token) ps.add("encoder/cls_token", nrm({1, D}));
  return ps;
}

Tensor adaptive_norm(const Tensor& x, const Tensor& t_emb, const ParamStore& ps,
                     const std::string& prefix) {
  int64_t d = x.dim(-1);
  Tensor normalized = layer_norm(x, Tensor::full({d}, 1.0), Tensor::zeros({d}));
  Tensor alpha = add(matmul(t_emb, ps.get(prefix + "/alpha/weight")), ps.get(prefix + "/alpha/bias"));
  Tensor beta = add(matmul(t_emb, ps.get(prefix + "/beta/weight")), ps.get(prefix + "/beta/bias"));
  return add(mul(normalized, alpha), beta);
}

namespace {

// B x N x D -> B x heads x N x d
Tensor split_heads(const Tensor& x, int64_t heads) {
  int64_t b = x.dim(0), n = x.dim(1), d = x.dim(2) / heads;
  return transpose(reshape(x, {b, n, heads, d}), 1, 2);
}

// B x heads x N x d -> B x N x D
Tensor merge_heads(const Tensor& x) {
  int64_t b = x.dim(0), h = x.dim(1), n = x.dim(2), d = x.dim(3);
  return reshape(transpose(x, 1, 2), {b, n, h * d});
}

// Scaled dot-product attention of per-token queries against a shared
// context; kv may hold any number of tokens.
Tensor attend(const Tensor& q_in, const Tensor& kv_in, const Tensor& wq, const Tensor& wk,
              const Tensor& wv, int64_t heads) {
  int64_t d = q_in.dim(-1) / heads;
  Tensor q = split_heads(matmul(q_in, wq), heads);
  Tensor k = split_heads(matmul(kv_in, wk), heads);
  Tensor v = split_heads(matmul(kv_in, wv), heads);
  Tensor scores = mul_scalar(matmul(q, transpose(k, 2, 3)), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor weights = softmax(scores, -1);
  return merge_heads(matmul(weights, v));
}

}  // namespace

Tensor multi_head_attention(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                            const Tensor& wo, int64_t heads) {
  if (x.rank() != 3) throw ShapeError("attention input must be B x N x D, got " + shape_str(x.shape()));
  if (x.dim(2) % heads != 0)
    throw ShapeError("width " + std::to_string(x.dim(2)) + " not divisible by " +
                     std::to_string(heads) + " heads");
  return matmul(attend(x, x, wq, wk, wv, heads), wo);
}

Tensor cond_block(const Tensor& x, const Tensor& t_emb, const ParamStore& ps,
                  const std::string& prefix, int64_t heads) {
  Tensor a = adaptive_norm(x, t_emb, ps, prefix + "/norm1");
  Tensor h = add(x, multi_head_attention(a, ps.get(prefix + "/attn/wq"), ps.get(prefix + "/attn/wk"),
                                         ps.get(prefix + "/attn/wv"), ps.get(prefix + "/attn/wo"),
                                         heads));
  Tensor f = adaptive_norm(h, t_emb, ps, prefix + "/norm2");
  Tensor hidden = gelu(add(matmul(f, ps.get(prefix + "/ffn/w1")), ps.get(prefix + "/ffn/b1")));
  Tensor out = add(matmul(hidden, ps.get(prefix + "/ffn/w2")), ps.get(prefix + "/ffn/b2"));
  return add(h, out);
}

Tensor embed_spatial(const Tensor& visible_tokens, const Tensor& t_emb, const Tensor& w_spa) {
  return add(matmul(visible_tokens, w_spa), t_emb);
}

Tensor embed_spectral(const Tensor& tokens, const Tensor& kernel, const Tensor& w_spec,
                      const Tensor& t_emb) {
  return add(matmul(conv1d(tokens, kernel), w_spec), t_emb);
}

std::pair<Tensor, Tensor> bi_cross_attend(const Tensor& z_spa, const Tensor& z_spec,
                                          const ParamStore& ps, const std::string& prefix,
                                          int64_t heads) {
  if (z_spa.rank() != 3 || z_spec.rank() != 3)
    throw ShapeError("cross attention expects B x N x D streams");
  if (z_spa.dim(1) < 1 || z_spec.dim(1) < 1)
    throw ContractError("cross attention needs at least one token per stream (mean undefined)");
  Tensor ctx_spec = mean(z_spec, 1, true);  // B x 1 x D
  Tensor ctx_spa = mean(z_spa, 1, true);
  Tensor up_spa = attend(z_spa, ctx_spec, ps.get(prefix + "/to_spa/wq"),
                         ps.get(prefix + "/to_spa/wk"), ps.get(prefix + "/to_spa/wv"), heads);
  Tensor up_spec = attend(z_spec, ctx_spa, ps.get(prefix + "/to_spec/wq"),
                          ps.get(prefix + "/to_spec/wk"), ps.get(prefix + "/to_spec/wv"), heads);
  return {add(z_spa, up_spa), add(z_spec, up_spec)};
}

Tensor fuse_project(const Tensor& z_spa, const Tensor& z_spec, const Tensor& weight,
                    const Tensor& bias) {
  Tensor spec_mean = mean(z_spec, 1, true);  // B x 1 x D
  Tensor spread = expand(spec_mean, {z_spa.dim(0), z_spa.dim(1), z_spec.dim(2)});
  Tensor cat = concat({z_spa, spread}, 2);
  return add(matmul(cat, weight), bias);
}

EncodeResult encode(const Tensor& tokens, const std::vector<std::vector<int64_t>>& visible_idx,
                    const Tensor& t_emb, const ParamStore& ps, const EncoderConfig& config) {
  config.validate();
  if (tokens.rank() != 3) throw ShapeError("encode expects B x N x C tokens, got " + shape_str(tokens.shape()));
  const int64_t B = tokens.dim(0);
  if (t_emb.dim(-1) != config.width)
    throw ShapeError("time embedding width " + std::to_string(t_emb.dim(-1)) +
                     " does not match encoder width " + std::to_string(config.width));
  if (static_cast<int64_t>(visible_idx.size()) != B)
    throw ShapeError("encode: " + std::to_string(visible_idx.size()) + " visible lists for " +
                     std::to_string(B) + " samples");
  const int64_t n_vis = visible_idx.empty() ? 0 : static_cast<int64_t>(visible_idx[0].size());
  if (n_vis < 1) throw ContractError("encode: no visible tokens (mean undefined)");
  std::vector<int64_t> flat;
  flat.reserve(static_cast<size_t>(B * n_vis));
  for (const auto& vi : visible_idx) {
    if (static_cast<int64_t>(vi.size()) != n_vis)
      throw ContractError("encode: visible token count differs across samples");
    flat.insert(flat.end(), vi.begin(), vi.end());
  }

  Tensor x_vis = gather_rows(tokens, flat, n_vis);
  Tensor z_spa = embed_spatial(x_vis, t_emb, ps.get("encoder/spa_embed/weight"));
  if (config.with_class_token) {
    Tensor cls = expand(reshape(ps.get("encoder/cls_token"), {1, 1, config.width}),
                        {B, 1, config.width});
    z_spa = concat({add(cls, t_emb), z_spa}, 1);
  }
  Tensor s0 = cond_block(z_spa, t_emb, ps, "encoder/spa_block0", config.heads);
  Tensor s1 = cond_block(s0, t_emb, ps, "encoder/spa_block1", config.heads);

  Tensor p0 = embed_spectral(tokens, ps.get("encoder/spec_conv/kernel"),
                             ps.get("encoder/spec_embed/weight"), t_emb);
  Tensor p1 = cond_block(p0, t_emb, ps, "encoder/spec_block0", config.heads);
  Tensor p2 = cond_block(p1, t_emb, ps, "encoder/spec_block1", config.heads);

  Tensor zs = s1, zp = p2;
  if (config.use_cross_attention)
    for (int64_t i = 0; i < config.cross_layers; ++i)
      std::tie(zs, zp) = bi_cross_attend(zs, zp, ps, "encoder/cross" + std::to_string(i), config.heads);

  Tensor f0 = fuse_project(zs, zp, ps.get("encoder/fuse_proj/weight"), ps.get("encoder/fuse_proj/bias"));
  Tensor fb0 = cond_block(f0, t_emb, ps, "encoder/fuse_block0", config.heads);
  Tensor fb1 = cond_block(fb0, t_emb, ps, "encoder/fuse_block1", config.heads);
  Tensor ln = layer_norm(fb1, ps.get("encoder/out_norm/gamma"), ps.get("encoder/out_norm/beta"));
  Tensor fused = add(matmul(ln, ps.get("encoder/out_proj/weight")), ps.get("encoder/out_proj/bias"));

  EncodeResult result;
  result.fused = fused;
  result.spectral = zp;
  result.skips = {s0, s1, zs, fb0};
  return result;
}

EncodeResult encode(const Tensor& tokens, const std::vector<std::vector<int64_t>>& visible_idx,
                    int64_t t, const ParamStore& ps, const EncoderConfig& config) {
  return encode(tokens, visible_idx, time_embed(t, config.width), ps, config);
}

}  // namespace s2x
