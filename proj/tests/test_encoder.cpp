#include <cmath>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "s2x/diffusion.hpp"
#include "s2x/encoder.hpp"
#include "s2x/ops.hpp"
#include "s2x/synthetic.hpp"
#include "s2x/tokens.hpp"

using namespace s2x;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.width = 8;
  c.heads = 2;
  c.cross_layers = 1;
  c.conv_kernel = 3;
  c.bands = 5;
  c.ffn_mult = 2;
  c.masking_ratio = 0.5;
  return c;
}

void zero_param(ParamStore& ps, const std::string& name) {
  auto& v = ps.get(name).mutable_values();
  std::fill(v.begin(), v.end(), 0.0);
}

void randomize_param(ParamStore& ps, const std::string& name, uint64_t seed, double scale = 0.1) {
  Rng rng(seed);
  for (auto& v : ps.get(name).mutable_values()) v = scale * rng.normal();
}

}  // namespace

TEST_CASE("spatial embedding is affine plus broadcast time encoding") {
  Rng rng(1);
  Tensor x = Tensor::randn({2, 3, 4}, rng);

  SUBCASE("zero weight and zero time gives zeros") {
    Tensor out = embed_spatial(x, Tensor::zeros({1, 6}), Tensor::zeros({4, 6}));
    for (double v : out.values()) CHECK(v == 0.0);
  }

  SUBCASE("identity weight and zero time is the identity") {
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[static_cast<size_t>(i * 4 + i)] = 1.0;
    Tensor out = embed_spatial(x, Tensor::zeros({1, 4}), Tensor::from({4, 4}, eye));
    CHECK(out.values() == x.values());
  }

  SUBCASE("random case matches a direct loop") {
    Tensor w = Tensor::randn({4, 6}, rng);
    Tensor t = Tensor::randn({1, 6}, rng);
    Tensor out = embed_spatial(x, t, w);
    for (int64_t b = 0; b < 2; ++b)
      for (int64_t n = 0; n < 3; ++n)
        for (int64_t j = 0; j < 6; ++j) {
          double want = t.values()[static_cast<size_t>(j)];
          for (int64_t c = 0; c < 4; ++c)
            want += x.values()[static_cast<size_t>((b * 3 + n) * 4 + c)] *
                    w.values()[static_cast<size_t>(c * 6 + j)];
          CHECK(out.values()[static_cast<size_t>((b * 3 + n) * 6 + j)] ==
                doctest::Approx(want).epsilon(1e-12));
        }
  }
}

TEST_CASE("spectral embedding is conv then affine plus time encoding") {
  Rng rng(2);
  Tensor x = Tensor::randn({2, 3, 4}, rng);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[static_cast<size_t>(i * 4 + i)] = 1.0;
  Tensor ident = Tensor::from({4, 4}, eye);

  SUBCASE("delta kernel with identity projection is the identity") {
    std::vector<double> dv(12, 0.0);
    for (int c = 0; c < 4; ++c) dv[static_cast<size_t>(1 * 4 + c)] = 1.0;
    Tensor out = embed_spectral(x, Tensor::from({3, 4}, dv), ident, Tensor::zeros({1, 4}));
    CHECK(out.values() == x.values());
  }

  SUBCASE("zero kernel leaves only the broadcast time encoding") {
    Tensor t = Tensor::randn({1, 4}, rng);
    Tensor out = embed_spectral(x, Tensor::zeros({3, 4}), ident, t);
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t j = 0; j < 4; ++j)
        CHECK(out.values()[static_cast<size_t>(i * 4 + j)] == t.values()[static_cast<size_t>(j)]);
  }

  SUBCASE("random case matches conv, projection, add composed by hand") {
    Tensor kern = Tensor::randn({3, 4}, rng);
    Tensor w = Tensor::randn({4, 6}, rng);
    Tensor t = Tensor::randn({1, 6}, rng);
    Tensor out = embed_spectral(x, kern, w, t);
    for (int64_t r = 0; r < 6; ++r) {  // flattened B*N rows
      std::vector<double> conv(4, 0.0);
      for (int64_t c = 0; c < 4; ++c)
        for (int64_t k = 0; k < 3; ++k) {
          int64_t src = c + k - 1;
          if (src >= 0 && src < 4)
            conv[static_cast<size_t>(c)] += x.values()[static_cast<size_t>(r * 4 + src)] *
                                            kern.values()[static_cast<size_t>(k * 4 + c)];
        }
      for (int64_t j = 0; j < 6; ++j) {
        double want = t.values()[static_cast<size_t>(j)];
        for (int64_t c = 0; c < 4; ++c)
          want += conv[static_cast<size_t>(c)] * w.values()[static_cast<size_t>(c * 6 + j)];
        CHECK(out.values()[static_cast<size_t>(r * 6 + j)] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("multi-head attention matches a per-head oracle") {
  Rng rng(3);
  const int64_t B = 2, N = 3, D = 4, H = 2, d = 2;
  Tensor x = Tensor::randn({B, N, D}, rng);
  Tensor wq = Tensor::randn({D, D}, rng), wk = Tensor::randn({D, D}, rng);
  Tensor wv = Tensor::randn({D, D}, rng), wo = Tensor::randn({D, D}, rng);
  Tensor out = multi_head_attention(x, wq, wk, wv, wo, H);
  REQUIRE(out.shape() == Shape{B, N, D});

  auto proj = [&](const Tensor& w, int64_t b, int64_t n, int64_t j) {
    double s = 0.0;
    for (int64_t c = 0; c < D; ++c)
      s += x.values()[static_cast<size_t>((b * N + n) * D + c)] * w.values()[static_cast<size_t>(c * D + j)];
    return s;
  };
  for (int64_t b = 0; b < B; ++b)
    for (int64_t n = 0; n < N; ++n) {
      std::vector<double> merged(static_cast<size_t>(D), 0.0);
      for (int64_t h = 0; h < H; ++h) {
        std::vector<double> scores(static_cast<size_t>(N));
        double mx = -1e300;
        for (int64_t m = 0; m < N; ++m) {
          double s = 0.0;
          for (int64_t j = 0; j < d; ++j) s += proj(wq, b, n, h * d + j) * proj(wk, b, m, h * d + j);
          scores[static_cast<size_t>(m)] = s / std::sqrt(static_cast<double>(d));
          mx = std::max(mx, scores[static_cast<size_t>(m)]);
        }
        double z = 0.0;
        for (double& s : scores) {
          s = std::exp(s - mx);
          z += s;
        }
        for (int64_t j = 0; j < d; ++j) {
          double o = 0.0;
          for (int64_t m = 0; m < N; ++m) o += scores[static_cast<size_t>(m)] / z * proj(wv, b, m, h * d + j);
          merged[static_cast<size_t>(h * d + j)] = o;
        }
      }
      for (int64_t j = 0; j < D; ++j) {
        double want = 0.0;
        for (int64_t c = 0; c < D; ++c)
          want += merged[static_cast<size_t>(c)] * wo.values()[static_cast<size_t>(c * D + j)];
        CHECK(out.values()[static_cast<size_t>((b * N + n) * D + j)] ==
              doctest::Approx(want).epsilon(1e-12));
      }
    }
}

TEST_CASE("conditional blocks preserve shape and reduce to residual identity") {
  EncoderConfig cfg = tiny_config();
  ParamStore ps = init_encoder_params(cfg, 42);
  Tensor t_emb = time_embed(5, cfg.width);
  Rng rng(4);

  SUBCASE("zeroed output projections make the block an identity") {
    zero_param(ps, "encoder/spa_block0/attn/wo");
    zero_param(ps, "encoder/spa_block0/ffn/w2");
    Tensor x = Tensor::randn({2, 4, cfg.width}, rng);
    Tensor y = cond_block(x, t_emb, ps, "encoder/spa_block0", cfg.heads);
    CHECK(y.values() == x.values());
  }

  SUBCASE("output shape equals input shape across token counts") {
    for (int64_t n : {1, 4, 9}) {
      Tensor x = Tensor::randn({2, n, cfg.width}, rng);
      Tensor y = cond_block(x, t_emb, ps, "encoder/spa_block1", cfg.heads);
      CHECK(y.shape() == Shape{2, n, cfg.width});
    }
  }

  SUBCASE("blocks are permutation equivariant") {
    Tensor x = Tensor::randn({1, 4, cfg.width}, rng);
    Tensor y = cond_block(x, t_emb, ps, "encoder/spa_block0", cfg.heads);
    std::vector<int64_t> perm = {2, 0, 3, 1};
    std::vector<double> px(x.numel());
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t j = 0; j < cfg.width; ++j)
        px[static_cast<size_t>(n * cfg.width + j)] =
            x.values()[static_cast<size_t>(perm[static_cast<size_t>(n)] * cfg.width + j)];
    Tensor yp = cond_block(Tensor::from(x.shape(), px), t_emb, ps, "encoder/spa_block0", cfg.heads);
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t j = 0; j < cfg.width; ++j)
        CHECK(yp.values()[static_cast<size_t>(n * cfg.width + j)] ==
              doctest::Approx(y.values()[static_cast<size_t>(perm[static_cast<size_t>(n)] * cfg.width + j)])
                  .epsilon(1e-12));
  }

  SUBCASE("nonzero norm generators make the block timestep sensitive") {
    randomize_param(ps, "encoder/spa_block0/norm1/alpha/weight", 900);
    Tensor x = Tensor::randn({1, 3, cfg.width}, rng);
    Tensor y1 = cond_block(x, time_embed(1, cfg.width), ps, "encoder/spa_block0", cfg.heads);
    Tensor y2 = cond_block(x, time_embed(900, cfg.width), ps, "encoder/spa_block0", cfg.heads);
    double diff = 0.0;
    for (size_t i = 0; i < y1.values().size(); ++i) diff = std::max(diff, std::abs(y1.values()[i] - y2.values()[i]));
    CHECK(diff > 1e-9);
  }
}

TEST_CASE("bidirectional cross attention adds projected mean context") {
  EncoderConfig cfg = tiny_config();
  ParamStore ps = init_encoder_params(cfg, 7);
  Rng rng(5);
  const int64_t B = 2, NV = 3, N = 4, D = cfg.width;
  Tensor z_spa = Tensor::randn({B, NV, D}, rng);
  Tensor z_spec = Tensor::randn({B, N, D}, rng);

  SUBCASE("zero value projections leave both streams untouched") {
    zero_param(ps, "encoder/cross0/to_spa/wv");
    zero_param(ps, "encoder/cross0/to_spec/wv");
    auto [a, b] = bi_cross_attend(z_spa, z_spec, ps, "encoder/cross0", cfg.heads);
    CHECK(a.values() == z_spa.values());
    CHECK(b.values() == z_spec.values());
  }

  SUBCASE("softmax over the single pooled key is exactly one: Q and K are inert") {
    auto [a1, b1] = bi_cross_attend(z_spa, z_spec, ps, "encoder/cross0", cfg.heads);
    randomize_param(ps, "encoder/cross0/to_spa/wq", 1234, 5.0);
    randomize_param(ps, "encoder/cross0/to_spa/wk", 1235, 5.0);
    randomize_param(ps, "encoder/cross0/to_spec/wq", 1236, 5.0);
    auto [a2, b2] = bi_cross_attend(z_spa, z_spec, ps, "encoder/cross0", cfg.heads);
    CHECK(a1.values() == a2.values());
    CHECK(b1.values() == b2.values());
  }

  SUBCASE("updates match the mean-context projection oracle") {
    auto [a, b] = bi_cross_attend(z_spa, z_spec, ps, "encoder/cross0", cfg.heads);
    const Tensor& wv_spa = ps.get("encoder/cross0/to_spa/wv");
    for (int64_t s = 0; s < B; ++s) {
      std::vector<double> ctx(static_cast<size_t>(D), 0.0);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t j = 0; j < D; ++j)
          ctx[static_cast<size_t>(j)] += z_spec.values()[static_cast<size_t>((s * N + n) * D + j)] /
                                         static_cast<double>(N);
      std::vector<double> update(static_cast<size_t>(D), 0.0);
      for (int64_t j = 0; j < D; ++j)
        for (int64_t c = 0; c < D; ++c)
          update[static_cast<size_t>(j)] += ctx[static_cast<size_t>(c)] *
                                            wv_spa.values()[static_cast<size_t>(c * D + j)];
      for (int64_t n = 0; n < NV; ++n)
        for (int64_t j = 0; j < D; ++j)
          CHECK(a.values()[static_cast<size_t>((s * NV + n) * D + j)] ==
                doctest::Approx(z_spa.values()[static_cast<size_t>((s * NV + n) * D + j)] +
                                update[static_cast<size_t>(j)])
                    .epsilon(1e-12));
    }
  }

  SUBCASE("empty streams are rejected") {
    CHECK_THROWS_AS(bi_cross_attend(Tensor::zeros({1, 1}), z_spec, ps, "encoder/cross0", cfg.heads),
                    ShapeError);
  }
}

TEST_CASE("fusion pairs spatial tokens with the mean spectral feature") {
  Rng rng(6);
  const int64_t B = 2, NV = 3, N = 5, D = 4;
  Tensor z_spa = Tensor::randn({B, NV, D}, rng);
  Tensor z_spec = Tensor::randn({B, N, D}, rng);

  SUBCASE("selector weight recovers the spatial half exactly") {
    std::vector<double> sel(static_cast<size_t>(2 * D * D), 0.0);
    for (int64_t i = 0; i < D; ++i) sel[static_cast<size_t>(i * D + i)] = 1.0;
    Tensor out = fuse_project(z_spa, z_spec, Tensor::from({2 * D, D}, sel), Tensor::zeros({D}));
    CHECK(out.values() == z_spa.values());
    CHECK(out.dim(1) == NV);
  }

  SUBCASE("random weight matches the concat plus affine oracle") {
    Tensor w = Tensor::randn({2 * D, D}, rng);
    Tensor bias = Tensor::randn({D}, rng);
    Tensor out = fuse_project(z_spa, z_spec, w, bias);
    for (int64_t s = 0; s < B; ++s) {
      std::vector<double> ctx(static_cast<size_t>(D), 0.0);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t j = 0; j < D; ++j)
          ctx[static_cast<size_t>(j)] +=
              z_spec.values()[static_cast<size_t>((s * N + n) * D + j)] / static_cast<double>(N);
      for (int64_t n = 0; n < NV; ++n)
        for (int64_t j = 0; j < D; ++j) {
          double want = bias.values()[static_cast<size_t>(j)];
          for (int64_t c = 0; c < D; ++c)
            want += z_spa.values()[static_cast<size_t>((s * NV + n) * D + c)] *
                    w.values()[static_cast<size_t>(c * D + j)];
          for (int64_t c = 0; c < D; ++c)
            want += ctx[static_cast<size_t>(c)] * w.values()[static_cast<size_t>((D + c) * D + j)];
          CHECK(out.values()[static_cast<size_t>((s * NV + n) * D + j)] ==
                doctest::Approx(want).epsilon(1e-12));
        }
    }
  }
}

TEST_CASE("encode honors the shape contract across masking ratios") {
  EncoderConfig cfg = tiny_config();
  cfg.bands = 4;
  ParamStore ps = init_encoder_params(cfg, 11);

  SyntheticPair pair = make_synthetic_domains(2, 12, 12, 4, 0.0, 3, 0.01);
  SUBCASE("no masking keeps every token visible") {
    TokenBatch tb = extract_patches(pair.source, {{5, 5}, {6, 6}}, 9, 3, 0.0, 1);
    EncodeResult r = encode(tb.tokens, tb.visible_idx, 1, ps, cfg);
    CHECK(r.fused.shape() == Shape{2, 9, cfg.width});
    CHECK(r.spectral.shape() == Shape{2, 9, cfg.width});
    REQUIRE(r.skips.size() == 4);
    for (const Tensor& s : r.skips) CHECK(s.shape() == Shape{2, 9, cfg.width});
  }

  SUBCASE("default masking keeps two of nine tokens visible") {
    TokenBatch tb = extract_patches(pair.source, {{5, 5}}, 9, 3, 0.75, 1);
    CHECK(tb.visible_idx[0].size() == 2);
    EncodeResult r = encode(tb.tokens, tb.visible_idx, 4, ps, cfg);
    CHECK(r.fused.shape() == Shape{1, 2, cfg.width});
  }

  SUBCASE("class token adds one fused slot") {
    EncoderConfig ccfg = cfg;
    ccfg.with_class_token = true;
    ParamStore cps = init_encoder_params(ccfg, 11);
    TokenBatch tb = extract_patches(pair.source, {{5, 5}}, 9, 3, 0.75, 1);
    EncodeResult r = encode(tb.tokens, tb.visible_idx, 4, cps, ccfg);
    CHECK(r.fused.shape() == Shape{1, 3, ccfg.width});
  }

  SUBCASE("empty visible set is a contract violation") {
    TokenBatch tb = extract_patches(pair.source, {{5, 5}}, 9, 3, 0.0, 1);
    std::vector<std::vector<int64_t>> empty_vis = {{}};
    CHECK_THROWS_AS(encode(tb.tokens, empty_vis, 1, ps, cfg), ContractError);
  }
}

TEST_CASE("cross attention ablation is an exact pass-through") {
  EncoderConfig cfg = tiny_config();
  ParamStore ps = init_encoder_params(cfg, 13);
  Rng rng(8);
  Tensor tokens = Tensor::randn({2, 4, cfg.bands}, rng);
  std::vector<std::vector<int64_t>> vis = {{0, 2}, {1, 3}};

  EncoderConfig off = cfg;
  off.use_cross_attention = false;
  EncodeResult without = encode(tokens, vis, 3, ps, off);

  zero_param(ps, "encoder/cross0/to_spa/wv");
  zero_param(ps, "encoder/cross0/to_spec/wv");
  EncodeResult zeroed = encode(tokens, vis, 3, ps, cfg);
  CHECK(without.fused.values() == zeroed.fused.values());
  CHECK(without.spectral.values() == zeroed.spectral.values());
}

TEST_CASE("encoder initialization is seed deterministic") {
  EncoderConfig cfg = tiny_config();
  ParamStore a = init_encoder_params(cfg, 21);
  ParamStore b = init_encoder_params(cfg, 21);
  REQUIRE(a.names() == b.names());
  for (const auto& n : a.names()) CHECK(a.get(n).values() == b.get(n).values());
  ParamStore c = init_encoder_params(cfg, 22);
  bool any_diff = false;
  for (const auto& n : a.names())
    if (a.get(n).values() != c.get(n).values()) any_diff = true;
  CHECK(any_diff);

  Rng rng(9);
  Tensor tokens = Tensor::randn({1, 4, cfg.bands}, rng);
  std::vector<std::vector<int64_t>> vis = {{0, 3}};
  EncodeResult ra = encode(tokens, vis, 2, a, cfg);
  EncodeResult rb = encode(tokens, vis, 2, b, cfg);
  CHECK(ra.fused.values() == rb.fused.values());
}

TEST_CASE("encoder config validation rejects bad shapes") {
  EncoderConfig cfg = tiny_config();
  cfg.width = 7;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = tiny_config();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = tiny_config();
  cfg.conv_kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = tiny_config();
  cfg.masking_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = tiny_config();
  cfg.cross_layers = -1;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
}

TEST_CASE("every encoder parameter gradient survives a finite-difference audit") {
  EncoderConfig cfg = tiny_config();
  cfg.bands = 4;
  ParamStore ps = init_encoder_params(cfg, 33);
  // nonzero norm generators so their gradients are exercised too
  for (const auto& name : ps.names())
    if (name.find("/alpha/weight") != std::string::npos || name.find("/beta/weight") != std::string::npos)
      randomize_param(ps, name, 1000 + std::hash<std::string>{}(name) % 1000, 0.05);

  Rng rng(10);
  Tensor tokens = Tensor::randn({2, 4, cfg.bands}, rng);
  std::vector<std::vector<int64_t>> vis = {{0, 2}, {1, 3}};

  std::vector<Tensor> leaves;
  for (const auto& n : ps.names()) leaves.push_back(ps.get(n));
  auto loss_fn = [&](std::vector<Tensor>&) { return sum_all(encode(tokens, vis, 3, ps, cfg).fused); };
  GradCheckReport rep = grad_check(loss_fn, leaves, 1e-5, 3);
  INFO("worst: ", rep.worst);
  CHECK(rep.max_rel_err < 1e-4);
}
