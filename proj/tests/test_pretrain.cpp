#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gradcheck.hpp"
#include "s2x/checkpoint.hpp"
#include "s2x/ops.hpp"
#include "s2x/pretrain.hpp"
#include "s2x/synthetic.hpp"

using namespace s2x;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.width = 8;
  c.heads = 2;
  c.cross_layers = 1;
  c.conv_kernel = 3;
  c.bands = 4;
  c.ffn_mult = 2;
  c.masking_ratio = 0.75;
  return c;
}

void zero_param(ParamStore& ps, const std::string& name) {
  auto& v = ps.get(name).mutable_values();
  std::fill(v.begin(), v.end(), 0.0);
}

void randomize_param(ParamStore& ps, const std::string& name, uint64_t seed, double scale = 0.1) {
  Rng rng(seed);
  auto& v = ps.get(name).mutable_values();
  for (auto& x : v) x = rng.normal() * scale;
}

// Hand-built batch: one sample, two tokens, first visible, second masked.
TokenBatch two_token_batch(int64_t bands, uint64_t seed) {
  TokenBatch tb;
  Rng rng(seed);
  tb.tokens = Tensor::randn({1, 2, bands}, rng, 0.0, 1.0);
  tb.window = 3;
  tb.patch = 3;
  tb.origins = {{0, 0}};
  tb.visible_idx = {{0}};
  tb.masked_idx = {{1}};
  return tb;
}

TokenBatch sample_batch(const HsiCube& cube, int64_t count, double ratio, uint64_t seed) {
  std::vector<std::pair<int64_t, int64_t>> coords;
  for (int64_t i = 0; i < count; ++i) coords.emplace_back(1 + i, 2);
  return extract_patches(cube, coords, 9, 3, ratio, seed);
}

std::string temp_dir(const std::string& stem) {
  auto p = std::filesystem::temp_directory_path() /
           (stem + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, '\t')) out.push_back(cell);
  return out;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("band mask keeps exactly the bins above the cutoff") {
  BandMask m = make_band_mask(8, 0.3);
  CHECK(m.bins() == 5);
  CHECK(m.m == std::vector<double>{0, 0, 1, 1, 1});

  BandMask zero_tau = make_band_mask(8, 0.0);
  CHECK(zero_tau.m == std::vector<double>{0, 1, 1, 1, 1});  // DC bin never survives

  BandMask full_tau = make_band_mask(8, 1.0);
  CHECK(full_tau.m == std::vector<double>{0, 0, 0, 0, 0});

  BandMask odd = make_band_mask(5, 0.3);  // 3 bins, cutoff at 0.9
  CHECK(odd.m == std::vector<double>{0, 1, 1});

  CHECK_THROWS_AS(make_band_mask(0, 0.3), ParamError);
  CHECK_THROWS_AS(make_band_mask(8, -0.1), ParamError);
  CHECK_THROWS_AS(make_band_mask(8, 1.5), ParamError);
}

TEST_CASE("token reconstruction loss is the mean per-token L1 distance") {
  SUBCASE("single token by hand") {
    Tensor pred = Tensor::from({1, 1, 3}, {1.0, -1.0, 2.0});
    Tensor target = Tensor::zeros({1, 1, 3});
    CHECK(loss_spa(pred, target).scalar_value() == 4.0);
  }
  SUBCASE("identical inputs cost nothing") {
    Rng rng(3);
    Tensor x = Tensor::randn({2, 3, 4}, rng, 0.0, 1.0);
    CHECK(loss_spa(x, x).scalar_value() == 0.0);
  }
  SUBCASE("elementwise oracle") {
    Rng rng(4);
    Tensor a = Tensor::randn({2, 3, 4}, rng, 0.0, 1.0);
    Tensor b = Tensor::randn({2, 3, 4}, rng, 0.0, 1.0);
    double want = 0.0;
    for (size_t i = 0; i < a.values().size(); ++i) want += std::fabs(a.values()[i] - b.values()[i]);
    want /= 6.0;  // B * M
    CHECK(loss_spa(a, b).scalar_value() == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("shape checks") {
    CHECK_THROWS_AS(loss_spa(Tensor::zeros({1, 1, 3}), Tensor::zeros({1, 1, 4})), ShapeError);
    CHECK_THROWS_AS(loss_spa(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  }
}

TEST_CASE("frequency loss sees only the gated spectrum") {
  BandMask mask = make_band_mask(8, 0.3);

  SUBCASE("identical inputs cost nothing") {
    Rng rng(5);
    Tensor x = Tensor::randn({2, 2, 8}, rng, 0.0, 1.0);
    CHECK(loss_freq(x, x, mask).scalar_value() == 0.0);
  }
  SUBCASE("a pure DC offset is invisible") {
    Rng rng(6);
    Tensor target = Tensor::randn({1, 2, 8}, rng, 0.0, 1.0);
    Tensor pred = add_scalar(target, 0.7);
    CHECK(loss_freq(pred, target, mask).scalar_value() ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("matches a direct DFT computation") {
    Rng rng(7);
    int64_t C = 6;
    BandMask m6 = make_band_mask(C, 0.3);  // 4 bins, cutoff 1.2: keep bins 2, 3
    Tensor a = Tensor::randn({1, 2, C}, rng, 0.0, 1.0);
    Tensor b = Tensor::randn({1, 2, C}, rng, 0.0, 1.0);
    auto magnitude_at = [&](const std::vector<double>& v, int64_t row, int64_t k) {
      double re = 0.0, im = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        double angle = -2.0 * M_PI * static_cast<double>(k * c) / static_cast<double>(C);
        re += v[static_cast<size_t>(row * C + c)] * std::cos(angle);
        im += v[static_cast<size_t>(row * C + c)] * std::sin(angle);
      }
      return std::sqrt(re * re + im * im);
    };
    double want = 0.0;
    for (int64_t row = 0; row < 2; ++row)
      for (int64_t k = 0; k < 4; ++k)
        want += m6.m[static_cast<size_t>(k)] *
                std::fabs(magnitude_at(a.values(), row, k) - magnitude_at(b.values(), row, k));
    want /= 2.0;  // B * M
    CHECK(loss_freq(a, b, m6).scalar_value() == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("an all-zero gate silences the loss entirely") {
    BandMask off = make_band_mask(8, 1.0);
    Rng rng(8);
    Tensor a = Tensor::randn({2, 2, 8}, rng, 0.0, 1.0);
    Tensor b = Tensor::randn({2, 2, 8}, rng, 0.0, 1.0);
    CHECK(loss_freq(a, b, off).scalar_value() == 0.0);
  }
  SUBCASE("gate width must match the spectrum") {
    BandMask wrong = make_band_mask(6, 0.3);
    CHECK_THROWS_AS(loss_freq(Tensor::zeros({1, 1, 8}), Tensor::zeros({1, 1, 8}), wrong),
                    ShapeError);
  }
}

TEST_CASE("visible denoising loss is plain mean squared error") {
  CHECK(loss_dfs(Tensor::zeros({2, 3, 4}), Tensor::full({2, 3, 4}, 1.0)).scalar_value() == 1.0);

  Rng rng(9);
  Tensor a = Tensor::randn({2, 2, 3}, rng, 0.0, 1.0);
  Tensor b = Tensor::randn({2, 2, 3}, rng, 0.0, 1.0);
  double want = 0.0;
  for (size_t i = 0; i < a.values().size(); ++i) {
    double d = b.values()[i] - a.values()[i];
    want += d * d;
  }
  want /= static_cast<double>(a.numel());
  CHECK(loss_dfs(a, b).scalar_value() == doctest::Approx(want).epsilon(1e-12));

  CHECK_THROWS_AS(loss_dfs(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("masked decoder") {
  EncoderConfig cfg = tiny_config();
  SyntheticPair pair = make_synthetic_domains(2, 8, 8, 4, 0.0, 3, 0.01);
  TokenBatch tb = sample_batch(pair.source, 2, 0.75, 21);
  REQUIRE(tb.masked_idx[0].size() == 7);
  REQUIRE(tb.visible_idx[0].size() == 2);
  Tensor t_emb = time_embed(5, cfg.width);
  Rng zr(31);
  Tensor z_fuse = Tensor::randn({2, 2, cfg.width}, zr, 0.0, 1.0);

  SUBCASE("all-zero weights reduce every prediction to the head bias") {
    ParamStore ps;
    init_recon_decoder(ps, cfg, 9, 17);
    for (const auto& name : ps.names()) zero_param(ps, name);
    Tensor bias = Tensor::from({4}, {0.3, -1.2, 0.5, 2.0});
    ps.get("recon/head/bias").mutable_values() = bias.values();

    Tensor out = decode_masked(z_fuse, tb, t_emb, ps, cfg);
    REQUIRE(out.shape() == Shape{2, 7, 4});
    for (int64_t r = 0; r < 14; ++r)
      for (int64_t c = 0; c < 4; ++c)
        CHECK(out.values()[static_cast<size_t>(r * 4 + c)] == bias.values()[static_cast<size_t>(c)]);
  }

  SUBCASE("nothing masked yields no predictions") {
    ParamStore ps;
    init_recon_decoder(ps, cfg, 9, 17);
    TokenBatch open = sample_batch(pair.source, 2, 0.0, 21);
    REQUIRE(open.masked_idx[0].empty());
    Tensor none = decode_masked(Tensor::randn({2, 9, cfg.width}, zr, 0.0, 1.0), open, t_emb, ps, cfg);
    CHECK_FALSE(none.defined());
  }

  SUBCASE("matches a scatter, two blocks, gather composition") {
    ParamStore ps;
    init_recon_decoder(ps, cfg, 9, 17);
    randomize_param(ps, "recon/block0/norm1/alpha/weight", 41, 0.05);
    randomize_param(ps, "recon/block1/norm2/beta/weight", 42, 0.05);

    std::vector<int64_t> flat_vis, flat_mask;
    for (const auto& one : tb.visible_idx) flat_vis.insert(flat_vis.end(), one.begin(), one.end());
    for (const auto& one : tb.masked_idx) flat_mask.insert(flat_mask.end(), one.begin(), one.end());

    Tensor base = expand(reshape(ps.get("recon/mask_token"), {1, 1, cfg.width}), {2, 9, cfg.width});
    Tensor seq = scatter_rows(base, flat_vis, 2, z_fuse);
    Tensor x = add(seq, reshape(ps.get("recon/pos_embed"), {1, 9, cfg.width}));
    x = cond_block(x, t_emb, ps, "recon/block0", cfg.heads);
    x = cond_block(x, t_emb, ps, "recon/block1", cfg.heads);
    Tensor full = add(matmul(x, ps.get("recon/head/weight")), ps.get("recon/head/bias"));
    Tensor want = gather_rows(full, flat_mask, 7);

    Tensor got = decode_masked(z_fuse, tb, t_emb, ps, cfg);
    REQUIRE(got.shape() == want.shape());
    for (size_t i = 0; i < want.values().size(); ++i) CHECK(got.values()[i] == want.values()[i]);
  }

  SUBCASE("rejects features or tables that do not fit the batch") {
    ParamStore ps;
    init_recon_decoder(ps, cfg, 9, 17);
    Tensor wide = Tensor::randn({2, 5, cfg.width}, zr, 0.0, 1.0);  // 5 != 2 visible
    CHECK_THROWS_AS(decode_masked(wide, tb, t_emb, ps, cfg), ContractError);
    Tensor thin = Tensor::randn({2, 2, 6}, zr, 0.0, 1.0);
    CHECK_THROWS_AS(decode_masked(thin, tb, t_emb, ps, cfg), ShapeError);

    ParamStore small;
    init_recon_decoder(small, cfg, 4, 17);  // table built for 4 tokens, batch has 9
    CHECK_THROWS_AS(decode_masked(z_fuse, tb, t_emb, small, cfg), ContractError);
  }
}

TEST_CASE("diffusion decoder folds encoder taps deepest first") {
  EncoderConfig cfg = tiny_config();
  ParamStore ps;
  init_diff_decoder(ps, cfg, 19);
  Tensor t_emb = time_embed(3, cfg.width);
  Rng rng(23);
  Tensor z = Tensor::randn({2, 3, cfg.width}, rng, 0.0, 1.0);
  std::vector<Tensor> skips;
  for (int i = 0; i < 4; ++i) skips.push_back(Tensor::randn({2, 3, cfg.width}, rng, 0.0, 1.0));

  SUBCASE("all-zero weights reduce rows to the head bias") {
    ParamStore zps;
    init_diff_decoder(zps, cfg, 19);
    for (const auto& name : zps.names()) zero_param(zps, name);
    Tensor bias = Tensor::from({4}, {1.5, 0.0, -0.25, 3.0});
    zps.get("diff/head/bias").mutable_values() = bias.values();
    Tensor out = diff_decode(z, skips, t_emb, zps, cfg);
    REQUIRE(out.shape() == Shape{2, 3, 4});
    for (int64_t r = 0; r < 6; ++r)
      for (int64_t c = 0; c < 4; ++c)
        CHECK(out.values()[static_cast<size_t>(r * 4 + c)] == bias.values()[static_cast<size_t>(c)]);
  }

  SUBCASE("matches the explicit block-by-block composition") {
    randomize_param(ps, "diff/block2/norm1/alpha/weight", 43, 0.05);
    Tensor x = z;
    for (int i = 0; i < 4; ++i)
      x = cond_block(add(x, skips[static_cast<size_t>(3 - i)]), t_emb, ps,
                     "diff/block" + std::to_string(i), cfg.heads);
    Tensor want = add(matmul(x, ps.get("diff/head/weight")), ps.get("diff/head/bias"));
    Tensor got = diff_decode(z, skips, t_emb, ps, cfg);
    REQUIRE(got.shape() == want.shape());
    for (size_t i = 0; i < want.values().size(); ++i) CHECK(got.values()[i] == want.values()[i]);
  }

  SUBCASE("tap count and shapes are enforced") {
    std::vector<Tensor> three(skips.begin(), skips.begin() + 3);
    CHECK_THROWS_AS(diff_decode(z, three, t_emb, ps, cfg), ContractError);
    std::vector<Tensor> bad = skips;
    bad[1] = Tensor::zeros({2, 4, cfg.width});
    CHECK_THROWS_AS(diff_decode(z, bad, t_emb, ps, cfg), ShapeError);
  }
}

namespace {

struct LossRig {
  EncoderConfig cfg = tiny_config();
  ParamStore ps;
  TokenBatch tb;
  DiffusionSchedule sched;
  BandMask mask;
  std::vector<int64_t> ts{3, 7, 10};

  LossRig() {
    SyntheticPair pair = make_synthetic_domains(2, 8, 8, 4, 0.0, 3, 0.01);
    tb = sample_batch(pair.source, 3, 0.75, 11);
    sched = build_schedule(10, 1e-4, 2e-2);
    mask = make_band_mask(4, 0.3);
    ps = init_encoder_params(cfg, 13);
    init_recon_decoder(ps, cfg, 9, 13);
    init_diff_decoder(ps, cfg, 13);
  }

  PretrainParts eval(double alpha) {
    Rng noise(99);
    return pretrain_loss(tb, ts, noise, sched, ps, cfg, alpha, mask);
  }
};

}  // namespace

TEST_CASE("pretraining objective composes additively in alpha") {
  LossRig rig;
  PretrainParts base = rig.eval(0.0);
  PretrainParts weighted = rig.eval(0.7);

  CHECK(weighted.total.scalar_value() ==
        doctest::Approx(base.total.scalar_value() + 0.7 * weighted.freq.scalar_value())
            .epsilon(1e-10));

  // alpha 0 is exactly the two remaining terms, and the gated term is a
  // true zero rather than a small number
  CHECK(base.total.scalar_value() == base.spa.scalar_value() + base.dfs.scalar_value());
  CHECK(base.freq.scalar_value() == 0.0);
  CHECK_FALSE(base.no_masked);
  CHECK(base.mean_t == doctest::Approx((3.0 + 7.0 + 10.0) / 3.0).epsilon(1e-15));

  PretrainParts again = rig.eval(0.7);
  CHECK(again.total.scalar_value() == weighted.total.scalar_value());  // frozen seeds, same value
}

TEST_CASE("objective gradients stay in their own decoder") {
  LossRig rig;
  rig.ps.set_requires_grad(true);

  PretrainParts parts = rig.eval(0.5);
  backward(parts.dfs);
  for (const auto& name : rig.ps.names())
    if (name.rfind("recon/", 0) == 0) CHECK_FALSE(rig.ps.get(name).grad_populated());
  rig.ps.zero_grad();

  PretrainParts spa_only = rig.eval(0.5);
  backward(spa_only.spa);
  for (const auto& name : rig.ps.names())
    if (name.rfind("diff/", 0) == 0) CHECK_FALSE(rig.ps.get(name).grad_populated());
}

TEST_CASE("pretraining objective rejects malformed calls") {
  LossRig rig;
  EncoderConfig with_cls = rig.cfg;
  with_cls.with_class_token = true;
  Rng noise(1);
  CHECK_THROWS_AS(
      pretrain_loss(rig.tb, rig.ts, noise, rig.sched, rig.ps, with_cls, 0.5, rig.mask),
      ContractError);

  std::vector<int64_t> short_ts{3, 7};
  CHECK_THROWS_AS(
      pretrain_loss(rig.tb, short_ts, noise, rig.sched, rig.ps, rig.cfg, 0.5, rig.mask),
      ShapeError);
}

TEST_CASE("full objective passes a finite-difference audit") {
  EncoderConfig cfg = tiny_config();
  TokenBatch tb = two_token_batch(4, 51);
  DiffusionSchedule sched = build_schedule(6, 1e-4, 2e-2);
  BandMask mask = make_band_mask(4, 0.3);
  std::vector<int64_t> ts{4};

  ParamStore ps = init_encoder_params(cfg, 29);
  init_recon_decoder(ps, cfg, 2, 29);
  init_diff_decoder(ps, cfg, 29);
  uint64_t salt = 1000;
  for (const auto& name : ps.names())
    if (name.find("/alpha/weight") != std::string::npos ||
        name.find("/beta/weight") != std::string::npos)
      randomize_param(ps, name, salt++, 0.05);

  std::vector<Tensor> leaves;
  for (const auto& name : ps.names()) leaves.push_back(ps.get(name));

  auto loss_fn = [&](std::vector<Tensor>&) {
    Rng noise(55);
    return pretrain_loss(tb, ts, noise, sched, ps, cfg, 0.5, mask).total;
  };
  GradCheckReport report = grad_check(loss_fn, leaves, 1e-5, 3);
  INFO(report.worst);
  CHECK(report.max_rel_err < 1e-4);
  CHECK(report.checked > 0);
}

namespace {

PretrainConfig loop_config() {
  PretrainConfig cfg;
  cfg.encoder = tiny_config();
  cfg.epochs = 3;
  cfg.batch = 512;
  cfg.window = 9;
  cfg.patch = 3;
  cfg.pca_bands = 0;
  cfg.timesteps = 10;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("training loop writes a decaying schedule and an honest log") {
  HsiCube cube = make_synthetic_domains(2, 6, 6, 4, 0.0, 3, 0.01).source;
  PretrainConfig cfg = loop_config();
  std::string dir = temp_dir("s2x-loop");

  PretrainOutcome out = pretrain_loop(cube, cfg, dir);
  CHECK(out.steps_run == 3);  // 36 pixels, batch 512: one step per epoch
  CHECK(out.epochs_completed == 3);
  CHECK(out.checkpoint_path == dir + "/pretrain.ckpt");

  auto lines = read_lines(out.log_path);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "epoch\tstep\tt\tL_spa\tL_freq\tL_dfs\tL_pretrain\tlr");
  for (int e = 0; e < 3; ++e) {
    auto cells = split_tabs(lines[static_cast<size_t>(e + 1)]);
    REQUIRE(cells.size() == 8);
    CHECK(cells[0] == std::to_string(e));
    CHECK(cells[1] == "0");
    CHECK(std::stod(cells[7]) ==
          doctest::Approx(1e-3 * std::pow(0.99, e)).epsilon(1e-12));
    double spa = std::stod(cells[3]), freq = std::stod(cells[4]), dfs = std::stod(cells[5]);
    double total = std::stod(cells[6]);
    CHECK(total == doctest::Approx(spa + 0.5 * freq + dfs).epsilon(1e-6));
  }

  LoadedCheckpoint lc = load_checkpoint(out.checkpoint_path);
  CHECK(lc.meta.kind == "pretrain");
  CHECK(lc.meta.epoch == 3);
  CHECK(lc.meta.adam_step == 3);
  CHECK(lc.meta.encoder.bands == 4);
  CHECK_FALSE(lc.adam.empty());
}

TEST_CASE("zero-epoch runs checkpoint the untouched initialization") {
  HsiCube cube = make_synthetic_domains(2, 6, 6, 4, 0.0, 3, 0.01).source;
  PretrainConfig cfg = loop_config();
  cfg.epochs = 0;
  std::string dir = temp_dir("s2x-zero");

  PretrainOutcome out = pretrain_loop(cube, cfg, dir);
  CHECK(out.steps_run == 0);
  LoadedCheckpoint lc = load_checkpoint(out.checkpoint_path);
  CHECK(lc.meta.epoch == 0);
  CHECK(lc.meta.adam_step == 0);

  EncoderConfig enc = cfg.encoder;
  enc.bands = 4;
  enc.with_class_token = false;
  ParamStore fresh = init_encoder_params(enc, cfg.seed);
  init_recon_decoder(fresh, enc, 9, cfg.seed);
  init_diff_decoder(fresh, enc, cfg.seed);
  quantize_params(fresh);

  REQUIRE(lc.params.names() == fresh.names());
  for (const auto& name : fresh.names()) {
    const auto& a = lc.params.get(name).values();
    const auto& b = fresh.get(name).values();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("resumed training continues the identical trajectory") {
  HsiCube cube = make_synthetic_domains(2, 6, 6, 4, 0.0, 3, 0.01).source;
  PretrainConfig cfg = loop_config();

  std::string dir_full = temp_dir("s2x-full");
  pretrain_loop(cube, cfg, dir_full);

  std::string dir_split = temp_dir("s2x-split");
  PretrainConfig first = cfg;
  first.epochs = 1;
  pretrain_loop(cube, first, dir_split);
  PretrainOutcome rest = pretrain_loop(cube, cfg, dir_split, true);
  CHECK(rest.steps_run == 2);
  CHECK(rest.epochs_completed == 3);

  auto a = read_lines(dir_full + "/pretrain_log.tsv");
  auto b = read_lines(dir_split + "/pretrain_log.tsv");
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  CHECK(file_bytes(dir_full + "/pretrain.ckpt") == file_bytes(dir_split + "/pretrain.ckpt"));
}

TEST_CASE("resume refuses a mismatched or missing checkpoint") {
  HsiCube cube = make_synthetic_domains(2, 6, 6, 4, 0.0, 3, 0.01).source;
  PretrainConfig cfg = loop_config();
  cfg.epochs = 1;
  std::string dir = temp_dir("s2x-mismatch");
  pretrain_loop(cube, cfg, dir);

  PretrainConfig wider = cfg;
  wider.encoder.width = 16;
  try {
    pretrain_loop(cube, wider, dir, true);
    FAIL("expected a configuration mismatch");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("width") != std::string::npos);
  }

  PretrainConfig hotter = cfg;
  hotter.beta_max = 3e-2;
  CHECK_THROWS_AS(pretrain_loop(cube, hotter, dir, true), ContractError);

  std::string empty = temp_dir("s2x-empty");
  CHECK_THROWS_AS(pretrain_loop(cube, cfg, empty, true), FormatError);
}

TEST_CASE("band projection rides along in the checkpoint") {
  HsiCube cube = make_synthetic_domains(2, 6, 6, 4, 0.0, 3, 0.01).source;
  PretrainConfig cfg = loop_config();
  cfg.epochs = 1;
  cfg.pca_bands = 2;
  std::string dir = temp_dir("s2x-pca");

  pretrain_loop(cube, cfg, dir);
  LoadedCheckpoint lc = load_checkpoint(dir + "/pretrain.ckpt");
  CHECK(lc.meta.encoder.bands == 2);  // model runs in projected band space
  CHECK(lc.meta.extra.at("pca_bands") == "2");
  CHECK(lc.meta.extra.at("input_bands") == "4");
  CHECK(lc.params.has("pca/mean"));
  CHECK(lc.params.has("pca/components"));
  PcaModel pca = pca_from_params(lc.params);
  CHECK(pca.in_bands == 4);
  CHECK(pca.out_bands == 2);
}

TEST_CASE("identical seeds give byte-identical training runs") {
  HsiCube cube = make_synthetic_domains(2, 6, 6, 4, 0.0, 3, 0.01).source;
  PretrainConfig cfg = loop_config();
  cfg.epochs = 2;
  std::string da = temp_dir("s2x-det-a");
  std::string db = temp_dir("s2x-det-b");
  pretrain_loop(cube, cfg, da);
  pretrain_loop(cube, cfg, db);
  CHECK(file_bytes(da + "/pretrain_log.tsv") == file_bytes(db + "/pretrain_log.tsv"));
  CHECK(file_bytes(da + "/pretrain.ckpt") == file_bytes(db + "/pretrain.ckpt"));
}

TEST_CASE("pretraining configuration is validated") {
  PretrainConfig cfg = loop_config();
  cfg.epochs = -1;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = loop_config();
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = loop_config();
  cfg.window = 8;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = loop_config();
  cfg.patch = 4;  // does not divide 9
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = loop_config();
  cfg.lr_decay = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = loop_config();
  cfg.beta_min = 0.05;  // above beta_max
  CHECK_THROWS_AS(cfg.validate(), ParamError);
}
