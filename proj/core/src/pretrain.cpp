#include "s2x/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "s2x/fft.hpp"
#include "s2x/ops.hpp"
#include "s2x/pca.hpp"

namespace s2x {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::vector<int64_t> flatten(const std::vector<std::vector<int64_t>>& idx, const char* what) {
  if (idx.empty()) throw ContractError(std::string("empty index lists for ") + what);
  size_t per = idx[0].size();
  std::vector<int64_t> flat;
  flat.reserve(idx.size() * per);
  for (const auto& one : idx) {
    if (one.size() != per)
      throw ContractError(std::string(what) + " count differs across samples");
    flat.insert(flat.end(), one.begin(), one.end());
  }
  return flat;
}

}  // namespace

BandMask make_band_mask(int64_t bands, double tau) {
  if (bands < 1) throw ParamError("band mask needs at least one channel");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw ParamError("band threshold must be in [0,1], got " + fmt17(tau));
  int64_t bins = bands / 2 + 1;
  BandMask mask;
  mask.tau = tau;
  mask.m.resize(static_cast<size_t>(bins));
  for (int64_t i = 0; i < bins; ++i)
    mask.m[static_cast<size_t>(i)] = (static_cast<double>(i) > tau * static_cast<double>(bins)) ? 1.0 : 0.0;
  return mask;
}

void PretrainConfig::validate() const {
  if (epochs < 0) throw ParamError("epochs must be >= 0");
  if (batch < 1) throw ParamError("batch size must be >= 1");
  if (!(lr > 0.0)) throw ParamError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ParamError("lr decay must be in (0,1]");
  if (alpha < 0.0) throw ParamError("frequency weight alpha must be >= 0");
  if (!(band_tau >= 0.0 && band_tau <= 1.0)) throw ParamError("band threshold must be in [0,1]");
  if (timesteps < 1) throw ParamError("timesteps must be >= 1");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw ParamError("noise schedule must satisfy 0 < beta_min < beta_max < 1");
  if (window < 1 || window % 2 == 0) throw ParamError("window must be odd and positive");
  if (patch < 1 || window % patch != 0) throw ParamError("patch must divide the window");
  if (pca_bands < 0) throw ParamError("pca_bands must be >= 0");
}

void init_recon_decoder(ParamStore& ps, const EncoderConfig& config, int64_t tokens_per_sample,
                        uint64_t seed) {
  config.validate();
  if (tokens_per_sample < 1) throw ParamError("decoder needs at least one token per sample");
  const int64_t D = config.width;
  Rng rng(derive_seed(seed, seed_tag::init, 2));
  auto nrm = [&](const Shape& s) { return Tensor::randn(s, rng, 0.0, 0.02); };
  ps.add("recon/mask_token", nrm({1, D}));
  ps.add("recon/pos_embed", nrm({tokens_per_sample, D}));
  add_block_params(ps, "recon/block0", D, config.ffn_hidden(), rng);
  add_block_params(ps, "recon/block1", D, config.ffn_hidden(), rng);
  ps.add("recon/head/weight", nrm({D, config.bands}));
  ps.add("recon/head/bias", Tensor::zeros({config.bands}));
}

void init_diff_decoder(ParamStore& ps, const EncoderConfig& config, uint64_t seed) {
  config.validate();
  const int64_t D = config.width;
  Rng rng(derive_seed(seed, seed_tag::init, 3));
  auto nrm = [&](const Shape& s) { return Tensor::randn(s, rng, 0.0, 0.02); };
  for (int i = 0; i < 4; ++i)
    add_block_params(ps, "diff/block" + std::to_string(i), D, config.ffn_hidden(), rng);
  ps.add("diff/head/weight", nrm({D, config.bands}));
  ps.add("diff/head/bias", Tensor::zeros({config.bands}));
}

Tensor decode_masked(const Tensor& z_fuse, const TokenBatch& batch, const Tensor& t_emb,
                     const ParamStore& ps, const EncoderConfig& config) {
  const int64_t B = batch.batch();
  if (B < 1) throw ContractError("decode_masked needs a non-empty batch");
  const int64_t N = batch.tokens_per_sample();
  const int64_t D = config.width;
  if (z_fuse.rank() != 3 || z_fuse.dim(0) != B || z_fuse.dim(2) != D)
    throw ShapeError("fused features must be B x N_vis x D, got " + shape_str(z_fuse.shape()));
  std::vector<int64_t> flat_vis = flatten(batch.visible_idx, "visible token");
  const int64_t n_vis = static_cast<int64_t>(batch.visible_idx[0].size());
  if (z_fuse.dim(1) != n_vis)
    throw ContractError("fused features cover " + std::to_string(z_fuse.dim(1)) +
                        " tokens but the batch has " + std::to_string(n_vis) + " visible");
  const Tensor& pos = ps.get("recon/pos_embed");
  if (pos.dim(0) != N)
    throw ContractError("reconstruction decoder was built for " + std::to_string(pos.dim(0)) +
                        " tokens per sample, batch has " + std::to_string(N));
  const int64_t m = static_cast<int64_t>(batch.masked_idx[0].size());
  if (m == 0) return Tensor();
  std::vector<int64_t> flat_mask = flatten(batch.masked_idx, "masked token");

  Tensor base = expand(reshape(ps.get("recon/mask_token"), {1, 1, D}), {B, N, D});
  Tensor seq = scatter_rows(base, flat_vis, n_vis, z_fuse);
  Tensor x = add(seq, reshape(pos, {1, N, D}));
  x = cond_block(x, t_emb, ps, "recon/block0", config.heads);
  x = cond_block(x, t_emb, ps, "recon/block1", config.heads);
  Tensor out = add(matmul(x, ps.get("recon/head/weight")), ps.get("recon/head/bias"));
  return gather_rows(out, flat_mask, m);
}

Tensor diff_decode(const Tensor& z_fuse, const std::vector<Tensor>& skips, const Tensor& t_emb,
                   const ParamStore& ps, const EncoderConfig& config) {
  if (skips.size() != 4)
    throw ContractError("diffusion decoder expects four encoder taps, got " +
                        std::to_string(skips.size()));
  if (z_fuse.rank() != 3)
    throw ShapeError("fused features must be B x N_vis x D, got " + shape_str(z_fuse.shape()));
  Tensor x = z_fuse;
  for (int i = 0; i < 4; ++i) {
    const Tensor& skip = skips[static_cast<size_t>(3 - i)];
    if (skip.shape() != x.shape())
      throw ShapeError("encoder tap " + std::to_string(3 - i) + " is " + shape_str(skip.shape()) +
                       " but the decoder stream is " + shape_str(x.shape()));
    x = cond_block(add(x, skip), t_emb, ps, "diff/block" + std::to_string(i), config.heads);
  }
  return add(matmul(x, ps.get("diff/head/weight")), ps.get("diff/head/bias"));
}

Tensor loss_spa(const Tensor& pred, const Tensor& target) {
  if (!pred.defined() || !target.defined()) throw ContractError("loss_spa needs defined tensors");
  if (pred.shape() != target.shape())
    throw ShapeError("loss_spa: shapes " + shape_str(pred.shape()) + " and " +
                     shape_str(target.shape()) + " differ");
  if (pred.rank() != 3) throw ShapeError("loss_spa expects B x M x C tokens");
  double inv = 1.0 / static_cast<double>(pred.dim(0) * pred.dim(1));
  return mul_scalar(sum_all(abs(sub(pred, target))), inv);
}

Tensor loss_freq(const Tensor& pred, const Tensor& target, const BandMask& mask) {
  if (!pred.defined() || !target.defined()) throw ContractError("loss_freq needs defined tensors");
  if (pred.shape() != target.shape())
    throw ShapeError("loss_freq: shapes " + shape_str(pred.shape()) + " and " +
                     shape_str(target.shape()) + " differ");
  if (pred.rank() != 3) throw ShapeError("loss_freq expects B x M x C tokens");
  int64_t bins = pred.dim(2) / 2 + 1;
  if (mask.bins() != bins)
    throw ShapeError("band mask has " + std::to_string(mask.bins()) + " bins but C=" +
                     std::to_string(pred.dim(2)) + " needs " + std::to_string(bins));
  Tensor diff = abs(sub(rfft_magnitude(pred), rfft_magnitude(target)));
  Tensor gate = Tensor::from({1, 1, bins}, mask.m);
  double inv = 1.0 / static_cast<double>(pred.dim(0) * pred.dim(1));
  return mul_scalar(sum_all(mul(diff, gate)), inv);
}

Tensor loss_dfs(const Tensor& clean_visible, const Tensor& predicted_visible) {
  if (!clean_visible.defined() || !predicted_visible.defined())
    throw ContractError("loss_dfs needs defined tensors");
  if (clean_visible.shape() != predicted_visible.shape())
    throw ShapeError("loss_dfs: shapes " + shape_str(clean_visible.shape()) + " and " +
                     shape_str(predicted_visible.shape()) + " differ");
  Tensor d = sub(predicted_visible, clean_visible);
  return mean_all(mul(d, d));
}

PretrainParts pretrain_loss(const TokenBatch& batch, const std::vector<int64_t>& ts, Rng& noise_rng,
                            const DiffusionSchedule& sched, const ParamStore& ps,
                            const EncoderConfig& config, double alpha, const BandMask& mask) {
  const int64_t B = batch.batch();
  if (B < 1) throw ContractError("pretrain loss needs a non-empty batch");
  if (static_cast<int64_t>(ts.size()) != B)
    throw ShapeError("got " + std::to_string(ts.size()) + " timesteps for " + std::to_string(B) +
                     " samples");
  if (config.with_class_token)
    throw ContractError("pretraining runs without a class token");
  if (alpha < 0.0) throw ParamError("frequency weight alpha must be >= 0");

  std::vector<int64_t> flat_vis = flatten(batch.visible_idx, "visible token");
  const int64_t n_vis = static_cast<int64_t>(batch.visible_idx[0].size());

  Tensor x_vis_clean = gather_rows(batch.tokens, flat_vis, n_vis);
  NoiseResult noised = add_noise(x_vis_clean, ts, sched, noise_rng);
  Tensor part_noised = scatter_rows(batch.tokens, flat_vis, n_vis, noised.noised);
  Tensor t_emb = time_embed(ts, config.width);

  EncodeResult enc = encode(part_noised, batch.visible_idx, t_emb, ps, config);

  PretrainParts parts;
  double t_sum = 0.0;
  for (int64_t t : ts) t_sum += static_cast<double>(t);
  parts.mean_t = t_sum / static_cast<double>(B);

  parts.dfs = loss_dfs(x_vis_clean, diff_decode(enc.fused, enc.skips, t_emb, ps, config));

  const int64_t m = static_cast<int64_t>(batch.masked_idx[0].size());
  if (m == 0) {
    parts.no_masked = true;
    parts.spa = Tensor::zeros({1});
    parts.freq = Tensor::zeros({1});
    parts.total = parts.dfs;
    return parts;
  }

  Tensor pred = decode_masked(enc.fused, batch, t_emb, ps, config);
  std::vector<int64_t> flat_mask = flatten(batch.masked_idx, "masked token");
  Tensor target = gather_rows(batch.tokens, flat_mask, m);
  parts.spa = loss_spa(pred, target);
  if (alpha == 0.0) {
    parts.freq = Tensor::zeros({1});
    parts.total = add(parts.spa, parts.dfs);
  } else {
    parts.freq = loss_freq(pred, target, mask);
    parts.total = add(add(parts.spa, mul_scalar(parts.freq, alpha)), parts.dfs);
  }
  return parts;
}

namespace {

CheckpointMeta pretrain_meta(const PretrainConfig& config, const EncoderConfig& enc,
                             int64_t input_bands) {
  CheckpointMeta meta;
  meta.kind = "pretrain";
  meta.encoder = enc;
  meta.extra["window"] = std::to_string(config.window);
  meta.extra["patch"] = std::to_string(config.patch);
  meta.extra["timesteps"] = std::to_string(config.timesteps);
  meta.extra["beta_min"] = fmt17(config.beta_min);
  meta.extra["beta_max"] = fmt17(config.beta_max);
  meta.extra["alpha"] = fmt17(config.alpha);
  meta.extra["band_tau"] = fmt17(config.band_tau);
  meta.extra["pca_bands"] = std::to_string(config.pca_bands);
  meta.extra["seed"] = std::to_string(config.seed);
  meta.extra["input_bands"] = std::to_string(input_bands);
  return meta;
}

// Differing header fields between a loaded checkpoint and this run's intent.
std::string meta_diff(const CheckpointMeta& ckpt, const CheckpointMeta& want) {
  std::string diff;
  auto line = [&](const std::string& key, const std::string& a, const std::string& b) {
    if (a == b) return;
    if (!diff.empty()) diff += "\n";
    diff += "  " + key + ": checkpoint " + a + ", run " + b;
  };
  line("kind", ckpt.kind, want.kind);
  line("width", std::to_string(ckpt.encoder.width), std::to_string(want.encoder.width));
  line("heads", std::to_string(ckpt.encoder.heads), std::to_string(want.encoder.heads));
  line("cross_layers", std::to_string(ckpt.encoder.cross_layers),
       std::to_string(want.encoder.cross_layers));
  line("conv_kernel", std::to_string(ckpt.encoder.conv_kernel),
       std::to_string(want.encoder.conv_kernel));
  line("bands", std::to_string(ckpt.encoder.bands), std::to_string(want.encoder.bands));
  line("ffn_mult", std::to_string(ckpt.encoder.ffn_mult), std::to_string(want.encoder.ffn_mult));
  line("masking_ratio", fmt17(ckpt.encoder.masking_ratio), fmt17(want.encoder.masking_ratio));
  line("use_cross_attention", std::to_string(ckpt.encoder.use_cross_attention),
       std::to_string(want.encoder.use_cross_attention));
  line("with_class_token", std::to_string(ckpt.encoder.with_class_token),
       std::to_string(want.encoder.with_class_token));
  for (const auto& kv : want.extra) {
    auto it = ckpt.extra.find(kv.first);
    line(kv.first, it == ckpt.extra.end() ? "<absent>" : it->second, kv.second);
  }
  return diff;
}

}  // namespace

PretrainOutcome pretrain_loop(const HsiCube& cube, const PretrainConfig& config,
                              const std::string& out_dir, bool resume) {
  config.validate();
  cube.validate();
  std::filesystem::create_directories(out_dir);

  HsiCube data;
  PcaModel pca;
  const bool use_pca = config.pca_bands > 0;
  if (use_pca) {
    pca = fit_pca(cube, config.pca_bands);  // rejects pca_bands > cube.bands
    data = project_cube(pca, cube);
  } else {
    data = cube;
  }

  EncoderConfig enc = config.encoder;
  enc.bands = data.bands;
  enc.with_class_token = false;
  enc.validate();
  const int64_t N = config.tokens_per_sample();

  ParamStore ps = init_encoder_params(enc, config.seed);
  init_recon_decoder(ps, enc, N, config.seed);
  init_diff_decoder(ps, enc, config.seed);
  if (use_pca) pca_to_params(pca, ps);

  CheckpointMeta meta = pretrain_meta(config, enc, cube.bands);
  const std::string ckpt_path = out_dir + "/pretrain.ckpt";
  const std::string log_path = out_dir + "/pretrain_log.tsv";

  int64_t start_epoch = 0;
  std::map<std::string, Adam::Moments> saved_moments;
  int64_t saved_step = 0;
  if (resume) {
    if (!std::filesystem::exists(ckpt_path))
      throw FormatError(ckpt_path + ": resume requested but no checkpoint found");
    LoadedCheckpoint lc = load_checkpoint(ckpt_path);
    std::string hdr = meta_diff(lc.meta, meta);
    if (!hdr.empty())
      throw ContractError("checkpoint disagrees with this run's configuration:\n" + hdr);
    std::string diff = structure_diff(ps, lc.params);
    if (!diff.empty())
      throw ContractError("checkpoint parameters do not line up with this configuration:\n" + diff);
    ps = std::move(lc.params);
    saved_moments = std::move(lc.adam);
    saved_step = lc.meta.adam_step;
    start_epoch = lc.meta.epoch;
  }

  for (const auto& name : ps.names())
    ps.get(name).set_requires_grad(name.rfind("pca/", 0) != 0);
  Adam opt(ps);
  if (resume) {
    opt.set_step_count(saved_step);
    for (auto& kv : saved_moments) opt.set_state(kv.first, std::move(kv.second.m), std::move(kv.second.v));
  }

  DiffusionSchedule sched = build_schedule(config.timesteps, config.beta_min, config.beta_max);
  BandMask mask = make_band_mask(enc.bands, config.band_tau);

  std::vector<std::pair<int64_t, int64_t>> coords;
  coords.reserve(static_cast<size_t>(data.height * data.width));
  for (int64_t y = 0; y < data.height; ++y)
    for (int64_t x = 0; x < data.width; ++x) coords.emplace_back(y, x);
  const int64_t n = static_cast<int64_t>(coords.size());
  const int64_t steps_per_epoch = (n + config.batch - 1) / config.batch;

  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw FormatError(log_path + ": cannot open for writing");
  if (!resume) log << "epoch\tstep\tt\tL_spa\tL_freq\tL_dfs\tL_pretrain\tlr\n";

  PretrainOutcome out;
  out.checkpoint_path = ckpt_path;
  out.log_path = log_path;
  out.epochs_completed = start_epoch;

  bool wrote_checkpoint = false;
  for (int64_t e = start_epoch; e < config.epochs; ++e) {
    const double lr_e = config.lr * std::pow(config.lr_decay, static_cast<double>(e));
    auto order = coords;
    Rng shuffle_rng(derive_seed(config.seed, seed_tag::shuffle, static_cast<uint64_t>(e)));
    shuffle_rng.shuffle(order);
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const int64_t lo = s * config.batch;
      const int64_t hi = std::min<int64_t>(lo + config.batch, n);
      std::vector<std::pair<int64_t, int64_t>> slice(order.begin() + lo, order.begin() + hi);
      const uint64_t step_seed =
          derive_seed(config.seed, seed_tag::step, static_cast<uint64_t>(e * steps_per_epoch + s));
      TokenBatch tb =
          extract_patches(data, slice, config.window, config.patch, enc.masking_ratio, step_seed);
      Rng ts_rng(derive_seed(step_seed, seed_tag::timestep));
      std::vector<int64_t> ts = sample_timesteps(hi - lo, sched, ts_rng);
      Rng noise_rng(derive_seed(step_seed, seed_tag::noise));

      PretrainParts parts = pretrain_loss(tb, ts, noise_rng, sched, ps, enc, config.alpha, mask);
      backward(parts.total);
      opt.step(lr_e);
      ps.zero_grad();

      const double total = parts.total.scalar_value();
      log << e << "\t" << s << "\t" << fmt9(parts.mean_t) << "\t" << fmt9(parts.spa.scalar_value())
          << "\t" << fmt9(parts.freq.scalar_value()) << "\t" << fmt9(parts.dfs.scalar_value())
          << "\t" << fmt9(total) << "\t" << fmt9(lr_e) << "\n";
      if (out.steps_run == 0) out.first_loss = total;
      out.final_loss = total;
      ++out.steps_run;
    }
    meta.epoch = e + 1;
    meta.adam_step = opt.step_count();
    quantize_params(ps);
    save_checkpoint(ckpt_path, meta, ps, &opt);
    wrote_checkpoint = true;
    out.epochs_completed = e + 1;
  }

  if (!wrote_checkpoint && !resume) {
    meta.epoch = 0;
    meta.adam_step = 0;
    quantize_params(ps);
    save_checkpoint(ckpt_path, meta, ps, &opt);
  }
  log.flush();
  if (!log) throw FormatError(log_path + ": write failed");
  return out;
}

}  // namespace s2x
