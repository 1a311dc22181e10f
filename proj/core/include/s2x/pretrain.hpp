#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2x/checkpoint.hpp"
#include "s2x/cube.hpp"
#include "s2x/diffusion.hpp"
#include "s2x/encoder.hpp"
#include "s2x/tokens.hpp"

namespace s2x {

// High-frequency selector over the C' = floor(C/2)+1 rfft bins: bin i is
// kept iff i > tau * C' (strict), so the DC bin never survives and tau at
// 1 empties the band entirely.
struct BandMask {
  std::vector<double> m;  // one 0/1 weight per bin
  double tau = 0.3;
  int64_t bins() const { return static_cast<int64_t>(m.size()); }
};

BandMask make_band_mask(int64_t bands, double tau);

struct PretrainConfig {
  EncoderConfig encoder;  // encoder.bands is overwritten from the data
  int64_t epochs = 100;
  int64_t batch = 512;
  double lr = 1e-3;
  double lr_decay = 0.99;  // multiplicative, per epoch
  double alpha = 0.5;      // frequency term weight; 0 skips the term
  double band_tau = 0.3;
  int64_t timesteps = 1000;
  double beta_min = 1e-4;
  double beta_max = 2e-2;
  int64_t window = 9;
  int64_t patch = 3;
  int64_t pca_bands = 30;  // 0 trains on raw bands
  uint64_t seed = 1;

  int64_t tokens_per_sample() const { return (window / patch) * (window / patch); }
  void validate() const;
};

// Reconstruction decoder: a learnable token fills masked slots, visible
// slots take the fused features, a shared positional table is added, two
// conditional blocks run, and a linear head maps back to band space.
void init_recon_decoder(ParamStore& ps, const EncoderConfig& config, int64_t tokens_per_sample,
                        uint64_t seed);

// Four conditional blocks over the visible features; block i folds in the
// encoder tap skips[3 - i] (deepest first) before running.
void init_diff_decoder(ParamStore& ps, const EncoderConfig& config, uint64_t seed);

// Predictions for the masked positions, B x M x C. Returns an undefined
// tensor when the batch masks nothing (masking ratio 0).
Tensor decode_masked(const Tensor& z_fuse, const TokenBatch& batch, const Tensor& t_emb,
                     const ParamStore& ps, const EncoderConfig& config);

// Denoised visible-token predictions, B x N_vis x C.
Tensor diff_decode(const Tensor& z_fuse, const std::vector<Tensor>& skips, const Tensor& t_emb,
                   const ParamStore& ps, const EncoderConfig& config);

// Mean over tokens of the per-token L1 distance; both inputs B x M x C.
Tensor loss_spa(const Tensor& pred, const Tensor& target);

// Mean over tokens of the masked-bin L1 distance between rfft magnitudes.
Tensor loss_freq(const Tensor& pred, const Tensor& target, const BandMask& mask);

// Mean squared error over all elements.
Tensor loss_dfs(const Tensor& clean_visible, const Tensor& predicted_visible);

struct PretrainParts {
  Tensor total;
  Tensor spa;
  Tensor freq;  // zero constant when alpha == 0 or nothing is masked
  Tensor dfs;
  double mean_t = 0.0;
  bool no_masked = false;
};

// One full objective evaluation: noise visible tokens at ts (one timestep
// per sample), encode the part-noised sequence, reconstruct clean masked
// tokens (spatial + frequency terms) and denoise visible ones.
PretrainParts pretrain_loss(const TokenBatch& batch, const std::vector<int64_t>& ts, Rng& noise_rng,
                            const DiffusionSchedule& sched, const ParamStore& ps,
                            const EncoderConfig& config, double alpha, const BandMask& mask);

struct PretrainOutcome {
  std::string checkpoint_path;
  std::string log_path;
  int64_t steps_run = 0;        // optimizer steps taken by this call
  int64_t epochs_completed = 0;
  double first_loss = 0.0;      // total at the first step of this call
  double final_loss = 0.0;      // total at the last step of this call
};

// Self-supervised training over every pixel of the cube. Writes
// "pretrain.ckpt" and "pretrain_log.tsv" into out_dir; the checkpoint is
// refreshed after every epoch and carries optimizer state plus the band
// projection, so `resume` continues the identical trajectory.
PretrainOutcome pretrain_loop(const HsiCube& cube, const PretrainConfig& config,
                              const std::string& out_dir, bool resume = false);

}  // namespace s2x
