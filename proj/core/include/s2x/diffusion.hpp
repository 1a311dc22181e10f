#pragma once

#include <cstdint>
#include <vector>

#include "s2x/tensor.hpp"

namespace s2x {

// Forward-process noise schedule. Tables are indexed by timestep t in
// 1..steps through the *_at accessors; vector slot i holds step i+1.
struct DiffusionSchedule {
  int64_t steps = 0;
  std::vector<double> beta;       // linear from beta_min to beta_max
  std::vector<double> alpha_bar;  // cumulative product of (1 - beta)
  std::vector<double> snr;        // alpha_bar / (1 - alpha_bar)

  double beta_at(int64_t t) const;
  double alpha_bar_at(int64_t t) const;
  double snr_at(int64_t t) const;
  void check_range(int64_t t) const;  // ParamError when t outside 1..steps
};

DiffusionSchedule build_schedule(int64_t steps, double beta_min, double beta_max);

struct NoiseResult {
  Tensor noised;
  Tensor eps;
};

// x_t = sqrt(alpha_bar_t) * x + sqrt(1 - alpha_bar_t) * eps, eps ~ N(0, I).
// Differentiable in x; eps is a constant leaf and also returned.
NoiseResult add_noise(const Tensor& x, int64_t t, const DiffusionSchedule& s, uint64_t seed);

// Per-sample variant: ts[i] applies to slice i of the leading axis.
NoiseResult add_noise(const Tensor& x, const std::vector<int64_t>& ts, const DiffusionSchedule& s,
                      Rng& rng);

// One uniform timestep in 1..steps per sample.
std::vector<int64_t> sample_timesteps(int64_t count, const DiffusionSchedule& s, Rng& rng);

// Sinusoidal embedding: pair j of the 1 x dim output carries
// sin and cos of t / 10000^(2j/dim). dim must be even.
Tensor time_embed(int64_t t, int64_t dim);

// Stacked per-sample embeddings, B x 1 x dim, row i embedding ts[i].
Tensor time_embed(const std::vector<int64_t>& ts, int64_t dim);

}  // namespace s2x
