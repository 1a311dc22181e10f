#include "s2x/diffusion.hpp"

#include <cmath>
#include <string>

#include "s2x/ops.hpp"

namespace s2x {

void DiffusionSchedule::check_range(int64_t t) const {
  if (t < 1 || t > steps)
    throw ParamError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(steps));
}

double DiffusionSchedule::beta_at(int64_t t) const {
  check_range(t);
  return beta[static_cast<size_t>(t - 1)];
}

double DiffusionSchedule::alpha_bar_at(int64_t t) const {
  check_range(t);
  return alpha_bar[static_cast<size_t>(t - 1)];
}

double DiffusionSchedule::snr_at(int64_t t) const {
  check_range(t);
  return snr[static_cast<size_t>(t - 1)];
}

DiffusionSchedule build_schedule(int64_t steps, double beta_min, double beta_max) {
  if (steps < 1) throw ParamError("schedule needs at least 1 step");
  if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0))
    throw ParamError("schedule needs 0 < beta_min < beta_max < 1, got [" + std::to_string(beta_min) +
                     ", " + std::to_string(beta_max) + "]");

  DiffusionSchedule s;
  s.steps = steps;
  s.beta.resize(static_cast<size_t>(steps));
  s.alpha_bar.resize(static_cast<size_t>(steps));
  s.snr.resize(static_cast<size_t>(steps));
  double prod = 1.0;
  for (int64_t i = 0; i < steps; ++i) {
    double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    double b = beta_min + (beta_max - beta_min) * frac;
    prod *= 1.0 - b;
    s.beta[static_cast<size_t>(i)] = b;
    s.alpha_bar[static_cast<size_t>(i)] = prod;
    s.snr[static_cast<size_t>(i)] = prod / (1.0 - prod);
  }
  for (int64_t i = 0; i < steps; ++i) {
    double ab = s.alpha_bar[static_cast<size_t>(i)];
    if (!(ab > 0.0 && ab < 1.0))
      throw NumericalError("alpha_bar left (0,1) at step " + std::to_string(i + 1));
    if (i > 0 && !(ab < s.alpha_bar[static_cast<size_t>(i - 1)]))
      throw NumericalError("alpha_bar not strictly decreasing at step " + std::to_string(i + 1));
  }
  return s;
}

NoiseResult add_noise(const Tensor& x, int64_t t, const DiffusionSchedule& s, uint64_t seed) {
  s.check_range(t);
  double ab = s.alpha_bar_at(t);
  Rng rng(derive_seed(seed, seed_tag::noise));
  Tensor eps = Tensor::randn(x.shape(), rng);
  Tensor noised = add(mul_scalar(x, std::sqrt(ab)), mul_scalar(eps, std::sqrt(1.0 - ab)));
  return {noised, eps};
}

NoiseResult add_noise(const Tensor& x, const std::vector<int64_t>& ts, const DiffusionSchedule& s,
                      Rng& rng) {
  if (x.rank() < 1) throw ShapeError("add_noise: input must have a leading sample axis");
  int64_t b = x.dim(0);
  if (static_cast<int64_t>(ts.size()) != b)
    throw ShapeError("add_noise: " + std::to_string(ts.size()) + " timesteps for " + std::to_string(b) +
                     " samples");
  Shape scale_shape(static_cast<size_t>(x.rank()), 1);
  scale_shape[0] = b;
  std::vector<double> sa(static_cast<size_t>(b)), sb(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    double ab = s.alpha_bar_at(ts[static_cast<size_t>(i)]);
    sa[static_cast<size_t>(i)] = std::sqrt(ab);
    sb[static_cast<size_t>(i)] = std::sqrt(1.0 - ab);
  }
  Tensor eps = Tensor::randn(x.shape(), rng);
  Tensor noised = add(mul(Tensor::from(scale_shape, std::move(sa)), x),
                           mul(Tensor::from(scale_shape, std::move(sb)), eps));
  return {noised, eps};
}

std::vector<int64_t> sample_timesteps(int64_t count, const DiffusionSchedule& s, Rng& rng) {
  if (count < 1) throw ParamError("sample_timesteps: count must be >= 1");
  std::vector<int64_t> ts(static_cast<size_t>(count));
  for (auto& t : ts) t = rng.uniform_int(1, s.steps);
  return ts;
}

Tensor time_embed(int64_t t, int64_t dim) {
  if (dim < 2 || dim % 2 != 0)
    throw ParamError("time embedding dim must be even and >= 2, got " + std::to_string(dim));
  std::vector<double> v(static_cast<size_t>(dim));
  for (int64_t j = 0; j < dim / 2; ++j) {
    double freq = std::pow(10000.0, -2.0 * static_cast<double>(j) / static_cast<double>(dim));
    double ang = static_cast<double>(t) * freq;
    v[static_cast<size_t>(2 * j)] = std::sin(ang);
    v[static_cast<size_t>(2 * j + 1)] = std::cos(ang);
  }
  return Tensor::from({1, dim}, std::move(v));
}

Tensor time_embed(const std::vector<int64_t>& ts, int64_t dim) {
  if (ts.empty()) throw ParamError("time embedding needs at least one timestep");
  std::vector<double> v;
  v.reserve(ts.size() * static_cast<size_t>(dim));
  for (int64_t t : ts) {
    Tensor row = time_embed(t, dim);
    v.insert(v.end(), row.values().begin(), row.values().end());
  }
  return Tensor::from({static_cast<int64_t>(ts.size()), 1, dim}, std::move(v));
}

}  // namespace s2x
