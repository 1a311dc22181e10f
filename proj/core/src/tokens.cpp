#include "s2x/tokens.hpp"

#include <algorithm>
#include <cmath>

namespace s2x {

int64_t reflect_index(int64_t i, int64_t n) {
  if (n <= 0) throw ParamError("reflect_index: extent must be positive");
  if (n == 1) return 0;
  int64_t period = 2 * (n - 1);
  int64_t m = ((i % period) + period) % period;
  return m < n ? m : period - m;
}

int64_t masked_count(double masking_ratio, int64_t tokens_per_sample) {
  if (!(masking_ratio >= 0.0 && masking_ratio < 1.0))
    throw ParamError("masking ratio must be in [0,1), got " + std::to_string(masking_ratio));
  int64_t m = std::llround(masking_ratio * static_cast<double>(tokens_per_sample));
  if (m >= tokens_per_sample)
    throw ParamError("masking ratio " + std::to_string(masking_ratio) + " leaves no visible token for " +
                     std::to_string(tokens_per_sample) + " tokens");
  return m;
}

TokenBatch extract_patches(const HsiCube& cube,
                           const std::vector<std::pair<int64_t, int64_t>>& coords, int64_t window,
                           int64_t patch, double masking_ratio, uint64_t seed) {
  cube.validate();
  if (window <= 0 || window % 2 == 0)
    throw ParamError("window must be odd and positive (center undefined otherwise), got " +
                     std::to_string(window));
  if (patch <= 0 || window % patch != 0)
    throw ParamError("patch " + std::to_string(patch) + " must divide window " + std::to_string(window));
  if (coords.empty()) throw ParamError("extract_patches: empty coordinate list");
  for (const auto& [y, x] : coords)
    if (y < 0 || y >= cube.height || x < 0 || x >= cube.width)
      throw ParamError("coordinate (" + std::to_string(y) + "," + std::to_string(x) +
                       ") outside cube " + std::to_string(cube.height) + "x" + std::to_string(cube.width));

  const int64_t B = static_cast<int64_t>(coords.size());
  const int64_t g = window / patch;
  const int64_t N = g * g;
  const int64_t C = cube.bands;
  const int64_t m = masked_count(masking_ratio, N);
  const int64_t half = window / 2;

  std::vector<double> data(static_cast<size_t>(B * N * C), 0.0);
  const double inv_area = 1.0 / static_cast<double>(patch * patch);
  for (int64_t s = 0; s < B; ++s) {
    const auto [cy, cx] = coords[static_cast<size_t>(s)];
    for (int64_t pr = 0; pr < g; ++pr) {
      for (int64_t pc = 0; pc < g; ++pc) {
        size_t tok = static_cast<size_t>(((s * N) + pr * g + pc) * C);
        for (int64_t dy = 0; dy < patch; ++dy) {
          int64_t y = reflect_index(cy - half + pr * patch + dy, cube.height);
          for (int64_t dx = 0; dx < patch; ++dx) {
            int64_t x = reflect_index(cx - half + pc * patch + dx, cube.width);
            size_t px = static_cast<size_t>((y * cube.width + x) * C);
            for (int64_t b = 0; b < C; ++b)
              data[tok + static_cast<size_t>(b)] += cube.reflectance[px + static_cast<size_t>(b)];
          }
        }
        for (int64_t b = 0; b < C; ++b) data[tok + static_cast<size_t>(b)] *= inv_area;
      }
    }
  }

  TokenBatch out;
  out.tokens = Tensor::from({B, N, C}, std::move(data));
  out.window = window;
  out.patch = patch;
  out.origins = coords;
  out.visible_idx.resize(static_cast<size_t>(B));
  out.masked_idx.resize(static_cast<size_t>(B));
  Rng rng(derive_seed(seed, seed_tag::mask));
  for (int64_t s = 0; s < B; ++s) {
    auto& masked = out.masked_idx[static_cast<size_t>(s)];
    masked = rng.sample_without_replacement(N, m);
    auto& visible = out.visible_idx[static_cast<size_t>(s)];
    visible.reserve(static_cast<size_t>(N - m));
    size_t mi = 0;
    for (int64_t t = 0; t < N; ++t) {
      if (mi < masked.size() && masked[mi] == t)
        ++mi;
      else
        visible.push_back(t);
    }
  }
  return out;
}

}  // namespace s2x
