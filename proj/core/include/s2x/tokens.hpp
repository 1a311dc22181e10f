#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "s2x/cube.hpp"
#include "s2x/tensor.hpp"

namespace s2x {

// Token sequences for a batch of sample windows. Each sample is a w x w
// window centered on its origin pixel, cut into an (w/p) x (w/p) grid of
// p x p patches; a token is the per-band spatial mean of one patch, so
// tokens are B x N x C with N = (w/p)^2. Masked/visible index lists are
// sorted, disjoint, and together cover 0..N-1.
struct TokenBatch {
  Tensor tokens;  // B x N x C leaf tensor
  int64_t window = 0;
  int64_t patch = 0;
  std::vector<std::pair<int64_t, int64_t>> origins;        // (y, x) per sample
  std::vector<std::vector<int64_t>> visible_idx;           // per sample
  std::vector<std::vector<int64_t>> masked_idx;            // per sample

  int64_t batch() const { return tokens.defined() ? tokens.dim(0) : 0; }
  int64_t tokens_per_sample() const { return tokens.defined() ? tokens.dim(1) : 0; }
  int64_t bands() const { return tokens.defined() ? tokens.dim(2) : 0; }
};

// Mirror-without-edge-repeat index reflection into [0, n).
int64_t reflect_index(int64_t i, int64_t n);

// Number of masked tokens for a given ratio; |visible| stays >= 1.
int64_t masked_count(double masking_ratio, int64_t tokens_per_sample);

TokenBatch extract_patches(const HsiCube& cube,
                           const std::vector<std::pair<int64_t, int64_t>>& coords, int64_t window,
                           int64_t patch, double masking_ratio, uint64_t seed);

}  // namespace s2x
