#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "s2x/cube.hpp"

namespace s2x {

// Per-class train/test pixel split. Index c-1 holds class c; train lists
// have exactly k entries each, test lists hold the remaining labeled pixels.
struct FewShotSplit {
  int64_t num_classes = 0;
  int64_t shots = 0;
  std::vector<std::vector<std::pair<int64_t, int64_t>>> train;
  std::vector<std::vector<std::pair<int64_t, int64_t>>> test;

  std::vector<std::pair<int64_t, int64_t>> all_train() const;
  std::vector<std::pair<int64_t, int64_t>> all_test() const;
};

// Uniform without-replacement selection of k pixels per class, seeded per
// class so the draw for class c does not depend on other classes.
FewShotSplit sample_few_shot(const HsiCube& cube, int64_t k, uint64_t seed,
                             bool allow_empty_test = false);

}  // namespace s2x
