#include "s2x/fewshot.hpp"

#include <algorithm>

#include "s2x/rng.hpp"

namespace s2x {

std::vector<std::pair<int64_t, int64_t>> FewShotSplit::all_train() const {
  std::vector<std::pair<int64_t, int64_t>> out;
  for (const auto& c : train) out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<std::pair<int64_t, int64_t>> FewShotSplit::all_test() const {
  std::vector<std::pair<int64_t, int64_t>> out;
  for (const auto& c : test) out.insert(out.end(), c.begin(), c.end());
  return out;
}

FewShotSplit sample_few_shot(const HsiCube& cube, int64_t k, uint64_t seed, bool allow_empty_test) {
  cube.validate();
  if (!cube.has_labels()) throw ContractError("sample_few_shot: cube '" + cube.name + "' has no labels");
  if (k < 1) throw ParamError("sample_few_shot: shots must be >= 1, got " + std::to_string(k));
  const int64_t num_classes = cube.num_classes();
  if (num_classes < 1) throw ContractError("sample_few_shot: label map has no labeled pixels");

  // pixels per class in row-major scan order, so selection indexes are stable
  std::vector<std::vector<std::pair<int64_t, int64_t>>> pixels(static_cast<size_t>(num_classes));
  for (int64_t y = 0; y < cube.height; ++y)
    for (int64_t x = 0; x < cube.width; ++x) {
      uint16_t l = cube.label_at(y, x);
      if (l > 0) pixels[static_cast<size_t>(l - 1)].emplace_back(y, x);
    }

  FewShotSplit split;
  split.num_classes = num_classes;
  split.shots = k;
  split.train.resize(static_cast<size_t>(num_classes));
  split.test.resize(static_cast<size_t>(num_classes));
  for (int64_t c = 1; c <= num_classes; ++c) {
    const auto& pool = pixels[static_cast<size_t>(c - 1)];
    int64_t n = static_cast<int64_t>(pool.size());
    if (n < k)
      throw ParamError("class " + std::to_string(c) + " has " + std::to_string(n) +
                       " labeled pixels, fewer than the " + std::to_string(k) + " shots requested");
    if (n == k && !allow_empty_test)
      throw ParamError("class " + std::to_string(c) + " has exactly " + std::to_string(k) +
                       " labeled pixels, leaving no test data (pass allow_empty_test to permit)");
    Rng rng(derive_seed(seed, seed_tag::fewshot, static_cast<uint64_t>(c)));
    std::vector<int64_t> chosen = rng.sample_without_replacement(n, k);
    auto& tr = split.train[static_cast<size_t>(c - 1)];
    auto& te = split.test[static_cast<size_t>(c - 1)];
    size_t ci = 0;
    for (int64_t i = 0; i < n; ++i) {
      if (ci < chosen.size() && chosen[ci] == i) {
        tr.push_back(pool[static_cast<size_t>(i)]);
        ++ci;
      } else {
        te.push_back(pool[static_cast<size_t>(i)]);
      }
    }
  }
  return split;
}

}  // namespace s2x
