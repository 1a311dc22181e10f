#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "s2x/errors.hpp"

namespace s2x {

// Hyperspectral reflectance volume with an optional aligned label map.
// Storage is pixel-major (band-interleaved-by-pixel): ((y*W)+x)*C + b.
// Label 0 means unlabeled; classes are 1..num_classes().
struct HsiCube {
  int64_t height = 0;
  int64_t width = 0;
  int64_t bands = 0;
  std::string name;
  std::vector<float> reflectance;           // H*W*C
  std::vector<uint16_t> labels;             // empty, or H*W
  std::map<int, std::string> class_names;   // optional, keyed by label value

  float at(int64_t y, int64_t x, int64_t b) const {
    return reflectance[static_cast<size_t>((y * width + x) * bands + b)];
  }
  std::vector<double> spectrum(int64_t y, int64_t x) const;
  uint16_t label_at(int64_t y, int64_t x) const;  // 0 when no label map
  bool has_labels() const { return !labels.empty(); }
  int num_classes() const;  // max label value, 0 when unlabeled
  int64_t pixel_count() const { return height * width; }

  // Checks dims vs buffer sizes and value finiteness. Throws ContractError.
  void validate() const;
};

// Container files. A cube at "x.hsic" keeps labels in "x.hsil" and class
// names in "x.names" (UTF-8 key=value lines); both siblings are optional.
std::string labels_path_for(const std::string& cube_path);
std::string names_path_for(const std::string& cube_path);

void save_cube(const std::string& path, const HsiCube& cube);
HsiCube load_cube(const std::string& path);

}  // namespace s2x
