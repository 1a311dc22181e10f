#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace s2x {

// Rows index the true class, columns the predicted class; labels are 1..K.
struct ConfusionMatrix {
  int64_t classes = 0;
  std::vector<int64_t> counts;  // classes x classes, row-major

  int64_t& at(int64_t truth, int64_t pred) {
    return counts[static_cast<size_t>((truth - 1) * classes + (pred - 1))];
  }
  int64_t at(int64_t truth, int64_t pred) const {
    return counts[static_cast<size_t>((truth - 1) * classes + (pred - 1))];
  }
  int64_t total() const;
  int64_t row_total(int64_t truth) const;
  int64_t col_total(int64_t pred) const;
};

ConfusionMatrix tally(const std::vector<int64_t>& truth, const std::vector<int64_t>& pred,
                      int64_t classes);

struct ClassScore {
  int64_t support = 0;     // true samples of this class
  double accuracy = 0.0;   // meaningful only when support > 0
};

// aa averages class accuracies over classes that actually appear in the
// truth; empty classes are skipped. When chance agreement pe reaches 1 the
// kappa ratio is undefined: it is pinned to 1 for a perfect oa and 0
// otherwise, and degenerate_pe is set.
struct Scores {
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  double pe = 0.0;
  bool degenerate_pe = false;
  std::vector<ClassScore> per_class;
};

Scores score(const ConfusionMatrix& cm);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation (divisor n)
};

Aggregate aggregate(const std::vector<double>& xs);

// Tab-separated report: "metric<TAB>mean<TAB>std" for oa, aa, kappa, then
// one line per class. Every run must score the same class count.
void write_report(const std::string& path, const std::vector<Scores>& runs);

// Fixed 17-color palette; entry 0 (unlabeled) is black.
const std::vector<std::array<uint8_t, 3>>& label_palette();

// Uncompressed binary PPM (P6) with the palette embedded as a comment.
// Labels outside the palette are rejected.
void export_map(const std::string& path, const std::vector<int64_t>& labels, int64_t height,
                int64_t width);

struct LabelMap {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<int64_t> labels;
};

// Exact inverse of export_map; colors outside the palette are rejected.
LabelMap read_map(const std::string& path);

}  // namespace s2x
