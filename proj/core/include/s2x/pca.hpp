#pragma once

#include <cstdint>
#include <vector>

#include "s2x/cube.hpp"

namespace s2x {

// Principal component basis fit on pixel spectra. Components are stored
// row-major as C rows by C_pca columns; columns are orthonormal and ordered
// by non-increasing explained variance. Sign convention: the largest-
// magnitude entry of each column is positive (first such entry on ties).
struct PcaModel {
  std::vector<double> mean;                // C
  std::vector<double> components;          // C x C_pca
  std::vector<double> explained_variance;  // C_pca, clamped at 0
  int64_t in_bands = 0;
  int64_t out_bands = 0;
};

// Covariance is taken over every pixel, labeled or not, with 1/n scaling.
PcaModel fit_pca(const HsiCube& cube, int64_t c_pca);

std::vector<double> project_spectrum(const PcaModel& m, const std::vector<double>& x);
std::vector<double> back_project_spectrum(const PcaModel& m, const std::vector<double>& y);

// Cube-level wrappers; labels and names carry over unchanged.
HsiCube project_cube(const PcaModel& m, const HsiCube& cube);
HsiCube back_project_cube(const PcaModel& m, const HsiCube& cube);

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Outputs eigenvalues in non-increasing order with matching eigenvector
// columns in vecs (row-major n x n). Exposed for reuse and testing.
void symmetric_eigen(const std::vector<double>& a, int64_t n, std::vector<double>& vals,
                     std::vector<double>& vecs);

}  // namespace s2x
