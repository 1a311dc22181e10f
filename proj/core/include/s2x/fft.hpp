#pragma once

#include <vector>

#include "s2x/tensor.hpp"

namespace s2x {

// Half spectrum of a real DFT taken along the last axis; C' = floor(C/2)+1 bins.
struct ComplexSpectrum {
  Shape shape;  // input shape with the last extent replaced by C'
  std::vector<double> re;
  std::vector<double> im;
  int64_t bins() const { return shape.empty() ? 0 : shape.back(); }
};

// Direct real-input DFT along the last axis. Not recorded on the tape.
ComplexSpectrum rfft(const Tensor& x);

// Bin magnitudes of a spectrum as a plain tensor (no graph).
Tensor magnitude(const ComplexSpectrum& s);

// Differentiable |rfft(x)| along the last axis. Bins with exactly zero
// magnitude pass no gradient.
Tensor rfft_magnitude(const Tensor& x);

}  // namespace s2x
