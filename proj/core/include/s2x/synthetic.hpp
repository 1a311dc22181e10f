#pragma once

#include <cstdint>

#include "s2x/cube.hpp"

namespace s2x {

struct SyntheticPair {
  HsiCube source;
  HsiCube target;
};

// Two labeled domains over shared class structure. Each class owns a smooth
// spectral signature (a sum of Gaussians over the band axis); signatures are
// resampled until every class pair stays apart by a minimum per-band rms gap.
// The target domain applies a band warp plus per-class gain/offset, all
// scaled by domain_shift (shift 0 reproduces the source signatures exactly).
// Labels tile in 6x6 blocks along diagonals so neighboring blocks carry
// different classes. Noise is i.i.d. Gaussian per element with the given
// standard deviation.
SyntheticPair make_synthetic_domains(int64_t num_classes, int64_t height, int64_t width,
                                     int64_t bands, double domain_shift, uint64_t seed,
                                     double noise_std = 0.02);

}  // namespace s2x
