#include "s2x/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "s2x/rng.hpp"

namespace s2x {

namespace {

constexpr int kGaussians = 3;
constexpr double kBase = 0.25;
constexpr double kWarpAmp = 2.0;     // bands of displacement at domain_shift = 1
constexpr double kGainRange = 0.5;   // relative gain excursion at domain_shift = 1
constexpr double kOffsetRange = 0.1;
constexpr double kMinRmsGap = 0.12;  // per-band rms distance kept between class signatures
constexpr int kResampleTries = 64;
constexpr int64_t kBlock = 6;  // label tile edge, two default patches wide

struct ClassSignature {
  double amp[kGaussians];
  double center[kGaussians];
  double sigma[kGaussians];
  double gain = 1.0;    // applied in the target domain, already shift-scaled
  double offset = 0.0;  // likewise

  double value(double u) const {
    double v = kBase;
    for (int g = 0; g < kGaussians; ++g) {
      double d = (u - center[g]) / sigma[g];
      v += amp[g] * std::exp(-0.5 * d * d);
    }
    return v;
  }
};

double rms_gap(const ClassSignature& a, const ClassSignature& b, int64_t bands) {
  double acc = 0.0;
  for (int64_t u = 0; u < bands; ++u) {
    double d = a.value(static_cast<double>(u)) - b.value(static_cast<double>(u));
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(bands));
}

}  // namespace

SyntheticPair make_synthetic_domains(int64_t num_classes, int64_t height, int64_t width,
                                     int64_t bands, double domain_shift, uint64_t seed,
                                     double noise_std) {
  if (num_classes < 2) throw ParamError("synthetic domains need at least 2 classes");
  if (height < 1 || width < 1 || bands < 1)
    throw ParamError("synthetic domains need positive height, width, and bands");
  if (noise_std < 0.0) throw ParamError("noise standard deviation must be >= 0");

  std::vector<ClassSignature> sigs(static_cast<size_t>(num_classes));
  for (int64_t c = 0; c < num_classes; ++c) {
    ClassSignature& s = sigs[static_cast<size_t>(c)];
    // resample until this signature keeps its distance from every earlier one
    for (int attempt = 0; attempt < kResampleTries; ++attempt) {
      Rng env_rng(derive_seed(seed, seed_tag::synth,
                              static_cast<uint64_t>(c) * kResampleTries +
                                  static_cast<uint64_t>(attempt)));
      for (int g = 0; g < kGaussians; ++g) {
        s.amp[g] = env_rng.uniform(0.6, 1.2);
        s.center[g] = env_rng.uniform(0.15 * static_cast<double>(bands), 0.85 * static_cast<double>(bands));
        s.sigma[g] = env_rng.uniform(0.06 * static_cast<double>(bands), 0.18 * static_cast<double>(bands));
      }
      bool apart = true;
      for (int64_t p = 0; p < c && apart; ++p)
        apart = rms_gap(s, sigs[static_cast<size_t>(p)], bands) >= kMinRmsGap;
      if (apart) break;
    }
    Rng dom_rng(derive_seed(seed, seed_tag::synth, 0x10000 + static_cast<uint64_t>(c)));
    s.gain = 1.0 + domain_shift * dom_rng.uniform(-kGainRange, kGainRange);
    s.offset = domain_shift * dom_rng.uniform(-kOffsetRange, kOffsetRange);
  }

  auto make_domain = [&](int domain) {
    HsiCube cube;
    cube.height = height;
    cube.width = width;
    cube.bands = bands;
    cube.name = domain == 0 ? "synthetic-source" : "synthetic-target";
    cube.reflectance.resize(static_cast<size_t>(height * width * bands));
    cube.labels.resize(static_cast<size_t>(height * width));
    for (int64_t c = 1; c <= num_classes; ++c)
      cube.class_names[static_cast<int>(c)] = "class-" + std::to_string(c);

    // per-class signatures sampled on the (possibly warped) band grid
    std::vector<double> table(static_cast<size_t>(num_classes * bands));
    for (int64_t c = 0; c < num_classes; ++c) {
      const ClassSignature& s = sigs[static_cast<size_t>(c)];
      for (int64_t b = 0; b < bands; ++b) {
        double u = static_cast<double>(b);
        double v;
        if (domain == 0) {
          v = s.value(u);
        } else {
          double warped = u + domain_shift * kWarpAmp *
                                  std::sin(2.0 * std::numbers::pi * u / static_cast<double>(bands));
          v = s.gain * s.value(warped) + s.offset;
        }
        table[static_cast<size_t>(c * bands + b)] = v;
      }
    }

    Rng noise(derive_seed(seed, seed_tag::synth, 0x20000 + static_cast<uint64_t>(domain)));
    for (int64_t y = 0; y < height; ++y) {
      for (int64_t x = 0; x < width; ++x) {
        int64_t cls = ((y / kBlock) + (x / kBlock)) % num_classes;  // 0-based
        cube.labels[static_cast<size_t>(y * width + x)] = static_cast<uint16_t>(cls + 1);
        size_t base = static_cast<size_t>((y * width + x) * bands);
        for (int64_t b = 0; b < bands; ++b) {
          double v = table[static_cast<size_t>(cls * bands + b)];
          if (noise_std > 0.0) v += noise_std * noise.normal();
          cube.reflectance[base + static_cast<size_t>(b)] = static_cast<float>(v);
        }
      }
    }
    return cube;
  };

  SyntheticPair pair;
  pair.source = make_domain(0);
  pair.target = make_domain(1);
  return pair;
}

}  // namespace s2x
