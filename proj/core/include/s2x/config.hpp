#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2x/encoder.hpp"
#include "s2x/finetune.hpp"
#include "s2x/pretrain.hpp"

namespace s2x {

// Shape of the synthetic scene pair the synth subcommand writes.
struct SynthSpec {
  int64_t classes = 4;
  int64_t height = 32;
  int64_t width = 32;
  int64_t bands = 32;
  double shift = 0.2;
  double noise = 0.02;
  uint64_t seed = 1;
};

// One experiment: dataset paths, module settings and ablation switches.
// Flat dotted keys, every key has a default, unknown keys are hard errors.
struct ExperimentConfig {
  std::string source;  // source-domain cube container
  std::string target;  // optional target-domain cube; falls back to source
  std::string out = "runs";
  std::vector<uint64_t> seeds{1};

  bool no_s2former = false;  // drop the bidirectional cross-attention
  bool no_fdc = false;       // drop the frequency-domain term (alpha = 0)
  bool no_daft = false;      // drop the trajectory term (lambda = 0)

  SynthSpec synth;
  EncoderConfig encoder;    // bands is taken from the data at run time
  PretrainConfig pretrain;  // its embedded encoder is ignored; see resolved_pretrain
  FinetuneConfig finetune;

  // "key = value" lines, '#' comments, blank lines allowed. Unknown keys
  // and unparseable values throw ConfigError naming "<source>:<line>".
  static ExperimentConfig parse_text(const std::string& text, const std::string& source_name);
  static ExperimentConfig parse_file(const std::string& path);

  // One line per key in a fixed order. Values the literature does not pin
  // down carry a trailing "# chosen" comment. parse_text(dump()) is the
  // identity.
  std::string dump() const;
};

// Fine-tuning batch defaults keyed by scene name (case-insensitive):
// pu/pc 45, sa 80, hu 75; 0 (every train pixel at once) otherwise.
int64_t dataset_default_batch(const std::string& scene_name);

// Pretraining settings with the shared encoder block and the ablation
// switches folded in.
PretrainConfig resolved_pretrain(const ExperimentConfig& cfg);

// Fine-tuning settings with ablations and the per-dataset batch default
// folded in.
FinetuneConfig resolved_finetune(const ExperimentConfig& cfg, const std::string& scene_name);

}  // namespace s2x
