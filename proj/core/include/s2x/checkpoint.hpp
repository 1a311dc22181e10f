#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "s2x/encoder.hpp"
#include "s2x/optim.hpp"
#include "s2x/params.hpp"
#include "s2x/pca.hpp"

namespace s2x {

// Training snapshot header. `extra` carries free-form key=value strings
// (schedule bounds, token geometry, class count) so a checkpoint is
// self-describing; keys are stored sorted for byte-stable files.
struct CheckpointMeta {
  std::string kind;  // "pretrain" or "finetune"
  int64_t epoch = 0;
  int64_t adam_step = 0;
  EncoderConfig encoder;
  std::map<std::string, std::string> extra;
};

struct LoadedCheckpoint {
  CheckpointMeta meta;
  ParamStore params;
  std::map<std::string, Adam::Moments> adam;
};

// Rounds every parameter value through float in place. Train loops call
// this right before saving so the live state matches what a resumed run
// will read back, making resume bit-exact.
void quantize_params(ParamStore& ps);

// Binary container: magic "S2CK", u16 version, u32 header length, header
// text (key=value lines), u32 tensor count, then per tensor a u16 name
// length, the name, u8 rank, u32 extents, and float payload, all
// little-endian. Optimizer moments ride along as "adam/{m,v}/<name>".
void save_checkpoint(const std::string& path, const CheckpointMeta& meta, const ParamStore& params,
                     const Adam* adam = nullptr);

LoadedCheckpoint load_checkpoint(const std::string& path);

// "" when `actual` has exactly the tensors of `expected` with equal shapes;
// otherwise a readable list of missing / unexpected / mismatched entries.
std::string structure_diff(const ParamStore& expected, const ParamStore& actual);

// Band-projection state rides inside checkpoints as frozen "pca/" tensors
// so fine-tuning projects exactly like the pretraining run did.
void pca_to_params(const PcaModel& model, ParamStore& ps);
bool has_pca(const ParamStore& ps);
PcaModel pca_from_params(const ParamStore& ps);  // requires has_pca

}  // namespace s2x
