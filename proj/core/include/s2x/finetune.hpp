#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2x/checkpoint.hpp"
#include "s2x/cube.hpp"
#include "s2x/diffusion.hpp"
#include "s2x/encoder.hpp"
#include "s2x/fewshot.hpp"
#include "s2x/metrics.hpp"
#include "s2x/tokens.hpp"

namespace s2x {

struct FinetuneConfig {
  int64_t epochs = 100;
  int64_t batch = 0;  // 0: every few-shot train pixel in one step
  double lr = 1e-3;
  double lr_decay = 0.99;  // multiplicative, per epoch
  double lambda = 1.0;     // trajectory term weight; 0 disables the teacher
  int64_t traj_draws = 4;  // timestep draws averaged by the trajectory term
  int64_t shots = 5;       // labeled pixels per class
  int64_t window = 9;
  int64_t patch = 3;
  uint64_t seed = 1;

  void validate() const;
};

// Frozen teacher and trainable student sharing the pretrained encoder
// weights; the student additionally carries the classifier head. The
// teacher digest is taken at construction so later steps can verify the
// teacher never moved.
struct TeacherStudent {
  ParamStore teacher;
  ParamStore student;
  EncoderConfig config;  // class-token mode
  int64_t classes = 0;
  uint64_t teacher_digest = 0;
};

// Byte-level fingerprint of every parameter value in the store.
uint64_t params_digest(const ParamStore& ps);

// Copies the encoder parameters out of a pretraining checkpoint twice and
// gives the student a fresh classifier head. The class token does not
// exist at pretraining time, so teacher and student share a fresh one.
// Teacher parameters are detached copies with gradients off.
TeacherStudent make_teacher_student(const ParamStore& pretrained, const EncoderConfig& encoder,
                                    int64_t classes, uint64_t seed);

// ContractError when the teacher has moved or takes gradients.
void assert_teacher_frozen(const TeacherStudent& ts);

// The class-slot feature: row 0 of the fused output, B x D.
Tensor class_feature(const EncodeResult& enc);

// Affine head over class features -> B x K logits.
Tensor classify(const Tensor& feature, const ParamStore& ps);

// Cross entropy with per-sample noise-aware weights w = 1/(1 + snr(t)),
// renormalized so the batch-mean weight is 1.
Tensor snr_weighted_ce(const Tensor& logits, const std::vector<int64_t>& labels,
                       const std::vector<int64_t>& ts, const DiffusionSchedule& sched);

// Mean over the batch of 1 - cos(f_s, f_t). Zero-norm rows contribute
// exactly 1 (their cosine is defined as 0) and are counted in zero_rows.
Tensor trajectory_term(const Tensor& f_s, const Tensor& f_t, int64_t* zero_rows = nullptr);

struct FinetuneParts {
  Tensor total;
  Tensor cls;
  Tensor dta;  // zero constant when lambda == 0
  double mean_t = 0.0;
  int64_t zero_norm_rows = 0;
};

// One objective evaluation: clean class logits from the student, weighted
// cross entropy at the first timestep draw, and (unless lambda is 0) the
// teacher-student trajectory term averaged over traj_draws noisy passes.
// Teacher and student see identical noised inputs.
FinetuneParts finetune_step(const TokenBatch& batch, const std::vector<int64_t>& labels,
                            const TeacherStudent& ts, const DiffusionSchedule& sched,
                            double lambda, int64_t traj_draws, uint64_t step_seed);

// Class predictions (1..K) for the given pixels from the clean, noise-free
// pass. Windows are never masked.
std::vector<int64_t> predict_labels(const HsiCube& cube,
                                    const std::vector<std::pair<int64_t, int64_t>>& coords,
                                    const ParamStore& ps, const EncoderConfig& config,
                                    int64_t window, int64_t patch, int64_t batch = 256);

struct FinetuneOutcome {
  std::string checkpoint_path;  // student checkpoint ("student.ckpt")
  std::string log_path;         // "finetune_log.tsv"
  int64_t steps_run = 0;
  int64_t epochs_completed = 0;
  Scores eval;  // scored on every labeled pixel outside the train split
};

// Few-shot supervised fine-tuning on top of a pretraining checkpoint. The
// band projection and noise schedule ride in from the checkpoint; the
// student checkpoint carries them onward.
FinetuneOutcome finetune_loop(const HsiCube& cube, const LoadedCheckpoint& pretrained,
                              const FinetuneConfig& config, const std::string& out_dir);

}  // namespace s2x
