#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2x/params.hpp"

namespace s2x {

// Adaptive moment estimation over the trainable subset of a ParamStore
// (tensors with requires_grad set). Moment buffers are rounded through
// float after every update and the step counter is checkpointable, so a
// resumed run walks the identical trajectory as an uninterrupted one.
class Adam {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  explicit Adam(ParamStore& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // One update using the gradients currently on the parameters. Does not
  // clear them; callers zero grads when they are done with the step.
  void step(double lr);

  int64_t step_count() const { return step_; }
  void set_step_count(int64_t t);

  // Checkpoint access. Reading an untouched optimizer yields empty state.
  const std::unordered_map<std::string, Moments>& state() const { return state_; }
  void set_state(const std::string& name, std::vector<double> m, std::vector<double> v);

 private:
  ParamStore* params_;
  double beta1_, beta2_, eps_;
  int64_t step_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

}  // namespace s2x
