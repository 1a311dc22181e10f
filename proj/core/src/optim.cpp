#include "s2x/optim.hpp"

#include <cmath>

#include "s2x/errors.hpp"

namespace s2x {

namespace {
// Round through binary32 so moment state survives a float checkpoint exactly.
inline double snap(double x) { return static_cast<double>(static_cast<float>(x)); }
}  // namespace

Adam::Adam(ParamStore& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ParamError("adam betas must lie in [0,1)");
  if (eps <= 0.0) throw ParamError("adam epsilon must be positive");
}

void Adam::set_step_count(int64_t t) {
  if (t < 0) throw ParamError("adam step count must be >= 0");
  step_ = t;
}

void Adam::step(double lr) {
  if (!(lr > 0.0)) throw ParamError("adam learning rate must be positive");
  ++step_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (const auto& name : params_->names()) {
    Tensor& p = params_->get(name);
    if (!p.requires_grad()) continue;
    const std::vector<double>& g = p.grad();
    Moments& mo = state_[name];
    if (mo.m.empty()) {
      mo.m.assign(g.size(), 0.0);
      mo.v.assign(g.size(), 0.0);
    } else if (mo.m.size() != g.size()) {
      throw ContractError("adam state size mismatch for " + name);
    }
    std::vector<double>& vals = p.mutable_values();
    for (size_t i = 0; i < g.size(); ++i) {
      mo.m[i] = snap(beta1_ * mo.m[i] + (1.0 - beta1_) * g[i]);
      mo.v[i] = snap(beta2_ * mo.v[i] + (1.0 - beta2_) * g[i] * g[i]);
      double mhat = mo.m[i] / bc1;
      double vhat = mo.v[i] / bc2;
      vals[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::set_state(const std::string& name, std::vector<double> m, std::vector<double> v) {
  if (m.size() != v.size()) throw ContractError("adam moment vectors disagree for " + name);
  if (!params_->has(name)) throw ContractError("adam state for unknown parameter " + name);
  if (static_cast<int64_t>(m.size()) != params_->get(name).numel())
    throw ContractError("adam state size mismatch for " + name);
  state_[name] = Moments{std::move(m), std::move(v)};
}

}  // namespace s2x
