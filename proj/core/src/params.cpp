#include "s2x/params.hpp"

namespace s2x {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (name.empty()) throw ParamError("parameter name must not be empty");
  if (!t.defined()) throw ParamError("parameter '" + name + "' is undefined");
  auto [it, inserted] = by_name_.emplace(name, std::move(t));
  if (!inserted) throw ParamError("duplicate parameter name '" + name + "'");
  order_.push_back(name);
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ParamError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ParamError("unknown parameter '" + name + "'");
  return it->second;
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (const auto& kv : by_name_) n += kv.second.numel();
  return n;
}

void ParamStore::set_requires_grad(bool on) {
  for (const auto& name : order_) get(name).set_requires_grad(on);
}

void ParamStore::zero_grad() {
  for (const auto& name : order_) get(name).zero_grad();
}

}  // namespace s2x
