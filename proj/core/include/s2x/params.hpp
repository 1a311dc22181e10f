#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "s2x/tensor.hpp"

namespace s2x {

// Named parameter collection. Iteration order is insertion order so optimizer
// state and checkpoints line up across runs regardless of name hashing.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  bool has(const std::string& name) const { return by_name_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }
  int64_t total_elements() const;
  void set_requires_grad(bool on);
  void zero_grad();

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> by_name_;
};

}  // namespace s2x
