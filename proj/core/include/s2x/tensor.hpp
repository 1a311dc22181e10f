#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "s2x/errors.hpp"
#include "s2x/rng.hpp"

namespace s2x {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One node of the recorded computation graph. Ops allocate a node per output;
// backward_fn reads this node's grad and accumulates into the parents' grads.
struct Node {
  std::string op;
  Shape shape;
  std::vector<double> val;
  bool leaf = false;  // set only by Tensor factories; op outputs stay false
  bool requires_grad = false;
  std::vector<double> grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(val.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(val.size(), 0.0);
  }
};

}  // namespace detail

// Value-semantics handle to a graph node. Values are immutable after
// construction; the only sanctioned mutation is mutable_values() on leaves,
// used by optimizers between steps, and the grad buffer itself.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor from(const Shape& shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor randn(const Shape& shape, Rng& rng, double mean = 0.0, double stddev = 1.0);
  static Tensor rand_uniform(const Shape& shape, Rng& rng, double lo = 0.0, double hi = 1.0);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const { return static_cast<int64_t>(shape().size()); }
  int64_t dim(int64_t i) const;
  int64_t numel() const;

  const std::vector<double>& values() const;
  double scalar_value() const;  // requires numel == 1

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);  // leaves only
  bool is_leaf() const;

  // Zeros-filled if backward never reached this tensor.
  const std::vector<double>& grad();
  bool grad_populated() const;
  void zero_grad();

  // Leaf-only escape hatch for optimizer updates between steps.
  std::vector<double>& mutable_values();

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a scalar loss. Populates grad on every reachable
// requires_grad tensor. Releases the recorded graph unless retain_graph.
void backward(const Tensor& loss, bool retain_graph = false);

}  // namespace s2x
