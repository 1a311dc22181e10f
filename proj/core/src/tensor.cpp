#include "s2x/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace s2x {

int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) throw ShapeError("shape with non-positive extent " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace {

std::shared_ptr<detail::Node> make_leaf(const char* op, const Shape& shape) {
  auto n = std::make_shared<detail::Node>();
  n->op = op;
  n->shape = shape;
  n->leaf = true;
  n->val.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  return n;
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape) { return Tensor(make_leaf("zeros", shape)); }

Tensor Tensor::full(const Shape& shape, double v) {
  auto n = make_leaf("full", shape);
  for (double& x : n->val) x = v;
  return Tensor(n);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> data) {
  if (numel_of(shape) != static_cast<int64_t>(data.size()))
    throw ShapeError("from: shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  auto n = make_leaf("from", shape);
  n->val = std::move(data);
  return Tensor(n);
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::randn(const Shape& shape, Rng& rng, double mean, double stddev) {
  auto n = make_leaf("randn", shape);
  for (double& x : n->val) x = mean + stddev * rng.normal();
  return Tensor(n);
}

Tensor Tensor::rand_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  auto n = make_leaf("rand_uniform", shape);
  for (double& x : n->val) x = rng.uniform(lo, hi);
  return Tensor(n);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("shape() on undefined tensor");
  return node_->shape;
}

int64_t Tensor::dim(int64_t i) const {
  const Shape& s = shape();
  if (i < 0) i += static_cast<int64_t>(s.size());
  if (i < 0 || i >= static_cast<int64_t>(s.size()))
    throw ShapeError("dim index out of range for " + shape_str(s));
  return s[static_cast<size_t>(i)];
}

int64_t Tensor::numel() const {
  if (!node_) throw ContractError("numel() on undefined tensor");
  return node_->numel();
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw ContractError("values() on undefined tensor");
  return node_->val;
}

double Tensor::scalar_value() const {
  if (numel() != 1) throw ContractError("scalar_value() on tensor of shape " + shape_str(shape()));
  return node_->val[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("set_requires_grad() on undefined tensor");
  if (on && !is_leaf())
    throw ContractError("set_requires_grad(true) is only valid on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return node_ && node_->leaf; }

const std::vector<double>& Tensor::grad() {
  if (!node_) throw ContractError("grad() on undefined tensor");
  if (!node_->requires_grad) throw ContractError("grad() on tensor that does not require grad");
  node_->ensure_grad();
  return node_->grad;
}

bool Tensor::grad_populated() const { return node_ && !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_) throw ContractError("mutable_values() on undefined tensor");
  if (!is_leaf()) throw ContractError("mutable_values() is only valid on leaf tensors");
  return node_->val;
}

void backward(const Tensor& loss, bool retain_graph) {
  if (!loss.defined()) throw ContractError("backward: undefined loss tensor");
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  auto root = loss.node();
  if (!root->requires_grad)
    throw ContractError("backward: loss does not require grad (no parameters on its tape)");

  // iterative post-order DFS over parents
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;

  // order is post-order, so reverse iteration visits each node before its parents
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn();
  }

  if (!retain_graph) {
    for (detail::Node* n : order) {
      n->backward_fn = nullptr;
      n->parents.clear();
    }
  }
}

}  // namespace s2x
