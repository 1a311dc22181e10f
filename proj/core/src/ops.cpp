#include "s2x/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace s2x {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr out_node(std::string op, Shape shape) {
  auto n = std::make_shared<Node>();
  n->op = std::move(op);
  n->shape = std::move(shape);
  n->val.assign(static_cast<size_t>(numel_of(n->shape)), 0.0);
  return n;
}

void finite_check(const Node& out, std::initializer_list<const Tensor*> ins) {
  for (double v : out.val) {
    if (!std::isfinite(v)) {
      std::string msg = "op '" + out.op + "' produced a non-finite value; input shapes:";
      for (const Tensor* t : ins) msg += " " + shape_str(t->shape());
      throw NumericalError(msg);
    }
  }
}

void require_defined(const char* op, std::initializer_list<const Tensor*> ins) {
  for (const Tensor* t : ins)
    if (!t->defined()) throw ContractError(std::string(op) + ": undefined input tensor");
}

Shape bcast_shape(const char* op, const Shape& a, const Shape& b) {
  size_t nd = std::max(a.size(), b.size());
  Shape out(nd);
  for (size_t i = 0; i < nd; ++i) {
    int64_t da = i + a.size() < nd ? 1 : a[i - (nd - a.size())];
    int64_t db = i + b.size() < nd ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible");
    out[i] = std::max(da, db);
  }
  return out;
}

// element strides of `in` viewed through `out`, 0 where `in` is broadcast
std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  std::vector<int64_t> own(in.size());
  int64_t stride = 1;
  for (size_t i = in.size(); i-- > 0;) {
    own[i] = stride;
    stride *= in[i];
  }
  std::vector<int64_t> st(out.size(), 0);
  size_t off = out.size() - in.size();
  for (size_t i = off; i < out.size(); ++i) {
    size_t j = i - off;
    st[i] = (in[j] == 1 && out[i] != 1) ? 0 : own[j];
  }
  return st;
}

// iterate the flat index space of `out`, tracking two broadcast input offsets
template <class Fn>
void for_each_bcast2(const Shape& out, const std::vector<int64_t>& sa,
                     const std::vector<int64_t>& sb, Fn&& fn) {
  int64_t n = numel_of(out);
  int nd = static_cast<int>(out.size());
  std::vector<int64_t> coord(static_cast<size_t>(nd), 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (int d = nd - 1; d >= 0; --d) {
      coord[static_cast<size_t>(d)]++;
      ia += sa[static_cast<size_t>(d)];
      ib += sb[static_cast<size_t>(d)];
      if (coord[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
      ia -= sa[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
      ib -= sb[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
      coord[static_cast<size_t>(d)] = 0;
    }
  }
}

struct BinOp {
  double (*f)(double, double);
  double (*dfa)(double, double);
  double (*dfb)(double, double);
};

Tensor binary_broadcast(const char* name, const Tensor& A, const Tensor& B, BinOp op) {
  require_defined(name, {&A, &B});
  auto an = A.node();
  auto bn = B.node();
  Shape os = bcast_shape(name, an->shape, bn->shape);
  auto out = out_node(name, os);
  auto sa = bcast_strides(an->shape, os);
  auto sb = bcast_strides(bn->shape, os);
  for_each_bcast2(os, sa, sb, [&](int64_t i, int64_t ia, int64_t ib) {
    out->val[static_cast<size_t>(i)] =
        op.f(an->val[static_cast<size_t>(ia)], bn->val[static_cast<size_t>(ib)]);
  });
  finite_check(*out, {&A, &B});
  bool rga = an->requires_grad, rgb = bn->requires_grad;
  if (rga || rgb) {
    out->requires_grad = true;
    out->parents = {an, bn};
    Node* o = out.get();
    out->backward_fn = [o, an, bn, sa, sb, op, rga, rgb]() {
      if (rga) an->ensure_grad();
      if (rgb) bn->ensure_grad();
      for_each_bcast2(o->shape, sa, sb, [&](int64_t i, int64_t ia, int64_t ib) {
        double g = o->grad[static_cast<size_t>(i)];
        double av = an->val[static_cast<size_t>(ia)];
        double bv = bn->val[static_cast<size_t>(ib)];
        if (rga) an->grad[static_cast<size_t>(ia)] += g * op.dfa(av, bv);
        if (rgb) bn->grad[static_cast<size_t>(ib)] += g * op.dfb(av, bv);
      });
    };
  }
  return Tensor(out);
}

struct UnOp {
  double (*f)(double);
  double (*df)(double x, double y);  // partial as a function of input and output
};

Tensor unary_ew(const char* name, const Tensor& A, UnOp op) {
  require_defined(name, {&A});
  auto an = A.node();
  auto out = out_node(name, an->shape);
  for (size_t i = 0; i < an->val.size(); ++i) out->val[i] = op.f(an->val[i]);
  finite_check(*out, {&A});
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* o = out.get();
    out->backward_fn = [o, an, op]() {
      an->ensure_grad();
      for (size_t i = 0; i < o->val.size(); ++i)
        an->grad[i] += o->grad[i] * op.df(an->val[i], o->val[i]);
    };
  }
  return Tensor(out);
}

// C (M x N, row-major) += op(A) * op(B); op(A) is M x K, op(B) is K x N.
// tA means A is stored K x M; tB means B is stored N x K.
void gemm(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N, bool tA,
          bool tB) {
  if (!tA && !tB) {
    for (int64_t m = 0; m < M; ++m) {
      double* crow = C + m * N;
      const double* arow = A + m * K;
      for (int64_t k = 0; k < K; ++k) {
        double a = arow[k];
        if (a == 0.0) continue;
        const double* brow = B + k * N;
        for (int64_t n = 0; n < N; ++n) crow[n] += a * brow[n];
      }
    }
  } else if (tA && !tB) {
    for (int64_t k = 0; k < K; ++k) {
      const double* arow = A + k * M;
      const double* brow = B + k * N;
      for (int64_t m = 0; m < M; ++m) {
        double a = arow[m];
        if (a == 0.0) continue;
        double* crow = C + m * N;
        for (int64_t n = 0; n < N; ++n) crow[n] += a * brow[n];
      }
    }
  } else if (!tA && tB) {
    for (int64_t m = 0; m < M; ++m) {
      const double* arow = A + m * K;
      double* crow = C + m * N;
      for (int64_t n = 0; n < N; ++n) {
        const double* brow = B + n * K;
        double s = 0.0;
        for (int64_t k = 0; k < K; ++k) s += arow[k] * brow[k];
        crow[n] += s;
      }
    }
  } else {
    for (int64_t m = 0; m < M; ++m) {
      double* crow = C + m * N;
      for (int64_t n = 0; n < N; ++n) {
        const double* brow = B + n * K;
        double s = 0.0;
        for (int64_t k = 0; k < K; ++k) s += A[k * M + m] * brow[k];
        crow[n] += s;
      }
    }
  }
}

// axis helpers: outer * len * inner layout for a given axis
void axis_layout(const Shape& s, int64_t axis, int64_t& outer, int64_t& len, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  len = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

int64_t norm_axis(const char* op, const Shape& s, int64_t axis) {
  int64_t r = static_cast<int64_t>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r)
    throw ShapeError(std::string(op) + ": axis out of range for " + shape_str(s));
  return axis;
}

double d_one(double, double) { return 1.0; }
double d_neg_one(double, double) { return -1.0; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_broadcast("add", a, b, {[](double x, double y) { return x + y; }, d_one, d_one});
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_broadcast("sub", a, b,
                          {[](double x, double y) { return x - y; }, d_one, d_neg_one});
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_broadcast("mul", a, b,
                          {[](double x, double y) { return x * y; },
                           [](double, double y) { return y; }, [](double x, double) { return x; }});
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_broadcast("div", a, b,
                          {[](double x, double y) { return x / y; },
                           [](double, double y) { return 1.0 / y; },
                           [](double x, double y) { return -x / (y * y); }});
}

Tensor add_scalar(const Tensor& a, double s) {
  require_defined("add_scalar", {&a});
  auto an = a.node();
  auto out = out_node("add_scalar", an->shape);
  for (size_t i = 0; i < an->val.size(); ++i) out->val[i] = an->val[i] + s;
  finite_check(*out, {&a});
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* o = out.get();
    out->backward_fn = [o, an]() {
      an->ensure_grad();
      for (size_t i = 0; i < o->val.size(); ++i) an->grad[i] += o->grad[i];
    };
  }
  return Tensor(out);
}

Tensor mul_scalar(const Tensor& a, double s) {
  require_defined("mul_scalar", {&a});
  auto an = a.node();
  auto out = out_node("mul_scalar", an->shape);
  for (size_t i = 0; i < an->val.size(); ++i) out->val[i] = an->val[i] * s;
  finite_check(*out, {&a});
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* o = out.get();
    out->backward_fn = [o, an, s]() {
      an->ensure_grad();
      for (size_t i = 0; i < o->val.size(); ++i) an->grad[i] += o->grad[i] * s;
    };
  }
  return Tensor(out);
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor abs(const Tensor& a) {
  return unary_ew("abs", a,
                  {[](double x) { return std::fabs(x); },
                   [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }});
}

Tensor sqrt(const Tensor& a) {
  return unary_ew("sqrt", a,
                  {[](double x) { return std::sqrt(x); },
                   [](double, double y) { return 0.5 / y; }});
}

Tensor exp(const Tensor& a) {
  return unary_ew("exp", a,
                  {[](double x) { return std::exp(x); }, [](double, double y) { return y; }});
}

Tensor log(const Tensor& a) {
  return unary_ew("log", a,
                  {[](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }});
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
  constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
  return unary_ew("gelu", a,
                  {[](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
                   [](double x, double) {
                     double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                     double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                     return cdf + x * pdf;
                   }});
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  require_defined("reshape", {&a});
  auto an = a.node();
  if (numel_of(shape) != an->numel())
    throw ShapeError("reshape: cannot view " + shape_str(an->shape) + " as " + shape_str(shape));
  auto out = out_node("reshape", shape);
  out->val = an->val;
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* o = out.get();
    out->backward_fn = [o, an]() {
      an->ensure_grad();
      for (size_t i = 0; i < o->val.size(); ++i) an->grad[i] += o->grad[i];
    };
  }
  return Tensor(out);
}

namespace {

// visit (flat_in, flat_out) pairs for a transpose of axes i and j
template <class Fn>
void transpose_visit(const Shape& in, int64_t i, int64_t j, Fn&& fn) {
  size_t nd = in.size();
  Shape out_shape = in;
  std::swap(out_shape[static_cast<size_t>(i)], out_shape[static_cast<size_t>(j)]);
  std::vector<int64_t> out_strides(nd);
  int64_t st = 1;
  for (size_t d = nd; d-- > 0;) {
    out_strides[d] = st;
    st *= out_shape[d];
  }
  // stride of input dim d within the output index space
  std::vector<int64_t> map_strides(nd);
  for (size_t d = 0; d < nd; ++d) {
    size_t od = d;
    if (static_cast<int64_t>(d) == i)
      od = static_cast<size_t>(j);
    else if (static_cast<int64_t>(d) == j)
      od = static_cast<size_t>(i);
    map_strides[d] = out_strides[od];
  }
  std::vector<int64_t> coord(nd, 0);
  int64_t n = numel_of(in);
  int64_t iout = 0;
  for (int64_t iin = 0; iin < n; ++iin) {
    fn(iin, iout);
    for (size_t d = nd; d-- > 0;) {
      coord[d]++;
      iout += map_strides[d];
      if (coord[d] < in[d]) break;
      iout -= map_strides[d] * in[d];
      coord[d] = 0;
    }
  }
}

}  // namespace

Tensor transpose(const Tensor& a, int64_t i, int64_t j) {
  require_defined("transpose", {&a});
  auto an = a.node();
  i = norm_axis("transpose", an->shape, i);
  j = norm_axis("transpose", an->shape, j);
  Shape os = an->shape;
  std::swap(os[static_cast<size_t>(i)], os[static_cast<size_t>(j)]);
  auto out = out_node("transpose", os);
  transpose_visit(an->shape, i, j, [&](int64_t iin, int64_t iout) {
    out->val[static_cast<size_t>(iout)] = an->val[static_cast<size_t>(iin)];
  });
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* o = out.get();
    Shape in_shape = an->shape;
    out->backward_fn = [o, an, in_shape, i, j]() {
      an->ensure_grad();
      transpose_visit(in_shape, i, j, [&](int64_t iin, int64_t iout) {
        an->grad[static_cast<size_t>(iin)] += o->grad[static_cast<size_t>(iout)];
      });
    };
  }
  return Tensor(out);
}

Tensor expand(const Tensor& a, const Shape& shape) {
  require_defined("expand", {&a});
  auto an = a.node();
  if (shape.size() < an->shape.size())
    throw ShapeError("expand: target rank below input rank");
  Shape check = bcast_shape("expand", an->shape, shape);
  if (check != shape)
    throw ShapeError("expand: cannot broadcast " + shape_str(an->shape) + " to " +
                     shape_str(shape));
  auto out = out_node("expand", shape);
  auto sa = bcast_strides(an->shape, shape);
  std::vector<int64_t> dummy(shape.size(), 0);
  for_each_bcast2(shape, sa, dummy, [&](int64_t i, int64_t ia, int64_t) {
    out->val[static_cast<size_t>(i)] = an->val[static_cast<size_t>(ia)];
  });
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* o = out.get();
    out->backward_fn = [o, an, sa]() {
      an->ensure_grad();
      std::vector<int64_t> dummy2(o->shape.size(), 0);
      for_each_bcast2(o->shape, sa, dummy2, [&](int64_t i, int64_t ia, int64_t) {
        an->grad[static_cast<size_t>(ia)] += o->grad[static_cast<size_t>(i)];
      });
    };
  }
  return Tensor(out);
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  for (const Tensor& t : parts) require_defined("concat", {&t});
  const Shape& s0 = parts[0].shape();
  axis = norm_axis("concat", s0, axis);
  Shape os = s0;
  int64_t total = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (size_t d = 0; d < s.size(); ++d)
      if (static_cast<int64_t>(d) != axis && s[d] != s0[d])
        throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
    total += s[static_cast<size_t>(axis)];
  }
  os[static_cast<size_t>(axis)] = total;
  auto out = out_node("concat", os);

  int64_t outer, len0, inner;
  axis_layout(s0, axis, outer, len0, inner);
  (void)len0;
  int64_t out_row = total * inner;
  int64_t off = 0;
  std::vector<int64_t> offsets(parts.size());
  for (size_t p = 0; p < parts.size(); ++p) {
    offsets[p] = off;
    auto pn = parts[p].node();
    int64_t plen = pn->shape[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = pn->val.data() + o * plen * inner;
      double* dst = out->val.data() + o * out_row + off * inner;
      std::memcpy(dst, src, static_cast<size_t>(plen * inner) * sizeof(double));
    }
    off += plen;
  }
  bool any = false;
  for (const Tensor& t : parts) any = any || t.requires_grad();
  if (any) {
    out->requires_grad = true;
    for (const Tensor& t : parts) out->parents.push_back(t.node());
    Node* o = out.get();
    std::vector<NodePtr> pnodes = out->parents;
    out->backward_fn = [o, pnodes, offsets, outer, inner, out_row, axis]() {
      for (size_t p = 0; p < pnodes.size(); ++p) {
        Node* pn = pnodes[p].get();
        if (!pn->requires_grad) continue;
        pn->ensure_grad();
        int64_t plen = pn->shape[static_cast<size_t>(axis)];
        for (int64_t ob = 0; ob < outer; ++ob) {
          const double* src = o->grad.data() + ob * out_row + offsets[p] * inner;
          double* dst = pn->grad.data() + ob * plen * inner;
          for (int64_t t = 0; t < plen * inner; ++t) dst[t] += src[t];
        }
      }
    };
  }
  return Tensor(out);
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t k) {
  require_defined("gather_rows", {&x});
  auto xn = x.node();
  if (xn->shape.size() != 3) throw ShapeError("gather_rows: expected rank-3, got " + shape_str(xn->shape));
  int64_t B = xn->shape[0], N = xn->shape[1], C = xn->shape[2];
  if (k < 0 || static_cast<int64_t>(idx.size()) != B * k)
    throw ShapeError("gather_rows: index list length " + std::to_string(idx.size()) +
                     " does not match B*k = " + std::to_string(B * k));
  for (int64_t v : idx)
    if (v < 0 || v >= N) throw ParamError("gather_rows: index " + std::to_string(v) + " out of range");
  auto out = out_node("gather_rows", {B, k, C});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t j = 0; j < k; ++j)
      std::memcpy(out->val.data() + (b * k + j) * C,
                  xn->val.data() + (b * N + idx[static_cast<size_t>(b * k + j)]) * C,
                  static_cast<size_t>(C) * sizeof(double));
  if (xn->requires_grad) {
    out->requires_grad = true;
    out->parents = {xn};
    Node* o = out.get();
    std::vector<int64_t> ix = idx;
    out->backward_fn = [o, xn, ix, B, N, C, k]() {
      xn->ensure_grad();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < k; ++j) {
          const double* g = o->grad.data() + (b * k + j) * C;
          double* dst = xn->grad.data() + (b * N + ix[static_cast<size_t>(b * k + j)]) * C;
          for (int64_t c = 0; c < C; ++c) dst[c] += g[c];
        }
    };
  }
  return Tensor(out);
}

Tensor scatter_rows(const Tensor& base, const std::vector<int64_t>& idx, int64_t k,
                    const Tensor& src) {
  require_defined("scatter_rows", {&base, &src});
  auto bn = base.node();
  auto sn = src.node();
  if (bn->shape.size() != 3 || sn->shape.size() != 3)
    throw ShapeError("scatter_rows: expected rank-3 inputs");
  int64_t B = bn->shape[0], N = bn->shape[1], C = bn->shape[2];
  if (sn->shape[0] != B || sn->shape[1] != k || sn->shape[2] != C)
    throw ShapeError("scatter_rows: src shape " + shape_str(sn->shape) + " does not match " +
                     shape_str({B, k, C}));
  if (static_cast<int64_t>(idx.size()) != B * k)
    throw ShapeError("scatter_rows: index list length mismatch");
  for (int64_t v : idx)
    if (v < 0 || v >= N) throw ParamError("scatter_rows: index " + std::to_string(v) + " out of range");
  auto out = out_node("scatter_rows", bn->shape);
  out->val = bn->val;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t j = 0; j < k; ++j)
      std::memcpy(out->val.data() + (b * N + idx[static_cast<size_t>(b * k + j)]) * C,
                  sn->val.data() + (b * k + j) * C, static_cast<size_t>(C) * sizeof(double));
  bool rgb = bn->requires_grad, rgs = sn->requires_grad;
  if (rgb || rgs) {
    out->requires_grad = true;
    out->parents = {bn, sn};
    Node* o = out.get();
    std::vector<int64_t> ix = idx;
    out->backward_fn = [o, bn, sn, ix, B, N, C, k, rgb, rgs]() {
      if (rgb) {
        bn->ensure_grad();
        std::vector<char> hit(static_cast<size_t>(B * N), 0);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t j = 0; j < k; ++j)
            hit[static_cast<size_t>(b * N + ix[static_cast<size_t>(b * k + j)])] = 1;
        for (int64_t r = 0; r < B * N; ++r) {
          if (hit[static_cast<size_t>(r)]) continue;
          const double* g = o->grad.data() + r * C;
          double* dst = bn->grad.data() + r * C;
          for (int64_t c = 0; c < C; ++c) dst[c] += g[c];
        }
      }
      if (rgs) {
        sn->ensure_grad();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t j = 0; j < k; ++j) {
            const double* g = o->grad.data() + (b * N + ix[static_cast<size_t>(b * k + j)]) * C;
            double* dst = sn->grad.data() + (b * k + j) * C;
            for (int64_t c = 0; c < C; ++c) dst[c] += g[c];
          }
      }
    };
  }
  return Tensor(out);
}

Tensor select_index(const Tensor& x, const std::vector<int64_t>& idx) {
  require_defined("select_index", {&x});
  auto xn = x.node();
  if (xn->shape.size() != 2) throw ShapeError("select_index: expected rank-2, got " + shape_str(xn->shape));
  int64_t B = xn->shape[0], K = xn->shape[1];
  if (static_cast<int64_t>(idx.size()) != B) throw ShapeError("select_index: index list length mismatch");
  for (int64_t v : idx)
    if (v < 0 || v >= K) throw ParamError("select_index: index out of range");
  auto out = out_node("select_index", {B});
  for (int64_t b = 0; b < B; ++b)
    out->val[static_cast<size_t>(b)] = xn->val[static_cast<size_t>(b * K + idx[static_cast<size_t>(b)])];
  if (xn->requires_grad) {
    out->requires_grad = true;
    out->parents = {xn};
    Node* o = out.get();
    std::vector<int64_t> ix = idx;
    out->backward_fn = [o, xn, ix, B, K]() {
      xn->ensure_grad();
      for (int64_t b = 0; b < B; ++b)
        xn->grad[static_cast<size_t>(b * K + ix[static_cast<size_t>(b)])] +=
            o->grad[static_cast<size_t>(b)];
    };
  }
  return Tensor(out);
}

namespace {

Tensor reduce_axis(const char* name, const Tensor& a, int64_t axis, bool keepdim, bool take_mean) {
  require_defined(name, {&a});
  auto an = a.node();
  axis = norm_axis(name, an->shape, axis);
  int64_t outer, len, inner;
  axis_layout(an->shape, axis, outer, len, inner);
  Shape os;
  for (size_t d = 0; d < an->shape.size(); ++d) {
    if (static_cast<int64_t>(d) == axis) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(an->shape[d]);
    }
  }
  if (os.empty()) os.push_back(1);
  auto out = out_node(name, os);
  double scale = take_mean ? 1.0 / static_cast<double>(len) : 1.0;
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      double s = 0.0;
      const double* base = an->val.data() + o * len * inner + in;
      for (int64_t l = 0; l < len; ++l) s += base[l * inner];
      out->val[static_cast<size_t>(o * inner + in)] = s * scale;
    }
  finite_check(*out, {&a});
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* onode = out.get();
    out->backward_fn = [onode, an, outer, len, inner, scale]() {
      an->ensure_grad();
      for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
          double g = onode->grad[static_cast<size_t>(o * inner + in)] * scale;
          double* base = an->grad.data() + o * len * inner + in;
          for (int64_t l = 0; l < len; ++l) base[l * inner] += g;
        }
    };
  }
  return Tensor(out);
}

Tensor reduce_all(const char* name, const Tensor& a, bool take_mean) {
  require_defined(name, {&a});
  auto an = a.node();
  auto out = out_node(name, {1});
  double s = 0.0;
  for (double v : an->val) s += v;
  double scale = take_mean ? 1.0 / static_cast<double>(an->val.size()) : 1.0;
  out->val[0] = s * scale;
  finite_check(*out, {&a});
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* o = out.get();
    out->backward_fn = [o, an, scale]() {
      an->ensure_grad();
      double g = o->grad[0] * scale;
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    };
  }
  return Tensor(out);
}

}  // namespace

Tensor sum(const Tensor& a, int64_t axis, bool keepdim) {
  return reduce_axis("sum", a, axis, keepdim, false);
}

Tensor mean(const Tensor& a, int64_t axis, bool keepdim) {
  return reduce_axis("mean", a, axis, keepdim, true);
}

Tensor sum_all(const Tensor& a) { return reduce_all("sum_all", a, false); }

Tensor mean_all(const Tensor& a) { return reduce_all("mean_all", a, true); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined("matmul", {&a, &b});
  auto an = a.node();
  auto bn = b.node();
  if (an->shape.size() < 2 || bn->shape.size() < 2)
    throw ShapeError("matmul: inputs must have rank >= 2, got " + shape_str(an->shape) + " and " +
                     shape_str(bn->shape));
  int64_t M = an->shape[an->shape.size() - 2];
  int64_t K = an->shape[an->shape.size() - 1];
  int64_t K2 = bn->shape[bn->shape.size() - 2];
  int64_t N = bn->shape[bn->shape.size() - 1];
  if (K != K2)
    throw ShapeError("matmul: inner dims disagree, " + shape_str(an->shape) + " x " +
                     shape_str(bn->shape));
  Shape abatch(an->shape.begin(), an->shape.end() - 2);
  Shape bbatch(bn->shape.begin(), bn->shape.end() - 2);
  Shape obatch = bcast_shape("matmul", abatch, bbatch);
  Shape os = obatch;
  os.push_back(M);
  os.push_back(N);
  auto out = out_node("matmul", os);

  auto sa = bcast_strides(abatch, obatch);
  auto sb = bcast_strides(bbatch, obatch);
  for (auto& v : sa) v *= M * K;
  for (auto& v : sb) v *= K * N;
  Shape loop = obatch.empty() ? Shape{1} : obatch;
  std::vector<int64_t> la = sa, lb = sb;
  if (obatch.empty()) {
    la = {0};
    lb = {0};
  }
  for_each_bcast2(loop, la, lb, [&](int64_t i, int64_t ia, int64_t ib) {
    gemm(an->val.data() + ia, bn->val.data() + ib, out->val.data() + i * M * N, M, K, N, false,
         false);
  });
  finite_check(*out, {&a, &b});
  bool rga = an->requires_grad, rgb = bn->requires_grad;
  if (rga || rgb) {
    out->requires_grad = true;
    out->parents = {an, bn};
    Node* o = out.get();
    out->backward_fn = [o, an, bn, la, lb, loop, M, K, N, rga, rgb]() {
      if (rga) an->ensure_grad();
      if (rgb) bn->ensure_grad();
      for_each_bcast2(loop, la, lb, [&](int64_t i, int64_t ia, int64_t ib) {
        const double* g = o->grad.data() + i * M * N;
        // dA = g * B^T, dB = A^T * g
        if (rga) gemm(g, bn->val.data() + ib, an->grad.data() + ia, M, N, K, false, true);
        if (rgb) gemm(an->val.data() + ia, g, bn->grad.data() + ib, K, M, N, true, false);
      });
    };
  }
  return Tensor(out);
}

Tensor softmax(const Tensor& a, int64_t axis) {
  require_defined("softmax", {&a});
  auto an = a.node();
  axis = norm_axis("softmax", an->shape, axis);
  int64_t outer, len, inner;
  axis_layout(an->shape, axis, outer, len, inner);
  auto out = out_node("softmax", an->shape);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      const double* x = an->val.data() + o * len * inner + in;
      double* y = out->val.data() + o * len * inner + in;
      double m = x[0];
      for (int64_t l = 1; l < len; ++l) m = std::max(m, x[l * inner]);
      double s = 0.0;
      for (int64_t l = 0; l < len; ++l) {
        double e = std::exp(x[l * inner] - m);
        y[l * inner] = e;
        s += e;
      }
      double invs = 1.0 / s;
      for (int64_t l = 0; l < len; ++l) y[l * inner] *= invs;
    }
  finite_check(*out, {&a});
  if (an->requires_grad) {
    out->requires_grad = true;
    out->parents = {an};
    Node* o = out.get();
    out->backward_fn = [o, an, outer, len, inner]() {
      an->ensure_grad();
      for (int64_t ob = 0; ob < outer; ++ob)
        for (int64_t in = 0; in < inner; ++in) {
          const double* y = o->val.data() + ob * len * inner + in;
          const double* g = o->grad.data() + ob * len * inner + in;
          double* dx = an->grad.data() + ob * len * inner + in;
          double dot = 0.0;
          for (int64_t l = 0; l < len; ++l) dot += g[l * inner] * y[l * inner];
          for (int64_t l = 0; l < len; ++l)
            dx[l * inner] += y[l * inner] * (g[l * inner] - dot);
        }
    };
  }
  return Tensor(out);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined("layer_norm", {&x, &gamma, &beta});
  if (eps <= 0.0) throw ParamError("layer_norm: eps must be positive");
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  if (xn->shape.empty()) throw ShapeError("layer_norm: scalar input");
  int64_t D = xn->shape.back();
  if (gn->shape != Shape{D} || bn->shape != Shape{D})
    throw ShapeError("layer_norm: gamma/beta must have shape [" + std::to_string(D) + "], got " +
                     shape_str(gn->shape) + " and " + shape_str(bn->shape));
  int64_t rows = xn->numel() / D;
  auto out = out_node("layer_norm", xn->shape);
  auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * 2);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xn->val.data() + r * D;
    double mu = 0.0;
    for (int64_t d = 0; d < D; ++d) mu += xr[d];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (int64_t d = 0; d < D; ++d) {
      double c = xr[d] - mu;
      var += c * c;
    }
    var /= static_cast<double>(D);
    double invstd = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<size_t>(r) * 2] = mu;
    (*stats)[static_cast<size_t>(r) * 2 + 1] = invstd;
    double* yr = out->val.data() + r * D;
    for (int64_t d = 0; d < D; ++d)
      yr[d] = gn->val[static_cast<size_t>(d)] * (xr[d] - mu) * invstd + bn->val[static_cast<size_t>(d)];
  }
  finite_check(*out, {&x, &gamma, &beta});
  bool rgx = xn->requires_grad, rgg = gn->requires_grad, rgb = bn->requires_grad;
  if (rgx || rgg || rgb) {
    out->requires_grad = true;
    out->parents = {xn, gn, bn};
    Node* o = out.get();
    out->backward_fn = [o, xn, gn, bn, stats, rows, D, rgx, rgg, rgb]() {
      if (rgx) xn->ensure_grad();
      if (rgg) gn->ensure_grad();
      if (rgb) bn->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xn->val.data() + r * D;
        const double* g = o->grad.data() + r * D;
        double mu = (*stats)[static_cast<size_t>(r) * 2];
        double invstd = (*stats)[static_cast<size_t>(r) * 2 + 1];
        if (rgg || rgb) {
          for (int64_t d = 0; d < D; ++d) {
            double xhat = (xr[d] - mu) * invstd;
            if (rgg) gn->grad[static_cast<size_t>(d)] += g[d] * xhat;
            if (rgb) bn->grad[static_cast<size_t>(d)] += g[d];
          }
        }
        if (rgx) {
          double m1 = 0.0, m2 = 0.0;
          for (int64_t d = 0; d < D; ++d) {
            double xhat = (xr[d] - mu) * invstd;
            double gg = g[d] * gn->val[static_cast<size_t>(d)];
            m1 += gg;
            m2 += gg * xhat;
          }
          m1 /= static_cast<double>(D);
          m2 /= static_cast<double>(D);
          double* dx = xn->grad.data() + r * D;
          for (int64_t d = 0; d < D; ++d) {
            double xhat = (xr[d] - mu) * invstd;
            double gg = g[d] * gn->val[static_cast<size_t>(d)];
            dx[d] += invstd * (gg - m1 - xhat * m2);
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor conv1d(const Tensor& x, const Tensor& kernel) {
  require_defined("conv1d", {&x, &kernel});
  auto xn = x.node();
  auto kn = kernel.node();
  if (kn->shape.size() != 2) throw ShapeError("conv1d: kernel must be rank-2 [K,C]");
  if (xn->shape.empty()) throw ShapeError("conv1d: scalar input");
  int64_t K = kn->shape[0], C = kn->shape[1];
  if (xn->shape.back() != C)
    throw ShapeError("conv1d: kernel channel count " + std::to_string(C) +
                     " does not match input last dim " + std::to_string(xn->shape.back()));
  if (K % 2 == 0) throw ParamError("conv1d: kernel width must be odd, got " + std::to_string(K));
  int64_t off = (K - 1) / 2;
  int64_t rows = xn->numel() / C;
  auto out = out_node("conv1d", xn->shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xn->val.data() + r * C;
    double* yr = out->val.data() + r * C;
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (int64_t k = 0; k < K; ++k) {
        int64_t j = c + k - off;
        if (j < 0 || j >= C) continue;  // zero padding
        s += xr[j] * kn->val[static_cast<size_t>(k * C + c)];
      }
      yr[c] = s;
    }
  }
  finite_check(*out, {&x, &kernel});
  bool rgx = xn->requires_grad, rgk = kn->requires_grad;
  if (rgx || rgk) {
    out->requires_grad = true;
    out->parents = {xn, kn};
    Node* o = out.get();
    out->backward_fn = [o, xn, kn, rows, K, C, off, rgx, rgk]() {
      if (rgx) xn->ensure_grad();
      if (rgk) kn->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xn->val.data() + r * C;
        const double* g = o->grad.data() + r * C;
        double* dx = rgx ? xn->grad.data() + r * C : nullptr;
        for (int64_t c = 0; c < C; ++c) {
          double gc = g[c];
          if (gc == 0.0) continue;
          for (int64_t k = 0; k < K; ++k) {
            int64_t j = c + k - off;
            if (j < 0 || j >= C) continue;
            if (rgx) dx[j] += gc * kn->val[static_cast<size_t>(k * C + c)];
            if (rgk) kn->grad[static_cast<size_t>(k * C + c)] += gc * xr[j];
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels) {
  require_defined("cross_entropy_with_logits", {&logits});
  auto ln = logits.node();
  if (ln->shape.size() != 2)
    throw ShapeError("cross_entropy_with_logits: expected rank-2 logits, got " + shape_str(ln->shape));
  int64_t B = ln->shape[0], K = ln->shape[1];
  if (static_cast<int64_t>(labels.size()) != B)
    throw ShapeError("cross_entropy_with_logits: label count mismatch");
  for (int y : labels)
    if (y < 1 || y > K)
      throw ParamError("cross_entropy_with_logits: label " + std::to_string(y) +
                       " outside 1.." + std::to_string(K));
  auto out = out_node("cross_entropy_with_logits", {B});
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(B * K));
  for (int64_t b = 0; b < B; ++b) {
    const double* row = ln->val.data() + b * K;
    double m = row[0];
    for (int64_t j = 1; j < K; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (int64_t j = 0; j < K; ++j) {
      double e = std::exp(row[j] - m);
      (*probs)[static_cast<size_t>(b * K + j)] = e;
      s += e;
    }
    double invs = 1.0 / s;
    for (int64_t j = 0; j < K; ++j) (*probs)[static_cast<size_t>(b * K + j)] *= invs;
    double lse = m + std::log(s);
    out->val[static_cast<size_t>(b)] = lse - row[labels[static_cast<size_t>(b)] - 1];
  }
  finite_check(*out, {&logits});
  if (ln->requires_grad) {
    out->requires_grad = true;
    out->parents = {ln};
    Node* o = out.get();
    std::vector<int> ys = labels;
    out->backward_fn = [o, ln, probs, ys, B, K]() {
      ln->ensure_grad();
      for (int64_t b = 0; b < B; ++b) {
        double g = o->grad[static_cast<size_t>(b)];
        if (g == 0.0) continue;
        double* dst = ln->grad.data() + b * K;
        const double* p = probs->data() + b * K;
        for (int64_t j = 0; j < K; ++j) dst[j] += g * p[j];
        dst[ys[static_cast<size_t>(b)] - 1] -= g;
      }
    };
  }
  return Tensor(out);
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, int64_t* zero_rows) {
  require_defined("cosine_similarity", {&a, &b});
  auto an = a.node();
  auto bn = b.node();
  if (an->shape.size() != 2 || an->shape != bn->shape)
    throw ShapeError("cosine_similarity: expected matching rank-2 inputs, got " +
                     shape_str(an->shape) + " and " + shape_str(bn->shape));
  int64_t B = an->shape[0], D = an->shape[1];
  auto out = out_node("cosine_similarity", {B});
  auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(B) * 2);
  int64_t zeros = 0;
  for (int64_t r = 0; r < B; ++r) {
    const double* x = an->val.data() + r * D;
    const double* y = bn->val.data() + r * D;
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (int64_t d = 0; d < D; ++d) {
      na += x[d] * x[d];
      nb += y[d] * y[d];
      dot += x[d] * y[d];
    }
    if (na == 0.0 || nb == 0.0) {
      out->val[static_cast<size_t>(r)] = 0.0;
      (*norms)[static_cast<size_t>(r) * 2] = 0.0;
      (*norms)[static_cast<size_t>(r) * 2 + 1] = 0.0;
      ++zeros;
    } else {
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      out->val[static_cast<size_t>(r)] = dot / (na * nb);
      (*norms)[static_cast<size_t>(r) * 2] = na;
      (*norms)[static_cast<size_t>(r) * 2 + 1] = nb;
    }
  }
  if (zero_rows) *zero_rows = zeros;
  finite_check(*out, {&a, &b});
  bool rga = an->requires_grad, rgb = bn->requires_grad;
  if (rga || rgb) {
    out->requires_grad = true;
    out->parents = {an, bn};
    Node* o = out.get();
    out->backward_fn = [o, an, bn, norms, B, D, rga, rgb]() {
      if (rga) an->ensure_grad();
      if (rgb) bn->ensure_grad();
      for (int64_t r = 0; r < B; ++r) {
        double na = (*norms)[static_cast<size_t>(r) * 2];
        double nb = (*norms)[static_cast<size_t>(r) * 2 + 1];
        if (na == 0.0 || nb == 0.0) continue;  // defined as constant 0
        double g = o->grad[static_cast<size_t>(r)];
        if (g == 0.0) continue;
        double cosv = o->val[static_cast<size_t>(r)];
        const double* x = an->val.data() + r * D;
        const double* y = bn->val.data() + r * D;
        for (int64_t d = 0; d < D; ++d) {
          if (rga) an->grad[static_cast<size_t>(r * D + d)] +=
              g * (y[d] / (na * nb) - cosv * x[d] / (na * na));
          if (rgb) bn->grad[static_cast<size_t>(r * D + d)] +=
              g * (x[d] / (na * nb) - cosv * y[d] / (nb * nb));
        }
      }
    };
  }
  return Tensor(out);
}

Tensor l1_norm(const Tensor& a) { return sum_all(abs(a)); }

Tensor l2_norm(const Tensor& a) { return sqrt(sum_all(mul(a, a))); }

}  // namespace s2x
