#include "s2x/fft.hpp"

#include <cmath>

namespace s2x {

namespace {

constexpr double kTwoPi = 6.28318530717958647692528676655900577;

// twiddle tables for angle 2*pi*j/C, j in [0, C)
void twiddles(int64_t C, std::vector<double>& cs, std::vector<double>& sn) {
  cs.resize(static_cast<size_t>(C));
  sn.resize(static_cast<size_t>(C));
  for (int64_t j = 0; j < C; ++j) {
    double a = kTwoPi * static_cast<double>(j) / static_cast<double>(C);
    cs[static_cast<size_t>(j)] = std::cos(a);
    sn[static_cast<size_t>(j)] = std::sin(a);
  }
}

}  // namespace

ComplexSpectrum rfft(const Tensor& x) {
  if (!x.defined()) throw ContractError("rfft: undefined input");
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("rfft: scalar input");
  int64_t C = s.back();
  int64_t half = C / 2 + 1;
  ComplexSpectrum out;
  out.shape = s;
  out.shape.back() = half;
  int64_t rows = x.numel() / C;
  out.re.assign(static_cast<size_t>(rows * half), 0.0);
  out.im.assign(static_cast<size_t>(rows * half), 0.0);
  std::vector<double> cs, sn;
  twiddles(C, cs, sn);
  const std::vector<double>& v = x.values();
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = v.data() + r * C;
    for (int64_t k = 0; k < half; ++k) {
      double re = 0.0, im = 0.0;
      for (int64_t n = 0; n < C; ++n) {
        size_t j = static_cast<size_t>((k * n) % C);
        re += xr[n] * cs[j];
        im -= xr[n] * sn[j];
      }
      out.re[static_cast<size_t>(r * half + k)] = re;
      out.im[static_cast<size_t>(r * half + k)] = im;
    }
  }
  return out;
}

Tensor magnitude(const ComplexSpectrum& s) {
  std::vector<double> m(s.re.size());
  for (size_t i = 0; i < m.size(); ++i) m[i] = std::hypot(s.re[i], s.im[i]);
  return Tensor::from(s.shape, std::move(m));
}

Tensor rfft_magnitude(const Tensor& x) {
  if (!x.defined()) throw ContractError("rfft_magnitude: undefined input");
  auto xn = x.node();
  const Shape& s = xn->shape;
  if (s.empty()) throw ShapeError("rfft_magnitude: scalar input");
  int64_t C = s.back();
  int64_t half = C / 2 + 1;
  Shape os = s;
  os.back() = half;
  auto out = std::make_shared<detail::Node>();
  out->op = "rfft_magnitude";
  out->shape = os;
  int64_t rows = xn->numel() / C;
  out->val.assign(static_cast<size_t>(rows * half), 0.0);
  auto cs = std::make_shared<std::vector<double>>();
  auto sn = std::make_shared<std::vector<double>>();
  twiddles(C, *cs, *sn);
  auto spec = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * half) * 2);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xn->val.data() + r * C;
    for (int64_t k = 0; k < half; ++k) {
      double re = 0.0, im = 0.0;
      for (int64_t n = 0; n < C; ++n) {
        size_t j = static_cast<size_t>((k * n) % C);
        re += xr[n] * (*cs)[j];
        im -= xr[n] * (*sn)[j];
      }
      size_t at = static_cast<size_t>(r * half + k);
      (*spec)[at * 2] = re;
      (*spec)[at * 2 + 1] = im;
      double m = std::hypot(re, im);
      if (!std::isfinite(m))
        throw NumericalError("op 'rfft_magnitude' produced a non-finite value; input shape " +
                             shape_str(s));
      out->val[at] = m;
    }
  }
  if (xn->requires_grad) {
    out->requires_grad = true;
    out->parents = {xn};
    detail::Node* o = out.get();
    out->backward_fn = [o, xn, cs, sn, spec, rows, half, C]() {
      xn->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        double* dx = xn->grad.data() + r * C;
        for (int64_t k = 0; k < half; ++k) {
          size_t at = static_cast<size_t>(r * half + k);
          double m = o->val[at];
          if (m == 0.0) continue;  // subgradient 0 at the kink
          double g = o->grad[at];
          if (g == 0.0) continue;
          double re = (*spec)[at * 2], im = (*spec)[at * 2 + 1];
          double coef = g / m;
          for (int64_t n = 0; n < C; ++n) {
            size_t j = static_cast<size_t>((k * n) % C);
            dx[n] += coef * (re * (*cs)[j] - im * (*sn)[j]);
          }
        }
      }
    };
  }
  return Tensor(out);
}

}  // namespace s2x
