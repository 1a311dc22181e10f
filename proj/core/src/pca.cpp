#include "s2x/pca.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_set>

namespace s2x {

void symmetric_eigen(const std::vector<double>& a, int64_t n, std::vector<double>& vals,
                     std::vector<double>& vecs) {
  if (n <= 0) throw ParamError("symmetric_eigen: matrix order must be positive");
  if (a.size() != static_cast<size_t>(n * n))
    throw ShapeError("symmetric_eigen: buffer length does not match order " + std::to_string(n));
  std::vector<double> m = a;
  vecs.assign(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) vecs[static_cast<size_t>(i * n + i)] = 1.0;
  auto at = [&](int64_t r, int64_t c) -> double& { return m[static_cast<size_t>(r * n + c)]; };

  double scale = 0.0;
  for (int64_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(at(i, i)));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) scale = std::max(scale, std::abs(at(i, j)));
  const double tol = std::max(scale, 1.0) * 1e-14;

  // cyclic Jacobi sweeps; each rotation zeroes one off-diagonal pair
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (std::sqrt(off) <= tol) break;
    for (int64_t p = 0; p < n - 1; ++p) {
      for (int64_t q = p + 1; q < n; ++q) {
        double apq = at(p, q);
        if (std::abs(apq) <= tol * 1e-3) continue;
        double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int64_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          double akp = at(k, p), akq = at(k, q);
          at(k, p) = at(p, k) = c * akp - s * akq;
          at(k, q) = at(q, k) = s * akp + c * akq;
        }
        double app = at(p, p), aqq = at(q, q);
        at(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        at(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        at(p, q) = at(q, p) = 0.0;
        for (int64_t k = 0; k < n; ++k) {
          size_t kp = static_cast<size_t>(k * n + p), kq = static_cast<size_t>(k * n + q);
          double vkp = vecs[kp], vkq = vecs[kq];
          vecs[kp] = c * vkp - s * vkq;
          vecs[kq] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int64_t i, int64_t j) { return at(i, i) > at(j, j); });
  vals.resize(static_cast<size_t>(n));
  std::vector<double> sorted_vecs(static_cast<size_t>(n * n));
  for (int64_t c = 0; c < n; ++c) {
    vals[static_cast<size_t>(c)] = at(order[static_cast<size_t>(c)], order[static_cast<size_t>(c)]);
    for (int64_t r = 0; r < n; ++r)
      sorted_vecs[static_cast<size_t>(r * n + c)] =
          vecs[static_cast<size_t>(r * n + order[static_cast<size_t>(c)])];
  }
  vecs = std::move(sorted_vecs);
}

PcaModel fit_pca(const HsiCube& cube, int64_t c_pca) {
  cube.validate();
  const int64_t C = cube.bands;
  const int64_t n = cube.pixel_count();
  if (c_pca < 1 || c_pca > C)
    throw ParamError("fit_pca: component count " + std::to_string(c_pca) + " outside 1.." +
                     std::to_string(C));

  {
    std::unordered_set<std::string> distinct;
    for (int64_t i = 0; i < n && static_cast<int64_t>(distinct.size()) < c_pca; ++i) {
      const char* p = reinterpret_cast<const char*>(cube.reflectance.data() + i * C);
      distinct.emplace(p, static_cast<size_t>(C) * sizeof(float));
    }
    if (static_cast<int64_t>(distinct.size()) < c_pca)
      throw ParamError("fit_pca: need at least " + std::to_string(c_pca) +
                       " distinct pixels, found " + std::to_string(distinct.size()));
  }

  PcaModel model;
  model.in_bands = C;
  model.out_bands = c_pca;
  model.mean.assign(static_cast<size_t>(C), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t b = 0; b < C; ++b)
      model.mean[static_cast<size_t>(b)] += cube.reflectance[static_cast<size_t>(i * C + b)];
  for (double& v : model.mean) v /= static_cast<double>(n);

  std::vector<double> cov(static_cast<size_t>(C * C), 0.0);
  std::vector<double> centered(static_cast<size_t>(C));
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t b = 0; b < C; ++b)
      centered[static_cast<size_t>(b)] =
          cube.reflectance[static_cast<size_t>(i * C + b)] - model.mean[static_cast<size_t>(b)];
    for (int64_t r = 0; r < C; ++r)
      for (int64_t c = r; c < C; ++c)
        cov[static_cast<size_t>(r * C + c)] += centered[static_cast<size_t>(r)] * centered[static_cast<size_t>(c)];
  }
  for (int64_t r = 0; r < C; ++r)
    for (int64_t c = r; c < C; ++c) {
      double v = cov[static_cast<size_t>(r * C + c)] / static_cast<double>(n);
      cov[static_cast<size_t>(r * C + c)] = v;
      cov[static_cast<size_t>(c * C + r)] = v;
    }

  std::vector<double> vals, vecs;
  symmetric_eigen(cov, C, vals, vecs);

  model.explained_variance.resize(static_cast<size_t>(c_pca));
  model.components.resize(static_cast<size_t>(C * c_pca));
  for (int64_t j = 0; j < c_pca; ++j) {
    model.explained_variance[static_cast<size_t>(j)] = std::max(0.0, vals[static_cast<size_t>(j)]);
    int64_t arg = 0;
    double best = -1.0;
    for (int64_t b = 0; b < C; ++b) {
      double mag = std::abs(vecs[static_cast<size_t>(b * C + j)]);
      if (mag > best) {
        best = mag;
        arg = b;
      }
    }
    double flip = vecs[static_cast<size_t>(arg * C + j)] < 0.0 ? -1.0 : 1.0;
    for (int64_t b = 0; b < C; ++b)
      model.components[static_cast<size_t>(b * c_pca + j)] = flip * vecs[static_cast<size_t>(b * C + j)];
  }
  return model;
}

std::vector<double> project_spectrum(const PcaModel& m, const std::vector<double>& x) {
  if (static_cast<int64_t>(x.size()) != m.in_bands)
    throw ShapeError("project_spectrum: expected " + std::to_string(m.in_bands) + " bands, got " +
                     std::to_string(x.size()));
  std::vector<double> y(static_cast<size_t>(m.out_bands), 0.0);
  for (int64_t b = 0; b < m.in_bands; ++b) {
    double cb = x[static_cast<size_t>(b)] - m.mean[static_cast<size_t>(b)];
    for (int64_t j = 0; j < m.out_bands; ++j)
      y[static_cast<size_t>(j)] += cb * m.components[static_cast<size_t>(b * m.out_bands + j)];
  }
  return y;
}

std::vector<double> back_project_spectrum(const PcaModel& m, const std::vector<double>& y) {
  if (static_cast<int64_t>(y.size()) != m.out_bands)
    throw ShapeError("back_project_spectrum: expected " + std::to_string(m.out_bands) +
                     " components, got " + std::to_string(y.size()));
  std::vector<double> x(m.mean);
  for (int64_t b = 0; b < m.in_bands; ++b)
    for (int64_t j = 0; j < m.out_bands; ++j)
      x[static_cast<size_t>(b)] +=
          y[static_cast<size_t>(j)] * m.components[static_cast<size_t>(b * m.out_bands + j)];
  return x;
}

namespace {

HsiCube map_cube(const HsiCube& in, int64_t out_bands,
                 const std::function<std::vector<double>(const std::vector<double>&)>& fn) {
  HsiCube out;
  out.height = in.height;
  out.width = in.width;
  out.bands = out_bands;
  out.name = in.name;
  out.labels = in.labels;
  out.class_names = in.class_names;
  out.reflectance.resize(static_cast<size_t>(in.pixel_count() * out_bands));
  for (int64_t y = 0; y < in.height; ++y)
    for (int64_t x = 0; x < in.width; ++x) {
      std::vector<double> v = fn(in.spectrum(y, x));
      size_t base = static_cast<size_t>((y * in.width + x) * out_bands);
      for (int64_t b = 0; b < out_bands; ++b)
        out.reflectance[base + static_cast<size_t>(b)] = static_cast<float>(v[static_cast<size_t>(b)]);
    }
  return out;
}

}  // namespace

HsiCube project_cube(const PcaModel& m, const HsiCube& cube) {
  if (cube.bands != m.in_bands)
    throw ShapeError("project_cube: cube has " + std::to_string(cube.bands) + " bands, model expects " +
                     std::to_string(m.in_bands));
  return map_cube(cube, m.out_bands, [&](const std::vector<double>& x) { return project_spectrum(m, x); });
}

HsiCube back_project_cube(const PcaModel& m, const HsiCube& cube) {
  if (cube.bands != m.out_bands)
    throw ShapeError("back_project_cube: cube has " + std::to_string(cube.bands) +
                     " bands, model expects " + std::to_string(m.out_bands));
  return map_cube(cube, m.in_bands, [&](const std::vector<double>& y) { return back_project_spectrum(m, y); });
}

}  // namespace s2x
