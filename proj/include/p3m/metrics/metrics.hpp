#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <vector>

#include "p3m/core/raster.hpp"

namespace p3m {

struct RegionMasks {
  BinaryMask fg, bg, transition;
};

inline RegionMasks regions_from_trimap(const Trimap& t) {
  RegionMasks m{BinaryMask(t.height(), t.width()), BinaryMask(t.height(), t.width()),
                BinaryMask(t.height(), t.width())};
  for (int r = 0; r < t.height(); ++r)
    for (int c = 0; c < t.width(); ++c) switch (t.label(r, c)) {
        case TrimapLabel::kForeground: m.fg(r, c) = 1; break;
        case TrimapLabel::kBackground: m.bg(r, c) = 1; break;
        case TrimapLabel::kTransition: m.transition(r, c) = 1; break;
      }
  return m;
}

namespace detail {

inline void check_pair(const AlphaMatte& pred, const AlphaMatte& gt, const BinaryMask* region) {
  if (!pred.same_spatial(gt)) throw ShapeError("metric: prediction and ground truth differ in size");
  if (region && !region->same_spatial(gt)) throw ShapeError("metric: region differs in size");
}

// Sum and count of f(pred - gt) over the region (all pixels if null).
template <class F>
std::pair<double, std::size_t> reduce(const AlphaMatte& pred, const AlphaMatte& gt, const BinaryMask* region, F f) {
  check_pair(pred, gt, region);
  double s = 0.0;
  std::size_t n = 0;
  const auto p = pred.data(), g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (region && !region->data()[i]) continue;
    s += f(static_cast<double>(p[i]) - static_cast<double>(g[i]));
    ++n;
  }
  return {s, n};
}

}  // namespace detail

// Sum of absolute differences, in thousands.
inline double sad(const AlphaMatte& pred, const AlphaMatte& gt, const BinaryMask* region = nullptr) {
  return detail::reduce(pred, gt, region, [](double d) { return std::abs(d); }).first / 1000.0;
}

inline double mse(const AlphaMatte& pred, const AlphaMatte& gt, const BinaryMask* region = nullptr) {
  const auto [s, n] = detail::reduce(pred, gt, region, [](double d) { return d * d; });
  if (n == 0) throw EmptyRegion("mse: region is empty");
  return s / n;
}

inline double mad(const AlphaMatte& pred, const AlphaMatte& gt, const BinaryMask* region = nullptr) {
  const auto [s, n] = detail::reduce(pred, gt, region, [](double d) { return std::abs(d); });
  if (n == 0) throw EmptyRegion("mad: region is empty");
  return s / n;
}

namespace detail {

struct DerivativeKernel {
  std::vector<double> smooth;  // Gaussian along the non-differentiated axis
  std::vector<double> deriv;   // -x/sigma^2 * Gaussian along the differentiated axis
};

// Separable factors of the L2-normalised first-order Gaussian derivative
// filter, half size ceil(sigma * sqrt(-2 ln(sqrt(2 pi) sigma 0.01))).
inline DerivativeKernel gaussian_derivative_kernel(double sigma) {
  const double eps = 1e-2;
  const int half = static_cast<int>(std::ceil(sigma * std::sqrt(-2.0 * std::log(std::sqrt(2.0 * std::numbers::pi) * sigma * eps))));
  DerivativeKernel k;
  double norm2 = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double g = std::exp(-0.5 * i * i / (sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    k.smooth.push_back(g);
    k.deriv.push_back(-i * g / (sigma * sigma));
  }
  // ||g (x) d||_2 = ||g|| * ||d||
  double ns = 0.0, nd = 0.0;
  for (double v : k.smooth) ns += v * v;
  for (double v : k.deriv) nd += v * v;
  norm2 = std::sqrt(ns * nd);
  for (auto& v : k.deriv) v /= norm2;
  return k;
}

// Gradient magnitude of an alpha matte, replicated borders.
inline std::vector<double> gradient_magnitude(const AlphaMatte& a, const DerivativeKernel& k) {
  const int H = a.height(), W = a.width(), R = static_cast<int>(k.smooth.size() / 2);
  const auto at = [&](int r, int c) { return static_cast<double>(a(std::clamp(r, 0, H - 1), std::clamp(c, 0, W - 1))); };
  // d/dx: deriv along columns, smooth along rows; d/dy the transpose.
  std::vector<double> sx(static_cast<std::size_t>(H + 2 * R) * W), sy(static_cast<std::size_t>(H + 2 * R) * W);
  for (int r = -R; r < H + R; ++r)
    for (int c = 0; c < W; ++c) {
      double dx = 0.0, gy = 0.0;
      for (int i = -R; i <= R; ++i) {
        const double v = at(r, c - i);
        dx += k.deriv[i + R] * v;
        gy += k.smooth[i + R] * v;
      }
      sx[(r + R) * W + c] = dx;
      sy[(r + R) * W + c] = gy;
    }
  std::vector<double> mag(static_cast<std::size_t>(H) * W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      double gx = 0.0, gy = 0.0;
      for (int i = -R; i <= R; ++i) {
        gx += k.smooth[i + R] * sx[(r - i + R) * W + c];
        gy += k.deriv[i + R] * sy[(r - i + R) * W + c];
      }
      mag[r * W + c] = std::sqrt(gx * gx + gy * gy);
    }
  return mag;
}

}  // namespace detail

struct GradParams {
  double sigma = 1.4;
};

inline double grad_metric(const AlphaMatte& pred, const AlphaMatte& gt, const GradParams& p = {},
                          const BinaryMask* region = nullptr) {
  detail::check_pair(pred, gt, region);
  const auto k = detail::gaussian_derivative_kernel(p.sigma);
  const auto mp = detail::gradient_magnitude(pred, k), mg = detail::gradient_magnitude(gt, k);
  double s = 0.0;
  for (std::size_t i = 0; i < mp.size(); ++i) {
    if (region && !region->data()[i]) continue;
    const double d = mp[i] - mg[i];
    s += d * d;
  }
  return s / 1000.0;
}

struct ConnParams {
  double step = 0.1;  // thresholds step, step*2, ..., 1
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a), b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }
  int size(int x) { return size_[find(x)]; }

 private:
  std::vector<int> parent_, size_;
};

// Largest 4-connected component of the mask; ties resolve to the component
// whose first pixel in column-major order comes first.
inline std::vector<std::uint8_t> largest_region(const std::vector<std::uint8_t>& m, int H, int W) {
  UnionFind uf(H * W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const int i = r * W + c;
      if (!m[i]) continue;
      if (r + 1 < H && m[i + W]) uf.unite(i, i + W);
      if (c + 1 < W && m[i + 1]) uf.unite(i, i + 1);
    }
  int best = -1, best_size = 0;
  for (int c = 0; c < W; ++c)
    for (int r = 0; r < H; ++r) {
      const int i = r * W + c;
      if (!m[i]) continue;
      const int root = uf.find(i);
      if (uf.size(root) > best_size) best = root, best_size = uf.size(root);
    }
  std::vector<std::uint8_t> out(m.size(), 0);
  if (best < 0) return out;
  for (int i = 0; i < H * W; ++i)
    if (m[i] && uf.find(i) == best) out[i] = 1;
  return out;
}

}  // namespace detail

// Connectivity error. l is the last threshold at which a pixel still sat in
// the largest region common to both mattes (1 if it never left).
inline double conn_metric(const AlphaMatte& pred, const AlphaMatte& gt, const ConnParams& p = {},
                          const BinaryMask* region = nullptr) {
  detail::check_pair(pred, gt, region);
  const int H = gt.height(), W = gt.width();
  const std::size_t N = static_cast<std::size_t>(H) * W;
  const auto P = pred.data(), G = gt.data();
  const int steps = static_cast<int>(std::lround(1.0 / p.step));
  std::vector<double> level(N, -1.0);
  std::vector<std::uint8_t> both(N);
  for (int k = 1; k <= steps; ++k) {
    const double th = k * p.step;
    for (std::size_t i = 0; i < N; ++i) both[i] = (P[i] >= th && G[i] >= th) ? 1 : 0;
    const auto omega = detail::largest_region(both, H, W);
    for (std::size_t i = 0; i < N; ++i)
      if (level[i] < 0.0 && !omega[i]) level[i] = (k - 1) * p.step;
  }
  for (auto& l : level)
    if (l < 0.0) l = 1.0;
  double s = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    if (region && !region->data()[i]) continue;
    const double dp = P[i] - level[i], dg = G[i] - level[i];
    const double phi_p = 1.0 - dp * (dp >= 0.15 ? 1.0 : 0.0);
    const double phi_g = 1.0 - dg * (dg >= 0.15 ? 1.0 : 0.0);
    s += std::abs(phi_p - phi_g);
  }
  return s / 1000.0;
}

// One image's scores; the ten columns of the result tables.
struct MetricReport {
  double sad = 0, mse = 0, mad = 0, grad = 0, conn = 0;
  double sad_t = 0, mse_t = 0, mad_t = 0, sad_fg = 0, sad_bg = 0;

  static constexpr std::array<const char*, 10> kColumns{"SAD", "MSE", "MAD", "SAD-T", "MSE-T",
                                                        "MAD-T", "SAD-FG", "SAD-BG", "Grad", "Conn"};
  std::array<double, 10> values() const { return {sad, mse, mad, sad_t, mse_t, mad_t, sad_fg, sad_bg, grad, conn}; }
  static MetricReport from_values(const std::array<double, 10>& v) {
    MetricReport r;
    r.sad = v[0], r.mse = v[1], r.mad = v[2], r.sad_t = v[3], r.mse_t = v[4], r.mad_t = v[5];
    r.sad_fg = v[6], r.sad_bg = v[7], r.grad = v[8], r.conn = v[9];
    return r;
  }
};

// Whole-image scores plus region scores. Empty regions score 0.
inline MetricReport evaluate(const AlphaMatte& pred, const AlphaMatte& gt, const Trimap& trimap) {
  if (!gt.same_spatial(trimap)) throw ShapeError("evaluate: trimap differs in size");
  const RegionMasks reg = regions_from_trimap(trimap);
  MetricReport r;
  r.sad = sad(pred, gt);
  r.mse = mse(pred, gt);
  r.mad = mad(pred, gt);
  r.grad = grad_metric(pred, gt);
  r.conn = conn_metric(pred, gt);
  r.sad_t = sad(pred, gt, &reg.transition);
  r.sad_fg = sad(pred, gt, &reg.fg);
  r.sad_bg = sad(pred, gt, &reg.bg);
  if (!reg.transition.none()) {
    r.mse_t = mse(pred, gt, &reg.transition);
    r.mad_t = mad(pred, gt, &reg.transition);
  }
  return r;
}

// Arithmetic mean of per-image reports, accumulated in input order.
inline MetricReport aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) return {};
  std::array<double, 10> acc{};
  for (const auto& r : reports) {
    const auto v = r.values();
    for (int i = 0; i < 10; ++i) acc[i] += v[i];
  }
  for (auto& v : acc) v /= static_cast<double>(reports.size());
  return MetricReport::from_values(acc);
}

}  // namespace p3m
