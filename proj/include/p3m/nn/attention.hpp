#pragma once

#include <cmath>
#include <vector>

#include "p3m/nn/autograd.hpp"

namespace p3m::nn {

// Layout of a (possibly cyclically shifted) window partition of an H x W map.
struct WindowGeometry {
  int height = 0, width = 0, window = 0, shift = 0;
  int bias_window = 0;  // side of the relative-bias table (>= window)

  int windows_y() const { return height / window; }
  int windows_x() const { return width / window; }
  int tokens() const { return window * window; }
  int count() const { return windows_y() * windows_x(); }

  // Pixel (row-major offset) of token t in window (wy, wx), after undoing the roll.
  int pixel(int wy, int wx, int t) const {
    const int i = t / window, j = t % window;
    const int y = (wy * window + i + shift) % height;
    const int x = (wx * window + j + shift) % width;
    return y * width + x;
  }
  // Shifted-window region id; tokens only attend within their own region.
  int region(int wy, int wx, int t) const {
    if (shift == 0) return 0;
    const auto band = [this](int s, int size) { return s < size - window ? 0 : (s < size - shift ? 1 : 2); };
    const int i = t / window, j = t % window;
    return band(wy * window + i, height) * 3 + band(wx * window + j, width);
  }
  int bias_table_size() const {
    const int bw = bias_window > 0 ? bias_window : window;
    return (2 * bw - 1) * (2 * bw - 1);
  }
  int relative_index(int a, int b) const {
    const int ai = a / window, aj = a % window, bi = b / window, bj = b % window;
    const int bw = bias_window > 0 ? bias_window : window;
    return (ai - bi + bw - 1) * (2 * bw - 1) + (aj - bj + bw - 1);
  }
};

inline WindowGeometry make_window_geometry(int height, int width, int window, int shift, int bias_window = 0) {
  if (window < 1 || height % window != 0 || width % window != 0)
    throw ShapeError("window attention: " + std::to_string(height) + "x" + std::to_string(width) +
                     " not divisible by window " + std::to_string(window));
  if (shift < 0 || shift >= window) throw ShapeError("window attention: shift must be in [0, window)");
  if (bias_window != 0 && bias_window < window) throw ShapeError("window attention: bias table smaller than window");
  return {height, width, window, shift, bias_window};
}

// Multi-head self attention inside non-overlapping windows.
// qkv: [N, 3C, H, W] holding q, k, v channel blocks; heads split C evenly.
// rel_bias (optional): [1, heads, (2w-1)^2, 1] learned relative position bias.
// If probs_out is given it receives the softmax rows, laid out as
// [n][window][head][L][L].
template <class T>
Var<T> window_attention(const Var<T>& qkv, int heads, const WindowGeometry& geo, const Var<T>& rel_bias = {},
                        std::vector<T>* probs_out = nullptr) {
  const auto& X = qkv.value();
  if (X.c() % 3 != 0) throw ShapeError("window attention: qkv channels must be a multiple of 3");
  const int C = X.c() / 3;
  if (heads < 1 || C % heads != 0) throw ShapeError("window attention: channels not divisible by heads");
  if (X.h() != geo.height || X.w() != geo.width) throw ShapeError("window attention: geometry mismatch");
  const int N = X.n(), d = C / heads, L = geo.tokens(), nw = geo.count();
  const std::size_t P = X.plane();
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  const bool has_bias = rel_bias.defined();

  std::vector<T> probs(static_cast<std::size_t>(N) * nw * heads * L * L, T(0));
  Tensor<T> out(N, C, X.h(), X.w());
  std::vector<int> pix(L), reg(L);
  std::vector<double> row(L);

  const auto chan = [&](int n, int c) { return X.data() + X.offset(n, c, 0, 0); };
  for (int n = 0; n < N; ++n)
    for (int wy = 0; wy < geo.windows_y(); ++wy)
      for (int wx = 0; wx < geo.windows_x(); ++wx) {
        const int win = wy * geo.windows_x() + wx;
        for (int t = 0; t < L; ++t) pix[t] = geo.pixel(wy, wx, t), reg[t] = geo.region(wy, wx, t);
        for (int h = 0; h < heads; ++h) {
          T* pr = probs.data() + ((static_cast<std::size_t>(n) * nw + win) * heads + h) * L * L;
          for (int a = 0; a < L; ++a) {
            double mx = -1e300;
            for (int b = 0; b < L; ++b) {
              if (reg[a] != reg[b]) continue;
              double s = 0.0;
              for (int e = 0; e < d; ++e) s += chan(n, h * d + e)[pix[a]] * chan(n, C + h * d + e)[pix[b]];
              s *= scale;
              if (has_bias) s += rel_bias.value()[h * geo.bias_table_size() + geo.relative_index(a, b)];
              row[b] = s;
              mx = std::max(mx, s);
            }
            double z = 0.0;
            for (int b = 0; b < L; ++b) {
              row[b] = reg[a] == reg[b] ? std::exp(row[b] - mx) : 0.0;
              z += row[b];
            }
            for (int b = 0; b < L; ++b) pr[a * L + b] = static_cast<T>(row[b] / z);
            for (int e = 0; e < d; ++e) {
              const T* v = chan(n, 2 * C + h * d + e);
              double o = 0.0;
              for (int b = 0; b < L; ++b) o += pr[a * L + b] * v[pix[b]];
              out[out.offset(n, h * d + e, 0, 0) + pix[a]] = static_cast<T>(o);
            }
          }
        }
      }
  if (probs_out) *probs_out = probs;

  std::vector<Var<T>> parents{qkv};
  if (has_bias) parents.push_back(rel_bias);
  return record<T>(std::move(out), parents,
                   [qkv, rel_bias, heads, geo, probs = std::move(probs), N, C, d, L, nw, P, scale,
                    has_bias](const Tensor<T>& g) {
                     const auto& X = qkv.value();
                     Tensor<T> gq = Tensor<T>::zeros_like(X);
                     const int nb = geo.bias_table_size();
                     std::vector<double> gbias(has_bias ? static_cast<std::size_t>(heads) * nb : 0, 0.0);
                     std::vector<int> pix(L);
                     std::vector<double> dp(L * L), ds(L * L);
                     for (int n = 0; n < N; ++n)
                       for (int wy = 0; wy < geo.windows_y(); ++wy)
                         for (int wx = 0; wx < geo.windows_x(); ++wx) {
                           const int win = wy * geo.windows_x() + wx;
                           for (int t = 0; t < L; ++t) pix[t] = geo.pixel(wy, wx, t);
                           for (int h = 0; h < heads; ++h) {
                             const T* pr = probs.data() + ((static_cast<std::size_t>(n) * nw + win) * heads + h) * L * L;
                             const auto at = [&](const Tensor<T>& t, int c, int p) { return t[t.offset(n, c, 0, 0) + p]; };
                             for (int a = 0; a < L; ++a)
                               for (int b = 0; b < L; ++b) {
                                 double s = 0.0;
                                 for (int e = 0; e < d; ++e) s += at(g, h * d + e, pix[a]) * at(X, 2 * C + h * d + e, pix[b]);
                                 dp[a * L + b] = s;
                               }
                             for (int a = 0; a < L; ++a) {
                               double dot = 0.0;
                               for (int b = 0; b < L; ++b) dot += pr[a * L + b] * dp[a * L + b];
                               for (int b = 0; b < L; ++b) ds[a * L + b] = pr[a * L + b] * (dp[a * L + b] - dot);
                             }
                             for (int e = 0; e < d; ++e) {
                               const int cq = h * d + e, ck = C + h * d + e, cv = 2 * C + h * d + e;
                               for (int a = 0; a < L; ++a) {
                                 double sq = 0.0, sk = 0.0, sv = 0.0;
                                 for (int b = 0; b < L; ++b) {
                                   sq += ds[a * L + b] * at(X, ck, pix[b]);
                                   sk += ds[b * L + a] * at(X, cq, pix[b]);
                                   sv += pr[b * L + a] * at(g, h * d + e, pix[b]);
                                 }
                                 gq[gq.offset(n, cq, 0, 0) + pix[a]] += static_cast<T>(scale * sq);
                                 gq[gq.offset(n, ck, 0, 0) + pix[a]] += static_cast<T>(scale * sk);
                                 gq[gq.offset(n, cv, 0, 0) + pix[a]] += static_cast<T>(sv);
                               }
                             }
                             if (has_bias)
                               for (int a = 0; a < L; ++a)
                                 for (int b = 0; b < L; ++b) gbias[h * nb + geo.relative_index(a, b)] += ds[a * L + b];
                           }
                         }
                     accumulate(qkv, gq);
                     if (has_bias && wants_grad(rel_bias)) {
                       auto& gb = grad_of(rel_bias);
                       for (std::size_t i = 0; i < gbias.size(); ++i) gb[i] += static_cast<T>(gbias[i]);
                     }
                   });
}

}  // namespace p3m::nn
