#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "p3m/core/resample.hpp"
#include "p3m/nn/autograd.hpp"

namespace p3m::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

// col(ci*k*k + ky*k + kx, n*P + y*W + x) = x[n, ci, y+ky-pad, x+kx-pad]
template <class T>
void im2col(const Tensor<T>& x, int k, std::vector<T>& col) {
  const int N = x.n(), C = x.c(), H = x.h(), W = x.w(), pad = k / 2;
  const std::size_t P = x.plane(), NP = N * P;
  col.assign(static_cast<std::size_t>(C) * k * k * NP, T{});
  for (int ci = 0; ci < C; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * NP;
        for (int n = 0; n < N; ++n) {
          const T* src = x.data() + x.offset(n, ci, 0, 0);
          T* dst = row + n * P;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= H) continue;
            const int x0 = std::max(0, pad - kx), x1 = std::min(W, W + pad - kx);
            for (int xx = x0; xx < x1; ++xx) dst[y * W + xx] = src[sy * W + xx + kx - pad];
          }
        }
      }
}

template <class T>
void col2im(const std::vector<T>& col, int k, Tensor<T>& dx) {
  const int N = dx.n(), C = dx.c(), H = dx.h(), W = dx.w(), pad = k / 2;
  const std::size_t P = dx.plane(), NP = N * P;
  for (int ci = 0; ci < C; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * NP;
        for (int n = 0; n < N; ++n) {
          T* dst = dx.data() + dx.offset(n, ci, 0, 0);
          const T* src = row + n * P;
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= H) continue;
            const int x0 = std::max(0, pad - kx), x1 = std::min(W, W + pad - kx);
            for (int xx = x0; xx < x1; ++xx) dst[sy * W + xx + kx - pad] += src[y * W + xx];
          }
        }
      }
}

// [N, C, P] <-> [C, N*P]
template <class T>
void nchw_to_cm(const Tensor<T>& x, std::vector<T>& out) {
  const int N = x.n(), C = x.c();
  const std::size_t P = x.plane();
  out.resize(static_cast<std::size_t>(C) * N * P);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) std::copy_n(x.data() + x.offset(n, c, 0, 0), P, out.data() + (c * N + n) * P);
}

template <class T>
void cm_to_nchw(const T* in, Tensor<T>& x) {
  const int N = x.n(), C = x.c();
  const std::size_t P = x.plane();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) std::copy_n(in + (c * N + n) * P, P, x.data() + x.offset(n, c, 0, 0));
}

}  // namespace detail

// Stride-1 "same" convolution with an odd square kernel; weight is
// [Cout, Cin, k, k], bias (optional) is [1, Cout, 1, 1].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias = {}) {
  const auto& X = x.value();
  const auto& Wt = weight.value();
  const int k = Wt.h();
  detail::require(Wt.w() == k && (k % 2) == 1, "conv2d: kernel must be odd and square");
  if (Wt.c() != X.c())
    throw ShapeError("conv2d: input has " + std::to_string(X.c()) + " channels, weight expects " +
                     std::to_string(Wt.c()));
  const int N = X.n(), Cout = Wt.n(), K = X.c() * k * k;
  const std::size_t NP = N * X.plane();

  std::vector<T> col;
  if (k == 1) detail::nchw_to_cm(X, col);
  else detail::im2col(X, k, col);
  std::vector<T> y(static_cast<std::size_t>(Cout) * NP);
  MatMap<T>(y.data(), Cout, NP).noalias() =
      ConstMatMap<T>(Wt.data(), Cout, K) * ConstMatMap<T>(col.data(), K, static_cast<Eigen::Index>(NP));
  if (bias.defined()) {
    for (int co = 0; co < Cout; ++co) {
      const T b = bias.value()[co];
      T* row = y.data() + co * NP;
      for (std::size_t i = 0; i < NP; ++i) row[i] += b;
    }
  }
  Tensor<T> out(N, Cout, X.h(), X.w());
  detail::cm_to_nchw(y.data(), out);

  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return record<T>(std::move(out), parents, [x, weight, bias, k, K, Cout, NP](const Tensor<T>& g) {
    std::vector<T> gy;
    detail::nchw_to_cm(g, gy);
    ConstMatMap<T> dY(gy.data(), Cout, static_cast<Eigen::Index>(NP));
    std::vector<T> col;
    const bool need_w = wants_grad(weight), need_x = wants_grad(x);
    if (need_w) {
      if (k == 1) detail::nchw_to_cm(x.value(), col);
      else detail::im2col(x.value(), k, col);
      auto& gw = grad_of(weight);
      MatMap<T>(gw.data(), Cout, K).noalias() += dY * ConstMatMap<T>(col.data(), K, NP).transpose();
    }
    if (bias.defined() && wants_grad(bias)) {
      auto& gb = grad_of(bias);
      for (int co = 0; co < Cout; ++co) gb[co] += dY.row(co).sum();
    }
    if (need_x) {
      std::vector<T> dcol(static_cast<std::size_t>(K) * NP);
      MatMap<T>(dcol.data(), K, NP).noalias() = ConstMatMap<T>(weight.value().data(), Cout, K).transpose() * dY;
      auto& gx = grad_of(x);
      if (k == 1) {
        Tensor<T> tmp = Tensor<T>::zeros_like(x.value());
        detail::cm_to_nchw(dcol.data(), tmp);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += tmp[i];
      } else {
        detail::col2im(dcol, k, gx);
      }
    }
  });
}

// Batch normalisation over (N, H, W) per channel. In training mode batch
// statistics are used and, if update_running, the running buffers move by
// `momentum` (running variance uses the unbiased estimate).
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, bool update_running = true, T momentum = T(0.1),
                  T eps = T(1e-5)) {
  const auto& X = x.value();
  const int N = X.n(), C = X.c();
  const std::size_t P = X.plane();
  const double M = static_cast<double>(N) * P;
  detail::require(gamma.value().size() == static_cast<std::size_t>(C), "batch_norm: gamma size mismatch");

  std::vector<T> mean(C), invstd(C);
  for (int c = 0; c < C; ++c) {
    if (training) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const T* p = X.data() + X.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < P; ++i) s += p[i];
      }
      const double mu = s / M;
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const T* p = X.data() + X.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < P; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      const double var = v / M;
      mean[c] = static_cast<T>(mu);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      if (update_running) {
        const double unbiased = M > 1 ? v / (M - 1) : var;
        running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * mu);
        running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * unbiased);
      }
    } else {
      mean[c] = running_mean[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    }
  }

  Tensor<T> xhat = Tensor<T>::zeros_like(X);
  Tensor<T> out = Tensor<T>::zeros_like(X);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T g = gamma.value()[c], b = beta.value()[c], mu = mean[c], is = invstd[c];
      const std::size_t o = X.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < P; ++i) {
        const T h = (X[o + i] - mu) * is;
        xhat[o + i] = h;
        out[o + i] = g * h + b;
      }
    }

  return record<T>(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat = std::move(xhat), invstd, training, N, C, P, M](const Tensor<T>& g) {
                     std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
                     for (int n = 0; n < N; ++n)
                       for (int c = 0; c < C; ++c) {
                         const std::size_t o = g.offset(n, c, 0, 0);
                         for (std::size_t i = 0; i < P; ++i) {
                           sum_dy[c] += g[o + i];
                           sum_dy_xhat[c] += g[o + i] * xhat[o + i];
                         }
                       }
                     if (wants_grad(gamma)) {
                       auto& gg = grad_of(gamma);
                       for (int c = 0; c < C; ++c) gg[c] += static_cast<T>(sum_dy_xhat[c]);
                     }
                     if (wants_grad(beta)) {
                       auto& gb = grad_of(beta);
                       for (int c = 0; c < C; ++c) gb[c] += static_cast<T>(sum_dy[c]);
                     }
                     if (!wants_grad(x)) return;
                     auto& gx = grad_of(x);
                     for (int n = 0; n < N; ++n)
                       for (int c = 0; c < C; ++c) {
                         const T scale = gamma.value()[c] * invstd[c];
                         const std::size_t o = g.offset(n, c, 0, 0);
                         if (training) {
                           const T mdy = static_cast<T>(sum_dy[c] / M), mdyx = static_cast<T>(sum_dy_xhat[c] / M);
                           for (std::size_t i = 0; i < P; ++i) gx[o + i] += scale * (g[o + i] - mdy - xhat[o + i] * mdyx);
                         } else {
                           for (std::size_t i = 0; i < P; ++i) gx[o + i] += scale * g[o + i];
                         }
                       }
                   });
}

// Layer normalisation across channels at every pixel (token-wise LN for
// attention blocks that keep the NCHW layout).
template <class T>
Var<T> layer_norm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const auto& X = x.value();
  const int N = X.n(), C = X.c();
  const std::size_t P = X.plane();
  Tensor<T> xhat = Tensor<T>::zeros_like(X), out = Tensor<T>::zeros_like(X);
  std::vector<T> invstd(N * P);
  for (int n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p) {
      double s = 0.0;
      for (int c = 0; c < C; ++c) s += X[X.offset(n, c, 0, 0) + p];
      const double mu = s / C;
      double v = 0.0;
      for (int c = 0; c < C; ++c) {
        const double d = X[X.offset(n, c, 0, 0) + p] - mu;
        v += d * d;
      }
      const double is = 1.0 / std::sqrt(v / C + eps);
      invstd[n * P + p] = static_cast<T>(is);
      for (int c = 0; c < C; ++c) {
        const std::size_t o = X.offset(n, c, 0, 0) + p;
        xhat[o] = static_cast<T>((X[o] - mu) * is);
        out[o] = gamma.value()[c] * xhat[o] + beta.value()[c];
      }
    }
  return record<T>(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), N, C, P](const Tensor<T>& g) {
                     if (wants_grad(gamma) || wants_grad(beta)) {
                       std::vector<double> sg(C, 0.0), sb(C, 0.0);
                       for (int n = 0; n < N; ++n)
                         for (int c = 0; c < C; ++c) {
                           const std::size_t o = g.offset(n, c, 0, 0);
                           for (std::size_t p = 0; p < P; ++p) {
                             sg[c] += g[o + p] * xhat[o + p];
                             sb[c] += g[o + p];
                           }
                         }
                       if (wants_grad(gamma)) {
                         auto& gg = grad_of(gamma);
                         for (int c = 0; c < C; ++c) gg[c] += static_cast<T>(sg[c]);
                       }
                       if (wants_grad(beta)) {
                         auto& gb = grad_of(beta);
                         for (int c = 0; c < C; ++c) gb[c] += static_cast<T>(sb[c]);
                       }
                     }
                     if (!wants_grad(x)) return;
                     auto& gx = grad_of(x);
                     for (int n = 0; n < N; ++n)
                       for (std::size_t p = 0; p < P; ++p) {
                         double s1 = 0.0, s2 = 0.0;
                         for (int c = 0; c < C; ++c) {
                           const std::size_t o = g.offset(n, c, 0, 0) + p;
                           const double dh = g[o] * gamma.value()[c];
                           s1 += dh;
                           s2 += dh * xhat[o];
                         }
                         const double is = invstd[n * P + p];
                         for (int c = 0; c < C; ++c) {
                           const std::size_t o = g.offset(n, c, 0, 0) + p;
                           const double dh = g[o] * gamma.value()[c];
                           gx[o] += static_cast<T>(is * (dh - s1 / C - xhat[o] * s2 / C));
                         }
                       }
                   });
}

namespace detail {

template <class T, class F, class DF>
Var<T> unary(const Var<T>& x, F f, DF df) {
  const auto& X = x.value();
  Tensor<T> out = Tensor<T>::zeros_like(X);
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = f(X[i]);
  return record<T>(std::move(out), {x}, [x, df](const Tensor<T>& g) {
    auto& gx = grad_of(x);
    const auto& X = x.value();
    for (std::size_t i = 0; i < X.size(); ++i) gx[i] += g[i] * df(X[i]);
  });
}

}  // namespace detail

template <class T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>(x, [](T v) { return v > T(0) || std::isnan(v) ? v : T(0); },
                           [](T v) { return v > T(0) ? T(1) : T(0); });
}

// Exact (erf) GELU.
template <class T>
Var<T> gelu(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>)); },
      [](T v) {
        const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
        const T pdf = std::exp(T(-0.5) * v * v) / std::sqrt(T(2) * std::numbers::pi_v<T>);
        return cdf + v * pdf;
      });
}

template <class T>
Var<T> silu(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v / (T(1) + std::exp(-v)); },
      [](T v) {
        const T s = T(1) / (T(1) + std::exp(-v));
        return s * (T(1) + v * (T(1) - s));
      });
}

// Clamp to [0,1]; gradient passes only strictly inside the interval.
template <class T>
Var<T> clamp01(const Var<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return std::clamp(v, T(0), T(1)); }, [](T v) { return (v > T(0) && v < T(1)) ? T(1) : T(0); });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError("add: " + a.value().shape_str() + " vs " + b.value().shape_str());
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return record<T>(std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    accumulate(a, g);
    accumulate(b, g);
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.span()) v *= s;
  return record<T>(std::move(out), {a}, [a, s](const Tensor<T>& g) {
    if (!wants_grad(a)) return;
    auto& ga = grad_of(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * g[i];
  });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  detail::require(!xs.empty(), "concat: no inputs");
  const auto& f = xs.front().value();
  int C = 0;
  for (const auto& x : xs) {
    const auto& v = x.value();
    if (v.n() != f.n() || v.h() != f.h() || v.w() != f.w())
      throw ShapeError("concat: " + v.shape_str() + " vs " + f.shape_str());
    C += v.c();
  }
  Tensor<T> out(f.n(), C, f.h(), f.w());
  const std::size_t P = f.plane();
  for (int n = 0; n < f.n(); ++n) {
    int c0 = 0;
    for (const auto& x : xs) {
      const auto& v = x.value();
      std::copy_n(v.data() + v.offset(n, 0, 0, 0), v.c() * P, out.data() + out.offset(n, c0, 0, 0));
      c0 += v.c();
    }
  }
  return record<T>(std::move(out), xs, [xs, P](const Tensor<T>& g) {
    for (int n = 0; n < g.n(); ++n) {
      int c0 = 0;
      for (const auto& x : xs) {
        const int cx = x.value().c();
        if (wants_grad(x)) {
          auto& gx = grad_of(x);
          const T* src = g.data() + g.offset(n, c0, 0, 0);
          T* dst = gx.data() + gx.offset(n, 0, 0, 0);
          for (std::size_t i = 0; i < cx * P; ++i) dst[i] += src[i];
        }
        c0 += cx;
      }
    }
  });
}

// Argmax positions of a k x k / stride k max pool, one per output element,
// as offsets into the input plane. Ties keep the first maximum in row-major
// window order.
struct PoolIndices {
  int n = 0, c = 0, in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<std::int32_t> idx;
  bool valid() const { return !idx.empty(); }
};

template <class T>
struct Pooled {
  Var<T> out;
  std::shared_ptr<const PoolIndices> indices;
};

template <class T>
Pooled<T> max_pool(const Var<T>& x, int k) {
  const auto& X = x.value();
  if (k < 1 || X.h() % k != 0 || X.w() % k != 0)
    throw ShapeError("max_pool: " + X.shape_str() + " not divisible by " + std::to_string(k));
  auto ind = std::make_shared<PoolIndices>();
  ind->n = X.n(), ind->c = X.c(), ind->in_h = X.h(), ind->in_w = X.w();
  ind->out_h = X.h() / k, ind->out_w = X.w() / k;
  Tensor<T> out(X.n(), X.c(), ind->out_h, ind->out_w);
  ind->idx.resize(out.size());
  for (int n = 0; n < X.n(); ++n)
    for (int c = 0; c < X.c(); ++c) {
      const T* src = X.data() + X.offset(n, c, 0, 0);
      for (int oy = 0; oy < ind->out_h; ++oy)
        for (int ox = 0; ox < ind->out_w; ++ox) {
          int best = oy * k * X.w() + ox * k;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const int p = (oy * k + dy) * X.w() + ox * k + dx;
              if (src[p] > src[best] || std::isnan(src[p])) best = p;
            }
          const std::size_t o = out.offset(n, c, oy, ox);
          out[o] = src[best];
          ind->idx[o] = best;
        }
    }
  std::shared_ptr<const PoolIndices> cind = ind;
  Var<T> y = record<T>(std::move(out), {x}, [x, cind](const Tensor<T>& g) {
    auto& gx = grad_of(x);
    const std::size_t P = static_cast<std::size_t>(cind->out_h) * cind->out_w;
    for (int n = 0; n < cind->n; ++n)
      for (int c = 0; c < cind->c; ++c) {
        const std::size_t o = g.offset(n, c, 0, 0);
        T* dst = gx.data() + gx.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < P; ++i) dst[cind->idx[o + i]] += g[o + i];
      }
  });
  return {y, cind};
}

// Scatters each value to the argmax cell recorded by max_pool; every other
// cell of the window is zero.
template <class T>
Var<T> max_unpool(const Var<T>& x, const std::shared_ptr<const PoolIndices>& ind) {
  if (!ind || !ind->valid()) throw StateError("max_unpool: pooling indices are missing");
  const auto& X = x.value();
  if (X.n() != ind->n || X.c() != ind->c || X.h() != ind->out_h || X.w() != ind->out_w)
    throw ShapeError("max_unpool: input " + X.shape_str() + " does not match recorded pooling");
  Tensor<T> out(ind->n, ind->c, ind->in_h, ind->in_w);
  const std::size_t P = X.plane();
  for (int n = 0; n < X.n(); ++n)
    for (int c = 0; c < X.c(); ++c) {
      const std::size_t o = X.offset(n, c, 0, 0);
      T* dst = out.data() + out.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < P; ++i) dst[ind->idx[o + i]] = X[o + i];
    }
  return record<T>(std::move(out), {x}, [x, ind, P](const Tensor<T>& g) {
    auto& gx = grad_of(x);
    for (int n = 0; n < ind->n; ++n)
      for (int c = 0; c < ind->c; ++c) {
        const std::size_t o = gx.offset(n, c, 0, 0);
        const T* src = g.data() + g.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < P; ++i) gx[o + i] += src[ind->idx[o + i]];
      }
  });
}

// Bilinear resize, half-pixel centers (align_corners=false).
template <class T>
Var<T> upsample_bilinear(const Var<T>& x, int out_h, int out_w) {
  const auto& X = x.value();
  std::vector<p3m::detail::LinearTap> ty(out_h), tx(out_w);
  for (int y = 0; y < out_h; ++y) ty[y] = p3m::detail::linear_tap(y, X.h(), out_h);
  for (int xx = 0; xx < out_w; ++xx) tx[xx] = p3m::detail::linear_tap(xx, X.w(), out_w);
  Tensor<T> out(X.n(), X.c(), out_h, out_w);
  for (int n = 0; n < X.n(); ++n)
    for (int c = 0; c < X.c(); ++c) {
      const T* src = X.data() + X.offset(n, c, 0, 0);
      T* dst = out.data() + out.offset(n, c, 0, 0);
      for (int y = 0; y < out_h; ++y) {
        const auto& a = ty[y];
        for (int xx = 0; xx < out_w; ++xx) {
          const auto& b = tx[xx];
          const T top = T(1 - b.w1) * src[a.i0 * X.w() + b.i0] + T(b.w1) * src[a.i0 * X.w() + b.i1];
          const T bot = T(1 - b.w1) * src[a.i1 * X.w() + b.i0] + T(b.w1) * src[a.i1 * X.w() + b.i1];
          dst[y * out_w + xx] = T(1 - a.w1) * top + T(a.w1) * bot;
        }
      }
    }
  return record<T>(std::move(out), {x}, [x, ty, tx, out_h, out_w](const Tensor<T>& g) {
    auto& gx = grad_of(x);
    const int W = gx.w();
    for (int n = 0; n < gx.n(); ++n)
      for (int c = 0; c < gx.c(); ++c) {
        T* dst = gx.data() + gx.offset(n, c, 0, 0);
        const T* src = g.data() + g.offset(n, c, 0, 0);
        for (int y = 0; y < out_h; ++y) {
          const auto& a = ty[y];
          for (int xx = 0; xx < out_w; ++xx) {
            const auto& b = tx[xx];
            const T v = src[y * out_w + xx];
            dst[a.i0 * W + b.i0] += v * T(1 - a.w1) * T(1 - b.w1);
            dst[a.i0 * W + b.i1] += v * T(1 - a.w1) * T(b.w1);
            dst[a.i1 * W + b.i0] += v * T(a.w1) * T(1 - b.w1);
            dst[a.i1 * W + b.i1] += v * T(a.w1) * T(b.w1);
          }
        }
      }
  });
}

// y[n,c] = x[n,c] * mul[c] + add[c] with fixed coefficients (input normalisation).
template <class T>
Var<T> channel_affine(const Var<T>& x, const std::vector<T>& mul, const std::vector<T>& shift) {
  const auto& X = x.value();
  detail::require(mul.size() == static_cast<std::size_t>(X.c()) && shift.size() == mul.size(),
                  "channel_affine: coefficient count mismatch");
  Tensor<T> out = X;
  const std::size_t P = X.plane();
  for (int n = 0; n < X.n(); ++n)
    for (int c = 0; c < X.c(); ++c) {
      T* p = out.data() + out.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < P; ++i) p[i] = p[i] * mul[c] + shift[c];
    }
  return record<T>(std::move(out), {x}, [x, mul, P](const Tensor<T>& g) {
    auto& gx = grad_of(x);
    for (int n = 0; n < g.n(); ++n)
      for (int c = 0; c < g.c(); ++c) {
        const std::size_t o = g.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < P; ++i) gx[o + i] += g[o + i] * mul[c];
      }
  });
}

// Returns x with x[positions[i]] replaced by values[i] (flat NCHW offsets).
// The replaced cells carry no gradient back to x; values are constants.
template <class T>
Var<T> replace_values(const Var<T>& x, std::vector<std::size_t> positions, const std::vector<T>& values) {
  detail::require(positions.size() == values.size(), "replace_values: size mismatch");
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < positions.size(); ++i) out[positions[i]] = values[i];
  return record<T>(std::move(out), {x}, [x, positions = std::move(positions)](const Tensor<T>& g) {
    if (!wants_grad(x)) return;
    Tensor<T> gg = g;
    for (auto p : positions) gg[p] = T(0);
    accumulate(x, gg);
  });
}

// Mean over pixels of the 3-way (or K-way) softmax cross-entropy; labels are
// N*H*W class ids.
template <class T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<std::uint8_t>& labels) {
  const auto& L = logits.value();
  const int N = L.n(), K = L.c();
  const std::size_t P = L.plane();
  detail::require(labels.size() == N * P, "cross_entropy: label count mismatch");
  Tensor<T> prob = Tensor<T>::zeros_like(L);
  double total = 0.0;
  for (int n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int k = 0; k < K; ++k) mx = std::max(mx, L[L.offset(n, k, 0, 0) + p]);
      double z = 0.0;
      for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(L[L.offset(n, k, 0, 0) + p] - mx));
      for (int k = 0; k < K; ++k) {
        const std::size_t o = L.offset(n, k, 0, 0) + p;
        prob[o] = static_cast<T>(std::exp(static_cast<double>(L[o] - mx)) / z);
      }
      const int y = labels[n * P + p];
      total += -(static_cast<double>(L[L.offset(n, y, 0, 0) + p] - mx) - std::log(z));
    }
  const double count = static_cast<double>(N) * P;
  return record<T>(Tensor<T>::scalar(static_cast<T>(total / count)), {logits},
                   [logits, prob = std::move(prob), labels, N, K, P, count](const Tensor<T>& g) {
                     auto& gl = grad_of(logits);
                     const T s = static_cast<T>(g[0] / count);
                     for (int n = 0; n < N; ++n)
                       for (int k = 0; k < K; ++k) {
                         const std::size_t o = gl.offset(n, k, 0, 0);
                         for (std::size_t p = 0; p < P; ++p) {
                           const T onehot = labels[n * P + p] == k ? T(1) : T(0);
                           gl[o + p] += s * (prob[o + p] - onehot);
                         }
                       }
                   });
}

// Mean |pred - target| over cells where mask != 0 (all cells when mask is
// empty). An all-zero mask yields a constant 0.
template <class T>
Var<T> masked_l1(const Var<T>& pred, const Tensor<T>& target, const std::vector<std::uint8_t>& mask = {}) {
  const auto& X = pred.value();
  detail::require(X.same_shape(target), "masked_l1: shape mismatch");
  detail::require(mask.empty() || mask.size() == X.size(), "masked_l1: mask size mismatch");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    s += std::abs(static_cast<double>(X[i]) - target[i]);
    ++count;
  }
  if (count == 0) return constant(Tensor<T>::scalar(T(0)));
  return record<T>(Tensor<T>::scalar(static_cast<T>(s / count)), {pred},
                   [pred, target, mask, count](const Tensor<T>& g) {
                     auto& gp = grad_of(pred);
                     const T sc = static_cast<T>(g[0] / count);
                     const auto& X = pred.value();
                     for (std::size_t i = 0; i < X.size(); ++i) {
                       if (!mask.empty() && !mask[i]) continue;
                       const T d = X[i] - target[i];
                       gp[i] += d > 0 ? sc : (d < 0 ? -sc : T(0));
                     }
                   });
}

// Sum of mean squares, used in tests as a smooth scalar objective.
template <class T>
Var<T> mean_square(const Var<T>& x) {
  const auto& X = x.value();
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) s += static_cast<double>(X[i]) * X[i];
  const std::size_t count = X.size();
  return record<T>(Tensor<T>::scalar(static_cast<T>(s / count)), {x}, [x, count](const Tensor<T>& g) {
    auto& gx = grad_of(x);
    const auto& X = x.value();
    for (std::size_t i = 0; i < X.size(); ++i) gx[i] += static_cast<T>(2.0 * g[0] / count) * X[i];
  });
}

// Weighted sum with a fixed weight tensor (same shape) -> scalar.
template <class T>
Var<T> dot_with(const Var<T>& x, const Tensor<T>& weights) {
  detail::require(x.value().same_shape(weights), "dot_with: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += static_cast<double>(x.value()[i]) * weights[i];
  return record<T>(Tensor<T>::scalar(static_cast<T>(s)), {x}, [x, weights](const Tensor<T>& g) {
    auto& gx = grad_of(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] * weights[i];
  });
}

}  // namespace p3m::nn
