#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "p3m/core/raster.hpp"

namespace p3m {

enum class ResampleMode { kBilinear, kNearest, kMaxPool };

namespace detail {

// Two-tap linear interpolation weights for one output coordinate under the
// half-pixel-center (align_corners=false) convention.
struct LinearTap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline LinearTap linear_tap(int dst, int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  double src = (dst + 0.5) * scale - 0.5;
  if (src < 0.0) src = 0.0;
  int i0 = static_cast<int>(std::floor(src));
  if (i0 > in_size - 1) i0 = in_size - 1;
  const int i1 = std::min(i0 + 1, in_size - 1);
  const double w1 = src - i0;
  return {i0, i1, i1 == i0 ? 0.0 : w1};
}

inline int nearest_index(int dst, int in_size, int out_size) {
  const int idx = static_cast<int>(std::floor(dst * (static_cast<double>(in_size) / out_size)));
  return std::min(idx, in_size - 1);
}

template <class G>
G make_like(int channels, int height, int width) {
  using T = typename G::value_type;
  if constexpr (std::is_same_v<G, Grid<T>>) {
    return G(channels, height, width);
  } else {
    return G(Grid<T>(channels, height, width));
  }
}

}  // namespace detail

template <class G>
G resample(const G& map, int out_h, int out_w, ResampleMode mode) {
  using T = typename G::value_type;
  if (out_h < 1 || out_w < 1) throw ShapeError("resample: output size must be positive");
  const int C = map.channels(), H = map.height(), W = map.width();
  G out = detail::make_like<G>(C, out_h, out_w);

  switch (mode) {
    case ResampleMode::kNearest: {
      for (int c = 0; c < C; ++c)
        for (int r = 0; r < out_h; ++r) {
          const int sr = detail::nearest_index(r, H, out_h);
          for (int x = 0; x < out_w; ++x) out.at(c, r, x) = map.at(c, sr, detail::nearest_index(x, W, out_w));
        }
      break;
    }
    case ResampleMode::kBilinear: {
      for (int r = 0; r < out_h; ++r) {
        const auto tr = detail::linear_tap(r, H, out_h);
        for (int x = 0; x < out_w; ++x) {
          const auto tc = detail::linear_tap(x, W, out_w);
          for (int c = 0; c < C; ++c) {
            const double top = (1.0 - tc.w1) * map.at(c, tr.i0, tc.i0) + tc.w1 * map.at(c, tr.i0, tc.i1);
            const double bot = (1.0 - tc.w1) * map.at(c, tr.i1, tc.i0) + tc.w1 * map.at(c, tr.i1, tc.i1);
            const double v = (1.0 - tr.w1) * top + tr.w1 * bot;
            if constexpr (std::is_integral_v<T>) {
              // Masks stay binary: threshold the interpolated occupancy at 0.5.
              out.at(c, r, x) = static_cast<T>(v >= 0.5 ? 1 : 0);
            } else {
              out.at(c, r, x) = static_cast<T>(v);
            }
          }
        }
      }
      break;
    }
    case ResampleMode::kMaxPool: {
      if (H % out_h != 0 || W % out_w != 0 || H / out_h != W / out_w) {
        throw InvalidRatio("maxpool resample needs one integer ratio, got " + std::to_string(H) + "x" +
                           std::to_string(W) + " -> " + std::to_string(out_h) + "x" + std::to_string(out_w));
      }
      const int k = H / out_h;
      for (int c = 0; c < C; ++c)
        for (int r = 0; r < out_h; ++r)
          for (int x = 0; x < out_w; ++x) {
            T best = map.at(c, r * k, x * k);
            for (int dr = 0; dr < k; ++dr)
              for (int dx = 0; dx < k; ++dx) best = std::max(best, map.at(c, r * k + dr, x * k + dx));
            out.at(c, r, x) = best;
          }
      break;
    }
  }
  return out;
}

// out = alpha * fg + (1 - alpha) * bg, per pixel and channel.
inline ImageRGB composite(const ImageRGB& fg, const ImageRGB& bg, const AlphaMatte& alpha) {
  if (!fg.same_spatial(bg) || !fg.same_spatial(alpha)) throw ShapeError("composite: raster sizes differ");
  ImageRGB out(fg.height(), fg.width());
  const auto a = alpha.data();
  for (int c = 0; c < 3; ++c) {
    const auto f = fg.plane(c), b = bg.plane(c);
    auto o = out.plane(c);
    for (std::size_t i = 0; i < o.size(); ++i) {
      const float v = a[i] * f[i] + (1.0f - a[i]) * b[i];
      o[i] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return out;
}

// Zeroes every channel where mask is 0.
template <class G>
G mask_apply(const G& data, const BinaryMask& mask) {
  if (!data.same_spatial(mask)) throw ShapeError("mask_apply: mask size differs from data");
  G out = data;
  const auto m = mask.data();
  for (int c = 0; c < out.channels(); ++c) {
    auto p = out.plane(c);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!m[i]) p[i] = typename G::value_type{};
  }
  return out;
}

}  // namespace p3m
