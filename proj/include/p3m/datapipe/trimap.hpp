#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "p3m/core/raster.hpp"

namespace p3m {

// Transition = {0 < alpha < 1} dilated by a k x k square; foreground = the
// remaining alpha == 1 pixels; background = everything else.
inline Trimap trimap_from_alpha(const AlphaMatte& alpha, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("trimap kernel must be odd and >= 1");
  const int H = alpha.height(), W = alpha.width(), R = kernel / 2;
  std::vector<std::uint8_t> soft(static_cast<std::size_t>(H) * W), rows(soft.size());
  for (std::size_t i = 0; i < soft.size(); ++i) soft[i] = alpha.data()[i] > 0.0f && alpha.data()[i] < 1.0f;
  // separable max filter
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      std::uint8_t v = 0;
      for (int d = std::max(0, c - R); d <= std::min(W - 1, c + R) && !v; ++d) v = soft[r * W + d];
      rows[r * W + c] = v;
    }
  Trimap t(H, W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      std::uint8_t v = 0;
      for (int d = std::max(0, r - R); d <= std::min(H - 1, r + R) && !v; ++d) v = rows[d * W + c];
      if (v) t.set(r, c, TrimapLabel::kTransition);
      else if (alpha(r, c) >= 1.0f) t.set(r, c, TrimapLabel::kForeground);
    }
  return t;
}

// The full-resolution kernel scaled by a resize factor, kept odd.
inline int scaled_trimap_kernel(int kernel, double factor) {
  int k = std::max(1, static_cast<int>(std::lround(kernel * factor)));
  if (k % 2 == 0) ++k;
  return k;
}

}  // namespace p3m
