#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "p3m/anonymize/landmarks.hpp"

namespace p3m {

enum class ObfuscationMethod { kBlur, kMosaic, kZero };

inline std::string to_string(ObfuscationMethod m) {
  switch (m) {
    case ObfuscationMethod::kBlur: return "blur";
    case ObfuscationMethod::kMosaic: return "mosaic";
    case ObfuscationMethod::kZero: return "zero";
  }
  return "blur";
}

inline ObfuscationMethod parse_obfuscation(const std::string& s) {
  if (s == "blur") return ObfuscationMethod::kBlur;
  if (s == "mosaic") return ObfuscationMethod::kMosaic;
  if (s == "zero") return ObfuscationMethod::kZero;
  throw ConfigError("unknown obfuscation method '" + s + "' (blur|mosaic|zero)");
}

struct ObfuscationConfig {
  ObfuscationMethod method = ObfuscationMethod::kBlur;
  double blur_sigma_fraction = 0.08;   // of the mask bounding-box diagonal
  double mosaic_cell_fraction = 0.1;   // of the mask bounding-box diagonal
  int min_mosaic_cell = 4;

  void validate() const {
    if (!(blur_sigma_fraction > 0.0) || !(mosaic_cell_fraction > 0.0))
      throw ConfigError("obfuscation fractions must be positive");
  }
};

// Pixels with 0 < alpha < 1.
inline BinaryMask transition_mask(const AlphaMatte& alpha) {
  BinaryMask m(alpha.height(), alpha.width());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const float a = alpha.data()[i];
    m.data()[i] = (a > 0.0f && a < 1.0f) ? 1 : 0;
  }
  return m;
}

inline BinaryMask adjust_private_area(const BinaryMask& face, const BinaryMask& transition) {
  if (!face.same_spatial(transition)) throw ShapeError("adjust_private_area: mask sizes differ");
  BinaryMask out(face.height(), face.width());
  for (std::size_t i = 0; i < face.size(); ++i) out.data()[i] = face.data()[i] && !transition.data()[i];
  return out;
}

struct MaskBox {
  int r0 = 0, c0 = 0, r1 = -1, c1 = -1;  // inclusive
  bool empty() const { return r1 < r0; }
  double diagonal() const { return std::hypot(r1 - r0 + 1.0, c1 - c0 + 1.0); }
};

inline MaskBox bounding_box(const BinaryMask& m) {
  MaskBox b{m.height(), m.width(), -1, -1};
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c)
      if (m(r, c)) b.r0 = std::min(b.r0, r), b.c0 = std::min(b.c0, c), b.r1 = std::max(b.r1, r), b.c1 = std::max(b.c1, c);
  if (b.r1 < 0) return MaskBox{};
  return b;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) s += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= s;
  return k;
}

// Separable Gaussian over the whole image with replicated borders.
inline ImageRGB gaussian_blur(const ImageRGB& img, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int R = static_cast<int>(k.size() / 2), H = img.height(), W = img.width();
  ImageRGB out(H, W);
  std::vector<double> tmp(static_cast<std::size_t>(H) * W);
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double s = 0.0;
        for (int i = -R; i <= R; ++i) s += k[i + R] * img.at(ch, r, std::clamp(c + i, 0, W - 1));
        tmp[r * W + c] = s;
      }
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        double s = 0.0;
        for (int i = -R; i <= R; ++i) s += k[i + R] * tmp[std::clamp(r + i, 0, H - 1) * W + c];
        out.at(ch, r, c) = static_cast<float>(std::clamp(s, 0.0, 1.0));
      }
  }
  return out;
}

// Cell means over a grid anchored at (r0, c0).
inline ImageRGB mosaic(const ImageRGB& img, int cell, int r0, int c0) {
  const int H = img.height(), W = img.width();
  ImageRGB out(H, W);
  const auto first = [cell](int v, int origin) {
    const int d = v - origin;
    return origin + (d >= 0 ? d / cell : -((-d + cell - 1) / cell)) * cell;
  };
  for (int gr = first(0, r0); gr < H; gr += cell)
    for (int gc = first(0, c0); gc < W; gc += cell) {
      const int ra = std::max(gr, 0), rb = std::min(gr + cell, H);
      const int ca = std::max(gc, 0), cb = std::min(gc + cell, W);
      for (int ch = 0; ch < 3; ++ch) {
        double s = 0.0;
        for (int r = ra; r < rb; ++r)
          for (int c = ca; c < cb; ++c) s += img.at(ch, r, c);
        const float mean = static_cast<float>(s / ((rb - ra) * (cb - ca)));
        for (int r = ra; r < rb; ++r)
          for (int c = ca; c < cb; ++c) out.at(ch, r, c) = mean;
      }
    }
  return out;
}

}  // namespace detail

// Replaces the masked pixels only; everything else is copied bit-exactly.
// The seed is accepted for API stability; the current methods are deterministic.
inline ImageRGB obfuscate_region(const ImageRGB& img, const BinaryMask& mask, const ObfuscationConfig& cfg,
                                 std::uint64_t /*rng_seed*/ = 0) {
  cfg.validate();
  if (!img.same_spatial(mask)) throw ShapeError("obfuscate_region: mask size differs from image");
  if (mask.none()) return img;
  const MaskBox box = bounding_box(mask);
  ImageRGB filtered(img.height(), img.width());
  switch (cfg.method) {
    case ObfuscationMethod::kBlur:
      filtered = detail::gaussian_blur(img, cfg.blur_sigma_fraction * box.diagonal());
      break;
    case ObfuscationMethod::kMosaic: {
      const int cell = std::max(cfg.min_mosaic_cell, static_cast<int>(std::lround(cfg.mosaic_cell_fraction * box.diagonal())));
      filtered = detail::mosaic(img, cell, box.r0, box.c0);
      break;
    }
    case ObfuscationMethod::kZero:
      break;
  }
  ImageRGB out = img;
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < img.height(); ++r)
      for (int c = 0; c < img.width(); ++c)
        if (mask(r, c)) out.at(ch, r, c) = filtered.at(ch, r, c);
  return out;
}

struct ObfuscationResult {
  ImageRGB image;
  BinaryMask private_area;  // the pixels that were obfuscated
};

// Face area (from landmarks or a manual mask) minus the transition band of
// alpha, then obfuscated.
inline ObfuscationResult obfuscate_with_mask(const ImageRGB& img, const BinaryMask& face, const AlphaMatte& alpha,
                                             const ObfuscationConfig& cfg, std::uint64_t seed = 0) {
  if (!img.same_spatial(face) || !img.same_spatial(alpha)) throw ShapeError("obfuscate: inputs differ in size");
  BinaryMask area = adjust_private_area(face, transition_mask(alpha));
  ImageRGB out = obfuscate_region(img, area, cfg, seed);
  return {std::move(out), std::move(area)};
}

inline ObfuscationResult obfuscate(const ImageRGB& img, const FaceLandmarks& lm, const AlphaMatte& alpha,
                                   const ObfuscationConfig& cfg, std::uint64_t seed = 0) {
  return obfuscate_with_mask(img, face_mask_from_landmarks(lm, img.height(), img.width()), alpha, cfg, seed);
}

}  // namespace p3m
