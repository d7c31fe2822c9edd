#pragma once

#include <array>
#include <cmath>
#include <string>

#include "p3m/core/error.hpp"

namespace p3m {

enum class BlockVariant { kResNet34, kSwinT, kViTAES };

inline std::string to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::kResNet34: return "resnet34";
    case BlockVariant::kSwinT: return "swin_t";
    case BlockVariant::kViTAES: return "vitae_s";
  }
  return "?";
}

inline BlockVariant parse_variant(const std::string& s) {
  if (s == "resnet34" || s == "RESNET34") return BlockVariant::kResNet34;
  if (s == "swin_t" || s == "SWIN_T") return BlockVariant::kSwinT;
  if (s == "vitae_s" || s == "VITAE_S") return BlockVariant::kViTAES;
  throw ConfigError("unknown backbone variant '" + s + "'");
}

// Sharing-encoder layout. depths[i] is the number of basic blocks in the
// i-th block series; stage_channels are E0..E4 widths at scale 1.
struct EncoderConfig {
  BlockVariant variant = BlockVariant::kResNet34;
  std::array<int, 4> depths{3, 4, 6, 3};
  std::array<int, 5> stage_channels{64, 64, 128, 256, 512};
  int window_size = 8;
  int num_heads = 2;  // heads of the first series, doubled per series
  double scale = 1.0;

  static EncoderConfig defaults(BlockVariant v) {
    EncoderConfig c;
    c.variant = v;
    switch (v) {
      case BlockVariant::kResNet34: c.depths = {3, 4, 6, 3}; break;
      case BlockVariant::kSwinT: c.depths = {2, 2, 6, 2}; break;
      case BlockVariant::kViTAES: c.depths = {2, 2, 12, 2}; break;
    }
    return c;
  }

  // Desk-scale variant: quarter width, 4-pixel windows, one head.
  static EncoderConfig toy(BlockVariant v) {
    EncoderConfig c = defaults(v);
    c.scale = 0.25;
    c.window_size = 4;
    c.num_heads = 1;
    return c;
  }

  // Width of stage s (0..4) after applying the width multiplier.
  int channels(int s) const {
    return std::max(1, static_cast<int>(std::lround(stage_channels.at(s) * scale)));
  }
  int heads(int series) const { return num_heads << series; }

  void validate() const {
    for (int d : depths)
      if (d < 1) throw ConfigError("encoder depths must be positive");
    for (int c : stage_channels)
      if (c < 1) throw ConfigError("encoder stage channels must be positive");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("encoder scale must be positive");
    if (variant != BlockVariant::kResNet34) {
      if (window_size < 1) throw ConfigError("window_size must be positive");
      if (num_heads < 1) throw ConfigError("num_heads must be positive");
      for (int s = 0; s < 4; ++s)
        if (channels(s + 1) % heads(s) != 0)
          throw ConfigError("stage " + std::to_string(s + 1) + " width " + std::to_string(channels(s + 1)) +
                            " not divisible by " + std::to_string(heads(s)) + " heads");
    }
  }
};

}  // namespace p3m
