#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "p3m/core/resample.hpp"
#include "p3m/datapipe/dataset.hpp"

namespace p3m {

struct AugmentationConfig {
  std::vector<int> crop_sizes{512, 768, 1024};
  int out_size = 512;
  double hflip_prob = 0.5;
  int trimap_kernel = 25;

  void validate() const {
    if (crop_sizes.empty()) throw ConfigError("crop_sizes must not be empty");
    for (int c : crop_sizes)
      if (c < 1 || 2 * c < out_size) throw ConfigError("crop sizes must be at least out_size / 2");
    if (out_size < 1) throw ConfigError("out_size must be positive");
    if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ConfigError("hflip_prob must be in [0,1]");
    if (trimap_kernel < 1 || trimap_kernel % 2 == 0) throw ConfigError("trimap_kernel must be odd");
  }
};

// One generator per (seed, epoch, sample) so augmentation does not depend on
// which worker handles a sample.
inline std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct CropWindow {
  int row = 0, col = 0, size = 0;
};

namespace detail {

template <class G>
G crop(const G& g, const CropWindow& w) {
  G out = make_like<G>(g.channels(), w.size, w.size);
  for (int c = 0; c < g.channels(); ++c)
    for (int r = 0; r < w.size; ++r)
      for (int x = 0; x < w.size; ++x) out.at(c, r, x) = g.at(c, w.row + r, w.col + x);
  return out;
}

template <class G>
G hflip(const G& g) {
  G out = g;
  for (int c = 0; c < g.channels(); ++c)
    for (int r = 0; r < g.height(); ++r)
      for (int x = 0; x < g.width(); ++x) out.at(c, r, x) = g.at(c, r, g.width() - 1 - x);
  return out;
}

}  // namespace detail

// Crops the given square window from all rasters and resizes to out_size
// (bilinear image and alpha, nearest facemask).
inline Sample crop_resize(const Sample& s, const CropWindow& w, int out_size) {
  Sample o{s.stem, detail::crop(s.image, w), detail::crop(s.alpha, w), detail::crop(s.facemask, w)};
  if (w.size != out_size) {
    o.image = resample(o.image, out_size, out_size, ResampleMode::kBilinear);
    o.alpha = resample(o.alpha, out_size, out_size, ResampleMode::kBilinear);
    o.facemask = resample(o.facemask, out_size, out_size, ResampleMode::kNearest);
  }
  return o;
}

// Draws a crop size, then the top-left corner. A crop larger than the image
// falls back to the largest centred square.
inline CropWindow draw_crop(int h, int w, std::mt19937_64& rng, const AugmentationConfig& cfg) {
  std::uniform_int_distribution<std::size_t> pick(0, cfg.crop_sizes.size() - 1);
  const int size = cfg.crop_sizes[pick(rng)];
  if (size > h || size > w) {
    const int s = std::min(h, w);
    return {(h - s) / 2, (w - s) / 2, s};
  }
  std::uniform_int_distribution<int> rr(0, h - size), cc(0, w - size);
  const int row = rr(rng);
  return {row, cc(rng), size};
}

inline Sample random_crop_resize(const Sample& s, std::mt19937_64& rng, const AugmentationConfig& cfg) {
  return crop_resize(s, draw_crop(s.image.height(), s.image.width(), rng, cfg), cfg.out_size);
}

inline Sample random_hflip(const Sample& s, std::mt19937_64& rng, const AugmentationConfig& cfg) {
  std::bernoulli_distribution coin(cfg.hflip_prob);
  if (!coin(rng)) return s;
  return {s.stem, detail::hflip(s.image), detail::hflip(s.alpha), detail::hflip(s.facemask)};
}

}  // namespace p3m
