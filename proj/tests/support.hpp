#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "p3m/core/raster.hpp"
#include "oracles/metrics_oracle.hpp"

namespace testing_support {

inline p3m::AlphaMatte random_matte(int h, int w, std::mt19937_64& rng, double p_hard = 0.4) {
  std::uniform_real_distribution<double> u(0, 1);
  p3m::AlphaMatte a(h, w);
  for (auto& v : a.data()) {
    const double k = u(rng);
    v = k < p_hard / 2 ? 0.0f : k < p_hard ? 1.0f : static_cast<float>(u(rng));
  }
  return a;
}

inline p3m::ImageRGB random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0, 1);
  p3m::ImageRGB img(h, w);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

inline oracle::Matte to_oracle(const p3m::AlphaMatte& a) {
  oracle::Matte m{a.height(), a.width(), {}};
  for (float v : a.data()) m.v.push_back(v);
  return m;
}

// Fresh directory under the system temp dir, removed first if it exists.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("p3m_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
