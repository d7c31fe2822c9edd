#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "p3m/core/error.hpp"

namespace p3m {

// Planar channel-major raster (C x H x W). The concrete raster kinds below
// are thin strong types over it.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int channels, int height, int width, T fill = T{})
      : channels_(channels), height_(height), width_(width) {
    if (channels < 1 || height < 1 || width < 1) {
      throw ShapeError("raster dimensions must be positive, got " + std::to_string(channels) + "x" +
                       std::to_string(height) + "x" + std::to_string(width));
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(int c, int r, int x) { return data_[(static_cast<std::size_t>(c) * height_ + r) * width_ + x]; }
  const T& at(int c, int r, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + r) * width_ + x];
  }
  T& operator()(int r, int x) { return at(0, r, x); }
  const T& operator()(int r, int x) const { return at(0, r, x); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::span<T> plane(int c) { return std::span<T>(data_).subspan(c * plane_size(), plane_size()); }
  std::span<const T> plane(int c) const {
    return std::span<const T>(data_).subspan(c * plane_size(), plane_size());
  }

  bool same_spatial(const Grid& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }
  template <class U>
  bool same_spatial(const Grid<U>& o) const noexcept {
    return height_ == o.height() && width_ == o.width();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.channels_ == b.channels_ && a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using FeatureMap = Grid<float>;

// Three-channel image, values in [0,1].
class ImageRGB : public Grid<float> {
 public:
  ImageRGB() = default;
  ImageRGB(int height, int width, float fill = 0.0f) : Grid<float>(3, height, width, fill) {}
  explicit ImageRGB(Grid<float> g) : Grid<float>(std::move(g)) {
    if (channels() != 3) throw ShapeError("ImageRGB needs 3 channels");
  }
};

// Per-pixel opacity in [0,1].
class AlphaMatte : public Grid<float> {
 public:
  AlphaMatte() = default;
  AlphaMatte(int height, int width, float fill = 0.0f) : Grid<float>(1, height, width, fill) {}
  explicit AlphaMatte(Grid<float> g) : Grid<float>(std::move(g)) {
    if (channels() != 1) throw ShapeError("AlphaMatte needs 1 channel");
  }
};

class BinaryMask : public Grid<std::uint8_t> {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0) : Grid<std::uint8_t>(1, height, width, fill ? 1 : 0) {}
  explicit BinaryMask(Grid<std::uint8_t> g) : Grid<std::uint8_t>(std::move(g)) {
    if (channels() != 1) throw ShapeError("BinaryMask needs 1 channel");
    for (auto& v : data()) v = v ? 1 : 0;
  }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(data().begin(), data().end(), std::uint8_t{1}));
  }
  bool none() const { return count() == 0; }
};

enum class TrimapLabel : std::uint8_t { kBackground = 0, kTransition = 1, kForeground = 2 };

class Trimap : public Grid<std::uint8_t> {
 public:
  Trimap() = default;
  Trimap(int height, int width, TrimapLabel fill = TrimapLabel::kBackground)
      : Grid<std::uint8_t>(1, height, width, static_cast<std::uint8_t>(fill)) {}

  TrimapLabel label(int r, int x) const { return static_cast<TrimapLabel>((*this)(r, x)); }
  void set(int r, int x, TrimapLabel l) { (*this)(r, x) = static_cast<std::uint8_t>(l); }
};

struct Point2D {
  double row = 0.0;
  double col = 0.0;
};

}  // namespace p3m
