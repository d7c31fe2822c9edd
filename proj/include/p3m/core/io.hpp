#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <variant>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "p3m/core/raster.hpp"

namespace p3m {

namespace fs = std::filesystem;

enum class RasterKind { kImage, kAlpha, kMask };

using AnyRaster = std::variant<ImageRGB, AlphaMatte, BinaryMask>;

namespace detail {

inline cv::Mat read_8bit(const fs::path& path, int flags) {
  if (!fs::exists(path)) throw NotFound("no such raster: " + path.string());
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) throw FormatError("cannot decode raster: " + path.string());
  if (m.depth() != CV_8U) {
    cv::Mat tmp;
    m.convertTo(tmp, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
    m = tmp;
  }
  return m;
}

inline std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

// imwrite picks the codec from the extension, so the temp file keeps it.
inline void write_atomic(const fs::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.parent_path() / ("." + path.stem().string() + ".partial" + path.extension().string());
  if (!cv::imwrite(tmp.string(), m)) throw FormatError("cannot encode raster: " + path.string());
  fs::rename(tmp, path);
}

}  // namespace detail

inline ImageRGB load_image(const fs::path& path) {
  cv::Mat m = detail::read_8bit(path, cv::IMREAD_COLOR);
  ImageRGB img(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<cv::Vec3b>(r);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, r, x) = row[x][2 - c] / 255.0f;  // BGR -> RGB
  }
  return img;
}

inline AlphaMatte load_alpha(const fs::path& path) {
  cv::Mat m = detail::read_8bit(path, cv::IMREAD_GRAYSCALE);
  AlphaMatte a(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<std::uint8_t>(r);
    for (int x = 0; x < m.cols; ++x) a(r, x) = row[x] / 255.0f;
  }
  return a;
}

// Thresholded at 0.5 (value >= 128).
inline BinaryMask load_mask(const fs::path& path) {
  cv::Mat m = detail::read_8bit(path, cv::IMREAD_GRAYSCALE);
  BinaryMask mask(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<std::uint8_t>(r);
    for (int x = 0; x < m.cols; ++x) mask(r, x) = row[x] >= 128 ? 1 : 0;
  }
  return mask;
}

// 0 -> background, 255 -> foreground, anything else -> transition.
inline Trimap load_trimap(const fs::path& path) {
  cv::Mat m = detail::read_8bit(path, cv::IMREAD_GRAYSCALE);
  Trimap t(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<std::uint8_t>(r);
    for (int x = 0; x < m.cols; ++x)
      t.set(r, x,
            row[x] == 0     ? TrimapLabel::kBackground
            : row[x] == 255 ? TrimapLabel::kForeground
                            : TrimapLabel::kTransition);
  }
  return t;
}

inline AnyRaster load_raster(const fs::path& path, RasterKind kind) {
  switch (kind) {
    case RasterKind::kImage: return load_image(path);
    case RasterKind::kAlpha: return load_alpha(path);
    case RasterKind::kMask: return load_mask(path);
  }
  throw FormatError("unknown raster kind");
}

inline void save_image(const fs::path& path, const ImageRGB& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int r = 0; r < m.rows; ++r) {
    auto* row = m.ptr<cv::Vec3b>(r);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) row[x][2 - c] = detail::quantize(img.at(c, r, x));
  }
  detail::write_atomic(path, m);
}

inline void save_alpha(const fs::path& path, const AlphaMatte& a) {
  cv::Mat m(a.height(), a.width(), CV_8UC1);
  for (int r = 0; r < m.rows; ++r) {
    auto* row = m.ptr<std::uint8_t>(r);
    for (int x = 0; x < m.cols; ++x) row[x] = detail::quantize(a(r, x));
  }
  detail::write_atomic(path, m);
}

inline void save_mask(const fs::path& path, const BinaryMask& mask) {
  cv::Mat m(mask.height(), mask.width(), CV_8UC1);
  for (int r = 0; r < m.rows; ++r) {
    auto* row = m.ptr<std::uint8_t>(r);
    for (int x = 0; x < m.cols; ++x) row[x] = mask(r, x) ? 255 : 0;
  }
  detail::write_atomic(path, m);
}

inline void save_trimap(const fs::path& path, const Trimap& t) {
  cv::Mat m(t.height(), t.width(), CV_8UC1);
  for (int r = 0; r < m.rows; ++r) {
    auto* row = m.ptr<std::uint8_t>(r);
    for (int x = 0; x < m.cols; ++x) {
      const auto l = t.label(r, x);
      row[x] = l == TrimapLabel::kBackground ? 0 : l == TrimapLabel::kForeground ? 255 : 128;
    }
  }
  detail::write_atomic(path, m);
}

// Text files (JSON reports, CSV) written through a temp file + rename.
inline void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.parent_path() / ("." + path.filename().string() + ".partial");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw NotFound("cannot open for writing: " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFound("cannot read: " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace p3m
