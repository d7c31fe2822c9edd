#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "p3m/core/io.hpp"
#include "p3m/core/raster.hpp"

namespace p3m {

struct FaceLandmarks {
  std::vector<Point2D> cheek_contour;  // jaw line, left to right
  std::vector<Point2D> eyebrows;  // left to right; may be empty
};

namespace detail {

inline std::vector<Point2D> points_from_json(const nlohmann::json& j, const char* key) {
  std::vector<Point2D> pts;
  if (!j.contains(key)) return pts;
  for (const auto& p : j.at(key)) {
    if (!p.is_array() || p.size() != 2) throw FormatError(std::string("landmarks: '") + key + "' entries must be [row, col]");
    pts.push_back({p[0].get<double>(), p[1].get<double>()});
    if (!std::isfinite(pts.back().row) || !std::isfinite(pts.back().col)) throw FormatError("landmarks: non-finite point");
  }
  return pts;
}

}  // namespace detail

inline FaceLandmarks landmarks_from_json(const nlohmann::json& j) {
  FaceLandmarks lm;
  lm.cheek_contour = detail::points_from_json(j, "cheek_contour");
  lm.eyebrows = detail::points_from_json(j, "eyebrows");
  if (lm.cheek_contour.size() < 3) throw FormatError("landmarks: cheek_contour needs at least 3 points");
  return lm;
}

inline nlohmann::json landmarks_to_json(const FaceLandmarks& lm) {
  nlohmann::json j;
  auto arr = [](const std::vector<Point2D>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back({p.row, p.col});
    return a;
  };
  j["cheek_contour"] = arr(lm.cheek_contour);
  j["eyebrows"] = arr(lm.eyebrows);
  return j;
}

inline FaceLandmarks load_landmarks(const std::filesystem::path& path) {
  try {
    return landmarks_from_json(nlohmann::json::parse(read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Keeps the largest 4-connected component; ties go to the component met
// first in row-major order.
inline BinaryMask largest_component(const BinaryMask& m) {
  const int H = m.height(), W = m.width();
  std::vector<int> label(static_cast<std::size_t>(H) * W, -1);
  int best = -1;
  std::size_t best_size = 0;
  int next = 0;
  std::vector<int> stack;
  for (int start = 0; start < H * W; ++start) {
    if (!m.data()[start] || label[start] >= 0) continue;
    std::size_t size = 0;
    stack.assign(1, start);
    label[start] = next;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int r = p / W, c = p % W;
      const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[0] >= H || q[1] < 0 || q[1] >= W) continue;
        const int o = q[0] * W + q[1];
        if (m.data()[o] && label[o] < 0) label[o] = next, stack.push_back(o);
      }
    }
    if (size > best_size) best = next, best_size = size;
    ++next;
  }
  BinaryMask out(H, W);
  for (int i = 0; i < H * W; ++i) out.data()[i] = label[i] == best && best >= 0 ? 1 : 0;
  return out;
}

// Polygon through the cheek contour, closed back over the eyebrows (reversed),
// filled with the even-odd rule at pixel centres (row, col).
inline BinaryMask face_mask_from_landmarks(const FaceLandmarks& lm, int h, int w) {
  if (h < 1 || w < 1) throw ShapeError("face mask: image size must be positive");
  std::vector<Point2D> poly = lm.cheek_contour;
  poly.insert(poly.end(), lm.eyebrows.rbegin(), lm.eyebrows.rend());
  if (poly.size() < 3) throw DegenerateFace("face polygon needs at least 3 points");
  double area2 = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    area2 += a.col * b.row - b.col * a.row;
  }
  if (std::abs(area2) < 1e-12) throw DegenerateFace("face polygon has zero area");

  BinaryMask mask(h, w);
  std::vector<double> xs;
  for (int r = 0; r < h; ++r) {
    xs.clear();
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
      const auto& a = poly[i];
      const auto& b = poly[j];
      if ((a.row > r) != (b.row > r)) xs.push_back(a.col + (r - a.row) * (b.col - a.col) / (b.row - a.row));
    }
    std::sort(xs.begin(), xs.end());
    for (int c = 0; c < w; ++c) {
      // inside when an odd number of crossings lie strictly right of c
      const auto right = xs.end() - std::upper_bound(xs.begin(), xs.end(), static_cast<double>(c));
      if (right % 2 == 1) mask(r, c) = 1;
    }
  }
  if (mask.none()) throw DegenerateFace("face polygon covers no pixel centre");
  return largest_component(mask);
}

}  // namespace p3m
