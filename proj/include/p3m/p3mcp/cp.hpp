#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "p3m/core/resample.hpp"

namespace p3m {

enum class CPMode { kNone, kICP, kFCP };

inline CPMode parse_cp_mode(const std::string& s) {
  if (s == "none" || s.empty()) return CPMode::kNone;
  if (s == "icp" || s == "ICP") return CPMode::kICP;
  if (s == "fcp" || s == "FCP") return CPMode::kFCP;
  throw ConfigError("unknown cp mode '" + s + "' (none|icp|fcp)");
}

inline std::string to_string(CPMode m) {
  switch (m) {
    case CPMode::kNone: return "none";
    case CPMode::kICP: return "icp";
    case CPMode::kFCP: return "fcp";
  }
  return "?";
}

struct CPConfig {
  CPMode mode = CPMode::kNone;
  double probability = 0.5;
  double rotation_deg = 15.0;  // angle drawn from [-rotation_deg, rotation_deg]
  double scale_min = 0.75;
  double scale_max = 1.25;
  int fcp_split_index = 1;  // encoder stage whose output is merged

  void validate() const {
    if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("cp probability must be in [0,1]");
    if (!(scale_min > 0.0) || scale_max < scale_min) throw ConfigError("cp scale range must be positive and ordered");
    if (rotation_deg < 0.0) throw ConfigError("cp rotation range must be non-negative");
  }
};

struct FaceTransform {
  double scale = 1.0;
  double angle_deg = 0.0;
};

inline FaceTransform draw_face_transform(std::mt19937_64& rng, const CPConfig& cfg) {
  std::uniform_real_distribution<double> s(cfg.scale_min, cfg.scale_max);
  std::uniform_real_distribution<double> a(-cfg.rotation_deg, cfg.rotation_deg);
  FaceTransform t;
  t.scale = cfg.scale_min == cfg.scale_max ? cfg.scale_min : s(rng);
  t.angle_deg = cfg.rotation_deg == 0.0 ? 0.0 : a(rng);
  return t;
}

// Skin pixels on or below the topmost brow row.
inline BinaryMask source_facemask_from_parts(const BinaryMask& skin, const BinaryMask& brow) {
  if (!skin.same_spatial(brow)) throw ShapeError("source facemask: skin and brow sizes differ");
  int top = -1;
  for (int r = 0; r < brow.height() && top < 0; ++r)
    for (int c = 0; c < brow.width(); ++c)
      if (brow(r, c)) {
        top = r;
        break;
      }
  if (top < 0) throw MissingAnnotation("source facemask: brow annotation is empty");
  BinaryMask out(skin.height(), skin.width());
  for (int r = top; r < skin.height(); ++r)
    for (int c = 0; c < skin.width(); ++c) out(r, c) = skin(r, c);
  return out;
}

inline Point2D center_of_mask(const BinaryMask& m) {
  double sr = 0.0, sc = 0.0;
  std::size_t n = 0;
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c)
      if (m(r, c)) sr += r, sc += c, ++n;
  if (n == 0) throw EmptyFace("center_of_mask: mask is empty");
  return {sr / n, sc / n};
}

namespace detail {

struct Rotation {
  double s, c;
  explicit Rotation(double deg) {
    const double rad = deg * std::numbers::pi / 180.0;
    s = std::sin(rad), c = std::cos(rad);
    const auto snap = [](double v) {
      if (std::abs(v) < 1e-12) return 0.0;
      if (std::abs(v - 1.0) < 1e-12) return 1.0;
      if (std::abs(v + 1.0) < 1e-12) return -1.0;
      return v;
    };
    s = snap(s), c = snap(c);
  }
  // Source coordinate of destination (r, x) for a rotation about (cr, cc).
  std::pair<double, double> source(int r, int x, double cr, double cc) const {
    const double dr = r - cr, dc = x - cc;
    return {cr + c * dr - s * dc, cc + s * dr + c * dc};
  }
};

template <class G>
G rotate_bilinear(const G& in, double deg) {
  const int C = in.channels(), H = in.height(), W = in.width();
  const Rotation rot(deg);
  const double cr = (H - 1) / 2.0, cc = (W - 1) / 2.0;
  G out = make_like<G>(C, H, W);
  for (int r = 0; r < H; ++r)
    for (int x = 0; x < W; ++x) {
      const auto [sr, sc] = rot.source(r, x, cr, cc);
      if (sr < -1e-9 || sc < -1e-9 || sr > H - 1 + 1e-9 || sc > W - 1 + 1e-9) continue;
      const int r0 = std::clamp(static_cast<int>(std::floor(sr)), 0, H - 1), c0 = std::clamp(static_cast<int>(std::floor(sc)), 0, W - 1);
      const int r1 = std::min(r0 + 1, H - 1), c1 = std::min(c0 + 1, W - 1);
      const double wr = std::clamp(sr - r0, 0.0, 1.0), wc = std::clamp(sc - c0, 0.0, 1.0);
      for (int ch = 0; ch < C; ++ch) {
        if (wr == 0.0 && wc == 0.0) {
          out.at(ch, r, x) = in.at(ch, r0, c0);
          continue;
        }
        const double top = (1 - wc) * in.at(ch, r0, c0) + wc * in.at(ch, r0, c1);
        const double bot = (1 - wc) * in.at(ch, r1, c0) + wc * in.at(ch, r1, c1);
        out.at(ch, r, x) = static_cast<typename G::value_type>((1 - wr) * top + wr * bot);
      }
    }
  return out;
}

inline BinaryMask rotate_nearest(const BinaryMask& in, double deg) {
  const int H = in.height(), W = in.width();
  const Rotation rot(deg);
  const double cr = (H - 1) / 2.0, cc = (W - 1) / 2.0;
  BinaryMask out(H, W);
  for (int r = 0; r < H; ++r)
    for (int x = 0; x < W; ++x) {
      const auto [sr, sc] = rot.source(r, x, cr, cc);
      const int ir = static_cast<int>(std::floor(sr + 0.5)), ic = static_cast<int>(std::floor(sc + 0.5));
      if (ir >= 0 && ir < H && ic >= 0 && ic < W) out(r, x) = in(ir, ic);
    }
  return out;
}

}  // namespace detail

template <class G>
struct AugmentedFace {
  G data;
  BinaryMask mask;
};

// Masks the source, resizes the whole frame by t.scale and rotates it about
// its centre. Data is resampled bilinearly, the mask by nearest neighbour.
template <class G>
AugmentedFace<G> copy_augment(const G& d_s, const BinaryMask& m_s, const FaceTransform& t) {
  if (!d_s.same_spatial(m_s)) throw ShapeError("copy_augment: mask must match source data size");
  if (m_s.none()) throw EmptyFace("copy_augment: source facemask is empty");
  if (!(t.scale > 0.0)) throw ConfigError("copy_augment: scale must be positive");
  G face = mask_apply(d_s, m_s);
  BinaryMask mask = m_s;
  const int h = std::max(1, static_cast<int>(std::lround(d_s.height() * t.scale)));
  const int w = std::max(1, static_cast<int>(std::lround(d_s.width() * t.scale)));
  if (h != d_s.height() || w != d_s.width()) {
    face = resample(face, h, w, ResampleMode::kBilinear);
    mask = resample(mask, h, w, ResampleMode::kNearest);
  }
  if (t.angle_deg != 0.0) {
    face = detail::rotate_bilinear(face, t.angle_deg);
    mask = detail::rotate_nearest(mask, t.angle_deg);
  }
  face = mask_apply(face, mask);
  return {std::move(face), std::move(mask)};
}

template <class G>
AugmentedFace<G> copy_augment(const G& d_s, const BinaryMask& m_s, std::mt19937_64& rng, const CPConfig& cfg) {
  return copy_augment(d_s, m_s, draw_face_transform(rng, cfg));
}

// (target offset, source offset) pairs: the face mask translated so its
// centre lands on the target mask's centre, intersected with the target mask.
struct PastePlan {
  int dr = 0, dc = 0;
  std::vector<std::pair<int, int>> pixels;
};

inline PastePlan paste_plan(const BinaryMask& face_mask, const BinaryMask& m_t) {
  if (m_t.none()) throw EmptyTargetMask("align_merge: target facemask is empty");
  const Point2D cf = center_of_mask(face_mask), ct = center_of_mask(m_t);
  PastePlan plan;
  plan.dr = static_cast<int>(std::lround(ct.row - cf.row));
  plan.dc = static_cast<int>(std::lround(ct.col - cf.col));
  const int FH = face_mask.height(), FW = face_mask.width();
  for (int r = 0; r < m_t.height(); ++r)
    for (int c = 0; c < m_t.width(); ++c) {
      if (!m_t(r, c)) continue;
      const int sr = r - plan.dr, sc = c - plan.dc;
      if (sr < 0 || sr >= FH || sc < 0 || sc >= FW || !face_mask(sr, sc)) continue;
      plan.pixels.emplace_back(r * m_t.width() + c, sr * FW + sc);
    }
  return plan;
}

template <class G>
G align_merge(const AugmentedFace<G>& face, const G& d_t, const BinaryMask& m_t) {
  if (!d_t.same_spatial(m_t)) throw ShapeError("align_merge: target mask must match target data size");
  if (face.data.channels() != d_t.channels()) throw ShapeError("align_merge: channel count differs");
  const PastePlan plan = paste_plan(face.mask, m_t);
  G out = d_t;
  for (int ch = 0; ch < d_t.channels(); ++ch) {
    auto dst = out.plane(ch);
    const auto src = face.data.plane(ch);
    for (const auto& [t, s] : plan.pixels) dst[t] = src[s];
  }
  return out;
}

template <class G>
G cp(const G& d_s, const BinaryMask& m_s, const G& d_t, const BinaryMask& m_t, std::mt19937_64& rng,
     const CPConfig& cfg) {
  return align_merge(copy_augment(d_s, m_s, rng, cfg), d_t, m_t);
}

}  // namespace p3m
