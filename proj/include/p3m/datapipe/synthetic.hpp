#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "p3m/anonymize/obfuscate.hpp"
#include "p3m/core/io.hpp"

namespace p3m {

// A procedurally drawn head-and-shoulders portrait with a soft alpha edge,
// its face landmarks and facemask. Used for fixtures and smoke training.
struct SyntheticPortrait {
  ImageRGB image;
  AlphaMatte alpha;
  FaceLandmarks landmarks;
  BinaryMask facemask;
};

inline SyntheticPortrait make_synthetic_portrait(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cx = w * (0.45 + 0.1 * u(rng)), hy = h * (0.33 + 0.06 * u(rng));
  const double hr = std::min(h, w) * (0.17 + 0.05 * u(rng));  // head radius
  const double band = std::max(1.5, 0.03 * std::min(h, w));    // soft edge width
  const double sy = h * 0.98, sx = w * (0.36 + 0.06 * u(rng)), srow = h * (0.30 + 0.05 * u(rng));
  const double wobble = 0.05 + 0.05 * u(rng), freq = 5 + std::floor(6 * u(rng));

  double fg[3], bg[3];
  for (int c = 0; c < 3; ++c) fg[c] = 0.45 + 0.4 * u(rng), bg[c] = 0.05 + 0.3 * u(rng);
  const double bgt = 2 * std::numbers::pi * u(rng);

  SyntheticPortrait p{ImageRGB(h, w), AlphaMatte(h, w), {}, {}};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      // signed distances (negative inside); the head outline wobbles like hair
      const double ang = std::atan2(r - hy, c - cx);
      const double head = std::hypot(r - hy, c - cx) - hr * (1.0 + wobble * std::sin(freq * ang));
      const double body = (std::hypot((c - cx) / sx, (r - sy) / srow) - 1.0) * std::min(sx, srow);
      const double d = std::min(head, body);
      double a = std::clamp(0.5 - d / band, 0.0, 1.0);
      p.alpha(r, c) = static_cast<float>(a);
      const double shade = 0.85 + 0.15 * std::cos((r + c) * 0.2);
      const double stripes = 0.5 + 0.5 * std::sin(bgt + 0.35 * c + 0.15 * r);
      for (int k = 0; k < 3; ++k) {
        const double f = std::clamp(fg[k] * shade, 0.0, 1.0);
        const double b = std::clamp(bg[k] + 0.25 * stripes, 0.0, 1.0);
        p.image.at(k, r, c) = static_cast<float>(a * f + (1.0 - a) * b);
      }
    }

  // Face: an ellipse inside the head; cheeks/chin follow its lower arc.
  const double fr = hr * 0.62, fc = cx, frow = hy + hr * 0.1;
  for (int i = 0; i <= 16; ++i) {
    const double t = std::numbers::pi * (1.0 - i / 16.0);  // left temple, chin, right temple
    p.landmarks.cheek_contour.push_back({frow + fr * 1.1 * std::sin(t), fc + fr * std::cos(t)});
  }
  for (int i = 0; i < 10; ++i) {
    const double x = fc - fr + 2.0 * fr * i / 9.0;
    p.landmarks.eyebrows.push_back({frow - fr * (0.45 + 0.1 * std::sin(std::numbers::pi * i / 9.0)), x});
  }
  p.facemask = face_mask_from_landmarks(p.landmarks, h, w);
  // skin tone inside the face so obfuscation has something to remove
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (p.facemask(r, c)) {
        const double eye = (std::abs(r - (frow - fr * 0.2)) < 1.0 && std::abs(std::abs(c - fc) - fr * 0.4) < 1.5) ? 0.5 : 1.0;
        p.image.at(0, r, c) = static_cast<float>(0.85 * eye);
        p.image.at(1, r, c) = static_cast<float>(0.65 * eye);
        p.image.at(2, r, c) = static_cast<float>(0.55 * eye);
      }
  return p;
}

struct SyntheticDatasetLayout {
  std::filesystem::path train, val_p, val_np, library;
};

// Writes train/ and val_p/ (face-obfuscated, with facemasks), val_np/
// (untouched, with landmark sidecars) and a source-face library under root.
inline SyntheticDatasetLayout write_synthetic_dataset(const std::filesystem::path& root, int n_train, int n_val,
                                                      int size, std::uint64_t seed,
                                                      ObfuscationMethod method = ObfuscationMethod::kBlur) {
  namespace fs = std::filesystem;
  SyntheticDatasetLayout L{root / "train", root / "val_p", root / "val_np", root / "library"};
  ObfuscationConfig oc;
  oc.method = method;
  auto stem = [](const char* pre, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04d", pre, i);
    return std::string(buf);
  };
  auto write = [&](const fs::path& dir, const std::string& name, std::uint64_t s, bool blur) {
    const auto p = make_synthetic_portrait(size, size, s);
    fs::create_directories(dir / "original");
    fs::create_directories(dir / "mask");
    save_alpha(dir / "mask" / (name + ".png"), p.alpha);
    if (blur) {
      const auto ob = obfuscate_with_mask(p.image, p.facemask, p.alpha, oc, s);
      fs::create_directories(dir / "facemask");
      save_image(dir / "original" / (name + ".png"), ob.image);
      save_mask(dir / "facemask" / (name + ".png"), ob.private_area);
    } else {
      save_image(dir / "original" / (name + ".png"), p.image);
      fs::create_directories(dir / "landmarks");
      write_text_atomic(dir / "landmarks" / (name + ".landmarks.json"), landmarks_to_json(p.landmarks).dump() + "\n");
    }
  };
  for (int i = 0; i < n_train; ++i) write(L.train, stem("train", i), seed * 1000003 + i, true);
  for (int i = 0; i < n_val; ++i) {
    write(L.val_p, stem("valp", i), seed * 1000003 + 100000 + i, true);
    write(L.val_np, stem("valnp", i), seed * 1000003 + 200000 + i, false);
  }
  fs::create_directories(L.library / "images");
  fs::create_directories(L.library / "facemasks");
  for (int i = 0; i < std::max(2, n_val); ++i) {
    const auto p = make_synthetic_portrait(size, size, seed * 1000003 + 300000 + i);
    save_image(L.library / "images" / (stem("face", i) + ".png"), p.image);
    save_mask(L.library / "facemasks" / (stem("face", i) + ".png"), p.facemask);
  }
  return L;
}

}  // namespace p3m
