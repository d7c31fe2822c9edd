#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "p3m/core/io.hpp"
#include "p3m/p3mcp/cp.hpp"

namespace p3m {

struct SourceFaceRecord {
  std::string name;
  ImageRGB image;
  BinaryMask facemask;
};

using SourceLibrary = std::vector<SourceFaceRecord>;

namespace detail {

inline bool is_raster(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}

// stem -> path for every raster file directly under dir.
inline std::map<std::string, std::filesystem::path> rasters_by_stem(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_raster(e.path())) out[e.path().stem().string()] = e.path();
  return out;
}

}  // namespace detail

// Reads <dir>/images/* and <dir>/facemasks/* paired by stem. Records whose
// mask is empty are dropped; `skipped` receives their count.
inline SourceLibrary load_source_library(const std::filesystem::path& dir, std::size_t* skipped = nullptr) {
  const auto images = detail::rasters_by_stem(dir / "images");
  const auto masks = detail::rasters_by_stem(dir / "facemasks");
  if (images.empty()) throw NotFound("source library has no images: " + (dir / "images").string());
  SourceLibrary lib;
  std::size_t skip = 0;
  for (const auto& [stem, path] : images) {
    auto m = masks.find(stem);
    if (m == masks.end()) throw IndexError("source library: no facemask for " + stem);
    SourceFaceRecord rec{stem, load_image(path), load_mask(m->second)};
    if (!rec.image.same_spatial(rec.facemask)) throw ShapeError("source library: size mismatch for " + stem);
    if (rec.facemask.none()) {
      ++skip;
      continue;
    }
    lib.push_back(std::move(rec));
  }
  if (skipped) *skipped = skip;
  return lib;
}

struct ImportStats {
  std::size_t written = 0;
  std::size_t skipped = 0;
};

// Converts part annotations into a source library. Expects in/images/<id>.*
// and in/parts/<id>_skin.png plus any of <id>_brow.png, <id>_l_brow.png,
// <id>_r_brow.png.
inline ImportStats import_part_annotations(const std::filesystem::path& in, const std::filesystem::path& out) {
  const auto images = detail::rasters_by_stem(in / "images");
  const auto parts = detail::rasters_by_stem(in / "parts");
  ImportStats st;
  std::filesystem::create_directories(out / "images");
  std::filesystem::create_directories(out / "facemasks");
  for (const auto& [id, path] : images) {
    auto skin = parts.find(id + "_skin");
    if (skin == parts.end()) {
      ++st.skipped;
      continue;
    }
    const ImageRGB img = load_image(path);
    const BinaryMask skin_mask = load_mask(skin->second);
    BinaryMask brow(skin_mask.height(), skin_mask.width());
    for (const char* suffix : {"_brow", "_l_brow", "_r_brow"}) {
      auto b = parts.find(id + suffix);
      if (b == parts.end()) continue;
      const BinaryMask part = load_mask(b->second);
      if (!part.same_spatial(brow)) throw ShapeError("import: part size mismatch for " + id);
      for (std::size_t i = 0; i < part.size(); ++i) brow.data()[i] |= part.data()[i];
    }
    BinaryMask face;
    try {
      face = source_facemask_from_parts(skin_mask, brow);
    } catch (const MissingAnnotation&) {
      ++st.skipped;
      continue;
    }
    if (face.none()) {
      ++st.skipped;
      continue;
    }
    BinaryMask f = face;
    if (!img.same_spatial(f)) f = resample(face, img.height(), img.width(), ResampleMode::kNearest);
    save_image(out / "images" / (id + ".png"), img);
    save_mask(out / "facemasks" / (id + ".png"), f);
    ++st.written;
  }
  return st;
}

struct CPSample {
  ImageRGB image;
  BinaryMask facemask;  // target blur mask; may be empty
};

struct ICPStats {
  std::size_t augmented = 0;
  std::size_t skipped = 0;  // drawn but unusable (empty masks after processing)
};

// Source record resized to an h x w canvas.
inline SourceFaceRecord fit_to_canvas(const SourceFaceRecord& rec, int h, int w) {
  if (rec.image.height() == h && rec.image.width() == w) return rec;
  return {rec.name, resample(rec.image, h, w, ResampleMode::kBilinear),
          resample(rec.facemask, h, w, ResampleMode::kNearest)};
}

// Image-level copy-paste on each element independently with probability
// cfg.probability. Draw order per element: coin, record index, transform.
inline ICPStats icp_apply(std::vector<CPSample>& batch, const SourceLibrary& library, std::mt19937_64& rng,
                          const CPConfig& cfg) {
  cfg.validate();
  if (library.empty()) throw ConfigError("icp: source library is empty");
  std::bernoulli_distribution coin(cfg.probability);
  std::uniform_int_distribution<std::size_t> pick(0, library.size() - 1);
  ICPStats st;
  for (auto& s : batch) {
    if (!coin(rng)) continue;
    const auto& rec = library[pick(rng)];
    const FaceTransform t = draw_face_transform(rng, cfg);
    if (s.facemask.none()) {
      ++st.skipped;
      continue;
    }
    const auto src = fit_to_canvas(rec, s.image.height(), s.image.width());
    try {
      s.image = align_merge(copy_augment(src.image, src.facemask, t), s.image, s.facemask);
      ++st.augmented;
    } catch (const EmptyFace&) {
      ++st.skipped;
    }
  }
  return st;
}

}  // namespace p3m
