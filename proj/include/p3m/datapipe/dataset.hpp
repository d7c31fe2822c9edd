#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "p3m/core/io.hpp"
#include "p3m/p3mcp/library.hpp"

namespace p3m {

enum class Split { kTrain, kValP, kValNP };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValP: return "val_p";
    case Split::kValNP: return "val_np";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val_p") return Split::kValP;
  if (s == "val_np") return Split::kValNP;
  throw ConfigError("unknown split '" + s + "'");
}

struct SampleRecord {
  std::string stem;
  std::filesystem::path image_path, alpha_path, facemask_path;  // facemask_path may be empty (val_np)
  Split split = Split::kTrain;
};

struct Sample {
  std::string stem;
  ImageRGB image;
  AlphaMatte alpha;
  BinaryMask facemask;  // all zero when the record has none
};

namespace detail {

inline std::string facemask_stem(const std::filesystem::path& p) {
  std::string s = p.stem().string();
  const std::string suffix = ".facemask";
  if (s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
    s.resize(s.size() - suffix.size());
  return s;
}

}  // namespace detail

// Indexes <root>/original, <root>/mask and optionally <root>/facemask by stem.
inline std::vector<SampleRecord> scan_dataset(const std::filesystem::path& root, Split split = Split::kTrain) {
  if (!std::filesystem::is_directory(root / "original") || !std::filesystem::is_directory(root / "mask"))
    throw NotFound("dataset layout needs original/ and mask/ under " + root.string());
  const auto images = detail::rasters_by_stem(root / "original");
  const auto alphas = detail::rasters_by_stem(root / "mask");
  std::map<std::string, std::filesystem::path> faces;
  if (std::filesystem::is_directory(root / "facemask"))
    for (const auto& e : std::filesystem::directory_iterator(root / "facemask"))
      if (e.is_regular_file() && detail::is_raster(e.path())) faces[detail::facemask_stem(e.path())] = e.path();

  std::string orphans;
  for (const auto& [stem, p] : alphas)
    if (!images.count(stem)) orphans += " " + p.filename().string();
  for (const auto& [stem, p] : images)
    if (!alphas.count(stem)) orphans += " " + p.filename().string();
  if (!orphans.empty()) throw IndexError("unmatched files under " + root.string() + ":" + orphans);

  std::vector<SampleRecord> out;
  for (const auto& [stem, p] : images) {
    SampleRecord r{stem, p, alphas.at(stem), {}, split};
    if (auto f = faces.find(stem); f != faces.end()) {
      r.facemask_path = f->second;
    } else if (split != Split::kValNP) {
      throw MissingAnnotation("no facemask for " + stem + " in " + to_string(split) + " split");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline Sample load_sample(const SampleRecord& r) {
  Sample s{r.stem, load_image(r.image_path), load_alpha(r.alpha_path), {}};
  if (!s.image.same_spatial(s.alpha)) throw ShapeError(r.stem + ": image and alpha differ in size");
  if (!r.facemask_path.empty()) {
    s.facemask = load_mask(r.facemask_path);
    if (!s.image.same_spatial(s.facemask)) throw ShapeError(r.stem + ": facemask differs in size");
  } else {
    s.facemask = BinaryMask(s.image.height(), s.image.width());
  }
  return s;
}

}  // namespace p3m
