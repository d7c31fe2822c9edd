#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "p3m/core/parallel.hpp"
#include "p3m/datapipe/dataset.hpp"
#include "p3m/datapipe/trimap.hpp"
#include "p3m/metrics/report.hpp"
#include "p3m/p3mnet/model.hpp"

namespace p3m {

inline int round_to_32(int v) { return std::max(32, static_cast<int>(std::lround(v / 32.0)) * 32); }

// Fused alpha at the image's own resolution. The network runs on a canvas
// rounded to multiples of 32 (or `canvas` x `canvas` if positive).
template <class T>
AlphaMatte infer_alpha(const P3MNet<T>& model, const ImageRGB& img, int canvas = 0) {
  const int h = canvas > 0 ? canvas : round_to_32(img.height());
  const int w = canvas > 0 ? canvas : round_to_32(img.width());
  const ImageRGB in = (h == img.height() && w == img.width()) ? img : resample(img, h, w, ResampleMode::kBilinear);
  const auto out = forward(model, in);
  AlphaMatte a = alpha_from_tensor(out.fused_alpha.value());
  if (h != img.height() || w != img.width()) a = resample(a, img.height(), img.width(), ResampleMode::kBilinear);
  return a;
}

struct EvalOptions {
  int canvas = 0;
  int trimap_kernel = 25;
  int workers = 1;
};

// Scores every sample of a split at ground-truth resolution against the
// trimap derived from its alpha.
template <class T>
std::vector<ImageScore> evaluate_split(const P3MNet<T>& model, const std::filesystem::path& dir, Split split,
                                       const EvalOptions& opt) {
  const auto records = scan_dataset(dir, split);
  std::vector<ImageScore> rows(records.size());
  parallel_for(records.size(), opt.workers, [&](std::size_t i) {
    const Sample s = load_sample(records[i]);
    const AlphaMatte pred = infer_alpha(model, s.image, opt.canvas);
    rows[i] = {records[i].stem, evaluate(pred, s.alpha, trimap_from_alpha(s.alpha, opt.trimap_kernel))};
  });
  return rows;
}

struct ProtocolReports {
  std::vector<ImageScore> blurred, normal;  // B:B on val_p, B:N on val_np
  MetricReport bb, bn;
};

template <class T>
ProtocolReports evaluate_protocol(const P3MNet<T>& model, const std::filesystem::path& val_p_dir,
                                  const std::filesystem::path& val_np_dir, const EvalOptions& opt = {}) {
  ProtocolReports r;
  r.blurred = evaluate_split(model, val_p_dir, Split::kValP, opt);
  r.normal = evaluate_split(model, val_np_dir, Split::kValNP, opt);
  r.bb = aggregate(r.blurred);
  r.bn = aggregate(r.normal);
  return r;
}

inline nlohmann::json eval_settings(const EvalOptions& opt) {
  return {{"trimap_kernel", opt.trimap_kernel},
          {"canvas", opt.canvas},
          {"resolution", "ground-truth"},
          {"grad_sigma", GradParams{}.sigma},
          {"conn_step", ConnParams{}.step}};
}

inline void write_protocol_reports(const std::filesystem::path& dir, const ProtocolReports& r, const EvalOptions& opt) {
  write_report(dir, "B_B", "B:B", r.blurred, eval_settings(opt));
  write_report(dir, "B_N", "B:N", r.normal, eval_settings(opt));
}

}  // namespace p3m
