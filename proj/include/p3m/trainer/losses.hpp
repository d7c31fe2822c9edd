#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "p3m/nn/ops.hpp"

namespace p3m {

template <class T>
struct Losses {
  nn::Var<T> semantic, detail, fusion, total;
};

struct LossReport {
  double l_semantic = 0, l_detail = 0, l_fusion = 0, total = 0;
  bool finite() const { return std::isfinite(l_semantic) && std::isfinite(l_detail) && std::isfinite(l_fusion) && std::isfinite(total); }
};

// Mean 3-class cross-entropy; labels hold BG/TR/FG ids per pixel.
template <class T>
nn::Var<T> loss_semantic(const nn::Var<T>& seg_logits, const std::vector<std::uint8_t>& labels) {
  return nn::cross_entropy(seg_logits, labels);
}

// Mean |detail - gt| over the transition region; 0 when it is empty.
template <class T>
nn::Var<T> loss_detail(const nn::Var<T>& detail, const nn::Tensor<T>& gt, const std::vector<std::uint8_t>& transition) {
  std::size_t n = 0;
  for (auto v : transition) n += v != 0;
  if (n == 0) return nn::constant(nn::Tensor<T>::scalar(T(0)));
  return nn::masked_l1(detail, gt, transition);
}

template <class T>
nn::Var<T> loss_fusion(const nn::Var<T>& fused, const nn::Tensor<T>& gt) {
  return nn::masked_l1(fused, gt);
}

template <class T>
Losses<T> total_loss(const nn::Var<T>& seg_logits, const nn::Var<T>& detail, const nn::Var<T>& fused,
                     const nn::Tensor<T>& gt_alpha, const std::vector<std::uint8_t>& labels,
                     const std::vector<std::uint8_t>& transition) {
  Losses<T> l;
  l.semantic = loss_semantic(seg_logits, labels);
  l.detail = loss_detail(detail, gt_alpha, transition);
  l.fusion = loss_fusion(fused, gt_alpha);
  l.total = nn::add(nn::add(l.semantic, l.detail), l.fusion);
  return l;
}

template <class T>
LossReport report_of(const Losses<T>& l) {
  return {static_cast<double>(l.semantic.value().item()), static_cast<double>(l.detail.value().item()),
          static_cast<double>(l.fusion.value().item()), static_cast<double>(l.total.value().item())};
}

}  // namespace p3m
