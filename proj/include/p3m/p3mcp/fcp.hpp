#pragma once

#include <random>
#include <vector>

#include "p3m/p3mcp/cp.hpp"
#include "p3m/p3mnet/model.hpp"

namespace p3m {

// The model cut after encoder stage `split`: g1 runs stages 0..split, g2 the
// remaining stages and both decoders.
template <class T>
class EncoderSplit {
 public:
  EncoderSplit(const P3MNet<T>& model, int split) : model_(model), split_(split) {
    if (split < 0 || split >= EncoderOutput<T>::kStages - 1)
      throw ConfigError("fcp split index " + std::to_string(split) + " outside [0, " +
                        std::to_string(EncoderOutput<T>::kStages - 2) + "]");
  }

  int split() const { return split_; }

  EncoderOutput<T> g1(const Var<T>& img, const Mode& mode) const {
    EncoderOutput<T> out;
    model_.encoder().run_until(img, out, split_, mode);
    return out;
  }

  NetworkOutput<T> g2(EncoderOutput<T> partial, const Mode& mode) const {
    if (partial.completed != split_) throw StateError("g2 expects features cut at the split");
    model_.encoder().run_until(Var<T>{}, partial, EncoderOutput<T>::kStages - 1, mode);
    return model_.decode(partial, mode);
  }

 private:
  const P3MNet<T>& model_;
  int split_;
};

template <class T>
struct FCPResult {
  NetworkOutput<T> output;
  bool merged = false;
  std::size_t pasted = 0;  // feature cells replaced, over all channels and elements
  nn::Tensor<T> split_features;  // the split-level target features fed to G2
};

namespace detail {

template <class T>
Grid<T> batch_element(const nn::Tensor<T>& t, int n) {
  Grid<T> g(t.c(), t.h(), t.w());
  std::copy_n(t.data() + t.offset(n, 0, 0, 0), static_cast<std::size_t>(t.c()) * t.plane(), g.data().data());
  return g;
}

}  // namespace detail

// Feature-level copy-paste. With probability cfg.probability the source face
// features (computed without gradient and without touching BN running
// statistics) are pasted into every target element's facemask region at the
// split resolution. Pasted cells are constants: no gradient reaches i_s.
template <class T>
FCPResult<T> fcp_forward(const P3MNet<T>& model, const Var<T>& source_img, const BinaryMask& source_mask,
                         const Var<T>& target_batch, const std::vector<BinaryMask>& target_masks, std::mt19937_64& rng,
                         const CPConfig& cfg, const Mode& mode) {
  cfg.validate();
  const EncoderSplit<T> split(model, cfg.fcp_split_index);
  if (static_cast<int>(target_masks.size()) != target_batch.n())
    throw ShapeError("fcp: one target facemask per batch element is required");
  if (source_img.n() != 1) throw ShapeError("fcp: exactly one source image per mini-batch");

  EncoderOutput<T> tgt = split.g1(target_batch, mode);
  FCPResult<T> res;
  std::bernoulli_distribution coin(cfg.probability);
  if (coin(rng)) {
    const FaceTransform tf = draw_face_transform(rng, cfg);
    Var<T>& d_t = tgt.features[split.split()];
    const int h = d_t.h(), w = d_t.w();
    nn::Tensor<T> d_s;
    {
      nn::NoGradGuard ng;
      Mode src_mode = mode;
      src_mode.update_running_stats = false;
      d_s = split.g1(nn::detach(source_img), src_mode).features[split.split()].value();
    }
    const BinaryMask m_s = resample(source_mask, h, w, ResampleMode::kNearest);
    std::vector<std::size_t> pos;
    std::vector<T> val;
    if (!m_s.none()) {
      const auto face = copy_augment(detail::batch_element(d_s, 0), m_s, tf);
      const auto& D = d_t.value();
      for (int n = 0; n < D.n(); ++n) {
        const BinaryMask m_t = resample(target_masks[n], h, w, ResampleMode::kNearest);
        if (m_t.none() || face.mask.none()) continue;
        PastePlan plan;
        try {
          plan = paste_plan(face.mask, m_t);
        } catch (const EmptyFace&) {
          continue;
        }
        for (int ch = 0; ch < D.c(); ++ch) {
          const auto src = face.data.plane(ch);
          for (const auto& [t, s] : plan.pixels) {
            pos.push_back(D.offset(n, ch, 0, 0) + t);
            val.push_back(src[s]);
          }
        }
      }
    }
    if (!pos.empty()) {
      res.merged = true;
      res.pasted = pos.size();
      d_t = nn::replace_values(d_t, std::move(pos), val);
    }
  }
  res.split_features = tgt.features[split.split()].value();
  res.output = split.g2(std::move(tgt), mode);
  return res;
}

}  // namespace p3m
