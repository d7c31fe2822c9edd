#pragma once

#include <string>

#include "p3m/nn/layers.hpp"

namespace p3m {

using nn::Mode;
using nn::Rng;
using nn::Var;

namespace detail {

inline int half_channels(int c, const std::string& name) {
  if (c < 2 || c % 2 != 0) throw ConfigError(name + ": channel count " + std::to_string(c) + " must be even");
  return c / 2;
}

template <class T>
void require_same(const Var<T>& a, const Var<T>& b, const char* what) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(what) + ": " + a.value().shape_str() + " vs " + b.value().shape_str());
}

}  // namespace detail

// Tripartite integration: project matting, segmentation and encoder features
// to C/2 each, concatenate and fuse back to C with conv-BN-ReLU.
template <class T>
class TripartiteIntegration {
 public:
  TripartiteIntegration() = default;
  TripartiteIntegration(nn::ParameterStore<T>& store, const std::string& name, int channels, Rng& rng) {
    const int h = detail::half_channels(channels, name);
    proj_m_ = nn::Conv2d<T>(store, name + ".proj_m", channels, h, 1, true, rng);
    proj_s_ = nn::Conv2d<T>(store, name + ".proj_s", channels, h, 1, true, rng);
    proj_e_ = nn::Conv2d<T>(store, name + ".proj_e", channels, h, 1, true, rng);
    fuse_ = nn::ConvBnRelu<T>(store, name + ".fuse", 3 * h, channels, rng);
  }

  Var<T> operator()(const Var<T>& f_m, const Var<T>& f_s, const Var<T>& f_e, const Mode& mode) const {
    detail::require_same(f_m, f_s, "tfi");
    detail::require_same(f_m, f_e, "tfi");
    return fuse_(nn::concat_channels<T>({proj_m_(f_m), proj_s_(f_s), proj_e_(f_e)}), mode);
  }

  nn::ConvBnRelu<T>& fuse() { return fuse_; }
  nn::Conv2d<T>& proj_m() { return proj_m_; }
  nn::Conv2d<T>& proj_s() { return proj_s_; }
  nn::Conv2d<T>& proj_e() { return proj_e_; }

 private:
  nn::Conv2d<T> proj_m_, proj_s_, proj_e_;
  nn::ConvBnRelu<T> fuse_;
};

// Residual bipartite integration against one encoder map, shared by the
// shallow (max-pooled E0) and deep (upsampled E4) variants.
template <class T>
class BipartiteIntegration {
 public:
  enum class Kind { kShallow, kDeep };

  BipartiteIntegration() = default;
  BipartiteIntegration(nn::ParameterStore<T>& store, const std::string& name, Kind kind, int leg_channels,
                       int channels, Rng& rng)
      : kind_(kind) {
    const int h = detail::half_channels(channels, name);
    proj_leg_ = nn::Conv2d<T>(store, name + ".proj_enc", leg_channels, h, 1, true, rng);
    proj_f_ = nn::Conv2d<T>(store, name + ".proj_dec", channels, h, 1, true, rng);
    fuse_ = nn::ConvBnRelu<T>(store, name + ".fuse", 2 * h, channels, rng);
  }

  // f: decoder feature at H/r; enc: E0 (shallow) or E4 (deep).
  Var<T> operator()(const Var<T>& f, const Var<T>& enc, const Mode& mode) const {
    Var<T> leg;
    if (kind_ == Kind::kShallow) {
      if (enc.h() % f.h() != 0 || enc.w() % f.w() != 0 || enc.h() / f.h() != enc.w() / f.w())
        throw ShapeError("sbfi: encoder map " + enc.value().shape_str() + " is not an integer multiple of " +
                         f.value().shape_str());
      leg = nn::max_pool(enc, enc.h() / f.h()).out;
    } else {
      if (f.h() % enc.h() != 0 || f.w() % enc.w() != 0)
        throw ShapeError("dbfi: decoder map " + f.value().shape_str() + " is not an integer multiple of " +
                         enc.value().shape_str());
      leg = nn::upsample_bilinear(enc, f.h(), f.w());
    }
    if (leg.n() != f.n()) throw ShapeError("bfi: batch mismatch");
    auto fused = fuse_(nn::concat_channels<T>({proj_leg_(leg), proj_f_(f)}), mode);
    return nn::add(fused, f);
  }

  // Makes the fuse block output exactly zero, so the module is the identity.
  void zero_final() {
    nn::zero_fill(fuse_.bn().gamma());
    nn::zero_fill(fuse_.bn().beta());
  }

  nn::ConvBnRelu<T>& fuse() { return fuse_; }

 private:
  Kind kind_ = Kind::kShallow;
  nn::Conv2d<T> proj_leg_, proj_f_;
  nn::ConvBnRelu<T> fuse_;
};

}  // namespace p3m
