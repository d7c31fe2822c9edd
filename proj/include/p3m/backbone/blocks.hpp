#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "p3m/nn/attention.hpp"
#include "p3m/nn/layers.hpp"

namespace p3m {

using nn::Mode;
using nn::Rng;
using nn::Var;

// One basic block of the sharing encoder. Blocks keep channel count and
// spatial size; width changes happen at stage entry.
template <class T>
class Block {
 public:
  virtual ~Block() = default;
  // probs, when non-null, receives the softmax rows of every attention
  // window (attention variants only).
  virtual Var<T> forward(const Var<T>& x, const Mode& mode, std::vector<T>* probs = nullptr) const = 0;
  // Zeroes the last affine layer of every residual branch.
  virtual void zero_final() = 0;
};

template <class T>
class ResNetBlock final : public Block<T> {
 public:
  ResNetBlock(nn::ParameterStore<T>& store, const std::string& name, int channels, Rng& rng)
      : conv1_(store, name + ".conv1", channels, channels, 3, false, rng),
        bn1_(store, name + ".bn1", channels),
        conv2_(store, name + ".conv2", channels, channels, 3, false, rng),
        bn2_(store, name + ".bn2", channels) {}

  Var<T> forward(const Var<T>& x, const Mode& mode, std::vector<T>* = nullptr) const override {
    auto y = nn::relu(bn1_(conv1_(x), mode));
    y = bn2_(conv2_(y), mode);
    return nn::relu(nn::add(y, x));
  }
  void zero_final() override {
    nn::zero_fill(bn2_.gamma());
    nn::zero_fill(bn2_.beta());
  }

 private:
  nn::Conv2d<T> conv1_;
  nn::BatchNorm2d<T> bn1_;
  nn::Conv2d<T> conv2_;
  nn::BatchNorm2d<T> bn2_;
};

namespace detail {

// Window side actually used on an h x w map: the configured window, or the
// whole map when it is smaller (then no shift).
inline int effective_window(int window, int h, int w) { return std::min({window, h, w}); }

template <class T>
class MlpBranch {
 public:
  MlpBranch() = default;
  MlpBranch(nn::ParameterStore<T>& store, const std::string& name, int channels, Rng& rng)
      : norm_(store, name + ".norm", channels),
        fc1_(store, name + ".fc1", channels, 4 * channels, 1, true, rng, nn::WeightInit::kTruncNormal),
        fc2_(store, name + ".fc2", 4 * channels, channels, 1, true, rng, nn::WeightInit::kTruncNormal) {}

  Var<T> operator()(const Var<T>& x) const { return fc2_(nn::gelu(fc1_(norm_(x)))); }
  void zero_final() {
    nn::zero_fill(fc2_.weight());
    nn::zero_fill(fc2_.bias());
  }

 private:
  nn::LayerNorm2d<T> norm_;
  nn::Conv2d<T> fc1_, fc2_;
};

}  // namespace detail

// Swin block: (shifted) window MSA with relative position bias, then MLP.
template <class T>
class SwinBlock final : public Block<T> {
 public:
  SwinBlock(nn::ParameterStore<T>& store, const std::string& name, int channels, int heads, int window,
            bool shifted, Rng& rng)
      : heads_(heads), window_(window), shifted_(shifted),
        norm_(store, name + ".norm1", channels),
        qkv_(store, name + ".qkv", channels, 3 * channels, 1, true, rng, nn::WeightInit::kTruncNormal),
        proj_(store, name + ".proj", channels, channels, 1, true, rng, nn::WeightInit::kTruncNormal),
        mlp_(store, name + ".mlp", channels, rng) {
    const int side = 2 * window - 1;
    bias_ = store.add_parameter(name + ".rel_bias", nn::init::trunc_normal<T>(1, heads, side * side, 1, 0.02, rng));
  }

  Var<T> forward(const Var<T>& x, const Mode&, std::vector<T>* probs = nullptr) const override {
    const int w = detail::effective_window(window_, x.h(), x.w());
    const int shift = (shifted_ && w == window_) ? window_ / 2 : 0;
    const auto geo = nn::make_window_geometry(x.h(), x.w(), w, shift, window_);
    auto y = nn::add(x, proj_(nn::window_attention(qkv_(norm_(x)), heads_, geo, bias_, probs)));
    return nn::add(y, mlp_(y));
  }
  void zero_final() override {
    nn::zero_fill(proj_.weight());
    nn::zero_fill(proj_.bias());
    mlp_.zero_final();
  }

 private:
  int heads_, window_;
  bool shifted_;
  nn::LayerNorm2d<T> norm_;
  nn::Conv2d<T> qkv_, proj_;
  Var<T> bias_;
  detail::MlpBranch<T> mlp_;
};

// ViTAE normal cell: window MSA and a convolutional locality branch run in
// parallel on the same input and are summed into the skip path, then MLP.
template <class T>
class ViTAEBlock final : public Block<T> {
 public:
  ViTAEBlock(nn::ParameterStore<T>& store, const std::string& name, int channels, int heads, int window, Rng& rng)
      : heads_(heads), window_(window),
        norm_(store, name + ".norm1", channels),
        qkv_(store, name + ".qkv", channels, 3 * channels, 1, true, rng, nn::WeightInit::kTruncNormal),
        proj_(store, name + ".proj", channels, channels, 1, true, rng, nn::WeightInit::kTruncNormal),
        pcm1_(store, name + ".pcm.conv1", channels, channels, 3, false, rng),
        pcm_bn1_(store, name + ".pcm.bn1", channels),
        pcm2_(store, name + ".pcm.conv2", channels, channels, 3, false, rng),
        pcm_bn2_(store, name + ".pcm.bn2", channels),
        pcm3_(store, name + ".pcm.conv3", channels, channels, 3, true, rng),
        mlp_(store, name + ".mlp", channels, rng) {}

  Var<T> forward(const Var<T>& x, const Mode& mode, std::vector<T>* probs = nullptr) const override {
    const int w = detail::effective_window(window_, x.h(), x.w());
    const auto geo = nn::make_window_geometry(x.h(), x.w(), w, 0);
    auto attn = proj_(nn::window_attention(qkv_(norm_(x)), heads_, geo, Var<T>{}, probs));
    auto local = nn::silu(pcm_bn1_(pcm1_(x), mode));
    local = nn::silu(pcm_bn2_(pcm2_(local), mode));
    local = nn::silu(pcm3_(local));
    auto y = nn::add(nn::add(x, attn), local);
    return nn::add(y, mlp_(y));
  }
  void zero_final() override {
    nn::zero_fill(proj_.weight());
    nn::zero_fill(proj_.bias());
    nn::zero_fill(pcm3_.weight());
    nn::zero_fill(pcm3_.bias());
    mlp_.zero_final();
  }

 private:
  int heads_, window_;
  nn::LayerNorm2d<T> norm_;
  nn::Conv2d<T> qkv_, proj_;
  nn::Conv2d<T> pcm1_;
  nn::BatchNorm2d<T> pcm_bn1_;
  nn::Conv2d<T> pcm2_;
  nn::BatchNorm2d<T> pcm_bn2_;
  nn::Conv2d<T> pcm3_;
  detail::MlpBranch<T> mlp_;
};

}  // namespace p3m
