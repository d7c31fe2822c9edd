#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "p3m/backbone/blocks.hpp"
#include "p3m/backbone/config.hpp"
#include "p3m/core/raster.hpp"

namespace p3m {

using PoolIndexPtr = std::shared_ptr<const nn::PoolIndices>;

// Stage features of the sharing encoder. e0 is full resolution; e1..e4_pre
// halve each time, e4 sits at 1/32. pool_indices[k] is the argmax record of
// the pool that produced stage k+1.
template <class T>
struct EncoderOutput {
  static constexpr int kStages = 6;
  std::array<Var<T>, kStages> features;
  std::array<PoolIndexPtr, kStages - 1> pool_indices;
  int completed = -1;  // last stage computed

  Var<T>& e0() { return features[0]; }
  Var<T>& e1() { return features[1]; }
  Var<T>& e2() { return features[2]; }
  Var<T>& e3() { return features[3]; }
  Var<T>& e4_pre() { return features[4]; }
  Var<T>& e4() { return features[5]; }
  const Var<T>& e0() const { return features[0]; }
  const Var<T>& e1() const { return features[1]; }
  const Var<T>& e2() const { return features[2]; }
  const Var<T>& e3() const { return features[3]; }
  const Var<T>& e4_pre() const { return features[4]; }
  const Var<T>& e4() const { return features[5]; }
};

// ImageNet statistics; the network sees normalised input.
inline constexpr std::array<double, 3> kInputMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kInputStd{0.229, 0.224, 0.225};

template <class T>
class Encoder {
 public:
  static constexpr int kStages = EncoderOutput<T>::kStages;

  Encoder() = default;
  Encoder(nn::ParameterStore<T>& store, const EncoderConfig& cfg, Rng& rng, const std::string& prefix = "encoder")
      : cfg_(cfg) {
    cfg.validate();
    const int c0 = cfg.channels(0);
    stem1_ = nn::ConvBnRelu<T>(store, prefix + ".e0.0", 3, c0, rng);
    stem2_ = nn::ConvBnRelu<T>(store, prefix + ".e0.1", c0, c0, rng);
    int cin = c0;
    for (int s = 0; s < 4; ++s) {
      Series ser;
      const int cout = cfg.channels(s + 1);
      const std::string base = prefix + ".series" + std::to_string(s + 1);
      if (cin != cout) {
        ser.entry_conv = nn::Conv2d<T>(store, base + ".entry.conv", cin, cout, 1, false, rng);
        ser.entry_bn = nn::BatchNorm2d<T>(store, base + ".entry.bn", cout);
        ser.has_entry = true;
      }
      for (int b = 0; b < cfg.depths[s]; ++b) {
        const std::string bn = base + ".block" + std::to_string(b);
        switch (cfg.variant) {
          case BlockVariant::kResNet34:
            ser.blocks.push_back(std::make_unique<ResNetBlock<T>>(store, bn, cout, rng));
            break;
          case BlockVariant::kSwinT:
            ser.blocks.push_back(
                std::make_unique<SwinBlock<T>>(store, bn, cout, cfg.heads(s), cfg.window_size, b % 2 == 1, rng));
            break;
          case BlockVariant::kViTAES:
            ser.blocks.push_back(std::make_unique<ViTAEBlock<T>>(store, bn, cout, cfg.heads(s), cfg.window_size, rng));
            break;
        }
      }
      series_.push_back(std::move(ser));
      cin = cout;
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  int stage_channels(int stage) const { return stage == 0 ? cfg_.channels(0) : cfg_.channels(std::max(0, stage - 1)); }

  // Normalises an [N,3,H,W] image batch in [0,1].
  static Var<T> normalise(const Var<T>& img) {
    std::vector<T> mul(3), add(3);
    for (int c = 0; c < 3; ++c) {
      mul[c] = static_cast<T>(1.0 / kInputStd[c]);
      add[c] = static_cast<T>(-kInputMean[c] / kInputStd[c]);
    }
    return nn::channel_affine(img, mul, add);
  }

  static void check_input(const Var<T>& img) {
    if (img.c() != 3) throw ShapeError("encoder input must have 3 channels, got " + std::to_string(img.c()));
    if (img.h() % 32 != 0 || img.w() % 32 != 0)
      throw ShapeError("encoder input " + std::to_string(img.h()) + "x" + std::to_string(img.w()) +
                       " is not divisible by 32");
  }

  // Runs stages up to and including `last` (continuing from out.completed).
  void run_until(const Var<T>& img, EncoderOutput<T>& out, int last, const Mode& mode) const {
    if (last < 0 || last >= kStages) throw ConfigError("encoder stage out of range");
    if (out.completed < 0) check_input(img);
    for (int s = out.completed + 1; s <= last; ++s) {
      out.features[s] = run_stage(s, s == 0 ? img : out.features[s - 1], out, mode);
      out.completed = s;
    }
  }

  EncoderOutput<T> forward(const Var<T>& img, const Mode& mode) const {
    EncoderOutput<T> out;
    run_until(img, out, kStages - 1, mode);
    return out;
  }

  EncoderOutput<T> forward(const ImageRGB& img, const Mode& mode) const {
    nn::Tensor<T> t(1, 3, img.height(), img.width());
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < img.height(); ++r)
        for (int x = 0; x < img.width(); ++x) t.at(0, c, r, x) = static_cast<T>(img.at(c, r, x));
    return forward(nn::constant(std::move(t)), mode);
  }

  // Every attention row produced by the series blocks during one forward.
  std::vector<std::vector<T>> attention_probabilities(const Var<T>& img) const {
    nn::NoGradGuard ng;
    std::vector<std::vector<T>> rows;
    Mode mode;
    auto x = stem2_(stem1_(normalise(img), mode), mode);
    x = nn::max_pool(x, 2).out;
    for (const auto& ser : series_) {
      x = nn::max_pool(x, 2).out;
      if (ser.has_entry) x = ser.entry_bn(ser.entry_conv(x), mode);
      for (const auto& b : ser.blocks) {
        std::vector<T> p;
        x = b->forward(x, mode, &p);
        if (!p.empty()) rows.push_back(std::move(p));
      }
    }
    return rows;
  }

  void zero_final() {
    for (auto& ser : series_)
      for (auto& b : ser.blocks) b->zero_final();
  }

 private:
  struct Series {
    bool has_entry = false;
    nn::Conv2d<T> entry_conv;
    nn::BatchNorm2d<T> entry_bn;
    std::vector<std::unique_ptr<Block<T>>> blocks;
  };

  Var<T> run_stage(int s, const Var<T>& in, EncoderOutput<T>& out, const Mode& mode) const {
    if (s == 0) return stem2_(stem1_(normalise(in), mode), mode);
    auto pooled = nn::max_pool(in, 2);
    out.pool_indices[s - 1] = pooled.indices;
    if (s == 1) return pooled.out;
    const auto& ser = series_[s - 2];
    auto x = pooled.out;
    if (ser.has_entry) x = ser.entry_bn(ser.entry_conv(x), mode);
    for (const auto& b : ser.blocks) x = b->forward(x, mode);
    return x;
  }

  EncoderConfig cfg_;
  nn::ConvBnRelu<T> stem1_, stem2_;
  std::vector<Series> series_;
};

// A standalone encoder with its own parameter storage.
template <class T>
struct OwnedEncoder {
  nn::ParameterStore<T> store;
  Encoder<T> encoder;
};

template <class T = float>
OwnedEncoder<T> build_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  OwnedEncoder<T> o;
  Rng rng(seed);
  o.encoder = Encoder<T>(o.store, cfg, rng);
  return o;
}

}  // namespace p3m
