#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "p3m/backbone/encoder.hpp"
#include "p3m/p3mnet/integration.hpp"

namespace p3m {

enum class SegClass : std::uint8_t { kBackground = 0, kTransition = 1, kForeground = 2 };

struct P3MNetConfig {
  EncoderConfig encoder;
  bool use_tfi = true;
  bool use_sbfi = true;
  bool use_dbfi = true;
  // Input width of each decoder block at scale 1; block k emits the width of block k+1.
  std::array<int, 5> decoder_channels{512, 256, 128, 64, 64};

  static P3MNetConfig basic(EncoderConfig enc) {
    P3MNetConfig c;
    c.encoder = enc;
    c.use_tfi = c.use_sbfi = c.use_dbfi = false;
    return c;
  }

  int decoder_in(int k) const {
    return std::max(1, static_cast<int>(std::lround(decoder_channels.at(k) * encoder.scale)));
  }
  int decoder_out(int k) const { return k + 1 < 5 ? decoder_in(k + 1) : decoder_in(4); }

  void validate() const {
    encoder.validate();
    for (int c : decoder_channels)
      if (c < 1) throw ConfigError("decoder channels must be positive");
  }
};

template <class T>
struct NetworkOutput {
  Var<T> seg_logits;    // [N,3,H,W]
  Var<T> detail_alpha;  // [N,1,H,W] in [0,1]
  Var<T> fused_alpha;   // [N,1,H,W] in [0,1]
};

// Per pixel: argmax FG -> 1, BG -> 0, transition -> detail. Gradient reaches
// detail only on transition pixels. Ties resolve to the lower class index.
template <class T>
Var<T> collaborative_fusion(const Var<T>& seg_logits, const Var<T>& detail_alpha) {
  const auto& S = seg_logits.value();
  const auto& D = detail_alpha.value();
  if (S.c() != 3 || D.c() != 1 || S.n() != D.n() || S.h() != D.h() || S.w() != D.w())
    throw ShapeError("fusion: logits " + S.shape_str() + " vs detail " + D.shape_str());
  std::vector<std::size_t> pos;
  std::vector<T> val;
  const std::size_t P = S.plane();
  for (int n = 0; n < S.n(); ++n)
    for (std::size_t p = 0; p < P; ++p) {
      int best = 0;
      for (int k = 1; k < 3; ++k)
        if (S[S.offset(n, k, 0, 0) + p] > S[S.offset(n, best, 0, 0) + p]) best = k;
      if (best == static_cast<int>(SegClass::kTransition)) continue;
      pos.push_back(D.offset(n, 0, 0, 0) + p);
      val.push_back(best == static_cast<int>(SegClass::kForeground) ? T(1) : T(0));
    }
  return nn::replace_values(detail_alpha, std::move(pos), val);
}

namespace detail {

template <class T>
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(nn::ParameterStore<T>& store, const std::string& name, int cin, int cout, Rng& rng)
      : c1_(store, name + ".conv1", cin, cin, rng),
        c2_(store, name + ".conv2", cin, cin, rng),
        c3_(store, name + ".conv3", cin, cout, rng) {}
  Var<T> operator()(const Var<T>& x, const Mode& mode) const { return c3_(c2_(c1_(x, mode), mode), mode); }

 private:
  nn::ConvBnRelu<T> c1_, c2_, c3_;
};

}  // namespace detail

// Sharing encoder + segmentation decoder (bilinear upsampling) + matting
// decoder (max unpooling), coupled by the three integration modules.
template <class T = float>
class P3MNet {
 public:
  static constexpr int kDecoderBlocks = 5;

  explicit P3MNet(const P3MNetConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    encoder_ = Encoder<T>(store_, cfg.encoder, rng);
    for (int k = 0; k < kDecoderBlocks; ++k) {
      const int cin = cfg.decoder_in(k), cout = cfg.decoder_out(k);
      seg_[k] = detail::DecoderBlock<T>(store_, "seg_decoder.block" + std::to_string(k), cin, cout, rng);
      mat_[k] = detail::DecoderBlock<T>(store_, "mat_decoder.block" + std::to_string(k), cin, cout, rng);
    }
    // Integration index i sits after decoder block 4-i, at resolution H/2^i.
    for (int i = 1; i <= 4; ++i) {
      const int c = cfg.decoder_out(4 - i);
      if (cfg.use_tfi) tfi_[i] = TripartiteIntegration<T>(store_, "tfi" + std::to_string(i), c, rng);
      if (i <= 3 && cfg.use_sbfi)
        sbfi_[i] = BipartiteIntegration<T>(store_, "sbfi" + std::to_string(i),
                                           BipartiteIntegration<T>::Kind::kShallow, encoder_.stage_channels(0), c, rng);
      if (i <= 3 && cfg.use_dbfi)
        dbfi_[i] = BipartiteIntegration<T>(store_, "dbfi" + std::to_string(i), BipartiteIntegration<T>::Kind::kDeep,
                                           encoder_.stage_channels(5), c, rng);
    }
    const int last = cfg.decoder_out(kDecoderBlocks - 1);
    seg_head_ = nn::Conv2d<T>(store_, "seg_head", last, 3, 3, true, rng);
    mat_head_ = nn::Conv2d<T>(store_, "mat_head", last, 1, 3, true, rng);
    mat_head_.bias().mutable_value().fill(T(0.5));
  }

  P3MNet(P3MNet&&) noexcept = default;
  P3MNet& operator=(P3MNet&&) noexcept = default;

  const P3MNetConfig& config() const { return cfg_; }
  const Encoder<T>& encoder() const { return encoder_; }
  Encoder<T>& encoder() { return encoder_; }
  nn::ParameterStore<T>& store() { return store_; }
  const nn::ParameterStore<T>& store() const { return store_; }
  std::size_t parameter_count() const { return store_.parameter_count(); }

  NetworkOutput<T> forward(const Var<T>& img, const Mode& mode) const {
    return decode(encoder_.forward(img, mode), mode);
  }

  NetworkOutput<T> decode(const EncoderOutput<T>& enc, const Mode& mode) const {
    if (enc.completed != EncoderOutput<T>::kStages - 1) throw StateError("decode: encoder output incomplete");
    Var<T> fs = enc.e4(), fm = enc.e4();
    for (int k = 0; k < kDecoderBlocks; ++k) {
      const int i = 4 - k;  // resolution index after this block's upsampling
      const auto& ind = enc.pool_indices[i];
      if (!ind) throw StateError("matting decoder: pooling indices are missing");
      fs = seg_[k](fs, mode);
      fs = nn::upsample_bilinear(fs, ind->in_h, ind->in_w);
      fm = nn::max_unpool(mat_[k](fm, mode), ind);
      if (i >= 1 && i <= 3 && dbfi_[i]) fs = (*dbfi_[i])(fs, enc.e4(), mode);
      if (i >= 1 && tfi_[i]) fm = (*tfi_[i])(fm, fs, enc.features[i], mode);
      if (i >= 1 && i <= 3 && sbfi_[i]) fm = (*sbfi_[i])(fm, enc.e0(), mode);
    }
    NetworkOutput<T> out;
    out.seg_logits = seg_head_(fs);
    out.detail_alpha = nn::clamp01(mat_head_(fm));
    out.fused_alpha = collaborative_fusion(out.seg_logits, out.detail_alpha);
    return out;
  }

  // Zeroes the fuse blocks of the bipartite modules (identity integration).
  void zero_bipartite() {
    for (auto& m : sbfi_)
      if (m) m->zero_final();
    for (auto& m : dbfi_)
      if (m) m->zero_final();
  }

  std::optional<TripartiteIntegration<T>>& tfi(int i) { return tfi_.at(i); }
  std::optional<BipartiteIntegration<T>>& sbfi(int i) { return sbfi_.at(i); }
  std::optional<BipartiteIntegration<T>>& dbfi(int i) { return dbfi_.at(i); }

 private:
  P3MNetConfig cfg_;
  nn::ParameterStore<T> store_;
  Encoder<T> encoder_;
  std::array<detail::DecoderBlock<T>, kDecoderBlocks> seg_, mat_;
  std::array<std::optional<TripartiteIntegration<T>>, 5> tfi_;
  std::array<std::optional<BipartiteIntegration<T>>, 4> sbfi_, dbfi_;
  nn::Conv2d<T> seg_head_, mat_head_;
};

template <class T>
std::size_t count_parameters(const P3MNet<T>& model) {
  return model.parameter_count();
}

template <class T>
nn::Tensor<T> image_tensor(const ImageRGB& img) {
  nn::Tensor<T> t(1, 3, img.height(), img.width());
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < img.height(); ++r)
      for (int x = 0; x < img.width(); ++x) t.at(0, c, r, x) = static_cast<T>(img.at(c, r, x));
  return t;
}

template <class T>
AlphaMatte alpha_from_tensor(const nn::Tensor<T>& t, int n = 0) {
  AlphaMatte a(t.h(), t.w());
  for (int r = 0; r < t.h(); ++r)
    for (int x = 0; x < t.w(); ++x) a(r, x) = std::clamp(static_cast<float>(t.at(n, 0, r, x)), 0.0f, 1.0f);
  return a;
}

template <class T>
NetworkOutput<T> forward(const P3MNet<T>& model, const ImageRGB& img) {
  nn::NoGradGuard ng;
  return model.forward(nn::constant(image_tensor<T>(img)), Mode{});
}

}  // namespace p3m
