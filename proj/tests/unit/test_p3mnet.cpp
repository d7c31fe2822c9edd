#include <gtest/gtest.h>

#include <random>

#include "oracles/finite_diff.hpp"
#include "oracles/nn_oracle.hpp"
#include "p3m/p3mnet/model.hpp"

using namespace p3m;
using nn::Tensor;

namespace {

Tensor<double> rand_t(int n, int c, int h, int w, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(n, c, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.span()) v = u(rng);
  return t;
}

// Random biases, affine and running stats so the oracle sees every term.
void perturb(nn::ParameterStore<double>& store, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.3, 0.3), pos(0.5, 1.5);
  for (const auto& p : store.parameters()) {
    auto v = p.var;
    if (p.name.ends_with(".bias") || p.name.ends_with(".beta"))
      for (auto& x : v.mutable_value().span()) x = u(rng);
    if (p.name.ends_with(".gamma"))
      for (auto& x : v.mutable_value().span()) x = pos(rng);
  }
  for (const auto& b : store.buffers()) {
    auto v = b.var;
    const bool var = b.name.ends_with("running_var");
    for (auto& x : v.mutable_value().span()) x = var ? pos(rng) : u(rng);
  }
}

nn::Var<double> c(const Tensor<double>& t) { return nn::constant(t); }

P3MNetConfig toy(BlockVariant v = BlockVariant::kResNet34) { return P3MNetConfig{EncoderConfig::toy(v)}; }

}  // namespace

TEST(Tfi, ShapeAndZeroInput) {
  nn::ParameterStore<float> store;
  Rng rng(1);
  TripartiteIntegration<float> tfi(store, "t", 64, rng);
  const nn::Var<float> x = nn::constant(Tensor<float>(1, 64, 32, 32));
  const auto y = tfi(x, x, x, Mode{}).value();
  EXPECT_EQ(y.shape_str(), "1x64x32x32");
  for (float v : y.span()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(tfi(x, nn::constant(Tensor<float>(1, 64, 16, 16)), x, Mode{}), ShapeError);
  EXPECT_THROW(TripartiteIntegration<float>(store, "odd", 5, rng), ConfigError);
}

TEST(Tfi, MatchesOracle) {
  nn::ParameterStore<double> store;
  Rng rng(2);
  TripartiteIntegration<double> tfi(store, "t", 4, rng);
  std::mt19937_64 r(3);
  perturb(store, r);
  const auto fm = rand_t(2, 4, 4, 4, r), fs = rand_t(2, 4, 4, 4, r), fe = rand_t(2, 4, 4, 4, r);
  const oracle::Params P{&store};
  for (bool training : {false, true}) {
    const auto y = tfi(c(fm), c(fs), c(fe), Mode{training, false}).value();
    EXPECT_LT(oracle::max_abs_diff(y, oracle::tfi(P, "t", fm, fs, fe, training)), 1e-5);
  }
}

TEST(Bfi, MatchesOracle) {
  nn::ParameterStore<double> store;
  Rng rng(4);
  using B = BipartiteIntegration<double>;
  B s(store, "s", B::Kind::kShallow, 6, 4, rng);
  B d(store, "d", B::Kind::kDeep, 8, 4, rng);
  std::mt19937_64 r(5);
  perturb(store, r);
  const auto f = rand_t(2, 4, 4, 4, r), e0 = rand_t(2, 6, 16, 16, r), e4 = rand_t(2, 8, 2, 2, r);
  const oracle::Params P{&store};
  for (bool training : {false, true}) {
    const Mode m{training, false};
    EXPECT_LT(oracle::max_abs_diff(s(c(f), c(e0), m).value(), oracle::sbfi(P, "s", f, e0, training)), 1e-5);
    EXPECT_LT(oracle::max_abs_diff(d(c(f), c(e4), m).value(), oracle::dbfi(P, "d", f, e4, training)), 1e-5);
  }
}

TEST(Bfi, ZeroFinalIsExactIdentity) {
  nn::ParameterStore<float> store;
  Rng rng(6);
  using B = BipartiteIntegration<float>;
  B s(store, "s", B::Kind::kShallow, 64, 32, rng);
  B d(store, "d", B::Kind::kDeep, 512, 16, rng);
  s.zero_final();
  d.zero_final();
  std::mt19937_64 r(7);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor<float> f(1, 32, 32, 32), e0(1, 64, 64, 64), fs(1, 16, 128, 128), e4(1, 512, 16, 16);
  for (auto* t : {&f, &e0, &fs, &e4})
    for (auto& v : t->span()) v = u(r);
  nn::NoGradGuard ng;
  for (bool training : {false, true}) {
    const Mode m{training, false};
    const auto ys = s(nn::constant(f), nn::constant(e0), m).value();
    EXPECT_EQ(ys.shape_str(), "1x32x32x32");
    EXPECT_TRUE(ys == f);
    const auto yd = d(nn::constant(fs), nn::constant(e4), m).value();
    EXPECT_EQ(yd.shape_str(), "1x16x128x128");
    EXPECT_TRUE(yd == fs);
  }
  EXPECT_THROW(s(nn::constant(Tensor<float>(1, 32, 24, 24)), nn::constant(e0), Mode{}), ShapeError);
  EXPECT_THROW(d(nn::constant(Tensor<float>(1, 16, 24, 24)), nn::constant(e4), Mode{}), ShapeError);
}

TEST(Fusion, RuleTable) {
  Tensor<double> logits(1, 3, 2, 2), detail(1, 1, 2, 2);
  const SegClass cls[4] = {SegClass::kForeground, SegClass::kBackground, SegClass::kTransition, SegClass::kTransition};
  const double d[4] = {.9, .1, .3, .7};
  for (int p = 0; p < 4; ++p) {
    logits[static_cast<int>(cls[p]) * 4 + p] = 2.0;
    detail[p] = d[p];
  }
  const auto f = collaborative_fusion(c(logits), c(detail)).value();
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(f[1], 0.0);
  EXPECT_EQ(f[2], 0.3);
  EXPECT_EQ(f[3], 0.7);
}

TEST(Fusion, UniformClassCases) {
  std::mt19937_64 r(8);
  const auto detail = rand_t(2, 1, 5, 5, r, 0, 1);
  for (int k = 0; k < 3; ++k) {
    Tensor<double> logits(2, 3, 5, 5);
    for (int n = 0; n < 2; ++n)
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) logits.at(n, k, y, x) = 1;
    const auto f = collaborative_fusion(c(logits), c(detail)).value();
    for (std::size_t i = 0; i < f.size(); ++i)
      EXPECT_EQ(f[i], k == 2 ? 1.0 : k == 0 ? 0.0 : detail[i]);
  }
  EXPECT_THROW(collaborative_fusion(c(Tensor<double>(1, 2, 2, 2)), c(Tensor<double>(1, 1, 2, 2))), ShapeError);
}

TEST(Fusion, GradientOnlyOnTransition) {
  std::mt19937_64 r(9);
  const auto logits = rand_t(1, 3, 4, 4, r);
  nn::Var<double> detail(rand_t(1, 1, 4, 4, r, 0, 1), true);
  nn::backward(nn::dot_with(collaborative_fusion(c(logits), detail), Tensor<double>(1, 1, 4, 4, 1.0)));
  for (int p = 0; p < 16; ++p) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (logits[k * 16 + p] > logits[best * 16 + p]) best = k;
    EXPECT_EQ(detail.grad()[p], best == 1 ? 1.0 : 0.0);
  }
}

TEST(Model, OutputsAtInputResolution) {
  for (auto v : {BlockVariant::kResNet34, BlockVariant::kSwinT, BlockVariant::kViTAES}) {
    P3MNet<float> net(toy(v), 1);
    std::mt19937_64 r(10);
    Tensor<float> img(2, 3, 64, 64);
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& x : img.span()) x = u(r);
    nn::NoGradGuard ng;
    const auto out = net.forward(nn::constant(img), Mode{});
    EXPECT_EQ(out.seg_logits.value().shape_str(), "2x3x64x64");
    EXPECT_EQ(out.detail_alpha.value().shape_str(), "2x1x64x64");
    for (float a : out.fused_alpha.value().span()) {
      EXPECT_GE(a, 0.0f);
      EXPECT_LE(a, 1.0f);
    }
    for (float a : out.detail_alpha.value().span()) ASSERT_TRUE(a >= 0.0f && a <= 1.0f);
  }
}

TEST(Model, AblationsRunAndDiffer) {
  const auto enc = EncoderConfig::toy(BlockVariant::kResNet34);
  auto basic_cfg = P3MNetConfig::basic(enc);
  auto tfi_cfg = basic_cfg;
  tfi_cfg.use_tfi = true;
  P3MNet<float> basic(basic_cfg, 3), tfi(tfi_cfg, 3);
  for (int i = 1; i <= 4; ++i) {
    EXPECT_FALSE(basic.tfi(i).has_value());
    EXPECT_TRUE(tfi.tfi(i).has_value());
  }
  for (int i = 1; i <= 3; ++i) EXPECT_FALSE(tfi.sbfi(i).has_value() || tfi.dbfi(i).has_value());
  std::mt19937_64 r(11);
  Tensor<float> img(1, 3, 64, 64);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& x : img.span()) x = u(r);
  nn::NoGradGuard ng;
  const auto a = basic.forward(nn::constant(img), Mode{});
  const auto b = tfi.forward(nn::constant(img), Mode{});
  for (float v : a.seg_logits.value().span()) ASSERT_TRUE(std::isfinite(v));
  EXPECT_FALSE(a.detail_alpha.value() == b.detail_alpha.value());
}

TEST(Model, ParameterCountGrowsWithModules) {
  const auto enc = EncoderConfig::toy(BlockVariant::kResNet34);
  auto cfg = P3MNetConfig::basic(enc);
  const auto n_basic = P3MNet<float>(cfg).parameter_count();
  cfg.use_tfi = true;
  const auto n_tfi = P3MNet<float>(cfg).parameter_count();
  cfg.use_sbfi = true;
  const auto n_sbfi = P3MNet<float>(cfg).parameter_count();
  cfg.use_dbfi = true;
  const auto n_all = P3MNet<float>(cfg).parameter_count();
  EXPECT_LT(n_basic, n_tfi);
  EXPECT_LT(n_tfi, n_sbfi);
  EXPECT_LT(n_sbfi, n_all);
}

TEST(Model, ZeroBipartiteMatchesModelWithoutThem) {
  // identity bipartite modules leave the decoder as if they were absent
  const auto enc = EncoderConfig::toy(BlockVariant::kResNet34);
  P3MNet<float> full(P3MNetConfig{enc}, 4);
  full.zero_bipartite();
  std::mt19937_64 r(12);
  Tensor<float> img(1, 3, 32, 32);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& x : img.span()) x = u(r);
  nn::NoGradGuard ng;
  const auto enc_out = full.encoder().forward(nn::constant(img), Mode{});
  const auto out = full.decode(enc_out, Mode{});
  EXPECT_EQ(out.detail_alpha.value().shape_str(), "1x1x32x32");
  EncoderOutput<float> partial;
  EXPECT_THROW(full.decode(partial, Mode{}), StateError);
}

TEST(Model, SameSeedIsBitIdentical) {
  P3MNet<float> a(toy(), 5), b(toy(), 5);
  Tensor<float> img(1, 3, 32, 32, 0.3f);
  nn::NoGradGuard ng;
  EXPECT_TRUE(a.forward(nn::constant(img), Mode{}).fused_alpha.value() ==
              b.forward(nn::constant(img), Mode{}).fused_alpha.value());
}

// Batch statistics over two samples at 1x1 make the training-mode loss
// strongly curved, so that case needs the smaller step.
class ModelGrad : public ::testing::TestWithParam<std::pair<bool, double>> {};

TEST_P(ModelGrad, EncoderWeightFiniteDifference) {
  const auto [training, hstep] = GetParam();
  P3MNet<double> net(toy(), 6);
  std::mt19937_64 r(13);
  const auto img = rand_t(2, 3, 32, 32, r, 0, 1);
  const auto wd = rand_t(2, 1, 32, 32, r), ws = rand_t(2, 3, 32, 32, r);
  const Mode mode{training, false};
  const auto loss = [&] {
    const auto out = net.forward(c(img), mode);
    return nn::add(nn::dot_with(out.detail_alpha, wd), nn::dot_with(out.seg_logits, ws));
  };
  for (const char* name : {"encoder.e0.0.conv.weight", "encoder.series2.block0.conv1.weight"}) {
    auto w = net.store().find(name);
    net.store().zero_grad();
    nn::backward(loss());
    const auto grad = w.grad();
    for (std::size_t i : {std::size_t{0}, std::size_t{7}, w.value().size() / 2}) {
      const double fd = oracle::central_difference(&w.mutable_value()[i], hstep, [&] {
        nn::NoGradGuard ng;
        return loss().value().item();
      });
      EXPECT_LT(oracle::relative_error(grad[i], fd, 1e-4), 1e-3) << name << "[" << i << "] " << grad[i] << " vs " << fd;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, ModelGrad, ::testing::Values(std::pair{false, 1e-5}, std::pair{true, 1e-6}));
