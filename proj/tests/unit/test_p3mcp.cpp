#include <gtest/gtest.h>

#include <random>
#include <set>

#include "p3m/p3mcp/fcp.hpp"
#include "p3m/p3mcp/library.hpp"
#include "support.hpp"

using namespace p3m;

namespace {

BinaryMask box_mask(int h, int w, int r0, int r1, int c0, int c1) {
  BinaryMask m(h, w);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m(r, c) = 1;
  return m;
}

CPConfig fixed(double p = 1.0) {
  CPConfig cfg;
  cfg.probability = p;
  return cfg;
}

SourceLibrary small_library(int n, int h, int w, std::mt19937_64& rng) {
  SourceLibrary lib;
  for (int i = 0; i < n; ++i)
    lib.push_back({"rec" + std::to_string(i), testing_support::random_image(h, w, rng),
                   box_mask(h, w, h / 4, 3 * h / 4, w / 4 + i % 2, 3 * w / 4)});
  return lib;
}

}  // namespace

TEST(SourceFacemask, KeepsRowsFromTopBrow) {
  BinaryMask skin(20, 8, 1), brow(20, 8);
  for (int r = 10; r <= 12; ++r) brow(r, 3) = brow(r, 4) = 1;
  const auto m = source_facemask_from_parts(skin, brow);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 8; ++c) EXPECT_EQ(m(r, c), r >= 10 ? 1 : 0);

  BinaryMask s6(6, 6, 1), b6(6, 6);
  b6(3, 1) = 1;
  EXPECT_EQ(source_facemask_from_parts(s6, b6), box_mask(6, 6, 3, 6, 0, 6));

  EXPECT_TRUE(source_facemask_from_parts(box_mask(6, 6, 0, 2, 0, 6), b6).none());
  EXPECT_THROW(source_facemask_from_parts(s6, BinaryMask(6, 6)), MissingAnnotation);
}

TEST(CenterOfMask, Cases) {
  BinaryMask one(8, 10);
  one(3, 7) = 1;
  EXPECT_EQ(center_of_mask(one).row, 3);
  EXPECT_EQ(center_of_mask(one).col, 7);
  const auto full = center_of_mask(BinaryMask(4, 4, 1));
  EXPECT_DOUBLE_EQ(full.row, 1.5);
  EXPECT_DOUBLE_EQ(full.col, 1.5);
  BinaryMask tri(3, 3);
  tri(0, 0) = tri(0, 2) = tri(2, 1) = 1;
  EXPECT_NEAR(center_of_mask(tri).row, 0.667, 1e-3);
  EXPECT_DOUBLE_EQ(center_of_mask(tri).col, 1.0);
  EXPECT_THROW(center_of_mask(BinaryMask(2, 2)), EmptyFace);
}

TEST(CopyAugment, IdentityTransform) {
  std::mt19937_64 rng(1);
  const auto img = testing_support::random_image(12, 10, rng);
  const auto m = box_mask(12, 10, 2, 9, 3, 7);
  const auto f = copy_augment(img, m, FaceTransform{});
  EXPECT_EQ(f.mask, m);
  EXPECT_EQ(f.data, mask_apply(img, m));
  EXPECT_THROW(copy_augment(img, BinaryMask(12, 10), FaceTransform{}), EmptyFace);
  EXPECT_THROW(copy_augment(img, BinaryMask(4, 4, 1), FaceTransform{}), ShapeError);
}

TEST(CopyAugment, HalfTurnReversesIndices) {
  std::mt19937_64 rng(2);
  const auto img = testing_support::random_image(8, 8, rng);
  const auto m = box_mask(8, 8, 2, 6, 2, 6);
  const auto f = copy_augment(img, m, FaceTransform{1.0, 180.0});
  EXPECT_EQ(f.mask, m);
  const auto masked = mask_apply(img, m);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) EXPECT_EQ(f.data.at(ch, r, c), masked.at(ch, 7 - r, 7 - c));
}

TEST(CopyAugment, HalfScale) {
  std::mt19937_64 rng(3);
  const auto img = testing_support::random_image(32, 32, rng);
  const auto f = copy_augment(img, BinaryMask(32, 32, 1), FaceTransform{0.5, 0.0});
  EXPECT_EQ(f.data.height(), 16);
  EXPECT_EQ(f.data.width(), 16);
  EXPECT_EQ(f.mask.count(), 256u);
}

TEST(AlignMerge, DisjointAndFullOverlap) {
  std::mt19937_64 rng(4);
  const auto src = testing_support::random_image(8, 8, rng);
  const auto dst = testing_support::random_image(8, 8, rng);
  // face mask is an L whose centre falls on a hole of the thin target ring
  BinaryMask face(8, 8), ring(8, 8);
  face(0, 0) = face(0, 2) = 1;  // centre (0, 1)
  ring(3, 3) = ring(3, 5) = 1;  // centre (3, 4); translated face hits (3,3),(3,5)
  const auto hit = align_merge(AugmentedFace<ImageRGB>{mask_apply(src, face), face}, dst, ring);
  EXPECT_NE(hit, dst);
  BinaryMask far(8, 8);
  far(0, 0) = far(6, 6) = 1;  // centre (3,3), target pixels off the translated face
  BinaryMask f2(8, 8);
  f2(3, 3) = 1;
  EXPECT_EQ(align_merge(AugmentedFace<ImageRGB>{src, f2}, dst, BinaryMask(far)), dst);

  const auto m = box_mask(8, 8, 2, 6, 1, 5);
  const auto merged = align_merge(copy_augment(src, m, FaceTransform{}), dst, m);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) EXPECT_EQ(merged.at(ch, r, c), m(r, c) ? src.at(ch, r, c) : dst.at(ch, r, c));
  EXPECT_THROW(align_merge(copy_augment(src, m, FaceTransform{}), dst, BinaryMask(8, 8)), EmptyTargetMask);
}

TEST(AlignMerge, SmallFaceIntoLargerMask) {
  std::mt19937_64 rng(5);
  const auto src = testing_support::random_image(8, 8, rng);
  const auto dst = testing_support::random_image(8, 8, rng);
  const auto face = box_mask(8, 8, 0, 2, 0, 2);
  const auto tgt = box_mask(8, 8, 4, 7, 4, 7);
  const auto out = align_merge(AugmentedFace<ImageRGB>{mask_apply(src, face), face}, dst, tgt);
  // translation rounds the centre difference (4.5) half away from zero
  const int d = static_cast<int>(std::round(5.0 - 0.5));
  std::set<std::pair<int, int>> expect;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      if (tgt(r + d, c + d)) expect.insert({r + d, c + d});
  EXPECT_EQ(expect.size(), 4u);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const bool replaced = expect.count({r, c}) > 0;
      for (int ch = 0; ch < 3; ++ch)
        EXPECT_EQ(out.at(ch, r, c), replaced ? src.at(ch, r - d, c - d) : dst.at(ch, r, c)) << r << "," << c;
    }
}

TEST(Cp, ComposesSubOperations) {
  std::mt19937_64 rng(6);
  const auto ds = testing_support::random_image(16, 16, rng);
  const auto dt = testing_support::random_image(16, 16, rng);
  const auto ms = box_mask(16, 16, 3, 12, 4, 11), mt = box_mask(16, 16, 5, 14, 2, 10);
  const CPConfig cfg = fixed();
  std::mt19937_64 a(77), b(77), c(77);
  const auto via_cp = cp(ds, ms, dt, mt, a, cfg);
  const auto face = copy_augment(ds, ms, draw_face_transform(b, cfg));
  const auto manual = align_merge(face, dt, mt);
  EXPECT_EQ(via_cp, manual);
  EXPECT_EQ(cp(ds, ms, dt, mt, c, cfg), via_cp);
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < 16; ++r)
      for (int x = 0; x < 16; ++x)
        if (!mt(r, x)) { EXPECT_EQ(via_cp.at(ch, r, x), dt.at(ch, r, x)); }
}

TEST(Cp, FeatureMapsWithManyChannels) {
  std::mt19937_64 rng(7);
  Grid<float> ds(6, 10, 10), dt(6, 10, 10);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : ds.data()) v = u(rng);
  for (auto& v : dt.data()) v = u(rng);
  const auto ms = box_mask(10, 10, 2, 8, 2, 8), mt = box_mask(10, 10, 3, 7, 1, 6);
  std::mt19937_64 r(8);
  const auto out = cp(ds, ms, dt, mt, r, fixed());
  for (int ch = 0; ch < 6; ++ch)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x)
        if (!mt(y, x)) { EXPECT_EQ(out.at(ch, y, x), dt.at(ch, y, x)); }
}

TEST(Icp, ProbabilityZeroAndOne) {
  std::mt19937_64 rng(9);
  const auto lib = small_library(3, 16, 16, rng);
  std::vector<CPSample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({testing_support::random_image(16, 16, rng), box_mask(16, 16, 2, 10, 3, 12)});
  batch.push_back({testing_support::random_image(16, 16, rng), BinaryMask(16, 16)});
  const auto orig = batch;

  auto b0 = batch;
  std::mt19937_64 r0(1);
  const auto s0 = icp_apply(b0, lib, r0, fixed(0.0));
  EXPECT_EQ(s0.augmented, 0u);
  for (std::size_t i = 0; i < b0.size(); ++i) EXPECT_EQ(b0[i].image, orig[i].image);

  auto b1 = batch, b2 = batch;
  std::mt19937_64 r1(2), r2(2);
  const auto s1 = icp_apply(b1, lib, r1, fixed(1.0));
  icp_apply(b2, lib, r2, fixed(1.0));
  EXPECT_EQ(s1.augmented, 4u);
  EXPECT_EQ(s1.skipped, 1u);  // the element without a facemask
  for (std::size_t i = 0; i < b1.size(); ++i) {
    EXPECT_EQ(b1[i].image, b2[i].image);
    if (i < 4) { EXPECT_NE(b1[i].image, orig[i].image); }
    for (int ch = 0; ch < 3; ++ch)
      for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c)
          if (!orig[i].facemask(r, c)) { ASSERT_EQ(b1[i].image.at(ch, r, c), orig[i].image.at(ch, r, c)); }
  }
  std::vector<CPSample> none;
  EXPECT_THROW(icp_apply(none, SourceLibrary{}, r1, fixed()), ConfigError);
}

TEST(Icp, FrequencyMatchesProbability) {
  std::mt19937_64 rng(10);
  const auto lib = small_library(2, 8, 8, rng);
  const CPSample base{testing_support::random_image(8, 8, rng), box_mask(8, 8, 1, 7, 1, 7)};
  std::mt19937_64 r(11);
  std::size_t hits = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    std::vector<CPSample> b{base};
    hits += icp_apply(b, lib, r, fixed(0.5)).augmented;
  }
  EXPECT_NEAR(static_cast<double>(hits) / trials, 0.5, 0.02);
}

TEST(Icp, SourceRecordsAreFittedToTheCanvas) {
  std::mt19937_64 rng(12);
  const auto lib = small_library(1, 32, 24, rng);
  std::vector<CPSample> b{{testing_support::random_image(16, 16, rng), box_mask(16, 16, 4, 12, 4, 12)}};
  std::mt19937_64 r(3);
  EXPECT_EQ(icp_apply(b, lib, r, fixed()).augmented, 1u);
  const auto fitted = fit_to_canvas(lib[0], 16, 16);
  EXPECT_EQ(fitted.image.height(), 16);
  EXPECT_EQ(fitted.facemask.width(), 16);
}

namespace {

struct FcpFixture {
  P3MNet<double> model{P3MNetConfig{EncoderConfig::toy(BlockVariant::kResNet34)}, 21};
  nn::Tensor<double> src, tgt;
  BinaryMask src_mask = box_mask(32, 32, 8, 24, 8, 24);
  std::vector<BinaryMask> tgt_masks{box_mask(32, 32, 4, 20, 6, 22), box_mask(32, 32, 10, 30, 2, 18)};

  FcpFixture() {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    src = nn::Tensor<double>(1, 3, 32, 32);
    tgt = nn::Tensor<double>(2, 3, 32, 32);
    for (auto& v : src.span()) v = u(rng);
    for (auto& v : tgt.span()) v = u(rng);
  }
};

}  // namespace

TEST(Fcp, SkippedMergeMatchesPlainForward) {
  FcpFixture f;
  std::mt19937_64 rng(1);
  for (bool training : {false, true}) {
    const Mode mode{training, false};
    const auto res = fcp_forward(f.model, nn::constant(f.src), f.src_mask, nn::constant(f.tgt), f.tgt_masks, rng,
                                 fixed(0.0), mode);
    EXPECT_FALSE(res.merged);
    const auto plain = f.model.forward(nn::constant(f.tgt), mode);
    EXPECT_TRUE(res.output.fused_alpha.value() == plain.fused_alpha.value());
    EXPECT_TRUE(res.output.seg_logits.value() == plain.seg_logits.value());
  }
}

TEST(Fcp, MergedCellsFollowHalfResolutionMasks) {
  FcpFixture f;
  auto cfg = fixed(1.0);
  cfg.rotation_deg = 0;
  cfg.scale_min = cfg.scale_max = 1.0;
  cfg.fcp_split_index = 1;
  // source mask equal to target mask: the paste set is the resampled mask itself
  f.tgt_masks = {f.src_mask, f.src_mask};
  std::mt19937_64 rng(2);
  const auto res = fcp_forward(f.model, nn::constant(f.src), f.src_mask, nn::constant(f.tgt), f.tgt_masks, rng, cfg,
                               Mode{});
  ASSERT_TRUE(res.merged);
  std::size_t half = 0;
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) half += f.src_mask(2 * r, 2 * c);
  const int channels = f.model.config().encoder.channels(0);
  EXPECT_EQ(res.pasted, 2 * channels * half);
  EXPECT_EQ(resample(f.src_mask, 16, 16, ResampleMode::kNearest).count(), half);
}

TEST(Fcp, GradientBlockedForSource) {
  FcpFixture f;
  nn::Var<double> src(f.src, true), tgt(f.tgt, true);
  std::mt19937_64 rng(3);
  const auto res = fcp_forward(f.model, src, f.src_mask, tgt, f.tgt_masks, rng, fixed(1.0), Mode{true, false});
  ASSERT_TRUE(res.merged);
  std::mt19937_64 w(5);
  nn::Tensor<double> wd(2, 1, 32, 32);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : wd.span()) v = u(w);
  nn::backward(nn::dot_with(res.output.detail_alpha, wd));
  if (src.has_grad()) {
    for (double g : src.grad().span()) EXPECT_EQ(g, 0.0);
  }
  ASSERT_TRUE(tgt.has_grad());
  double norm = 0;
  for (double g : tgt.grad().span()) norm += std::fabs(g);
  EXPECT_GT(norm, 0.0);
}

TEST(Fcp, ConfigErrorsAndNoExtraParameters) {
  FcpFixture f;
  std::mt19937_64 rng(4);
  auto cfg = fixed();
  cfg.fcp_split_index = 5;
  EXPECT_THROW(fcp_forward(f.model, nn::constant(f.src), f.src_mask, nn::constant(f.tgt), f.tgt_masks, rng, cfg, Mode{}),
               ConfigError);
  cfg.fcp_split_index = -1;
  EXPECT_THROW(EncoderSplit<double>(f.model, -1), ConfigError);
  const auto before = f.model.parameter_count();
  fcp_forward(f.model, nn::constant(f.src), f.src_mask, nn::constant(f.tgt), f.tgt_masks, rng, fixed(), Mode{});
  EXPECT_EQ(f.model.parameter_count(), before);
  EXPECT_THROW(fcp_forward(f.model, nn::constant(f.src), f.src_mask, nn::constant(f.tgt), {f.src_mask}, rng, fixed(),
                           Mode{}),
               ShapeError);
}

TEST(Fcp, SplitIsConsistentAtEveryIndex) {
  FcpFixture f;
  nn::NoGradGuard ng;
  const auto plain = f.model.forward(nn::constant(f.tgt), Mode{});
  for (int s = 0; s <= 4; ++s) {
    const EncoderSplit<double> split(f.model, s);
    const auto out = split.g2(split.g1(nn::constant(f.tgt), Mode{}), Mode{});
    EXPECT_TRUE(out.fused_alpha.value() == plain.fused_alpha.value()) << s;
  }
}
