#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <set>

#include "p3m/core/io.hpp"
#include "p3m/core/parallel.hpp"
#include "p3m/core/resample.hpp"
#include "support.hpp"

using namespace p3m;
using testing_support::random_image;
using testing_support::scratch_dir;

TEST(Raster, RejectsNonPositiveDims) {
  EXPECT_THROW(AlphaMatte(0, 4), ShapeError);
  EXPECT_THROW(ImageRGB(3, -1), ShapeError);
}

TEST(Raster, BinaryMaskStaysBinary) {
  Grid<std::uint8_t> g(1, 2, 2, 7);
  BinaryMask m(g);
  for (auto v : m.data()) EXPECT_EQ(v, 1);
  EXPECT_EQ(m.count(), 4u);
}

TEST(Io, EndpointsScale) {
  const auto dir = scratch_dir("io_endpoints");
  cv::Mat m(1, 3, CV_8UC1);
  m.at<std::uint8_t>(0, 0) = 0, m.at<std::uint8_t>(0, 1) = 255, m.at<std::uint8_t>(0, 2) = 128;
  cv::imwrite((dir / "a.png").string(), m);
  const auto a = load_alpha(dir / "a.png");
  EXPECT_FLOAT_EQ(a(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(a(0, 1), 1.0f);
  EXPECT_FLOAT_EQ(a(0, 2), 128.0f / 255.0f);
  EXPECT_NEAR(a(0, 2), 0.50196, 1e-5);
  const auto mask = load_mask(dir / "a.png");
  EXPECT_EQ(mask(0, 0), 0);
  EXPECT_EQ(mask(0, 1), 1);
  EXPECT_EQ(mask(0, 2), 1);
}

TEST(Io, RoundTripIsBitExact) {
  const auto dir = scratch_dir("io_roundtrip");
  std::mt19937_64 rng(5);
  ImageRGB img(7, 9);
  std::uniform_int_distribution<int> u(0, 255);
  for (auto& v : img.data()) v = u(rng) / 255.0f;
  save_image(dir / "i.png", img);
  EXPECT_EQ(load_image(dir / "i.png"), img);
  AlphaMatte a(5, 4);
  for (auto& v : a.data()) v = u(rng) / 255.0f;
  save_alpha(dir / "a.png", a);
  EXPECT_EQ(load_alpha(dir / "a.png"), a);
  Trimap t(3, 3);
  t.set(0, 0, TrimapLabel::kForeground);
  t.set(1, 1, TrimapLabel::kTransition);
  save_trimap(dir / "t.png", t);
  EXPECT_EQ(load_trimap(dir / "t.png"), t);
}

TEST(Io, Errors) {
  const auto dir = scratch_dir("io_errors");
  EXPECT_THROW(load_image(dir / "missing.png"), NotFound);
  std::ofstream(dir / "junk.png") << "not an image";
  EXPECT_THROW(load_alpha(dir / "junk.png"), FormatError);
  EXPECT_TRUE(std::holds_alternative<BinaryMask>(
      [&] {
        save_mask(dir / "m.png", BinaryMask(2, 2, 1));
        return load_raster(dir / "m.png", RasterKind::kMask);
      }()));
}

TEST(Resample, ConstantFieldAnyMode) {
  AlphaMatte a(8, 8, 0.7f);
  for (auto mode : {ResampleMode::kBilinear, ResampleMode::kNearest})
    for (auto [h, w] : {std::pair{3, 5}, std::pair{16, 12}, std::pair{8, 8}}) {
      const auto r = resample(a, h, w, mode);
      ASSERT_EQ(r.height(), h);
      for (float v : r.data()) EXPECT_FLOAT_EQ(v, 0.7f);
    }
  const auto pooled = resample(a, 2, 2, ResampleMode::kMaxPool);
  for (float v : pooled.data()) EXPECT_FLOAT_EQ(v, 0.7f);
}

TEST(Resample, MaxPoolWindowMax) {
  AlphaMatte a(2, 2);
  a(0, 0) = 1;
  const auto r = resample(a, 1, 1, ResampleMode::kMaxPool);
  EXPECT_FLOAT_EQ(r(0, 0), 1.0f);

  std::mt19937_64 rng(1);
  Grid<float> f(64, 16, 16);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : f.data()) v = u(rng);
  for (int ratio : {2, 4, 8}) {
    const auto p = resample(f, 16 / ratio, 16 / ratio, ResampleMode::kMaxPool);
    EXPECT_EQ(p.channels(), 64);
    EXPECT_EQ(p.height(), 16 / ratio);
    for (int c = 0; c < 64; c += 9)
      for (int r = 0; r < p.height(); ++r)
        for (int x = 0; x < p.width(); ++x) {
          float m = -2;
          for (int i = 0; i < ratio; ++i)
            for (int j = 0; j < ratio; ++j) m = std::max(m, f.at(c, r * ratio + i, x * ratio + j));
          EXPECT_EQ(p.at(c, r, x), m);
        }
  }
  EXPECT_THROW(resample(f, 5, 5, ResampleMode::kMaxPool), InvalidRatio);
  EXPECT_THROW(resample(f, 8, 4, ResampleMode::kMaxPool), InvalidRatio);
}

TEST(Resample, NearestKeepsValueSet) {
  std::mt19937_64 rng(2);
  AlphaMatte a(6, 5);
  std::uniform_int_distribution<int> u(0, 4);
  for (auto& v : a.data()) v = u(rng) * 0.25f;
  const std::set<float> in(a.data().begin(), a.data().end());
  for (auto [h, w] : {std::pair{13, 2}, std::pair{3, 11}}) {
    const auto r = resample(a, h, w, ResampleMode::kNearest);
    for (float v : r.data()) EXPECT_TRUE(in.count(v));
  }
}

TEST(Resample, BilinearHalfPixelCentres) {
  // 2 -> 4 upsampling: outputs sit at source coords -0.25(clamped), 0.25, 0.75, 1.25(clamped)
  AlphaMatte a(1, 2);
  a(0, 0) = 0, a(0, 1) = 1;
  const auto r = resample(a, 1, 4, ResampleMode::kBilinear);
  EXPECT_FLOAT_EQ(r(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(r(0, 1), 0.25f);
  EXPECT_FLOAT_EQ(r(0, 2), 0.75f);
  EXPECT_FLOAT_EQ(r(0, 3), 1.0f);
}

TEST(Composite, IdentityCasesAndScalar) {
  std::mt19937_64 rng(3);
  const auto fg = random_image(4, 4, rng), bg = random_image(4, 4, rng);
  EXPECT_EQ(composite(fg, bg, AlphaMatte(4, 4, 1.0f)), fg);
  EXPECT_EQ(composite(fg, bg, AlphaMatte(4, 4, 0.0f)), bg);
  ImageRGB f(1, 1, 0.8f), b(1, 1, 0.2f);
  EXPECT_NEAR(composite(f, b, AlphaMatte(1, 1, 0.5f)).at(0, 0, 0), 0.5, 1e-7);
  EXPECT_THROW(composite(fg, ImageRGB(3, 4), AlphaMatte(4, 4)), ShapeError);
}

TEST(Composite, AffineInAlpha) {
  std::mt19937_64 rng(4);
  const auto fg = random_image(6, 5, rng), bg = random_image(6, 5, rng);
  const auto a = testing_support::random_matte(6, 5, rng);
  const auto out = composite(fg, bg, a);
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 6; ++r)
      for (int x = 0; x < 5; ++x)
        EXPECT_NEAR(out.at(c, r, x), bg.at(c, r, x) + a(r, x) * (fg.at(c, r, x) - bg.at(c, r, x)), 1e-6);
}

TEST(MaskApply, Cases) {
  Grid<float> d(1, 2, 2);
  d(0, 0) = 1, d(0, 1) = 2, d(1, 0) = 3, d(1, 1) = 4;
  BinaryMask m(2, 2);
  m(0, 0) = 1, m(1, 1) = 1;
  const auto out = mask_apply(d, m);
  EXPECT_EQ(out(0, 0), 1);
  EXPECT_EQ(out(0, 1), 0);
  EXPECT_EQ(out(1, 0), 0);
  EXPECT_EQ(out(1, 1), 4);
  EXPECT_EQ(mask_apply(out, m), out);
  EXPECT_EQ(mask_apply(d, BinaryMask(2, 2, 1)), d);
  const auto zeroed = mask_apply(d, BinaryMask(2, 2));
  for (float v : zeroed.data()) EXPECT_EQ(v, 0);
  EXPECT_THROW(mask_apply(d, BinaryMask(3, 2)), ShapeError);
}

TEST(Parallel, CoversEveryIndexAndRethrows) {
  std::vector<int> hits(100);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 7) throw FormatError("boom");
                            }),
               FormatError);
}
