#include <gtest/gtest.h>

#include <random>

#include "p3m/datapipe/augment.hpp"
#include "p3m/datapipe/dataset.hpp"
#include "p3m/datapipe/synthetic.hpp"
#include "p3m/datapipe/trimap.hpp"
#include "support.hpp"

using namespace p3m;
namespace fs = std::filesystem;

namespace {

void write_pair(const fs::path& root, const std::string& stem, const char* img_ext, bool facemask = true) {
  std::mt19937_64 rng(std::hash<std::string>{}(stem));
  fs::create_directories(root / "original");
  fs::create_directories(root / "mask");
  save_image(root / "original" / (stem + img_ext), testing_support::random_image(8, 8, rng));
  save_alpha(root / "mask" / (stem + ".png"), testing_support::random_matte(8, 8, rng));
  if (facemask) {
    fs::create_directories(root / "facemask");
    save_mask(root / "facemask" / (stem + ".png"), BinaryMask(8, 8, 1));
  }
}

Sample marker_sample(int size, int r0, int c0, int side) {
  Sample s{"m", ImageRGB(size, size), AlphaMatte(size, size), BinaryMask(size, size)};
  for (int r = r0; r < r0 + side; ++r)
    for (int c = c0; c < c0 + side; ++c) {
      for (int ch = 0; ch < 3; ++ch) s.image.at(ch, r, c) = 1;
      s.alpha(r, c) = 1;
      s.facemask(r, c) = 1;
    }
  return s;
}

}  // namespace

TEST(ScanDataset, MatchesStemsInOrder) {
  const auto root = testing_support::scratch_dir("scan_ok");
  for (const char* s : {"c", "a", "b"}) write_pair(root, s, ".png");
  const auto recs = scan_dataset(root);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].stem, "a");
  EXPECT_EQ(recs[1].stem, "b");
  EXPECT_EQ(recs[2].stem, "c");
  const auto s = load_sample(recs[1]);
  EXPECT_EQ(s.facemask.count(), 64u);
}

TEST(ScanDataset, OrphanAlphaRaises) {
  const auto root = testing_support::scratch_dir("scan_orphan");
  write_pair(root, "a", ".png");
  save_alpha(root / "mask" / "lonely.png", AlphaMatte(8, 8));
  try {
    scan_dataset(root);
    FAIL() << "expected IndexError";
  } catch (const IndexError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely.png"), std::string::npos);
  }
  EXPECT_THROW(scan_dataset(root / "nowhere"), NotFound);
}

TEST(ScanDataset, MixedExtensions) {
  const auto root = testing_support::scratch_dir("scan_mixed");
  write_pair(root, "p1", ".jpg");
  write_pair(root, "p2", ".png");
  const auto recs = scan_dataset(root);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].image_path.extension(), ".jpg");
  EXPECT_EQ(recs[0].alpha_path.extension(), ".png");
  EXPECT_EQ(load_sample(recs[0]).image.height(), 8);
}

TEST(ScanDataset, FacemaskOptionalOnlyForNonPrivateSplit) {
  const auto root = testing_support::scratch_dir("scan_np");
  write_pair(root, "x", ".png", false);
  EXPECT_THROW(scan_dataset(root, Split::kTrain), MissingAnnotation);
  const auto recs = scan_dataset(root, Split::kValNP);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(load_sample(recs[0]).facemask.none());
}

TEST(Trimap, HardMatteKernelOne) {
  AlphaMatte a(4, 4);
  a(1, 1) = a(2, 3) = 1;
  const auto t = trimap_from_alpha(a, 1);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      EXPECT_EQ(t.label(r, c), a(r, c) == 1 ? TrimapLabel::kForeground : TrimapLabel::kBackground);
}

TEST(Trimap, SingleSoftPixelDilates) {
  AlphaMatte a(7, 7, 1.0f);
  a(3, 3) = 0.5f;
  const auto t = trimap_from_alpha(a, 3);
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c) {
      const bool near = std::abs(r - 3) <= 1 && std::abs(c - 3) <= 1;
      EXPECT_EQ(t.label(r, c), near ? TrimapLabel::kTransition : TrimapLabel::kForeground);
    }
  EXPECT_THROW(trimap_from_alpha(a, 4), ConfigError);
  EXPECT_EQ(scaled_trimap_kernel(25, 0.25), 7);
  EXPECT_EQ(scaled_trimap_kernel(25, 0.01), 1);
}

TEST(Trimap, DilationMatchesBruteForce) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const auto a = testing_support::random_matte(12, 15, rng, 0.95);
    const auto tm = trimap_from_alpha(a, 5);
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 15; ++c) {
        bool soft = false;
        for (int dr = -2; dr <= 2; ++dr)
          for (int dc = -2; dc <= 2; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr >= 0 && rr < 12 && cc >= 0 && cc < 15 && a(rr, cc) > 0 && a(rr, cc) < 1) soft = true;
          }
        const auto expect = soft ? TrimapLabel::kTransition : a(r, c) == 1 ? TrimapLabel::kForeground : TrimapLabel::kBackground;
        ASSERT_EQ(tm.label(r, c), expect);
      }
  }
}

TEST(Crop, ExactFitIsIdentity) {
  std::mt19937_64 rng(2);
  Sample s{"s", testing_support::random_image(64, 64, rng), testing_support::random_matte(64, 64, rng), BinaryMask(64, 64, 1)};
  AugmentationConfig cfg;
  cfg.crop_sizes = {64};
  cfg.out_size = 64;
  const auto o = random_crop_resize(s, rng, cfg);
  EXPECT_EQ(o.image, s.image);
  EXPECT_EQ(o.alpha, s.alpha);
  EXPECT_EQ(o.facemask, s.facemask);
}

TEST(Crop, MarkersStayAlignedThroughResize) {
  const auto s = marker_sample(2048, 400, 600, 64);
  const auto o = crop_resize(s, CropWindow{0, 0, 1024}, 512);
  ASSERT_EQ(o.image.height(), 512);
  for (int r = 0; r < 512; ++r)
    for (int c = 0; c < 512; ++c) {
      const bool in = r >= 200 && r < 232 && c >= 300 && c < 332;
      ASSERT_EQ(o.facemask(r, c), in ? 1 : 0) << r << "," << c;
      ASSERT_EQ(o.alpha(r, c), in ? 1.0f : 0.0f);
      ASSERT_EQ(o.image.at(1, r, c), in ? 1.0f : 0.0f);
    }
}

TEST(Crop, SmallImageFallsBackToCentredSquare) {
  std::mt19937_64 rng(3);
  AugmentationConfig cfg;
  const auto w = draw_crop(100, 60, rng, cfg);
  EXPECT_EQ(w.size, 60);
  EXPECT_EQ(w.row, 20);
  EXPECT_EQ(w.col, 0);
}

TEST(Crop, SeededPipelineIsReproducible) {
  std::mt19937_64 rng(4);
  const Sample s{"s", testing_support::random_image(96, 80, rng), testing_support::random_matte(96, 80, rng),
                 BinaryMask(96, 80, 1)};
  AugmentationConfig cfg;
  cfg.crop_sizes = {32, 48, 64};
  cfg.out_size = 32;
  auto a = sample_rng(7, 1, 3), b = sample_rng(7, 1, 3), c = sample_rng(7, 2, 3);
  const auto oa = random_hflip(random_crop_resize(s, a, cfg), a, cfg);
  const auto ob = random_hflip(random_crop_resize(s, b, cfg), b, cfg);
  EXPECT_EQ(oa.image, ob.image);
  EXPECT_EQ(oa.alpha, ob.alpha);
  EXPECT_NE(a(), c());
  cfg.crop_sizes = {10};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Flip, ProbabilityZeroAndInvolution) {
  const auto s = marker_sample(16, 2, 3, 4);
  AugmentationConfig cfg;
  cfg.hflip_prob = 0;
  std::mt19937_64 rng(5);
  EXPECT_EQ(random_hflip(s, rng, cfg).image, s.image);
  cfg.hflip_prob = 1;
  const auto once = random_hflip(s, rng, cfg);
  EXPECT_NE(once.image, s.image);
  EXPECT_EQ(once.facemask(2, 16 - 1 - 3), 1);
  EXPECT_EQ(once.alpha(2, 16 - 1 - 3), 1.0f);
  const auto twice = random_hflip(once, rng, cfg);
  EXPECT_EQ(twice.image, s.image);
  EXPECT_EQ(twice.alpha, s.alpha);
  EXPECT_EQ(twice.facemask, s.facemask);
}

TEST(Flip, FrequencyMatchesProbability) {
  const auto s = marker_sample(4, 0, 0, 1);
  AugmentationConfig cfg;
  std::mt19937_64 rng(6);
  int flips = 0;
  for (int t = 0; t < 10000; ++t) flips += random_hflip(s, rng, cfg).facemask(0, 0) == 0;
  EXPECT_NEAR(flips / 10000.0, 0.5, 0.02);
}

TEST(Synthetic, DatasetScansAndLoads) {
  const auto root = testing_support::scratch_dir("synthetic");
  const auto L = write_synthetic_dataset(root, 3, 2, 64, 11);
  EXPECT_EQ(scan_dataset(L.train).size(), 3u);
  EXPECT_EQ(scan_dataset(L.val_p, Split::kValP).size(), 2u);
  EXPECT_EQ(scan_dataset(L.val_np, Split::kValNP).size(), 2u);
  EXPECT_TRUE(fs::exists(L.val_np / "landmarks" / "valnp_0000.landmarks.json"));
  const auto s = load_sample(scan_dataset(L.train)[0]);
  EXPECT_EQ(s.image.height(), 64);
  EXPECT_FALSE(s.facemask.none());
  // the obfuscated area never touches the transition band
  const auto t = transition_mask(s.alpha);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_FALSE(t.data()[i] && s.facemask.data()[i]);
  const auto a = make_synthetic_portrait(64, 64, 5), b = make_synthetic_portrait(64, 64, 5);
  EXPECT_EQ(a.image, b.image);
}
