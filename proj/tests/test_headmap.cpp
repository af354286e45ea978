#include "unicon/error.hpp"
#include "unicon/headmap.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace unicon;
using namespace unicon::headmap;

namespace {

constexpr double kPixel = 1.0 / kMapSize;

std::vector<float> channel(const HeadMap& m, int c) {
  return {m.pixels.begin() + c * kMapPixels, m.pixels.begin() + (c + 1) * kMapPixels};
}

GaussianSpec random_spec(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1), r(0.02, 0.3);
  return {u(rng), u(rng), r(rng)};
}

}  // namespace

TEST(Gaussian, PeakAndOneSigma) {
  // center on a pixel center
  const GaussianSpec s{20.5 * kPixel, 31.5 * kPixel, 10 * kPixel};
  const auto g = render_gaussian(s);
  EXPECT_FLOAT_EQ(g[31 * kMapSize + 20], 1.0f);
  EXPECT_NEAR(g[31 * kMapSize + 30], std::exp(-0.5), 1e-6);
  EXPECT_NEAR(g[41 * kMapSize + 20], std::exp(-0.5), 1e-6);
  EXPECT_THROW(render_gaussian({0.5, 0.5, 0.0}), InputError);
  EXPECT_THROW(render_gaussian({1.2, 0.5, 0.1}), InputError);
}

TEST(Gaussian, WiderRadiusDominatesPointwise) {
  std::mt19937_64 rng(61);
  for (int i = 0; i < 50; ++i) {
    auto a = random_spec(rng);
    auto b = a;
    b.radius *= 2;
    const auto ga = render_gaussian(a), gb = render_gaussian(b);
    for (int p = 0; p < kMapPixels; ++p) {
      EXPECT_GE(gb[p], ga[p]);
      EXPECT_GE(ga[p], 0.0f);
      EXPECT_LE(ga[p], 1.0f);
    }
  }
}

TEST(Gaussian, TranslationShiftsPattern) {
  const GaussianSpec a{0.4, 0.45, 0.05};
  const int dx = 7, dy = -5;
  const GaussianSpec b{a.cx + dx * kPixel, a.cy + dy * kPixel, a.radius};
  const auto ga = render_gaussian(a), gb = render_gaussian(b);
  for (int y = 10; y < 50; ++y) {
    for (int x = 10; x < 50; ++x) EXPECT_NEAR(gb[(y + dy) * kMapSize + x + dx], ga[y * kMapSize + x], 1e-6);
  }
}

TEST(HeadMaps, ChannelSemantics) {
  const std::vector<GaussianSpec> one{{0.5, 0.5, 0.1}};
  const auto m1 = build_self_map(0, one);
  EXPECT_EQ(channel(m1, 0), render_gaussian(one[0]));
  EXPECT_EQ(channel(m1, 1), render_gaussian(one[0]));
  EXPECT_EQ(channel(m1, 2), std::vector<float>(kMapPixels, 0.0f));
  EXPECT_TRUE(m1.is_self());

  const std::vector<GaussianSpec> two{{0.2, 0.5, 0.1}, {0.8, 0.5, 0.1}};
  EXPECT_EQ(channel(build_pair_map(0, 1, two), 2), std::vector<float>(kMapPixels, 0.0f));
  const auto s = build_self_map(0, two);
  EXPECT_EQ(channel(s, 0), channel(s, 1));
  EXPECT_EQ(channel(s, 2), render_gaussian(two[1]));

  const std::vector<GaussianSpec> three{{0.2, 0.5, 0.1}, {0.8, 0.5, 0.1}, {0.5, 0.2, 0.05}};
  const auto p = build_pair_map(0, 1, three);
  EXPECT_EQ(channel(p, 0), render_gaussian(three[0]));
  EXPECT_EQ(channel(p, 1), render_gaussian(three[1]));
  EXPECT_EQ(channel(p, 2), render_gaussian(three[2]));
  EXPECT_THROW(build_pair_map(0, 3, three), InputError);
}

TEST(HeadMaps, SwapSymmetryAndSelfIdentity) {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 4;
    std::vector<GaussianSpec> specs;
    for (int k = 0; k < n; ++k) specs.push_back(random_spec(rng));
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(build_self_map(i, specs).pixels, build_pair_map(i, i, specs).pixels);
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const auto a = build_pair_map(i, j, specs), b = build_pair_map(j, i, specs);
        EXPECT_EQ(channel(a, 0), channel(b, 1));
        EXPECT_EQ(channel(a, 1), channel(b, 0));
        EXPECT_EQ(channel(a, 2), channel(b, 2));
        // context is the pointwise max of the rest
        std::vector<float> ctx(kMapPixels, 0.0f);
        for (int k = 0; k < n; ++k) {
          if (k == i || k == j) continue;
          const auto g = render_gaussian(specs[k]);
          for (int q = 0; q < kMapPixels; ++q) ctx[q] = std::max(ctx[q], g[q]);
        }
        EXPECT_EQ(channel(a, 2), ctx);
      }
    }
  }
}

TEST(HeadMaps, SpecFromBoxUsesHalfWidth) {
  const auto s = spec_from_box({0.2, 0.3, 0.4, 0.7});
  EXPECT_NEAR(s.cx, 0.3, 1e-15);
  EXPECT_NEAR(s.cy, 0.5, 1e-15);
  EXPECT_NEAR(s.radius, 0.1, 1e-15);
}

TEST(HeadMaps, PngDump) {
  const auto path = std::filesystem::temp_directory_path() / "unicon_headmap_test.png";
  write_png(build_self_map(0, std::vector<GaussianSpec>{{0.5, 0.5, 0.1}}), path.string());
  EXPECT_GT(std::filesystem::file_size(path), 0u);
  std::filesystem::remove(path);
}
