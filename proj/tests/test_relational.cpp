#include "checks.hpp"

#include <gtest/gtest.h>

using namespace unicon;
using namespace unicon::testing;

TEST(Relational, EndToEndPermutationEquivariance) {
  const auto r = check_equivariance(100, 21);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Relational, SkewSymmetryAndHalvedCost) {
  const auto r = check_skew_and_count(22);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Relational, CanonicalPairsCoverEachUnorderedPairOnce) {
  std::mt19937_64 rng(23);
  for (int n = 1; n <= 7; ++n) {
    const auto ranks = random_perm(n, rng);
    const auto pairs = canonical_pairs(ranks);
    ASSERT_EQ(static_cast<int>(pairs.size()), n * (n - 1) / 2);
    std::set<std::pair<int, int>> seen;
    for (const auto& p : pairs) {
      EXPECT_LT(ranks[p.first], ranks[p.second]);
      EXPECT_TRUE(seen.insert({std::min(p.first, p.second), std::max(p.first, p.second)}).second);
    }
  }
}

TEST(Relational, CanonicalRanksFollowCandidates) {
  std::mt19937_64 rng(24);
  const auto cfg = tiny_config();
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 5;
    const auto in = random_input<float>(n, 4, cfg, rng);
    const auto perm = random_perm(n, rng);
    const auto ranks = canonical_ranks(in);
    const auto pranks = canonical_ranks(permute(in, perm));
    for (int k = 0; k < n; ++k) EXPECT_EQ(pranks[k], ranks[perm[k]]);
  }
}

TEST(Relational, SingleCandidateContextIsAlphaAlone) {
  std::mt19937_64 rng(25);
  const auto cfg = tiny_config("+S+R");
  UniconModel<double> model(cfg);
  model.params().init(rng);
  const auto in = random_input<double>(1, 5, cfg, rng, 1.0);
  const auto enc = model.encode(in, false);
  ForwardStats stats;
  const auto rv = model.visual_relational_context(enc, in, false, &stats).value();
  const auto alpha = model.alpha(enc.v, enc.h_self, 1, 5, false).value();
  EXPECT_EQ(stats.beta_evals, 0);
  ASSERT_EQ(rv.data.size(), alpha.data.size());
  for (std::size_t i = 0; i < rv.data.size(); ++i) EXPECT_NEAR(rv.data[i], alpha.data[i], 1e-12);
}

TEST(Relational, VisualContextMatchesBruteForceSum) {
  std::mt19937_64 rng(26);
  const auto cfg = tiny_config("+S+R+T");
  UniconModel<double> model(cfg);
  model.params().init(rng);
  const int n = 4, t = 5;
  const auto in = random_input<double>(n, t, cfg, rng, 0.7);
  const auto enc = model.encode(in, false);
  const auto rv = model.visual_relational_context(enc, in, false, nullptr).value();
  const auto alpha = model.alpha(enc.v, enc.h_self, n, t, false).value();
  const int d = rv.cols();
  std::vector<std::vector<double>> beta(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) beta[i * n + j] = model.pair_feature(enc, n, t, i, j, false).value().data;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < t; ++f) {
      if (!in.is_present(i, f)) continue;
      int present = 0;
      for (int j = 0; j < n; ++j) present += in.is_present(j, f);
      for (int c = 0; c < d; ++c) {
        double s = alpha.data[static_cast<std::size_t>((i * t + f) * d + c)];
        for (int j = 0; j < n; ++j) {
          if (j != i && in.is_present(j, f)) s += beta[i * n + j][static_cast<std::size_t>(f * d + c)];
        }
        EXPECT_NEAR(rv.data[static_cast<std::size_t>((i * t + f) * d + c)], s / present, 1e-10);
      }
    }
  }
}

TEST(Relational, SuppressionPoolsArePermutationInvariant) {
  std::mt19937_64 rng(27);
  const auto cfg = tiny_config();
  UniconModel<double> model(cfg);
  const int n = 4, t = 3;
  const auto in = random_input<double>(n, t, cfg, rng, 0.6);
  nn::Tensor<double> eta({n * t, 5});
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& x : eta.data) x = u(rng);
  const auto perm = random_perm(n, rng);
  const auto pin = permute(in, perm);
  nn::Tensor<double> peta({n * t, 5});
  for (int k = 0; k < n; ++k) {
    for (int f = 0; f < t; ++f) {
      for (int c = 0; c < 5; ++c) peta.data[(k * t + f) * 5 + c] = eta.data[(perm[k] * t + f) * 5 + c];
    }
  }
  for (auto mode : {Suppression::kMax, Suppression::kMean}) {
    const auto a = model.suppression_pool(nn::Var<double>::constant(eta), in, mode).value();
    const auto b = model.suppression_pool(nn::Var<double>::constant(peta), pin, mode).value();
    for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-14);
    for (int f = 0; f < t; ++f) {
      for (int c = 0; c < 5; ++c) {
        double mx = -1e300, sum = 0;
        int cnt = 0;
        for (int i = 0; i < n; ++i) {
          if (!in.is_present(i, f)) continue;
          const double v = eta.data[(i * t + f) * 5 + c];
          mx = std::max(mx, v);
          sum += v;
          ++cnt;
        }
        if (cnt == 0) continue;
        EXPECT_NEAR(a.data[f * 5 + c], mode == Suppression::kMax ? mx : sum / cnt, 1e-14);
      }
    }
  }
  EXPECT_FALSE(model.suppression_pool(nn::Var<double>::constant(eta), in, Suppression::kNone).defined());
}

TEST(Relational, AbsentCandidatesDoNotAffectOthers) {
  std::mt19937_64 rng(28);
  const auto cfg = tiny_config();
  UniconModel<float> model(cfg);
  model.params().init(rng);
  auto in = random_input<float>(3, 4, cfg, rng, 1.0);
  for (int f = 0; f < 4; ++f) in.present[2 * 4 + f] = 0;
  auto two = in;
  two.candidates = 2;
  two.present.resize(8);
  two.specs.resize(8);
  two.labels_v.resize(8);
  two.labels_av.resize(8);
  const std::size_t per = in.faces.size() / static_cast<std::size_t>(in.faces.rows());
  two.faces = nn::Tensor<float>({8, in.faces.shape[1], in.faces.shape[2], in.faces.shape[3]},
                                std::vector<float>(in.faces.data.begin(), in.faces.data.begin() + 8 * per));
  const auto a = model.forward(in, false).av_logits.value();
  const auto b = model.forward(two, false).av_logits.value();
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-5);
}
