#include "checks.hpp"

#include <gtest/gtest.h>

using namespace unicon;
using namespace unicon::testing;

TEST(GradCheck, TotalLossAllSuppressionModesAndBackends) {
  std::vector<GradCase> cases;
  const auto r = check_gradients(31, 16, &cases);
  for (const auto& c : cases) {
    EXPECT_LT(c.error, 1e-4) << c.name;
  }
  EXPECT_TRUE(r.pass) << r.detail;
  EXPECT_EQ(cases.size(), 8u);
}

TEST(GradCheck, MaxPoolSuppressionRoutesTiesToLowestIndex) {
  nn::Tensor<double> x({3, 2}, std::vector<double>{1.0, 2.0, 1.0, 5.0, 0.5, 5.0});
  auto v = nn::Var<double>::leaf(x);
  const auto pooled = nn::group_max(v, {{0, 1, 2}});
  EXPECT_EQ(pooled.value().data, (std::vector<double>{1.0, 5.0}));
  nn::backward(nn::sum_all(pooled));
  EXPECT_EQ(v.grad().data, (std::vector<double>{1, 0, 0, 1, 0, 0}));
}

TEST(GradCheck, BiasBeforeTrainingBatchNormHasZeroGradient) {
  std::mt19937_64 rng(32);
  const auto cfg = tiny_config("+S+R");
  UniconModel<double> model(cfg);
  model.params().init(rng);
  jitter_biases(model.params(), rng);
  const auto in = random_input<double>(2, 4, cfg, rng);
  model.params().zero_grad();
  nn::backward(total_loss(model, in));
  int checked = 0;
  for (auto& e : model.params().entries()) {
    if (e.name.find("backend.conv") == std::string::npos || e.kind != nn::ParamKind::kBias) continue;
    ++checked;
    for (double g : e.var.grad().data) EXPECT_NEAR(g, 0.0, 1e-12) << e.name;
  }
  EXPECT_GT(checked, 0);
}
