#include "checks.hpp"
#include "unicon/error.hpp"

#include <gtest/gtest.h>

using namespace unicon;
using namespace unicon::metrics;
using namespace unicon::testing;

namespace {

ScoredFrame sf(const std::string& scene, const std::string& entity, int frame, double score, int label,
               double width = 100, int faces = 1) {
  ScoredFrame f;
  f.scene_id = scene;
  f.entity_id = entity;
  f.frame_index = frame;
  f.score = score;
  f.label = label;
  f.face_width_px = width;
  f.faces_in_frame = faces;
  return f;
}

}  // namespace

TEST(Metrics, RandomInstancesMatchOracles) {
  const auto r = check_metric_oracles(2000, 51);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Metrics, AveragePrecisionExamples) {
  const std::vector<double> s{0.9, 0.8, 0.7};
  EXPECT_NEAR(average_precision(s, std::vector<int>{1, 0, 1}), 0.5 * (1 + 2.0 / 3), 1e-15);
  EXPECT_EQ(average_precision(s, std::vector<int>{1, 1, 0}), 1.0);
  EXPECT_EQ(average_precision(std::vector<double>{0.1, 0.9, 0.4}, std::vector<int>{1, 1, 1}), 1.0);
  EXPECT_THROW(average_precision(s, std::vector<int>{0, 0, 0}), InputError);
  // ties keep input order
  EXPECT_NEAR(average_precision(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}), 0.5, 1e-15);
}

TEST(Metrics, AurocExamples) {
  EXPECT_EQ(auroc(std::vector<double>{0.9, 0.8, 0.7, 0.6}, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_EQ(auroc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}), 0.5);
  EXPECT_EQ(auroc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_THROW(auroc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 1}), InputError);
}

TEST(Metrics, MonotoneTransformInvariance) {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(20), t(20);
    std::vector<int> l(20);
    for (int i = 0; i < 20; ++i) {
      s[i] = std::round(u(rng) * 8) / 8;
      t[i] = std::exp(3 * s[i]) - 7;
      l[i] = i % 3 == 0 || u(rng) < 0.3;
    }
    l[1] = 0;
    EXPECT_EQ(average_precision(s, l), average_precision(t, l));
    EXPECT_EQ(auroc(s, l), auroc(t, l));
  }
}

TEST(Metrics, F1Examples) {
  EXPECT_EQ(f1(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_EQ(f1(std::vector<double>{0.2, 0.1}, std::vector<int>{1, 0}), 0.0);
  // TP 2, FP 1, FN 1
  EXPECT_NEAR(f1(std::vector<double>{0.9, 0.8, 0.7, 0.2}, std::vector<int>{1, 1, 0, 1}), 2.0 / 3, 1e-15);
}

TEST(Metrics, DerExamples) {
  std::vector<ScoredFrame> perfect, fa, conf;
  for (int k = 0; k < 20; ++k) {
    perfect.push_back(sf("s", "a", k, 0.9, 1));
    perfect.push_back(sf("s", "b", k, 0.1, 0));
  }
  EXPECT_EQ(der(perfect).der, 0.0);
  // 10 reference speech frames, one silent frame marked as speech
  for (int k = 0; k < 10; ++k) fa.push_back(sf("s", "a", k, 0.9, 1));
  fa.push_back(sf("s", "a", 10, 0.9, 0));
  const auto d = der(fa);
  EXPECT_NEAR(d.der, 0.10, 1e-15);
  EXPECT_NEAR(d.false_alarm, 0.10, 1e-15);
  EXPECT_EQ(d.missed, 0.0);
  conf.push_back(sf("s", "a", 0, 0.1, 1));
  conf.push_back(sf("s", "b", 0, 0.9, 0));
  const auto c = der(conf);
  EXPECT_EQ(c.confusion, 1.0);
  EXPECT_EQ(c.missed, 0.0);
  EXPECT_EQ(c.false_alarm, 0.0);
  EXPECT_THROW(der(std::vector<ScoredFrame>{sf("s", "a", 0, 0.9, 0)}), InputError);
}

TEST(Metrics, WienerSmoother) {
  const std::vector<double> flat(30, 0.4);
  EXPECT_EQ(smooth_predictions(flat), flat);
  std::vector<double> impulse(31, 0.0);
  impulse[15] = 1.0;
  const auto out = smooth_predictions(impulse);
  ASSERT_EQ(out.size(), impulse.size());
  EXPECT_LT(out[15], 1.0);
  EXPECT_GT(out[15], 0.0);
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> noisy(40);
  for (auto& x : noisy) x = u(rng);
  EXPECT_EQ(smooth_predictions(noisy, 1), noisy);
  const std::vector<double> short_series{0.1, 0.9, 0.3};
  EXPECT_EQ(smooth_predictions(short_series), short_series);
  EXPECT_THROW(smooth_predictions(noisy, 4), InputError);
  // brute-force recomputation of the adaptive rule
  const auto sm = smooth_predictions(noisy, 5);
  std::vector<double> mu(40), var(40);
  for (int i = 0; i < 40; ++i) {
    std::vector<double> w;
    for (int k = std::max(0, i - 2); k <= std::min(39, i + 2); ++k) w.push_back(noisy[k]);
    mu[i] = std::accumulate(w.begin(), w.end(), 0.0) / w.size();
    for (double x : w) var[i] += (x - mu[i]) * (x - mu[i]) / w.size();
  }
  const double nu = std::accumulate(var.begin(), var.end(), 0.0) / 40;
  for (int i = 0; i < 40; ++i) {
    EXPECT_NEAR(sm[i], mu[i] + std::max(0.0, var[i] - nu) / std::max(var[i], nu) * (noisy[i] - mu[i]), 1e-12);
  }
}

TEST(Metrics, BreakdownBinsPartition) {
  EXPECT_EQ(size_bin(64.0), SizeBin::kSmall);
  EXPECT_EQ(size_bin(64.5), SizeBin::kMedium);
  EXPECT_EQ(size_bin(128.0), SizeBin::kMedium);
  EXPECT_EQ(size_bin(128.1), SizeBin::kLarge);
  EXPECT_EQ(face_count_bin(3), "3+");
  EXPECT_EQ(face_count_bin(7), "3+");
  EXPECT_EQ(face_count_bin(2), "2");
  std::mt19937_64 rng(54);
  std::vector<ScoredFrame> frames;
  for (int i = 0; i < 300; ++i) {
    frames.push_back(sf("s", "e" + std::to_string(i % 4), i / 4, (rng() % 100) / 100.0, static_cast<int>(rng() % 2),
                        20.0 + static_cast<double>(rng() % 100), 1 + static_cast<int>(rng() % 3)));
  }
  const auto b = breakdown(frames);
  std::size_t size_total = 0, count_total = 0;
  for (const auto& bin : b.face_size) size_total += bin.count;
  for (const auto& bin : b.faces_in_frame) count_total += bin.count;
  EXPECT_EQ(size_total, frames.size());
  EXPECT_EQ(count_total, frames.size());
  ASSERT_EQ(b.face_size.size(), 3u);
  EXPECT_EQ(b.face_size[2].name, "large");
  EXPECT_EQ(b.face_size[2].count, 0u);
  EXPECT_FALSE(b.face_size[2].ap.has_value());
}

TEST(Metrics, ReportJsonFields) {
  std::vector<ScoredFrame> frames{sf("s", "a", 0, 0.9, 1), sf("s", "b", 0, 0.2, 0), sf("s", "a", 1, 0.3, 0)};
  const auto rep = evaluate(frames);
  const auto j = to_json(rep);
  for (const char* key : {"map", "auroc", "f1", "der"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(rep.map, 1.0);
  EXPECT_EQ(predictions_csv(frames).substr(0, 38), "scene_id,entity_id,frame_index,score\ns");
}
