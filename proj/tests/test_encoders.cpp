#include "test_util.hpp"
#include "unicon/encoders.hpp"
#include "unicon/error.hpp"

#include <gtest/gtest.h>

using namespace unicon;
using namespace unicon::encoders;
using namespace unicon::testing;

namespace {

nn::Tensor<double> random_tensor(nn::Shape shape, std::mt19937_64& rng) {
  nn::Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& x : t.data) x = u(rng);
  return t;
}

std::vector<double> row(const nn::Tensor<double>& t, int r) {
  const int c = t.cols();
  return {t.data.begin() + r * c, t.data.begin() + (r + 1) * c};
}

}  // namespace

TEST(Encoders, StackRowsReplicatePad) {
  EXPECT_EQ(stack_rows(0, 1, 0, 0, 5), (std::vector<int>{0, 0, 0, 0, 0}));
  EXPECT_EQ(stack_rows(10, 3, 0, 2, 3), (std::vector<int>{10, 10, 11, 10, 11, 12, 11, 12, 12}));
  EXPECT_THROW(stack_rows(0, 3, 0, 2, 4), InputError);
}

TEST(Encoders, FaceTrackShapeAndLocality) {
  std::mt19937_64 rng(71);
  auto cfg = tiny_config();
  nn::ParamStore<double> store;
  FaceEncoder<double> enc(store, "face", cfg.encoder);
  store.init(rng);
  const int t = 9, s = cfg.encoder.input_size;
  auto frames = random_tensor({t, 3, s, s}, rng);
  const auto out = enc.encode_track(frames, false).value();
  ASSERT_EQ(out.rows(), t);
  ASSERT_EQ(out.cols(), cfg.encoder.reduced_dim);
  auto changed = frames;
  const int f = 4, per = 3 * s * s;
  for (int i = 0; i < per; ++i) changed.data[f * per + i] += 0.5;
  const auto out2 = enc.encode_track(changed, false).value();
  const int half = cfg.encoder.stack_size / 2;
  for (int r = 0; r < t; ++r) {
    if (std::abs(r - f) > half) EXPECT_EQ(row(out, r), row(out2, r)) << r;
    else EXPECT_NE(row(out, r), row(out2, r)) << r;
  }
  EXPECT_EQ(enc.encode_track(frames, false).value().data, out.data);
  // one frame: the stack repeats it
  const auto single = random_tensor({1, 3, s, s}, rng);
  EXPECT_EQ(enc.encode_track(single, false).value().rows(), 1);
  EXPECT_THROW(enc.encode_track(random_tensor({2, 3, s + 2, s}, rng), false), InputError);
}

TEST(Encoders, AudioPerFrameAndTimePermutation) {
  std::mt19937_64 rng(72);
  auto cfg = tiny_config();
  nn::ParamStore<double> store;
  AudioEncoder<double> enc(store, "audio", cfg.encoder);
  store.init(rng);
  const int t = 6, f = ingest::mfcc_frames_per_window(16000);
  auto mfcc = random_tensor({t, 1, ingest::kMfccCoefficients, f}, rng);
  const auto out = enc(nn::Var<double>::constant(mfcc), false).value();
  ASSERT_EQ(out.rows(), t);
  ASSERT_EQ(out.cols(), cfg.encoder.reduced_dim);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  auto pm = mfcc;
  const int per = ingest::kMfccCoefficients * f;
  for (int k = 0; k < t; ++k) std::copy_n(mfcc.data.begin() + perm[k] * per, per, pm.data.begin() + k * per);
  const auto pout = enc(nn::Var<double>::constant(pm), false).value();
  for (int k = 0; k < t; ++k) {
    const auto a = row(pout, k), b = row(out, perm[k]);
    for (std::size_t c = 0; c < a.size(); ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
  }
  nn::Tensor<double> silent({t, 1, ingest::kMfccCoefficients, f}, 0.25);
  const auto sout = enc(nn::Var<double>::constant(silent), false).value();
  for (int k = 1; k < t; ++k) EXPECT_EQ(row(sout, k), row(sout, 0));
  EXPECT_THROW(enc(nn::Var<double>::constant(nn::Tensor<double>({t, 1, 12, f})), false), InputError);
}

TEST(Encoders, HeadMapEncoderShapes) {
  std::mt19937_64 rng(73);
  nn::ParamStore<double> store;
  HeadMapEncoder<double> enc(store, "spatial", 16);
  store.init(rng);
  std::vector<headmap::GaussianSpec> specs{{0.3, 0.4, 0.1}, {0.7, 0.5, 0.08}};
  std::vector<headmap::HeadMap> maps{headmap::build_self_map(0, specs), headmap::build_pair_map(0, 0, specs),
                                     headmap::build_pair_map(0, 1, specs)};
  const auto out = enc(nn::Var<double>::constant(headmap_tensor<double>(maps))).value();
  ASSERT_EQ(out.rows(), 3);
  ASSERT_EQ(out.cols(), 16);
  EXPECT_EQ(row(out, 0), row(out, 1));
  EXPECT_THROW(enc(nn::Var<double>::constant(nn::Tensor<double>({1, 3, 32, 32}))), InputError);
}

TEST(Encoders, ImageTensorScaling) {
  Image a(2, 2, 3, 255), g(2, 2, 1, 0);
  const Image* imgs[] = {&a, &g};
  const auto t = image_tensor<double>(imgs);
  ASSERT_EQ(t.shape, (nn::Shape{2, 3, 2, 2}));
  EXPECT_EQ(t.data.front(), 1.0);
  EXPECT_EQ(t.data.back(), -1.0);
}
