#include "test_util.hpp"
#include "unicon/error.hpp"
#include "unicon/synth.hpp"
#include "unicon/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

using namespace unicon;
using namespace unicon::train;

namespace {

ModelConfig small_model(const std::string& ablation = "baseline") {
  auto cfg = unicon::testing::tiny_config(ablation);
  cfg.encoder.crop_size = 12;
  return cfg;
}

std::vector<ingest::Scene> small_scenes(int n, std::uint64_t seed) {
  synth::SynthConfig sc;
  sc.n_scenes = n;
  sc.crop_size = 12;
  sc.min_frames = 30;
  sc.max_frames = 50;
  sc.seed = seed;
  return synth::generate_dataset(sc);
}

TrainConfig small_train(int stage, long max_steps) {
  TrainConfig tc;
  tc.stage = stage;
  tc.epochs = 50;
  tc.max_steps = max_steps;
  tc.seed = 9;
  tc.segment_frames = 12;
  tc.optimizer.learning_rate = 3e-3;
  return tc;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("unicon_test_" + name);
}

}  // namespace

TEST(SampleSegment, WindowRules) {
  std::mt19937_64 rng(1);
  std::vector<int> expect(28);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(sample_segment(0, 27, 28, rng), expect);
  std::map<int, int> starts;
  for (int i = 0; i < 20000; ++i) {
    const auto w = sample_segment(0, 99, 28, rng);
    for (std::size_t k = 1; k < w.size(); ++k) ASSERT_EQ(w[k], w[k - 1] + 1);
    ++starts[w.front()];
  }
  EXPECT_EQ(starts.begin()->first, 0);
  EXPECT_EQ(starts.rbegin()->first, 72);
  EXPECT_EQ(starts.size(), 73u);
  const auto pad = sample_segment(5, 14, 28, rng);
  EXPECT_EQ(pad.front(), 5);
  EXPECT_EQ(pad[9], 14);
  EXPECT_EQ(pad.back(), 14);
  std::mt19937_64 a(4), b(4);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_segment(0, 200, 28, a), sample_segment(0, 200, 28, b));
  EXPECT_THROW(sample_segment(5, 4, 28, rng), InputError);
}

TEST(Augment, PlansAndCrops) {
  AugmentConfig off;
  off.enabled = false;
  std::mt19937_64 rng(2);
  const auto plan = draw_augment(off, 144, 128, rng);
  EXPECT_FALSE(plan.flip);
  EXPECT_EQ(plan.offset_x, 8);
  EXPECT_EQ(plan.offset_y, 8);
  EXPECT_EQ(plan.brightness, 1.0);

  Image crop(6, 6, 3);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      for (int c = 0; c < 3; ++c) crop.at(x, y, c) = static_cast<std::uint8_t>(10 * x + 60 * y + c);
    }
  }
  AugmentPlan p = center_plan(6, 4);
  const auto center = augment_crop(crop, p, 4);
  EXPECT_EQ(center.at(0, 0, 0), crop.at(1, 1, 0));
  p.flip = true;
  const auto flipped = augment_crop(crop, p, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) EXPECT_EQ(flipped.at(x, y, 2), center.at(3 - x, y, 2));
  }
  AugmentPlan corner;
  corner.offset_x = 2;
  corner.offset_y = 0;
  EXPECT_EQ(augment_crop(crop, corner, 4).at(0, 0, 1), crop.at(2, 0, 1));
  corner.offset_x = 3;
  EXPECT_THROW(augment_crop(crop, corner, 4), InputError);

  // zero jitter ranges: only flip and crop vary
  AugmentConfig geo;
  geo.brightness = geo.contrast = geo.saturation = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto g = draw_augment(geo, 6, 4, rng);
    EXPECT_EQ(g.brightness, 1.0);
    EXPECT_EQ(g.contrast, 1.0);
    EXPECT_EQ(g.saturation, 1.0);
    EXPECT_LE(g.offset_x, 2);
  }
  AugmentPlan bright = center_plan(6, 4);
  bright.brightness = 1.5;
  EXPECT_EQ(augment_crop(crop, bright, 4).at(0, 0, 0), std::lround(crop.at(1, 1, 0) * 1.5));
  AugmentPlan gray = center_plan(6, 4);
  gray.saturation = 0.0;
  const auto g = augment_crop(crop, gray, 4);
  EXPECT_NEAR(g.at(2, 2, 0), g.at(2, 2, 2), 1);
}

TEST(Train, StageOneLossDecreases) {
  const auto scenes = small_scenes(8, 3);
  const auto data = prepare_scenes(scenes);
  UniconModel<float> model(small_model());
  std::mt19937_64 rng(5);
  model.params().init(rng);
  const auto tc = small_train(1, 200);
  nn::AdamW<float> opt(model.params(), tc.optimizer);
  TrainState state;
  train_stage(model, opt, tc, data, state);
  ASSERT_EQ(state.log.size(), 200u);
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += state.log[i].total;
    last += state.log[state.log.size() - 1 - i].total;
  }
  EXPECT_LT(last, first);
  EXPECT_LT(state.log.back().total, state.log.front().total);
  for (const auto& row : state.log) {
    EXPECT_NEAR(row.total, row.l_a + row.l_v + row.l_av, 1e-6);
  }
  const auto csv = log_csv(state.log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,l_a,l_v,l_av,total");
}

TEST(Train, ResumeReproducesUninterruptedRun) {
  const auto scenes = small_scenes(5, 4);
  const auto data = prepare_scenes(scenes);
  for (int stage : {1, 2}) {
    const auto cfg = small_model(stage == 1 ? "baseline" : "+S+R+T");
    auto run = [&](long steps, UniconModel<float>& model, nn::AdamW<float>& opt, TrainState& st) {
      train_stage(model, opt, small_train(stage, steps), data, st);
    };
    UniconModel<float> full(cfg);
    std::mt19937_64 r1(6);
    full.params().init(r1);
    nn::AdamW<float> full_opt(full.params(), small_train(stage, 12).optimizer);
    TrainState full_state;
    run(12, full, full_opt, full_state);

    UniconModel<float> part(cfg);
    std::mt19937_64 r2(6);
    part.params().init(r2);
    nn::AdamW<float> part_opt(part.params(), small_train(stage, 5).optimizer);
    TrainState part_state;
    run(5, part, part_opt, part_state);
    const auto path = temp_path("resume.ckpt");
    save_checkpoint(path, part, &part_opt, small_train(stage, 5), part_state);

    const auto ck = read_checkpoint(path);
    EXPECT_EQ(ck.step, 5);
    EXPECT_EQ(ck.stage, stage);
    UniconModel<float> resumed(ck.model);
    load_parameters(resumed, ck, true);
    nn::AdamW<float> resumed_opt(resumed.params(), ck.train.optimizer);
    load_optimizer(resumed_opt, resumed, ck);
    TrainState st;
    st.step = ck.step;
    run(12, resumed, resumed_opt, st);
    ASSERT_EQ(st.log.size(), 7u);
    for (std::size_t k = 0; k < st.log.size(); ++k) {
      EXPECT_EQ(st.log[k].step, full_state.log[5 + k].step);
      EXPECT_EQ(st.log[k].total, full_state.log[5 + k].total) << "stage " << stage << " step " << st.log[k].step;
    }
    std::filesystem::remove(path);
  }
}

TEST(Train, StageTwoFreezesAudioHead) {
  const auto scenes = small_scenes(3, 5);
  const auto data = prepare_scenes(scenes);
  UniconModel<float> model(small_model("+S+R+T"));
  std::mt19937_64 rng(7);
  model.params().init(rng);
  std::vector<float> before;
  for (auto& e : model.params().entries()) {
    if (e.name.rfind("a_aux", 0) == 0) before.insert(before.end(), e.var.value().data.begin(), e.var.value().data.end());
  }
  nn::AdamW<float> opt(model.params(), small_train(2, 4).optimizer);
  TrainState st;
  train_stage(model, opt, small_train(2, 4), data, st);
  std::vector<float> after;
  for (auto& e : model.params().entries()) {
    if (e.name.rfind("a_aux", 0) == 0) after.insert(after.end(), e.var.value().data.begin(), e.var.value().data.end());
  }
  EXPECT_FALSE(before.empty());
  EXPECT_EQ(before, after);
  for (const auto& row : st.log) EXPECT_EQ(row.l_a, 0.0);
}

TEST(Checkpoint, RoundTripAndStageOneInit) {
  UniconModel<float> model(small_model("+S+R+T"));
  std::mt19937_64 rng(8);
  model.params().init(rng);
  TrainState st;
  st.step = 17;
  st.stage = 2;
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(path, model, nullptr, small_train(2, 0), st);
  const auto ck = read_checkpoint(path);
  EXPECT_EQ(ck.step, 17);
  EXPECT_EQ(to_json(ck.model), to_json(model.config()));
  UniconModel<float> copy(ck.model);
  EXPECT_EQ(load_parameters(copy, ck, true), model.params().entries().size());
  for (std::size_t i = 0; i < model.params().entries().size(); ++i) {
    EXPECT_EQ(copy.params().entries()[i].var.value().data, model.params().entries()[i].var.value().data);
  }
  // stage-1 modules transfer into a model with a different relational head
  UniconModel<float> other(small_model("+R"));
  const auto loaded = load_parameters(other, ck, kStage1Modules);
  EXPECT_GT(loaded, 0u);
  EXPECT_THROW(load_parameters(other, ck, true), InputError);
  {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "NOTACKPT";
  }
  EXPECT_THROW(read_checkpoint(path), InputError);
  std::filesystem::remove(path);
}

TEST(Inference, ScoresEveryVisibleCandidateFrame) {
  const auto scenes = small_scenes(3, 6);
  UniconModel<float> model(small_model("+S+R+T"));
  std::mt19937_64 rng(9);
  model.params().init(rng);
  std::size_t expected = 0;
  for (const auto& s : scenes) {
    for (const auto& t : s.tracks) expected += static_cast<std::size_t>(t.length());
  }
  InferenceOptions opt;
  opt.max_chunk_frames = 28;
  const auto frames = infer(model, scenes, opt);
  ASSERT_EQ(frames.size(), expected);
  for (const auto& f : frames) {
    EXPECT_GE(f.score, 0.0);
    EXPECT_LE(f.score, 1.0);
    EXPECT_GE(f.faces_in_frame, 1);
  }
  const auto again = infer(model, scenes, opt);
  for (std::size_t i = 0; i < frames.size(); ++i) EXPECT_EQ(frames[i].score, again[i].score);
  opt.visual_only = true;
  EXPECT_EQ(infer(model, scenes, opt).size(), expected);

  EvalOptions eo;
  eo.desync_shifts = {-2, 0, 2};
  const auto res = evaluate_model(model, scenes, eo);
  EXPECT_EQ(res.report.desync.size(), 3u);
  EXPECT_EQ(res.report.frames, expected);
  EXPECT_TRUE(res.report.info.contains("model"));
}
