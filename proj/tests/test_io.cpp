#include "toy_media.hpp"
#include "unicon/error.hpp"
#include "unicon/io.hpp"
#include "unicon/synth.hpp"

#include <gtest/gtest.h>

using namespace unicon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("unicon_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Io, WavRoundTrip) {
  const auto dir = scratch("wav");
  Audio a;
  a.sample_rate = 16000;
  for (int i = 0; i < 1000; ++i) a.samples.push_back(static_cast<float>(std::sin(i * 0.01) * 0.9));
  a.samples.push_back(1.0f);
  a.samples.push_back(-1.0f);
  io::write_wav(dir / "a.wav", a);
  const auto b = io::read_wav(dir / "a.wav");
  EXPECT_EQ(b.sample_rate, 16000);
  ASSERT_EQ(b.samples.size(), a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_NEAR(b.samples[i], a.samples[i], a.samples[i] == 1.0f ? 1.0 / 32768 : 0.5 / 32768);
  io::write_text(dir / "bad.wav", "RIFFjunk");
  EXPECT_THROW(io::read_wav(dir / "bad.wav"), InputError);
  EXPECT_THROW(io::read_wav(dir / "missing.wav"), InputError);
}

TEST(Io, PngRoundTrip) {
  const auto dir = scratch("png");
  Image img(5, 3, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 17);
  io::write_png(dir / "x.png", img);
  const auto back = io::read_image(dir / "x.png");
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Io, SceneRoundTrip) {
  const auto dir = scratch("scene");
  synth::SynthConfig sc;
  sc.crop_size = 16;
  sc.min_frames = 20;
  sc.max_frames = 30;
  sc.seed = 4;
  const auto scene = synth::generate_indexed_scene(sc, 0);
  io::save_scene(scene, dir / scene.scene_id);
  const auto back = io::load_scene(dir / scene.scene_id);
  EXPECT_EQ(back.scene_id, scene.scene_id);
  EXPECT_EQ(back.num_frames, scene.num_frames);
  ASSERT_EQ(back.tracks.size(), scene.tracks.size());
  for (std::size_t t = 0; t < scene.tracks.size(); ++t) {
    EXPECT_EQ(back.tracks[t].entity_id, scene.tracks[t].entity_id);
    EXPECT_EQ(back.tracks[t].labels_v, scene.tracks[t].labels_v);
    EXPECT_EQ(back.tracks[t].labels_av, scene.tracks[t].labels_av);
    EXPECT_EQ(back.tracks[t].crops[3].pixels, scene.tracks[t].crops[3].pixels);
    EXPECT_NEAR(back.tracks[t].boxes[2].x1, scene.tracks[t].boxes[2].x1, 1e-9);
  }
  const auto light = io::load_scene(dir / scene.scene_id, false);
  EXPECT_TRUE(light.tracks[0].crops.empty());
  EXPECT_EQ(io::list_scene_dirs(dir).size(), 1u);
}

TEST(Io, GitBlobAndContentHash) {
  EXPECT_EQ(io::git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(io::git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  const auto dir = scratch("hash");
  io::write_text(dir / "a.txt", "one");
  fs::create_directories(dir / "sub");
  io::write_text(dir / "sub" / "b.txt", "two");
  const auto h1 = io::content_hash({dir});
  EXPECT_EQ(h1, io::content_hash({dir}));
  io::write_text(dir / "sub" / "b.txt", "three");
  EXPECT_NE(h1, io::content_hash({dir}));
}

TEST(Io, PrepareToySet) {
  const auto root = scratch("prepare");
  const auto csv = unicon::testing::write_toy_media(root);
  io::PrepareSummary summary;
  const auto scenes = io::prepare_scenes(csv, root / "media", 32, 1, &summary);
  ASSERT_EQ(scenes.size(), 2u);
  EXPECT_EQ(summary.videos, 2u);
  EXPECT_EQ(summary.tracks, 4u);
  EXPECT_EQ(scenes[0].scene_id, "vidA_000");
  EXPECT_EQ(scenes[0].num_frames, 26);  // 0..1 s at 25 fps
  ASSERT_EQ(scenes[0].tracks.size(), 2u);
  EXPECT_EQ(scenes[0].tracks[0].crops[0].width, 32);
  EXPECT_EQ(scenes[0].frame_width, 64);
  EXPECT_EQ(scenes[0].tracks[0].labels_av.front(), 1);
  EXPECT_EQ(scenes[0].tracks[0].labels_av.back(), 0);
  EXPECT_THROW(io::prepare_scenes("", root / "media", 32, 1), InputError);
  EXPECT_THROW(io::prepare_scenes(csv, root / "nowhere", 32, 1), InputError);
}
