#include "unicon/error.hpp"
#include "unicon/io.hpp"
#include "unicon/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>

namespace unicon::io {

namespace {

fs::path frame_path(const fs::path& video_dir, int frame) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.png", frame);
  return video_dir / "frames" / name;
}

struct VideoJob {
  ingest::VideoTracks tracks;
  std::vector<ingest::Scene> scenes;
};

void prepare_video(VideoJob& job, const fs::path& media_dir, int crop_size) {
  const fs::path dir = media_dir / job.tracks.video_id;
  if (!fs::is_directory(dir)) throw InputError("missing media directory " + dir.string());
  const Audio audio = read_wav(dir / "audio.wav");
  auto merged = ingest::merge_tracks(std::move(job.tracks.tracks));
  int index = 0;
  for (auto& group : ingest::group_into_scenes(std::move(merged))) {
    int start = group.front().first_frame, end = group.front().last_frame();
    for (const auto& t : group) {
      start = std::min(start, t.first_frame);
      end = std::max(end, t.last_frame());
    }
    std::map<int, Image> frames;
    auto frame = [&](int f) -> const Image& {
      auto it = frames.find(f);
      if (it == frames.end()) it = frames.emplace(f, read_image(frame_path(dir, f))).first;
      return it->second;
    };
    for (auto& t : group) {
      t.crops.reserve(t.boxes.size());
      for (int k = 0; k < t.length(); ++k) {
        t.crops.push_back(ingest::crop_face(frame(t.first_frame + k), ingest::expand_box(t.boxes[k]), crop_size));
      }
    }
    ingest::Scene video;
    video.tracks = std::move(group);
    video.audio = audio;
    video.num_frames = end + 1;
    video.frame_width = frames.begin()->second.width;
    video.frame_height = frames.begin()->second.height;
    char id[16];
    std::snprintf(id, sizeof id, "_%03d", index++);
    video.scene_id = job.tracks.video_id + id;
    job.scenes.push_back(ingest::slice_scene(video, {start, end - start + 1}));
  }
}

}  // namespace

std::vector<ingest::Scene> prepare_scenes(const std::string& annotations_csv, const fs::path& media_dir, int crop_size,
                                          int workers, PrepareSummary* summary) {
  if (crop_size < 8) throw InputError("crop size must be >= 8");
  if (annotations_csv.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw InputError("no records in annotations (empty file)");
  }
  const auto parsed = ingest::parse_annotations(annotations_csv);
  for (const auto& w : parsed.warnings) std::cerr << "warning: line " << w.line << ": " << w.message << "\n";
  for (const auto& r : parsed.rejected) std::cerr << "warning: line " << r.line << " rejected: " << r.message << "\n";
  if (parsed.records.empty()) throw InputError("no records in annotations");

  std::vector<VideoJob> jobs;
  for (auto& v : ingest::build_tracks(parsed.records)) jobs.push_back({std::move(v), {}});
  parallel_for(jobs.size(), workers, [&](std::size_t i) { prepare_video(jobs[i], media_dir, crop_size); });

  std::vector<ingest::Scene> scenes;
  PrepareSummary s;
  s.videos = jobs.size();
  s.warnings = parsed.warnings.size();
  s.rejected = parsed.rejected.size();
  for (auto& j : jobs) {
    for (auto& scene : j.scenes) {
      s.tracks += scene.tracks.size();
      for (const auto& t : scene.tracks) s.frames += static_cast<std::size_t>(t.length());
      scenes.push_back(std::move(scene));
    }
  }
  s.scenes = scenes.size();
  if (summary) *summary = s;
  return scenes;
}

}  // namespace unicon::io
