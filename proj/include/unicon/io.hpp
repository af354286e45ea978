#pragma once

// File formats: scene directories, WAV, PNG crops, content hashes.
//
// Scene directory layout:
//   meta.json                 scene_id, fps, num_frames, frame size, entities
//   audio.wav                 16-bit PCM mono
//   labels.csv                entity_id,frame_index,x1,y1,x2,y2,label_v,label_av
//   crops/<entity>/<frame>.png

#include "unicon/ingest.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace unicon::io {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

Audio read_wav(const fs::path& path);
void write_wav(const fs::path& path, const Audio& audio);

Image read_image(const fs::path& path);
void write_png(const fs::path& path, const Image& image);

void save_scene(const ingest::Scene& scene, const fs::path& dir);
// with_crops = false loads geometry, labels and audio only.
ingest::Scene load_scene(const fs::path& dir, bool with_crops = true);

// Sorted subdirectories of root that contain meta.json.
std::vector<fs::path> list_scene_dirs(const fs::path& root);
std::vector<ingest::Scene> load_dataset(const fs::path& root, int workers = 1, bool with_crops = true);

// Media for a video: <media_dir>/<video_id>/audio.wav and decoded frames
// <media_dir>/<video_id>/frames/<frame>.png, frame k at time k / fps with k
// zero-padded to six digits.
struct PrepareSummary {
  std::size_t videos = 0;
  std::size_t scenes = 0;
  std::size_t tracks = 0;
  std::size_t frames = 0;  // candidate-frames over all tracks
  std::size_t warnings = 0;
  std::size_t rejected = 0;
};

// Parses annotations, builds and merges tracks, splits them into scenes
// and crops every face from the frames. Scene ids are <video_id>_<index>.
// Throws InputError when there are no usable records or media is missing.
std::vector<ingest::Scene> prepare_scenes(const std::string& annotations_csv, const fs::path& media_dir, int crop_size,
                                          int workers, PrepareSummary* summary = nullptr);

// Git blob id: SHA-1 of "blob <size>\0" + content, lowercase hex.
std::string git_blob_hash(const std::string& content);
// Hash over the sorted relative paths and blob ids of every regular file
// under each path (a file path hashes just that file).
std::string content_hash(const std::vector<fs::path>& paths);

}  // namespace unicon::io
