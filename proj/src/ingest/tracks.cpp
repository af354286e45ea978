#include "unicon/error.hpp"
#include "unicon/ingest.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace unicon::ingest {

int Scene::candidates_at(int frame) const {
  int n = 0;
  for (const auto& t : tracks) n += t.covers(frame) ? 1 : 0;
  return n;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

void append_track(FaceTrack& dst, FaceTrack&& src) {
  if (!dst.crops.empty() || !src.crops.empty()) {
    // Keep crops aligned with frames even if one side carried none.
    dst.crops.resize(dst.boxes.size());
    src.crops.resize(src.boxes.size());
    dst.crops.insert(dst.crops.end(), std::make_move_iterator(src.crops.begin()),
                     std::make_move_iterator(src.crops.end()));
  }
  dst.boxes.insert(dst.boxes.end(), src.boxes.begin(), src.boxes.end());
  dst.labels_v.insert(dst.labels_v.end(), src.labels_v.begin(), src.labels_v.end());
  dst.labels_av.insert(dst.labels_av.end(), src.labels_av.begin(), src.labels_av.end());
}

}  // namespace

std::vector<FaceTrack> merge_tracks(std::vector<FaceTrack> tracks, double threshold) {
  std::stable_sort(tracks.begin(), tracks.end(),
                   [](const FaceTrack& a, const FaceTrack& b) { return a.first_frame < b.first_frame; });
  const std::size_t n = tracks.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (tracks[i].length() == 0) throw InputError("merge_tracks: empty track " + tracks[i].entity_id);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (tracks[i].entity_id == tracks[j].entity_id && tracks[j].first_frame <= tracks[i].last_frame()) {
        throw InputError("merge_tracks: tracks of entity '" + tracks[i].entity_id + "' overlap in time");
      }
    }
  }

  // successor[i] = index of the track that continues i, chosen by best IoU.
  std::vector<int> successor(n, -1), predecessor(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || predecessor[j] >= 0) continue;
      if (tracks[j].first_frame != tracks[i].last_frame() + 1) continue;
      const double v = iou(tracks[i].boxes.back(), tracks[j].boxes.front());
      if (v >= threshold && v > best) {
        best = v;
        successor[i] = static_cast<int>(j);
      }
    }
    if (successor[i] >= 0) predecessor[successor[i]] = static_cast<int>(i);
  }

  std::vector<FaceTrack> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (predecessor[i] >= 0) continue;
    FaceTrack merged = std::move(tracks[i]);
    for (int j = successor[i]; j >= 0; j = successor[j]) append_track(merged, std::move(tracks[j]));
    out.push_back(std::move(merged));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FaceTrack& a, const FaceTrack& b) { return a.first_frame < b.first_frame; });
  return out;
}

ResampledTrack resample_labels(const std::vector<AnnotationRecord>& records, int fps) {
  if (records.empty()) throw InputError("resample_labels: no records");
  if (fps <= 0) throw InputError("resample_labels: fps must be positive");
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp < records[i - 1].timestamp) throw InputError("resample_labels: records not sorted");
  }
  const double t0 = records.front().timestamp;
  const double t1 = records.back().timestamp;
  constexpr double kSlack = 1e-9;
  int first = static_cast<int>(std::ceil(t0 * fps - kSlack));
  int last = static_cast<int>(std::floor(t1 * fps + kSlack));
  if (last < first) last = first = static_cast<int>(std::lround(t0 * fps));

  ResampledTrack out;
  out.first_frame = first;
  std::size_t hi = 0;
  for (int f = first; f <= last; ++f) {
    const double t = static_cast<double>(f) / fps;
    while (hi < records.size() && records[hi].timestamp < t) ++hi;
    // Candidates: hi - 1 (at or before t) and hi (at or after t).
    std::size_t pick;
    if (hi == 0) {
      pick = 0;
    } else if (hi == records.size()) {
      pick = records.size() - 1;
    } else {
      const double before = t - records[hi - 1].timestamp;
      const double after = records[hi].timestamp - t;
      pick = after < before - 1e-9 ? hi : hi - 1;
    }
    // Among equal timestamps prefer the earliest record.
    while (pick > 0 && records[pick - 1].timestamp == records[pick].timestamp) --pick;
    const auto& r = records[pick];
    out.boxes.push_back(r.box);
    out.labels_v.push_back(visual_positive(r.label) ? 1 : 0);
    out.labels_av.push_back(audiovisual_positive(r.label) ? 1 : 0);
  }
  return out;
}

BoundingBox expand_box(const BoundingBox& box, double factor) {
  const double cx = box.center_x(), cy = box.center_y();
  const double hw = 0.5 * box.width() * factor, hh = 0.5 * box.height() * factor;
  BoundingBox out{std::clamp(cx - hw, 0.0, 1.0), std::clamp(cy - hh, 0.0, 1.0), std::clamp(cx + hw, 0.0, 1.0),
                  std::clamp(cy + hh, 0.0, 1.0)};
  return out;
}

Image crop_face(const Image& frame, const BoundingBox& box, int size) {
  if (frame.empty()) throw InputError("crop_face: empty frame");
  const int x1 = std::clamp(static_cast<int>(std::floor(box.x1 * frame.width)), 0, frame.width - 1);
  const int y1 = std::clamp(static_cast<int>(std::floor(box.y1 * frame.height)), 0, frame.height - 1);
  const int x2 = std::clamp(static_cast<int>(std::ceil(box.x2 * frame.width)), x1 + 1, frame.width);
  const int y2 = std::clamp(static_cast<int>(std::ceil(box.y2 * frame.height)), y1 + 1, frame.height);
  const int type = frame.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat src(frame.height, frame.width, type, const_cast<std::uint8_t*>(frame.pixels.data()));
  cv::Mat roi = src(cv::Rect(x1, y1, x2 - x1, y2 - y1));
  Image out(size, size, frame.channels);
  cv::Mat dst(size, size, type, out.pixels.data());
  cv::resize(roi, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
  return out;
}

std::vector<FrameRange> chunk_for_inference(int num_frames, int max_frames) {
  if (max_frames < 28) throw InputError("chunk_for_inference: max_frames must be at least 28");
  std::vector<FrameRange> out;
  for (int s = 0; s < num_frames; s += max_frames) out.push_back({s, std::min(max_frames, num_frames - s)});
  return out;
}

Scene slice_scene(const Scene& scene, const FrameRange& range) {
  Scene out;
  out.scene_id = scene.scene_id;
  out.fps = scene.fps;
  out.num_frames = range.length;
  out.frame_width = scene.frame_width;
  out.frame_height = scene.frame_height;
  out.audio.sample_rate = scene.audio.sample_rate;
  const double sr = scene.audio.sample_rate;
  const auto a0 = static_cast<long>(std::llround(range.start * sr / scene.fps));
  const auto a1 = static_cast<long>(std::llround((range.start + range.length) * sr / scene.fps));
  out.audio.samples.assign(static_cast<std::size_t>(a1 - a0), 0.0f);
  for (long i = a0; i < a1; ++i) {
    if (i >= 0 && i < static_cast<long>(scene.audio.samples.size())) out.audio.samples[i - a0] = scene.audio.samples[i];
  }
  const int end = range.start + range.length - 1;
  for (const auto& t : scene.tracks) {
    const int lo = std::max(t.first_frame, range.start);
    const int hi = std::min(t.last_frame(), end);
    if (lo > hi) continue;
    FaceTrack c;
    c.entity_id = t.entity_id;
    c.first_frame = lo - range.start;
    const auto b = static_cast<std::size_t>(lo - t.first_frame);
    const auto e = static_cast<std::size_t>(hi - t.first_frame + 1);
    c.boxes.assign(t.boxes.begin() + b, t.boxes.begin() + e);
    c.labels_v.assign(t.labels_v.begin() + b, t.labels_v.begin() + e);
    c.labels_av.assign(t.labels_av.begin() + b, t.labels_av.begin() + e);
    if (!t.crops.empty()) c.crops.assign(t.crops.begin() + b, t.crops.begin() + e);
    out.tracks.push_back(std::move(c));
  }
  return out;
}

std::vector<VideoTracks> build_tracks(const std::vector<AnnotationRecord>& records, int fps) {
  std::map<std::string, std::map<std::string, std::vector<AnnotationRecord>>> grouped;
  for (const auto& r : records) grouped[r.video_id][r.entity_id].push_back(r);
  std::vector<VideoTracks> out;
  for (auto& [video, entities] : grouped) {
    VideoTracks vt;
    vt.video_id = video;
    for (auto& [entity, recs] : entities) {
      std::stable_sort(recs.begin(), recs.end(),
                       [](const AnnotationRecord& a, const AnnotationRecord& b) { return a.timestamp < b.timestamp; });
      auto rs = resample_labels(recs, fps);
      FaceTrack t;
      t.entity_id = entity;
      t.first_frame = rs.first_frame;
      t.boxes = std::move(rs.boxes);
      t.labels_v = std::move(rs.labels_v);
      t.labels_av = std::move(rs.labels_av);
      vt.tracks.push_back(std::move(t));
    }
    out.push_back(std::move(vt));
  }
  return out;
}

std::vector<std::vector<FaceTrack>> group_into_scenes(std::vector<FaceTrack> tracks) {
  std::stable_sort(tracks.begin(), tracks.end(),
                   [](const FaceTrack& a, const FaceTrack& b) { return a.first_frame < b.first_frame; });
  std::vector<std::vector<FaceTrack>> scenes;
  int current_end = 0;
  for (auto& t : tracks) {
    if (scenes.empty() || t.first_frame > current_end + 1) {
      scenes.emplace_back();
      current_end = t.last_frame();
    } else {
      current_end = std::max(current_end, t.last_frame());
    }
    scenes.back().push_back(std::move(t));
  }
  return scenes;
}

}  // namespace unicon::ingest
