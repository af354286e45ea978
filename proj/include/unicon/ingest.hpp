#pragma once

// Annotation parsing, face-track assembly, label resampling and audio
// features. Everything here is a pure function of its inputs.

#include "unicon/media.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace unicon::ingest {

inline constexpr int kFps = 25;

// Normalized box: fractions of frame width/height.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x1 < x2 && y1 < y2 && x1 >= 0 && y1 >= 0 && x2 <= 1 && y2 <= 1; }
};

enum class SpeechLabel { kNotSpeaking, kSpeakingAudible, kSpeakingNotAudible };

const char* label_name(SpeechLabel label);
// Visual ground truth: any speaking. Audio-visual: audible speaking only.
inline bool visual_positive(SpeechLabel l) { return l != SpeechLabel::kNotSpeaking; }
inline bool audiovisual_positive(SpeechLabel l) { return l == SpeechLabel::kSpeakingAudible; }

struct AnnotationRecord {
  std::string video_id;
  double timestamp = 0;
  BoundingBox box;
  SpeechLabel label = SpeechLabel::kNotSpeaking;
  std::string entity_id;
};

struct ParseIssue {
  int line = 0;  // 1-based, header is line 1
  std::string message;
};

struct ParseResult {
  std::vector<AnnotationRecord> records;
  std::vector<ParseIssue> warnings;  // accepted after clamping
  std::vector<ParseIssue> rejected;  // dropped rows
};

// Header row required with columns video_id, timestamp, x1, y1, x2, y2,
// label, entity_id (any order). Throws InputError when a column is missing.
ParseResult parse_annotations(std::string_view csv_text);

// One face track at 25 fps: frame first_frame + k holds boxes[k], crops[k]
// (crops may be empty when only geometry is needed) and the two labels.
struct FaceTrack {
  std::string entity_id;
  int first_frame = 0;
  std::vector<BoundingBox> boxes;
  std::vector<Image> crops;
  std::vector<std::uint8_t> labels_v;
  std::vector<std::uint8_t> labels_av;

  int length() const { return static_cast<int>(boxes.size()); }
  int last_frame() const { return first_frame + length() - 1; }
  bool covers(int frame) const { return frame >= first_frame && frame <= last_frame(); }
};

struct Scene {
  std::string scene_id;
  std::vector<FaceTrack> tracks;
  Audio audio;
  int fps = kFps;
  int num_frames = 0;
  int frame_width = 1280;
  int frame_height = 720;

  // Number of tracks covering frame t.
  int candidates_at(int frame) const;
};

double iou(const BoundingBox& a, const BoundingBox& b);

// Chains abutting tracks (later.first_frame == earlier.last_frame + 1) when
// the IoU of the earlier track's last box and the later track's first box is
// at least threshold. Chaining is transitive; a track joins at most one
// successor (the one with the highest boundary IoU). Output is sorted by first
// frame. Throws InputError when two tracks with the same entity_id overlap in
// time.
std::vector<FaceTrack> merge_tracks(std::vector<FaceTrack> tracks, double threshold = 0.8);

struct ResampledTrack {
  int first_frame = 0;
  std::vector<BoundingBox> boxes;
  std::vector<std::uint8_t> labels_v;
  std::vector<std::uint8_t> labels_av;
};

// Nearest-neighbor resampling of one entity's records onto the frame grid
// t / fps for every frame inside [first timestamp, last timestamp]. Ties go to
// the earlier record. Records must be sorted by timestamp; throws InputError
// when empty.
ResampledTrack resample_labels(const std::vector<AnnotationRecord>& records, int fps = kFps);

BoundingBox expand_box(const BoundingBox& box, double factor = 1.3);

// Pixel-space crop of an expanded box, resized to size x size.
Image crop_face(const Image& frame, const BoundingBox& box, int size);

inline constexpr int kMfccCoefficients = 13;
inline constexpr int kMelFilters = 40;
inline constexpr double kMfccWindowSeconds = 0.4;
inline constexpr double kAnalysisFrameSeconds = 0.025;
inline constexpr double kAnalysisHopSeconds = 0.010;

struct MfccWindow {
  int frames = 0;  // F analysis frames
  std::vector<float> coefficients;  // row-major [13, F]

  float at(int coef, int frame) const { return coefficients[static_cast<std::size_t>(coef) * frames + frame]; }
};

int mfcc_frames_per_window(int sample_rate);

// 13 x F MFCCs of the 400 ms of audio ending at end_time. Samples before 0 or
// past the end of the waveform are zeros. Throws InputError for sample rates
// below 8 kHz or negative end_time.
MfccWindow compute_mfcc(const Audio& audio, double end_time);

// One window per video frame, window t ending at (t + 1) / fps.
std::vector<MfccWindow> compute_mfcc_sequence(const Audio& audio, int fps, int num_frames);

struct FrameRange {
  int start = 0;
  int length = 0;
};

// Greedy contiguous split of [0, num_frames) into pieces of at most
// max_frames. Throws InputError when max_frames < 28.
std::vector<FrameRange> chunk_for_inference(int num_frames, int max_frames);

// Frames [range.start, range.start + range.length) of a scene: tracks are
// clipped, audio is cut to the matching span.
Scene slice_scene(const Scene& scene, const FrameRange& range);

// Groups records per (video, entity), resamples them and returns one track
// per entity and video, before merging.
struct VideoTracks {
  std::string video_id;
  std::vector<FaceTrack> tracks;
};
std::vector<VideoTracks> build_tracks(const std::vector<AnnotationRecord>& records, int fps = kFps);

// Splits a video's tracks into scenes: connected groups of tracks whose frame
// spans overlap or touch.
std::vector<std::vector<FaceTrack>> group_into_scenes(std::vector<FaceTrack> tracks);

}  // namespace unicon::ingest
