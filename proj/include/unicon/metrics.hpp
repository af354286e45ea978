#pragma once

// Ranking and decision metrics over per-frame candidate scores, the
// adaptive Wiener smoother and the face-size / face-count breakdowns.

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace unicon::metrics {

struct ScoredFrame {
  std::string scene_id;
  std::string entity_id;
  int frame_index = 0;
  double score = 0;
  int label = 0;
  double face_width_px = 0;
  int faces_in_frame = 1;
};

// Non-interpolated AP: descending stable sort by score, mean precision at
// the rank of every positive. Throws InputError without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);
double average_precision(std::span<const ScoredFrame> frames);

// Probability that a random positive outranks a random negative, ties worth
// one half. Throws InputError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);
double auroc(std::span<const ScoredFrame> frames);

// F1 of decisions score >= threshold; 0 when nothing is predicted positive
// or there is nothing to find.
double f1(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);
double f1(std::span<const ScoredFrame> frames, double threshold = 0.5);

struct DerResult {
  double false_alarm = 0;
  double missed = 0;
  double confusion = 0;
  double der = 0;
  long reference_frames = 0;  // speaker-frames of reference speech
};

// Frames are grouped by (scene_id, frame_index). Per frame with n_ref
// reference speakers, n_hyp entities at or above threshold and n_correct in
// both: missed = max(0, n_ref - n_hyp), false alarm = max(0, n_hyp - n_ref),
// confusion = min(n_ref, n_hyp) - n_correct. Each sum is divided by the
// total n_ref. Throws InputError when there is no reference speech.
DerResult der(std::span<const ScoredFrame> frames, double threshold = 0.5);

// Adaptive local Wiener smoother with an odd window, truncated at the
// series ends. Series shorter than the window are returned unchanged.
std::vector<double> smooth_predictions(std::span<const double> scores, int window = 11);
// Smooths every (scene, entity) score series in frame order.
void smooth_scored_frames(std::vector<ScoredFrame>& frames, int window = 11);

enum class SizeBin { kSmall, kMedium, kLarge };
SizeBin size_bin(double face_width_px);
const char* size_bin_name(SizeBin bin);
// "1", "2" or "3+".
std::string face_count_bin(int faces_in_frame);

struct BinResult {
  std::string name;
  std::size_t count = 0;
  std::size_t positives = 0;
  std::optional<double> ap;  // absent when the bin is empty or has no positives
};

struct Breakdown {
  std::vector<BinResult> face_size;
  std::vector<BinResult> faces_in_frame;
};

Breakdown breakdown(std::span<const ScoredFrame> frames);

struct DesyncPoint {
  int shift = 0;
  double map = 0;
};

struct EvalReport {
  double map = 0;
  double auroc = 0;
  double f1 = 0;
  DerResult der;
  Breakdown breakdown;
  std::vector<DesyncPoint> desync;
  std::size_t frames = 0;
  std::size_t positives = 0;
  nlohmann::json info = nlohmann::json::object();  // run settings echoed into the report
};

// Scores every metric; DER is skipped (zeros) when there is no reference
// speech.
EvalReport evaluate(std::span<const ScoredFrame> frames);

nlohmann::json to_json(const EvalReport& report);

// CSV with header scene_id,entity_id,frame_index,score.
std::string predictions_csv(std::span<const ScoredFrame> frames);

}  // namespace unicon::metrics
