#pragma once

// Curriculum training (single-candidate stage 1, multi-candidate stage 2),
// segment sampling, augmentation, checkpoints and chunked inference.

#include "unicon/ingest.hpp"
#include "unicon/losses.hpp"
#include "unicon/metrics.hpp"
#include "unicon/model.hpp"
#include "unicon/nn/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace unicon::train {

struct AugmentConfig {
  bool enabled = true;
  bool flip = true;
  bool corner_crop = true;
  double brightness = 0.2;  // factors drawn in [1 - x, 1 + x]
  double contrast = 0.2;
  double saturation = 0.2;
};

struct TrainConfig {
  int stage = 1;
  int segment_frames = 28;
  int max_candidates = 3;
  int epochs = 1;
  int batch_size = 4;       // segments per optimizer step
  long max_steps = 0;       // 0: no limit
  std::uint64_t seed = 0;
  nn::AdamWConfig optimizer;
  AugmentConfig augment;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Per-scene data shared by training and evaluation.
struct PreparedScene {
  const ingest::Scene* scene = nullptr;
  std::vector<ingest::MfccWindow> mfcc;  // one window per frame
};

PreparedScene prepare_scene(const ingest::Scene& scene);
std::vector<PreparedScene> prepare_scenes(const std::vector<ingest::Scene>& scenes, int workers = 1);

// Frame indices of a training window: a uniformly random contiguous run of
// `frames` frames inside [first, last], replicate-padded (last frame
// repeated) when the span is shorter.
std::vector<int> sample_segment(int first, int last, int frames, std::mt19937_64& rng);

struct AugmentPlan {
  bool flip = false;
  int offset_x = 0;
  int offset_y = 0;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

// One draw per track. With augmentation disabled the plan is the central
// crop without flip or jitter.
AugmentPlan draw_augment(const AugmentConfig& config, int crop_size, int input_size, std::mt19937_64& rng);
AugmentPlan center_plan(int crop_size, int input_size);
// Applies the same flip, crop corner and photometric factors to every crop.
Image augment_crop(const Image& crop, const AugmentPlan& plan, int input_size);

struct SegmentSpec {
  const PreparedScene* scene = nullptr;
  std::vector<int> tracks;  // scene track indices, one per candidate
  std::vector<int> frames;  // scene frame index per segment step
};

// Builds model input for the given candidates and frames. Absent frames of a
// candidate reuse its nearest visible crop. labels_audio is taken from every
// track of the scene.
template <typename S>
SegmentInput<S> build_segment(const SegmentSpec& spec, const std::vector<AugmentPlan>& plans, int input_size);

struct LogRow {
  long step = 0;
  double l_a = 0;
  double l_v = 0;
  double l_av = 0;
  double total = 0;
};

struct TrainState {
  long step = 0;
  int stage = 1;
  std::vector<LogRow> log;
};

using ProgressFn = std::function<void(const LogRow&)>;

// Runs config.epochs epochs (or until max_steps) on the model from its
// current parameters. Stage 1 samples one segment per track per epoch,
// stage 2 one per scene with at most max_candidates candidates. Throws
// DivergenceError on a non-finite loss.
void train_stage(UniconModel<float>& model, nn::AdamW<float>& optimizer, const TrainConfig& config,
                 const std::vector<PreparedScene>& data, TrainState& state, const ProgressFn& progress = {});

std::string log_csv(const std::vector<LogRow>& rows);

// Single-file checkpoint: header JSON (model config, train state, tensor
// index) followed by float64 tensor data.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  long step = 0;
  int stage = 1;
  std::map<std::string, nn::Tensor<double>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const UniconModel<float>& model,
                     const nn::AdamW<float>* optimizer, const TrainConfig& train, const TrainState& state);
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Copies tensors into the model. strict: every model entry must be present
// with a matching shape; otherwise missing names are skipped (shape
// mismatches still throw). Returns the number of entries loaded.
std::size_t load_parameters(UniconModel<float>& model, const Checkpoint& ckpt, bool strict);
// Modules trained in stage 1; the rest depend on the ablation.
inline const std::vector<std::string> kStage1Modules = {"face.", "audio.", "av_pred.", "v_aux.", "a_aux."};
// Loads exactly the entries whose names start with one of the prefixes;
// each of them must be in the checkpoint.
std::size_t load_parameters(UniconModel<float>& model, const Checkpoint& ckpt, const std::vector<std::string>& prefixes);
void load_optimizer(nn::AdamW<float>& optimizer, const UniconModel<float>& model, const Checkpoint& ckpt);

struct InferenceOptions {
  bool visual_only = false;
  int max_chunk_frames = 100;
  int desync_shift = 0;
  int smooth_window = 0;  // 0 or 1: off
};

// Scores every visible candidate frame of every scene with the model in
// evaluation mode.
std::vector<metrics::ScoredFrame> infer(const UniconModel<float>& model, const std::vector<ingest::Scene>& scenes,
                                        const InferenceOptions& options, int workers = 1);

struct EvalOptions {
  bool visual_only = false;
  int smooth_window = 0;
  int max_chunk_frames = 100;
  std::vector<int> desync_shifts;  // extra passes, one mAP per shift
};

struct EvalResult {
  metrics::EvalReport report;
  std::vector<metrics::ScoredFrame> frames;  // unshifted pass
};

// Scores the unshifted data, then one desync pass per shift. The report's
// info echoes the model and evaluation settings.
EvalResult evaluate_model(const UniconModel<float>& model, const std::vector<ingest::Scene>& scenes,
                          const EvalOptions& options, int workers = 1);

}  // namespace unicon::train
