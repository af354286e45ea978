#pragma once

// Synthetic audio-visual scenes. A latent per-frame articulation signal
// drives both the audible speaker's mouth and the tone-burst waveform;
// saliency (the largest, most central face speaks most), gaze (listeners'
// pupils turn toward the speaker) and turn-taking supply the contextual cues.

#include "unicon/ingest.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace unicon::synth {

struct SynthConfig {
  int n_scenes = 10;
  int min_candidates = 2;
  int max_candidates = 4;
  int min_frames = 50;
  int max_frames = 100;
  double mean_turn_frames = 30;  // mean speech/silence segment length
  double silence_prob = 0.2;      // segment has no speech
  double offscreen_prob = 0.1;    // segment spoken by an unseen person
  double inaudible_prob = 0.2;    // a listener mouths words without sound
  double overlap_prob = 0.0;      // a second on-screen speaker joins a turn
  double visual_snr = 3.0;        // mouth contrast / pixel noise std
  double audio_snr = 10.0;        // dB, voiced power / noise power
  double saliency_bias = 0.7;     // P(turn taken by the largest face)
  double gaze_bias = 0.8;         // P(listener looks at the speaker)
  double churn_prob = 0.15;       // P(a secondary face enters late or leaves early)
  double gain_range = 4.0;        // per-scene audio gain drawn in [1/g, g]
  int crop_size = 144;
  int sample_rate = 16000;
  std::uint64_t seed = 0;

  // Throws InputError on invalid values.
  void validate() const;
};

nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

struct SceneStats {
  std::vector<int> turn_lengths;  // lengths of all segments, in frames
  int candidates = 0;
};

// One scene; deterministic in (config, rng state).
ingest::Scene generate_scene(const SynthConfig& config, std::mt19937_64& rng, SceneStats* stats = nullptr);

// Scene k of a dataset uses its own generator seeded from (seed, k), so
// scenes can be produced in any order or in parallel.
ingest::Scene generate_indexed_scene(const SynthConfig& config, int index, SceneStats* stats = nullptr);
std::vector<ingest::Scene> generate_dataset(const SynthConfig& config, int workers = 1);

// Audio delayed by shift_frames video frames (advanced when negative), same
// length, vacated samples zero.
Audio shift_audio(const Audio& audio, int shift_frames, int fps);

// Shifts the audio by shift_frames video frames (positive delays the audio),
// zero-padding the vacated edge. Labels and video are unchanged. Throws
// InputError when |shift_frames| > T.
ingest::Scene desync(const ingest::Scene& scene, int shift_frames);

}  // namespace unicon::synth
