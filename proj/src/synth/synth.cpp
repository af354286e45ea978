#include "unicon/synth.hpp"

#include "unicon/error.hpp"
#include "unicon/parallel.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <string>

namespace unicon::synth {

using ingest::BoundingBox;
using ingest::FaceTrack;
using ingest::Scene;

void SynthConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError(std::string("synth: ") + name + " must be in [0, 1]");
  };
  prob(silence_prob, "silence_prob");
  prob(offscreen_prob, "offscreen_prob");
  prob(inaudible_prob, "inaudible_prob");
  prob(overlap_prob, "overlap_prob");
  prob(saliency_bias, "saliency_bias");
  prob(gaze_bias, "gaze_bias");
  prob(churn_prob, "churn_prob");
  if (silence_prob + offscreen_prob > 1.0) throw InputError("synth: silence_prob + offscreen_prob exceeds 1");
  if (n_scenes < 0) throw InputError("synth: n_scenes must be >= 0");
  if (min_candidates < 1 || max_candidates < min_candidates) throw InputError("synth: bad candidate range");
  if (min_frames < 1 || max_frames < min_frames) throw InputError("synth: bad frame range");
  if (!(mean_turn_frames >= 1.0)) throw InputError("synth: mean_turn_frames must be >= 1");
  if (!(visual_snr > 0.0)) throw InputError("synth: visual_snr must be positive");
  if (!std::isfinite(audio_snr)) throw InputError("synth: audio_snr must be finite (dB)");
  if (!(gain_range >= 1.0)) throw InputError("synth: gain_range must be >= 1");
  if (crop_size < 8) throw InputError("synth: crop_size must be >= 8");
  if (sample_rate < 8000) throw InputError("synth: sample_rate must be >= 8000");
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_scenes", c.n_scenes},
          {"min_candidates", c.min_candidates},
          {"max_candidates", c.max_candidates},
          {"min_frames", c.min_frames},
          {"max_frames", c.max_frames},
          {"mean_turn_frames", c.mean_turn_frames},
          {"silence_prob", c.silence_prob},
          {"offscreen_prob", c.offscreen_prob},
          {"inaudible_prob", c.inaudible_prob},
          {"overlap_prob", c.overlap_prob},
          {"visual_snr", c.visual_snr},
          {"audio_snr", c.audio_snr},
          {"saliency_bias", c.saliency_bias},
          {"gaze_bias", c.gaze_bias},
          {"churn_prob", c.churn_prob},
          {"gain_range", c.gain_range},
          {"crop_size", c.crop_size},
          {"sample_rate", c.sample_rate},
          {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    if (!j.is_object()) throw InputError("synth config must be a JSON object");
#define UNICON_FIELD(name) c.name = j.value(#name, c.name)
    UNICON_FIELD(n_scenes);
    UNICON_FIELD(min_candidates);
    UNICON_FIELD(max_candidates);
    UNICON_FIELD(min_frames);
    UNICON_FIELD(max_frames);
    UNICON_FIELD(mean_turn_frames);
    UNICON_FIELD(silence_prob);
    UNICON_FIELD(offscreen_prob);
    UNICON_FIELD(inaudible_prob);
    UNICON_FIELD(overlap_prob);
    UNICON_FIELD(visual_snr);
    UNICON_FIELD(audio_snr);
    UNICON_FIELD(saliency_bias);
    UNICON_FIELD(gaze_bias);
    UNICON_FIELD(churn_prob);
    UNICON_FIELD(gain_range);
    UNICON_FIELD(crop_size);
    UNICON_FIELD(sample_rate);
    UNICON_FIELD(seed);
#undef UNICON_FIELD
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

constexpr double kSpeechAmplitude = 0.25;
constexpr int kHarmonics = 4;

struct Face {
  std::array<double, 3> skin;
  double f0 = 150;
  BoundingBox box;
  int first = 0;
  int last = 0;
};

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool bernoulli(std::mt19937_64& rng, double p) { return uniform(rng, 0.0, 1.0) < p; }

// Syllabic mouth opening for one utterance: never fully closed while
// speaking, so voiced frames stay visible.
std::vector<double> articulation(std::mt19937_64& rng, int length, int fps) {
  std::vector<double> m(static_cast<std::size_t>(length));
  const double rate = uniform(rng, 3.0, 6.0) / fps;
  double phase = uniform(rng, 0.0, 1.0);
  double amp = uniform(rng, 0.6, 1.0);
  for (int t = 0; t < length; ++t) {
    m[static_cast<std::size_t>(t)] = 0.35 + 0.65 * amp * std::abs(std::sin(std::numbers::pi * phase));
    const double next = phase + rate;
    if (std::floor(next) != std::floor(phase)) amp = uniform(rng, 0.6, 1.0);
    phase = next;
  }
  return m;
}

// Small idle mouth movements of listeners.
std::vector<double> idle_motion(std::mt19937_64& rng, int length) {
  std::vector<double> m(static_cast<std::size_t>(length));
  std::normal_distribution<double> n(0.0, 0.05);
  double x = 0.0;
  for (auto& v : m) {
    x = 0.8 * x + n(rng);
    v = std::clamp(x, 0.0, 0.2);
  }
  return m;
}

double gaze_toward(const Face& from, const Face& to, std::mt19937_64& rng) {
  const double dx = to.box.center_x() - from.box.center_x();
  return (dx >= 0 ? 1.0 : -1.0) * uniform(rng, 0.6, 1.0);
}

void render_face(Image& img, const Face& face, const std::array<double, 3>& background, double mouth, double gaze,
                 double noise_std, std::mt19937_64& rng) {
  const int s = img.width;
  std::normal_distribution<double> noise(0.0, noise_std);
  const std::array<double, 3> eye_white = {235, 235, 235};
  const std::array<double, 3> pupil = {25, 25, 35};
  const std::array<double, 3> lips = {120, 30, 40};
  const double mouth_half_h = 0.01 + 0.09 * mouth;
  auto color_at = [&](double nx, double ny) -> std::array<double, 3> {
    if ((nx / 0.36) * (nx / 0.36) + (ny / 0.44) * (ny / 0.44) > 1.0) return background;
    for (double ex : {-0.15, 0.15}) {
      const double dx = nx - ex, dy = ny + 0.10;
      if (dx * dx + dy * dy <= 0.075 * 0.075) {
        const double px = dx - gaze * 0.045;
        return px * px + dy * dy <= 0.035 * 0.035 ? pupil : eye_white;
      }
    }
    const double mx = nx / 0.12, my = (ny - 0.20) / mouth_half_h;
    if (mx * mx + my * my <= 1.0) return lips;
    return face.skin;
  };
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      std::array<double, 3> acc = {0, 0, 0};
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const auto c = color_at((x + 0.25 + 0.5 * sx) / s - 0.5, (y + 0.25 + 0.5 * sy) / s - 0.5);
          for (int k = 0; k < 3; ++k) acc[k] += 0.25 * c[k];
        }
      }
      for (int k = 0; k < 3; ++k) {
        const double v = acc[k] + (noise_std > 0 ? noise(rng) : 0.0);
        img.at(x, y, k) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
}

}  // namespace

Scene generate_scene(const SynthConfig& cfg, std::mt19937_64& rng, SceneStats* stats) {
  cfg.validate();
  const int fps = ingest::kFps;
  const int n = uniform_int(rng, cfg.min_candidates, cfg.max_candidates);
  const int t_len = uniform_int(rng, cfg.min_frames, cfg.max_frames);
  Scene scene;
  scene.fps = fps;
  scene.num_frames = t_len;
  const double aspect = static_cast<double>(scene.frame_width) / scene.frame_height;

  // Geometry: the salient face is the largest and takes the most central slot.
  const int main = uniform_int(rng, 0, n - 1);
  std::vector<double> slots(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) slots[static_cast<std::size_t>(k)] = 0.08 + 0.84 * (k + 0.5) / n;
  std::sort(slots.begin(), slots.end(), [](double a, double b) { return std::abs(a - 0.5) < std::abs(b - 0.5); });
  std::shuffle(slots.begin() + 1, slots.end(), rng);
  std::vector<Face> faces(static_cast<std::size_t>(n));
  for (int i = 0, other = 1; i < n; ++i) {
    Face& f = faces[static_cast<std::size_t>(i)];
    f.skin = {uniform(rng, 170, 235), uniform(rng, 120, 180), uniform(rng, 90, 150)};
    f.f0 = uniform(rng, 100, 240);
    const double w = i == main ? uniform(rng, 0.13, 0.22) : uniform(rng, 0.035, 0.11);
    const double h = std::min(0.9, w * aspect);
    const double slot = i == main ? slots[0] : slots[static_cast<std::size_t>(other++)];
    const double cx = std::clamp(slot + uniform(rng, -0.02, 0.02), w / 2 + 0.005, 1 - w / 2 - 0.005);
    const double cy = std::clamp(uniform(rng, 0.3, 0.6), h / 2 + 0.005, 1 - h / 2 - 0.005);
    f.box = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    f.first = 0;
    f.last = t_len - 1;
    if (i != main && t_len >= 4 && bernoulli(rng, cfg.churn_prob)) {
      if (bernoulli(rng, 0.5)) {
        f.first = uniform_int(rng, 1, t_len / 2);
      } else {
        f.last = uniform_int(rng, t_len / 2, t_len - 2);
      }
    }
  }
  auto visible = [&](int i, int t) { return t >= faces[i].first && t <= faces[i].last; };

  const std::size_t cells = static_cast<std::size_t>(n) * t_len;
  std::vector<std::uint8_t> audible(cells, 0), mouthing(cells, 0);
  std::vector<double> mouth(cells, 0.0), gaze(cells, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto idle = idle_motion(rng, t_len);
    std::copy(idle.begin(), idle.end(), mouth.begin() + static_cast<long>(i) * t_len);
  }
  struct Voice {
    double f0;
    int start;
    std::vector<double> env;
  };
  std::vector<Voice> voices;

  std::geometric_distribution<int> turn_len(1.0 / cfg.mean_turn_frames);
  for (int start = 0; start < t_len;) {
    const int full = 1 + turn_len(rng);
    if (stats) stats->turn_lengths.push_back(full);
    const int len = std::min(full, t_len - start);
    const double u = uniform(rng, 0.0, 1.0);
    std::vector<int> speakers;
    if (u >= cfg.silence_prob + cfg.offscreen_prob) {
      int s = main;
      if (n > 1 && !bernoulli(rng, cfg.saliency_bias)) {
        s = uniform_int(rng, 0, n - 2);
        if (s >= main) ++s;
      }
      speakers.push_back(s);
      if (n > 1 && bernoulli(rng, cfg.overlap_prob)) {
        int s2 = uniform_int(rng, 0, n - 2);
        if (s2 >= s) ++s2;
        speakers.push_back(s2);
      }
    } else if (u >= cfg.silence_prob) {
      voices.push_back({uniform(rng, 100, 240), start, articulation(rng, len, fps)});
    }
    int whisperer = -1;
    if (n > static_cast<int>(speakers.size()) && bernoulli(rng, cfg.inaudible_prob)) {
      do {
        whisperer = uniform_int(rng, 0, n - 1);
      } while (std::find(speakers.begin(), speakers.end(), whisperer) != speakers.end());
    }
    for (int s : speakers) {
      const auto m = articulation(rng, len, fps);
      Voice v{faces[static_cast<std::size_t>(s)].f0, start, m};
      for (int k = 0; k < len; ++k) {
        const int t = start + k;
        const std::size_t c = static_cast<std::size_t>(s) * t_len + t;
        if (visible(s, t)) {
          audible[c] = 1;
          mouth[c] = m[static_cast<std::size_t>(k)];
        }
      }
      voices.push_back(std::move(v));
    }
    if (whisperer >= 0) {
      const auto m = articulation(rng, len, fps);
      for (int k = 0; k < len; ++k) {
        const std::size_t c = static_cast<std::size_t>(whisperer) * t_len + start + k;
        mouthing[c] = 1;
        mouth[c] = m[static_cast<std::size_t>(k)];
      }
    }
    // Gaze: listeners look at the (first) speaker with probability
    // gaze_bias; speakers look at a random listener.
    for (int i = 0; i < n; ++i) {
      double g;
      const bool speaking = std::find(speakers.begin(), speakers.end(), i) != speakers.end();
      if (speaking && n > 1) {
        int target = uniform_int(rng, 0, n - 2);
        if (target >= i) ++target;
        g = gaze_toward(faces[static_cast<std::size_t>(i)], faces[static_cast<std::size_t>(target)], rng);
      } else if (!speakers.empty() && bernoulli(rng, cfg.gaze_bias)) {
        g = gaze_toward(faces[static_cast<std::size_t>(i)], faces[static_cast<std::size_t>(speakers[0])], rng);
      } else {
        g = uniform(rng, -1.0, 1.0);
      }
      for (int k = 0; k < len; ++k) gaze[static_cast<std::size_t>(i) * t_len + start + k] = g;
    }
    start += len;
  }

  // Audio: harmonic tone bursts shaped by the articulation envelope.
  const int sr = cfg.sample_rate;
  const std::size_t samples = static_cast<std::size_t>(std::ceil(static_cast<double>(t_len) * sr / fps));
  std::vector<double> wave(samples, 0.0);
  for (const Voice& v : voices) {
    std::array<double, kHarmonics> phase0;
    for (auto& p : phase0) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double samples_per_frame = static_cast<double>(sr) / fps;
    const auto begin = static_cast<std::size_t>(std::llround(v.start * samples_per_frame));
    const auto end = std::min(samples, static_cast<std::size_t>(std::llround((v.start + v.env.size()) * samples_per_frame)));
    for (std::size_t s = begin; s < end; ++s) {
      const double pos = (static_cast<double>(s) - begin) / samples_per_frame - 0.5;
      const std::size_t k0 = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(v.env.size() - 1)));
      const std::size_t k1 = std::min(k0 + 1, v.env.size() - 1);
      const double frac = std::clamp(pos - std::floor(pos), 0.0, 1.0);
      const double env = pos < 0 ? v.env[0] : (1 - frac) * v.env[k0] + frac * v.env[k1];
      const double time = static_cast<double>(s) / sr;
      double x = 0.0;
      for (int h = 1; h <= kHarmonics; ++h) {
        x += std::sin(2.0 * std::numbers::pi * h * v.f0 * time + phase0[static_cast<std::size_t>(h - 1)]) / h;
      }
      wave[s] += kSpeechAmplitude * env * x;
    }
  }
  // Reference voiced power of a harmonic stack at mean envelope ~0.65.
  double harmonic_power = 0.0;
  for (int h = 1; h <= kHarmonics; ++h) harmonic_power += 0.5 / (h * h);
  const double voiced_power = kSpeechAmplitude * kSpeechAmplitude * 0.65 * 0.65 * harmonic_power;
  const double noise_std = std::sqrt(voiced_power / std::pow(10.0, cfg.audio_snr / 10.0));
  std::normal_distribution<double> audio_noise(0.0, noise_std);
  const double log_gain = std::log(cfg.gain_range);
  const double gain = std::exp(uniform(rng, -log_gain, log_gain));
  scene.audio.sample_rate = sr;
  scene.audio.samples.resize(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    scene.audio.samples[s] = static_cast<float>(std::clamp(gain * (wave[s] + audio_noise(rng)), -1.0, 1.0));
  }

  // Video: one crop per visible frame.
  const std::array<double, 3> background = {uniform(rng, 50, 130), uniform(rng, 50, 130), uniform(rng, 50, 130)};
  const double pixel_noise = 100.0 / cfg.visual_snr;
  for (int i = 0; i < n; ++i) {
    const Face& f = faces[static_cast<std::size_t>(i)];
    FaceTrack track;
    track.entity_id = "e" + std::to_string(i);
    track.first_frame = f.first;
    for (int t = f.first; t <= f.last; ++t) {
      const std::size_t c = static_cast<std::size_t>(i) * t_len + t;
      track.boxes.push_back(f.box);
      Image img(cfg.crop_size, cfg.crop_size, 3);
      render_face(img, f, background, mouth[c], gaze[c], pixel_noise, rng);
      track.crops.push_back(std::move(img));
      track.labels_v.push_back(audible[c] || mouthing[c]);
      track.labels_av.push_back(audible[c]);
    }
    scene.tracks.push_back(std::move(track));
  }
  if (stats) stats->candidates = n;
  return scene;
}

Scene generate_indexed_scene(const SynthConfig& config, int index, SceneStats* stats) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  Scene scene = generate_scene(config, rng, stats);
  char id[32];
  std::snprintf(id, sizeof id, "synth_%05d", index);
  scene.scene_id = id;
  return scene;
}

std::vector<Scene> generate_dataset(const SynthConfig& config, int workers) {
  config.validate();
  std::vector<Scene> scenes(static_cast<std::size_t>(config.n_scenes));
  parallel_for(scenes.size(), workers,
               [&](std::size_t k) { scenes[k] = generate_indexed_scene(config, static_cast<int>(k)); });
  return scenes;
}

Audio shift_audio(const Audio& audio, int shift_frames, int fps) {
  Audio out;
  out.sample_rate = audio.sample_rate;
  out.samples.assign(audio.samples.size(), 0.0f);
  const long shift = std::lround(static_cast<double>(shift_frames) * audio.sample_rate / std::max(1, fps));
  const long n = static_cast<long>(audio.samples.size());
  for (long s = std::max(0L, shift); s < std::min(n, n + shift); ++s) {
    out.samples[static_cast<std::size_t>(s)] = audio.samples[static_cast<std::size_t>(s - shift)];
  }
  return out;
}

Scene desync(const Scene& scene, int shift_frames) {
  if (std::abs(shift_frames) > scene.num_frames) throw InputError("desync: |shift| exceeds the scene length");
  Scene out = scene;
  out.audio = shift_audio(scene.audio, shift_frames, scene.fps);
  return out;
}

}  // namespace unicon::synth
