#include "unicon/error.hpp"
#include "unicon/ingest.hpp"

#include <fftw3.h>

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace unicon::ingest {

namespace {

constexpr double kPreEmphasis = 0.97;
constexpr double kEnergyFloor = 1e-10;

// FFTW plans are created under a lock (planner is not thread-safe) and cached
// per transform size; execution on caller-owned arrays is thread-safe.
class FftPlans {
 public:
  static FftPlans& instance() {
    static FftPlans plans;
    return plans;
  }
  fftw_plan get(int n) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<double> in(static_cast<std::size_t>(n));
    std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan p = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_[n] = p;
    return p;
  }
  ~FftPlans() {
    for (auto& [n, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  std::mutex mutex_;
  std::map<int, fftw_plan> plans_;
};

struct Framing {
  int frame_len = 0;
  int hop = 0;
  int window_len = 0;
  int frames = 0;
  int fft_size = 0;
};

Framing framing_for(int sample_rate) {
  if (sample_rate < 8000) throw InputError("compute_mfcc: sample rate below 8 kHz");
  Framing f;
  f.frame_len = static_cast<int>(std::lround(kAnalysisFrameSeconds * sample_rate));
  f.hop = static_cast<int>(std::lround(kAnalysisHopSeconds * sample_rate));
  f.window_len = static_cast<int>(std::lround(kMfccWindowSeconds * sample_rate));
  f.frames = 1 + (f.window_len - f.frame_len) / f.hop;
  f.fft_size = 1;
  while (f.fft_size < f.frame_len) f.fft_size *= 2;
  return f;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank [kMelFilters, fft_size/2 + 1] and DCT-II basis.
struct Filterbank {
  std::vector<double> mel;
  std::vector<double> dct;
  int bins = 0;
};

const Filterbank& filterbank(int sample_rate, int fft_size) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::unique_ptr<Filterbank>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{sample_rate, fft_size}];
  if (slot) return *slot;
  auto fb = std::make_unique<Filterbank>();
  fb->bins = fft_size / 2 + 1;
  fb->mel.assign(static_cast<std::size_t>(kMelFilters) * fb->bins, 0.0);
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(kMelFilters + 2);
  for (int i = 0; i < kMelFilters + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kMelFilters + 1));
  }
  for (int m = 0; m < kMelFilters; ++m) {
    for (int b = 0; b < fb->bins; ++b) {
      const double hz = static_cast<double>(b) * sample_rate / fft_size;
      double w = 0.0;
      if (hz > edges[m] && hz <= edges[m + 1]) {
        w = (hz - edges[m]) / (edges[m + 1] - edges[m]);
      } else if (hz > edges[m + 1] && hz < edges[m + 2]) {
        w = (edges[m + 2] - hz) / (edges[m + 2] - edges[m + 1]);
      }
      fb->mel[static_cast<std::size_t>(m) * fb->bins + b] = w;
    }
  }
  fb->dct.assign(static_cast<std::size_t>(kMfccCoefficients) * kMelFilters, 0.0);
  for (int k = 0; k < kMfccCoefficients; ++k) {
    const double norm = k == 0 ? std::sqrt(1.0 / kMelFilters) : std::sqrt(2.0 / kMelFilters);
    for (int m = 0; m < kMelFilters; ++m) {
      fb->dct[static_cast<std::size_t>(k) * kMelFilters + m] =
          norm * std::cos(std::numbers::pi * k * (m + 0.5) / kMelFilters);
    }
  }
  slot = std::move(fb);
  return *slot;
}

// MFCC vector of the analysis frame starting at sample `start` (may be
// negative or run past the end: those samples are zero).
void analysis_frame(const Audio& audio, long start, const Framing& f, const Filterbank& fb, float* out13) {
  std::vector<double> buf(static_cast<std::size_t>(f.fft_size), 0.0);
  const long n = static_cast<long>(audio.samples.size());
  double prev = 0.0;
  for (int i = 0; i < f.frame_len; ++i) {
    const long s = start + i;
    const double x = (s >= 0 && s < n) ? audio.samples[static_cast<std::size_t>(s)] : 0.0;
    const double emphasized = i == 0 ? x : x - kPreEmphasis * prev;
    prev = x;
    const double hamming = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (f.frame_len - 1));
    buf[static_cast<std::size_t>(i)] = emphasized * hamming;
  }
  std::vector<fftw_complex> spec(static_cast<std::size_t>(fb.bins));
  fftw_execute_dft_r2c(FftPlans::instance().get(f.fft_size), buf.data(), spec.data());
  double logmel[kMelFilters];
  for (int m = 0; m < kMelFilters; ++m) {
    double e = 0.0;
    const double* w = fb.mel.data() + static_cast<std::size_t>(m) * fb.bins;
    for (int b = 0; b < fb.bins; ++b) {
      const double power = (spec[b][0] * spec[b][0] + spec[b][1] * spec[b][1]) / f.fft_size;
      e += w[b] * power;
    }
    logmel[m] = std::log(std::max(e, kEnergyFloor));
  }
  for (int k = 0; k < kMfccCoefficients; ++k) {
    double c = 0.0;
    const double* d = fb.dct.data() + static_cast<std::size_t>(k) * kMelFilters;
    for (int m = 0; m < kMelFilters; ++m) c += d[m] * logmel[m];
    out13[k] = static_cast<float>(c);
  }
}

long window_start_sample(double end_time, int sample_rate, const Framing& f) {
  return std::lround(end_time * sample_rate) - f.window_len;
}

}  // namespace

int mfcc_frames_per_window(int sample_rate) { return framing_for(sample_rate).frames; }

MfccWindow compute_mfcc(const Audio& audio, double end_time) {
  if (!(end_time >= 0.0)) throw InputError("compute_mfcc: end_time must be non-negative");
  const Framing f = framing_for(audio.sample_rate);
  const Filterbank& fb = filterbank(audio.sample_rate, f.fft_size);
  MfccWindow w;
  w.frames = f.frames;
  w.coefficients.assign(static_cast<std::size_t>(kMfccCoefficients) * f.frames, 0.0f);
  const long start = window_start_sample(end_time, audio.sample_rate, f);
  float col[kMfccCoefficients];
  for (int j = 0; j < f.frames; ++j) {
    analysis_frame(audio, start + static_cast<long>(j) * f.hop, f, fb, col);
    for (int k = 0; k < kMfccCoefficients; ++k) w.coefficients[static_cast<std::size_t>(k) * f.frames + j] = col[k];
  }
  return w;
}

std::vector<MfccWindow> compute_mfcc_sequence(const Audio& audio, int fps, int num_frames) {
  const Framing f = framing_for(audio.sample_rate);
  const Filterbank& fb = filterbank(audio.sample_rate, f.fft_size);
  // Analysis frames are shared between overlapping windows; cache by start.
  std::map<long, std::array<float, kMfccCoefficients>> cache;
  std::vector<MfccWindow> out(static_cast<std::size_t>(std::max(0, num_frames)));
  for (int t = 0; t < num_frames; ++t) {
    const double end_time = static_cast<double>(t + 1) / fps;
    const long start = window_start_sample(end_time, audio.sample_rate, f);
    MfccWindow& w = out[static_cast<std::size_t>(t)];
    w.frames = f.frames;
    w.coefficients.assign(static_cast<std::size_t>(kMfccCoefficients) * f.frames, 0.0f);
    for (int j = 0; j < f.frames; ++j) {
      const long s = start + static_cast<long>(j) * f.hop;
      auto it = cache.find(s);
      if (it == cache.end()) {
        std::array<float, kMfccCoefficients> col{};
        analysis_frame(audio, s, f, fb, col.data());
        it = cache.emplace(s, col).first;
      }
      for (int k = 0; k < kMfccCoefficients; ++k) {
        w.coefficients[static_cast<std::size_t>(k) * f.frames + j] = it->second[k];
      }
    }
    // Windows only move forward; drop frames that can no longer be reused.
    while (!cache.empty() && cache.begin()->first < start) cache.erase(cache.begin());
  }
  return out;
}

}  // namespace unicon::ingest
