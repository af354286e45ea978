#include "unicon/metrics.hpp"

#include "unicon/error.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

namespace unicon::metrics {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
}

std::vector<double> scores_of(std::span<const ScoredFrame> frames) {
  std::vector<double> s(frames.size());
  std::transform(frames.begin(), frames.end(), s.begin(), [](const ScoredFrame& f) { return f.score; });
  return s;
}

std::vector<int> labels_of(std::span<const ScoredFrame> frames) {
  std::vector<int> l(frames.size());
  std::transform(frames.begin(), frames.end(), l.begin(), [](const ScoredFrame& f) { return f.label != 0; });
  return l;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const long positives = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  if (positives == 0) throw InputError("average precision is undefined without positive labels");
  double sum = 0.0;
  long tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 0) continue;
    ++tp;
    sum += static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(positives);
}

double average_precision(std::span<const ScoredFrame> frames) {
  const auto s = scores_of(frames);
  const auto l = labels_of(frames);
  return average_precision(s, l);
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the number of (positive, negative) pairs won, counted exactly.
  long long twice_wins = 0;
  long long neg_below = 0, pos = 0, neg = 0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    long long gp = 0, gn = 0;
    while (e < order.size() && scores[order[e]] == scores[order[k]]) {
      (labels[order[e]] ? gp : gn) += 1;
      ++e;
    }
    twice_wins += 2 * gp * neg_below + gp * gn;
    neg_below += gn;
    pos += gp;
    neg += gn;
    k = e;
  }
  if (pos == 0 || neg == 0) throw InputError("AUROC needs both positive and negative labels");
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc(std::span<const ScoredFrame> frames) {
  const auto s = scores_of(frames);
  const auto l = labels_of(frames);
  return auroc(s, l);
}

double f1(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores, labels);
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    tp += predicted && actual;
    fp += predicted && !actual;
    fn += !predicted && actual;
  }
  if (tp == 0) return 0.0;
  return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

double f1(std::span<const ScoredFrame> frames, double threshold) {
  const auto s = scores_of(frames);
  const auto l = labels_of(frames);
  return f1(s, l, threshold);
}

DerResult der(std::span<const ScoredFrame> frames, double threshold) {
  struct Counts {
    long ref = 0, hyp = 0, correct = 0;
  };
  std::map<std::pair<std::string, int>, Counts> per_frame;
  for (const auto& f : frames) {
    auto& c = per_frame[{f.scene_id, f.frame_index}];
    const bool r = f.label != 0;
    const bool h = f.score >= threshold;
    c.ref += r;
    c.hyp += h;
    c.correct += r && h;
  }
  long miss = 0, fa = 0, conf = 0, ref = 0;
  for (const auto& [key, c] : per_frame) {
    miss += std::max(0L, c.ref - c.hyp);
    fa += std::max(0L, c.hyp - c.ref);
    conf += std::min(c.ref, c.hyp) - c.correct;
    ref += c.ref;
  }
  if (ref == 0) throw InputError("DER is undefined without reference speech");
  DerResult r;
  r.reference_frames = ref;
  r.missed = static_cast<double>(miss) / ref;
  r.false_alarm = static_cast<double>(fa) / ref;
  r.confusion = static_cast<double>(conf) / ref;
  r.der = r.missed + r.false_alarm + r.confusion;
  return r;
}

std::vector<double> smooth_predictions(std::span<const double> scores, int window) {
  if (window < 1 || window % 2 == 0) throw InputError("smoothing window must be odd and >= 1");
  const std::size_t n = scores.size();
  std::vector<double> out(scores.begin(), scores.end());
  if (n < static_cast<std::size_t>(window)) return out;
  const long half = window / 2;
  std::vector<double> mean(n), var(n);
  std::vector<char> flat(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long lo = std::max(0L, static_cast<long>(i) - half);
    const long hi = std::min(static_cast<long>(n) - 1, static_cast<long>(i) + half);
    const auto [mn, mx] = std::minmax_element(scores.begin() + lo, scores.begin() + hi + 1);
    flat[i] = *mn == *mx;
    double m = 0.0;
    for (long k = lo; k <= hi; ++k) m += scores[k];
    m /= static_cast<double>(hi - lo + 1);
    double v = 0.0;
    for (long k = lo; k <= hi; ++k) v += (scores[k] - m) * (scores[k] - m);
    mean[i] = m;
    var[i] = v / static_cast<double>(hi - lo + 1);
  }
  const double noise = std::accumulate(var.begin(), var.end(), 0.0) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (flat[i]) continue;  // rounding in the mean would perturb a constant window
    const double denom = std::max(var[i], noise);
    out[i] = denom > 0.0 ? mean[i] + std::max(0.0, var[i] - noise) / denom * (scores[i] - mean[i]) : mean[i];
  }
  return out;
}

void smooth_scored_frames(std::vector<ScoredFrame>& frames, int window) {
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> series;
  for (std::size_t i = 0; i < frames.size(); ++i) series[{frames[i].scene_id, frames[i].entity_id}].push_back(i);
  for (auto& [key, idx] : series) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return frames[a].frame_index < frames[b].frame_index; });
    std::vector<double> s(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) s[k] = frames[idx[k]].score;
    const auto sm = smooth_predictions(s, window);
    for (std::size_t k = 0; k < idx.size(); ++k) frames[idx[k]].score = std::clamp(sm[k], 0.0, 1.0);
  }
}

SizeBin size_bin(double w) {
  if (w <= 64.0) return SizeBin::kSmall;
  if (w <= 128.0) return SizeBin::kMedium;
  return SizeBin::kLarge;
}

const char* size_bin_name(SizeBin bin) {
  switch (bin) {
    case SizeBin::kSmall:
      return "small";
    case SizeBin::kMedium:
      return "medium";
    case SizeBin::kLarge:
      return "large";
  }
  return "large";
}

std::string face_count_bin(int faces) { return faces >= 3 ? "3+" : std::to_string(std::max(1, faces)); }

namespace {

BinResult score_bin(const std::string& name, const std::vector<ScoredFrame>& members) {
  BinResult b;
  b.name = name;
  b.count = members.size();
  b.positives = static_cast<std::size_t>(
      std::count_if(members.begin(), members.end(), [](const ScoredFrame& f) { return f.label != 0; }));
  if (b.positives > 0) b.ap = average_precision(members);
  return b;
}

}  // namespace

Breakdown breakdown(std::span<const ScoredFrame> frames) {
  std::vector<ScoredFrame> size_bins[3];
  std::map<std::string, std::vector<ScoredFrame>> count_bins = {{"1", {}}, {"2", {}}, {"3+", {}}};
  for (const auto& f : frames) {
    size_bins[static_cast<int>(size_bin(f.face_width_px))].push_back(f);
    count_bins[face_count_bin(f.faces_in_frame)].push_back(f);
  }
  Breakdown out;
  for (int b = 0; b < 3; ++b) out.face_size.push_back(score_bin(size_bin_name(static_cast<SizeBin>(b)), size_bins[b]));
  for (const char* name : {"1", "2", "3+"}) out.faces_in_frame.push_back(score_bin(name, count_bins[name]));
  return out;
}

EvalReport evaluate(std::span<const ScoredFrame> frames) {
  EvalReport r;
  r.frames = frames.size();
  r.positives = static_cast<std::size_t>(
      std::count_if(frames.begin(), frames.end(), [](const ScoredFrame& f) { return f.label != 0; }));
  r.map = average_precision(frames);
  r.auroc = auroc(frames);
  r.f1 = f1(frames);
  r.der = der(frames);
  r.breakdown = breakdown(frames);
  return r;
}

namespace {

nlohmann::json bins_json(const std::vector<BinResult>& bins) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& b : bins) {
    nlohmann::json e = {{"count", b.count}, {"positives", b.positives}};
    if (b.ap) e["ap"] = *b.ap;
    j[b.name] = e;
  }
  return j;
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["map"] = r.map;
  j["auroc"] = r.auroc;
  j["f1"] = r.f1;
  j["der"] = r.der.der;
  j["der_components"] = {{"false_alarm", r.der.false_alarm},
                         {"missed", r.der.missed},
                         {"confusion", r.der.confusion},
                         {"reference_frames", r.der.reference_frames}};
  j["frames"] = r.frames;
  j["positives"] = r.positives;
  j["breakdown"] = {{"face_size", bins_json(r.breakdown.face_size)},
                    {"faces_in_frame", bins_json(r.breakdown.faces_in_frame)}};
  if (!r.desync.empty()) {
    nlohmann::json d = nlohmann::json::array();
    for (const auto& p : r.desync) d.push_back({{"shift", p.shift}, {"map", p.map}});
    j["desync"] = d;
  }
  j["info"] = r.info;
  return j;
}

std::string predictions_csv(std::span<const ScoredFrame> frames) {
  std::string out = "scene_id,entity_id,frame_index,score\n";
  char buf[64];
  for (const auto& f : frames) {
    std::snprintf(buf, sizeof buf, ",%d,%.9g\n", f.frame_index, f.score);
    out += f.scene_id;
    out += ',';
    out += f.entity_id;
    out += buf;
  }
  return out;
}

}  // namespace unicon::metrics
