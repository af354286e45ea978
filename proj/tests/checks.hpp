#pragma once

// Property checks shared by the unit tests and the acceptance runner.

#include "test_util.hpp"
#include "unicon/losses.hpp"
#include "unicon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace unicon::testing {

struct CheckResult {
  bool pass = false;
  double value = 0;  // worst observed error or count mismatch
  std::string detail;
};

inline std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

inline std::vector<int> random_perm(int n, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Scores of candidate perm[k] on the original input against candidate k on
// the permuted input, over random models with 1..5 candidates.
inline CheckResult check_equivariance(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Suppression sups[] = {Suppression::kMax, Suppression::kMean, Suppression::kNone};
  const char* tags[] = {"+S+R+T", "+S+R", "+R+T", "+R"};
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const int n = 1 + trial % 5;
    const auto cfg = tiny_config(tags[trial % 4], sups[(trial / 4) % 3]);
    UniconModel<float> model(cfg);
    model.params().init(rng);
    const auto in = random_input<float>(n, 5, cfg, rng);
    const auto perm = random_perm(n, rng);
    const auto out = model.forward(in, false).av_logits.value();
    const auto pout = model.forward(permute(in, perm), false).av_logits.value();
    for (int k = 0; k < n; ++k) {
      for (int t = 0; t < in.frames; ++t) {
        const auto a = static_cast<std::size_t>(perm[static_cast<std::size_t>(k)] * in.frames + t);
        const auto b = static_cast<std::size_t>(k * in.frames + t);
        const double sa = 1 / (1 + std::exp(-double(out.data[a])));
        const double sb = 1 / (1 + std::exp(-double(pout.data[b])));
        worst = std::max(worst, std::abs(sa - sb));
      }
    }
  }
  return {worst < 1e-5, worst, "max abs score diff " + sci(worst)};
}

// beta_ij + beta_ji == 0 bit-exactly, and N(N+1)/2 raw evaluations per
// visual relational pass for N = 1..6.
inline CheckResult check_skew_and_count(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  int count_errors = 0;
  std::string detail;
  for (int n = 1; n <= 6; ++n) {
    for (const char* tag : {"+S+R+T", "+S+R", "+R"}) {
      const auto cfg = tiny_config(tag);
      UniconModel<float> model(cfg);
      model.params().init(rng);
      const auto in = random_input<float>(n, 4, cfg, rng);
      const auto enc = model.encode(in, false);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          const auto bij = model.pair_feature(enc, n, in.frames, i, j, false).value();
          const auto bji = model.pair_feature(enc, n, in.frames, j, i, false).value();
          for (std::size_t k = 0; k < bij.data.size(); ++k) {
            worst = std::max(worst, std::abs(double(bij.data[k] + bji.data[k])));
          }
        }
      }
      ForwardStats stats;
      model.visual_relational_context(enc, in, false, &stats);
      if (stats.raw_evals() != n * (n + 1) / 2) {
        ++count_errors;
        detail += " N=" + std::to_string(n) + ":" + std::to_string(stats.raw_evals());
      }
    }
  }
  return {worst == 0.0 && count_errors == 0, worst,
          "max |b_ij + b_ji| " + sci(worst) + ", count mismatches " + std::to_string(count_errors) + detail};
}

// Total loss L_a + L_v + L_av of the multi-candidate pass.
inline nn::Var<double> total_loss(const UniconModel<double>& model, const SegmentInput<double>& in) {
  const auto out = model.forward(in, true);
  const auto l = losses::multi_candidate_losses(out, in);
  return nn::add(l.total, losses::audio_loss(model.audio_logits(out.encoded.a), in));
}

// Nonzero biases keep ReLU pre-activations off their kinks on the nearly
// constant head-map background, where finite differences are meaningless.
inline void jitter_biases(nn::ParamStore<double>& params, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& e : params.entries()) {
    if (e.kind != nn::ParamKind::kBias && e.kind != nn::ParamKind::kBeta) continue;
    for (auto& x : e.var.mutable_value().data) x = u(rng);
  }
}

struct GradCase {
  std::string name;
  double error = 0;
};

// Central-difference gradient check of the total loss for every
// suppression mode under both temporal backends, plus the stage-1 loss.
inline CheckResult check_gradients(std::uint64_t seed, std::size_t max_elements, std::vector<GradCase>* cases = nullptr,
                                   double h = 1e-7) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  std::string worst_name;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    if (cases) cases->push_back({name + " " + r.worst_name, r.worst_error});
    if (r.worst_error > worst || worst_name.empty()) {
      worst = r.worst_error;
      worst_name = name + " " + r.worst_name;
    }
  };
  for (const char* tag : {"+S+R+T", "+S+R"}) {
    for (auto sup : {Suppression::kMax, Suppression::kMean, Suppression::kNone}) {
      const auto cfg = tiny_config(tag, sup);
      UniconModel<double> model(cfg);
      model.params().init(rng);
      jitter_biases(model.params(), rng);
      const auto in = random_input<double>(3, 3, cfg, rng);
      const auto r = grad_check(model.params(), [&] { return total_loss(model, in); }, max_elements, rng, h);
      record(std::string(tag) + "/" + to_string(sup), r);
    }
  }
  for (const char* tag : {"+T", "baseline"}) {
    const auto cfg = tiny_config(tag);
    UniconModel<double> model(cfg);
    model.params().init(rng);
    jitter_biases(model.params(), rng);
    const auto in = random_input<double>(1, 4, cfg, rng, 1.0);
    const auto r = grad_check(
        model.params(),
        [&] { return losses::single_candidate_losses(model.forward_single(in, true), in).total; }, max_elements,
        rng, h);
    record(std::string("stage1 ") + tag, r);
  }
  return {worst < 1e-4, worst, "worst relative error " + sci(worst) + " at " + worst_name};
}

// Pairwise rank definition: item i sits at rank 1 + #{j ranked before i},
// where j precedes i on a higher score or an equal score earlier in input.
inline double ap_oracle(const std::vector<double>& s, const std::vector<int>& l) {
  const std::size_t n = s.size();
  double sum = 0;
  int pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!l[i]) continue;
    ++pos;
    int rank = 1, hits = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (s[j] > s[i] || (s[j] == s[i] && j < i)) {
        ++rank;
        hits += l[j] != 0;
      }
    }
    sum += static_cast<double>(hits) / rank;
  }
  return sum / pos;
}

inline double auroc_oracle(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!l[i] || l[j]) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / static_cast<double>(pairs);
}

inline double f1_oracle(const std::vector<double>& s, const std::vector<int>& l, double th) {
  double tp = 0, pp = 0, ap = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    tp += s[i] >= th && l[i];
    pp += s[i] >= th;
    ap += l[i] != 0;
  }
  if (tp == 0) return 0;
  const double p = tp / pp, r = tp / ap;
  return 2 * p * r / (p + r);
}

// Per frame: each reference speaker is matched to itself when marked;
// unmatched reference and hypothesis speakers pair up as confusions, the
// remainder is missed speech or false alarm.
inline metrics::DerResult der_oracle(const std::vector<metrics::ScoredFrame>& frames, double th) {
  std::map<std::pair<std::string, int>, std::pair<std::set<std::string>, std::set<std::string>>> sets;
  for (const auto& f : frames) {
    auto& [ref, hyp] = sets[{f.scene_id, f.frame_index}];
    if (f.label) ref.insert(f.entity_id);
    if (f.score >= th) hyp.insert(f.entity_id);
  }
  long miss = 0, fa = 0, conf = 0, total = 0;
  for (const auto& [key, rh] : sets) {
    const auto& [ref, hyp] = rh;
    std::vector<std::string> only_ref, only_hyp;
    std::set_difference(ref.begin(), ref.end(), hyp.begin(), hyp.end(), std::back_inserter(only_ref));
    std::set_difference(hyp.begin(), hyp.end(), ref.begin(), ref.end(), std::back_inserter(only_hyp));
    const long paired = static_cast<long>(std::min(only_ref.size(), only_hyp.size()));
    conf += paired;
    miss += static_cast<long>(only_ref.size()) - paired;
    fa += static_cast<long>(only_hyp.size()) - paired;
    total += static_cast<long>(ref.size());
  }
  metrics::DerResult r;
  r.reference_frames = total;
  r.missed = static_cast<double>(miss) / total;
  r.false_alarm = static_cast<double>(fa) / total;
  r.confusion = static_cast<double>(conf) / total;
  r.der = r.missed + r.false_alarm + r.confusion;
  return r;
}

// AP / AUROC / F1 / DER against the oracles on random small instances with
// frequent score ties.
inline CheckResult check_metric_oracles(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0;
  int der_identity_failures = 0;
  int done = 0;
  while (done < instances) {
    const int n = 1 + static_cast<int>(rng() % 12);
    const int levels = 2 + static_cast<int>(rng() % 6);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> l(static_cast<std::size_t>(n));
    std::vector<metrics::ScoredFrame> frames;
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / (levels - 1);
      l[i] = static_cast<int>(rng() % 2);
      metrics::ScoredFrame f;
      f.scene_id = "s" + std::to_string(rng() % 2);
      f.entity_id = "e" + std::to_string(i % 3);
      f.frame_index = i / 3;
      f.score = s[i];
      f.label = l[i];
      frames.push_back(f);
    }
    const int pos = std::accumulate(l.begin(), l.end(), 0);
    if (pos == 0 || pos == n) continue;
    ++done;
    worst = std::max(worst, std::abs(metrics::average_precision(s, l) - ap_oracle(s, l)));
    worst = std::max(worst, std::abs(metrics::auroc(s, l) - auroc_oracle(s, l)));
    const double th = static_cast<double>(rng() % levels) / (levels - 1);
    worst = std::max(worst, std::abs(metrics::f1(s, l, th) - f1_oracle(s, l, th)));
    const auto d = metrics::der(frames, th);
    const auto o = der_oracle(frames, th);
    worst = std::max({worst, std::abs(d.missed - o.missed), std::abs(d.false_alarm - o.false_alarm),
                      std::abs(d.confusion - o.confusion)});
    if (d.der != d.missed + d.false_alarm + d.confusion || d.missed < 0 || d.false_alarm < 0 || d.confusion < 0) {
      ++der_identity_failures;
    }
  }
  return {worst <= 1e-10 && der_identity_failures == 0, worst,
          std::to_string(done) + " instances, max oracle diff " + sci(worst) + ", DER identity failures " +
              std::to_string(der_identity_failures)};
}

inline ForwardOutput<double> fixed_logits(int n, int t, const std::vector<double>& v, const std::vector<double>& av) {
  ForwardOutput<double> out;
  out.v_logits = nn::Var<double>::constant(nn::Tensor<double>({n * t, 1}, v));
  out.av_logits = nn::Var<double>::constant(nn::Tensor<double>({n * t, 1}, av));
  return out;
}

// Constant 0.5 predictions give ln 2 per term; saturated correct
// predictions give a total below 1e-5.
inline CheckResult check_loss_analytics(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto cfg = tiny_config();
  double worst_ln2 = 0, worst_perfect = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 4, t = 3 + trial % 5;
    const auto in = random_input<double>(n, t, cfg, rng);
    const std::size_t rows = static_cast<std::size_t>(n) * t;
    const auto half = losses::multi_candidate_losses(fixed_logits(n, t, std::vector<double>(rows, 0.0),
                                                                  std::vector<double>(rows, 0.0)),
                                                     in);
    const auto la = losses::audio_loss(nn::Var<double>::constant(nn::Tensor<double>({t, 1}, 0.0)), in);
    worst_ln2 = std::max({worst_ln2, std::abs(half.values.l_v - std::log(2.0)),
                          std::abs(half.values.l_av - std::log(2.0)), std::abs(la.value()[0] - std::log(2.0))});
    std::vector<double> v(rows), av(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      v[r] = in.labels_v[r] > 0.5 ? 30.0 : -30.0;
      av[r] = in.labels_av[r] > 0.5 ? 30.0 : -30.0;
    }
    const auto targets = losses::audio_targets(in);
    std::vector<double> a(static_cast<std::size_t>(t));
    for (int k = 0; k < t; ++k) a[k] = targets[k] > 0.5 ? 30.0 : -30.0;
    const auto perfect = losses::multi_candidate_losses(fixed_logits(n, t, v, av), in);
    const auto pa = losses::audio_loss(nn::Var<double>::constant(nn::Tensor<double>({t, 1}, a)), in);
    worst_perfect = std::max(worst_perfect, perfect.values.total + pa.value()[0]);
  }
  return {worst_ln2 <= 1e-9 && worst_perfect < 1e-5, std::max(worst_ln2, worst_perfect),
          "max |L - ln 2| " + sci(worst_ln2) + ", max perfect total " + sci(worst_perfect)};
}

}  // namespace unicon::testing
