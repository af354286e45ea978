#pragma once

// UniCon model: encoders, spatial context, visual and audio-visual
// relational context, temporal backends and the prediction heads.
//
// Batched layout: candidate i at frame t is row i * T + t of every
// per-candidate tensor; pair p at frame t is row p * T + t.

#include "unicon/config.hpp"
#include "unicon/encoders.hpp"
#include "unicon/headmap.hpp"
#include "unicon/nn/layers.hpp"

#include <cstdint>
#include <vector>

namespace unicon {

template <typename S>
struct SegmentInput {
  int candidates = 0;
  int frames = 0;
  std::vector<std::uint8_t> present;           // [N*T]
  nn::Tensor<S> faces;                          // [N*T, 3, s, s]
  nn::Tensor<S> mfcc;                           // [T, 1, 13, F]
  std::vector<headmap::GaussianSpec> specs;     // [N*T], used where present
  std::vector<S> labels_v;                      // [N*T]
  std::vector<S> labels_av;                     // [N*T]
  // Frame-level "anyone speaking audibly" target [T]; when empty it is the
  // max of labels_av over the candidates in the segment.
  std::vector<S> labels_audio;

  bool is_present(int i, int t) const { return present[static_cast<std::size_t>(i) * frames + t] != 0; }
  // Throws InputError when sizes disagree.
  void validate() const;
};

// Raw network evaluations in one R_V forward pass: alpha runs once per
// candidate, beta once per unordered pair.
struct ForwardStats {
  int alpha_evals = 0;
  int beta_evals = 0;
  int raw_evals() const { return alpha_evals + beta_evals; }
};

struct CandidatePair {
  int first;   // evaluated as subject
  int second;  // evaluated as object
};

template <typename S>
struct Encoded {
  nn::Var<S> v;       // [N*T, d']
  nn::Var<S> a;       // [T, d']
  nn::Var<S> h_self;  // [N*T, spatial_dim] (undefined without spatial context)
  nn::Var<S> h_pair;  // [P*T, spatial_dim] in the order of pairs
  std::vector<CandidatePair> pairs;
};

template <typename S>
struct ForwardOutput {
  Encoded<S> encoded;
  nn::Var<S> r_v;        // [N*T, D]
  nn::Var<S> r_av;       // [N*T, D]
  nn::Var<S> av_logits;  // [N*T, 1]
  nn::Var<S> v_logits;   // [N*T, 1]
  ForwardStats stats;
};

template <typename S>
struct SingleOutput {
  nn::Var<S> v;
  nn::Var<S> a;
  nn::Var<S> v_logits;   // V_aux(v)
  nn::Var<S> av_logits;  // AV_pred(a + v concatenated)
  nn::Var<S> a_logits;   // A_aux(a), [T, 1]
};

// Orders candidates by a key computed from their own inputs (presence span,
// box geometry, pixel content), so the orientation chosen for each pair
// does not depend on how candidates happen to be indexed. Returns rank[i].
template <typename S>
std::vector<int> canonical_ranks(const SegmentInput<S>& input);

// Unordered pairs (i, j) oriented from lower to higher canonical rank.
std::vector<CandidatePair> canonical_pairs(const std::vector<int>& ranks);

template <typename S>
class UniconModel {
 public:
  explicit UniconModel(const ModelConfig& config);
  UniconModel(const UniconModel&) = delete;
  UniconModel& operator=(const UniconModel&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParamStore<S>& params() { return params_; }
  const nn::ParamStore<S>& params() const { return params_; }
  int hidden_dim() const { return config_.relational.hidden_dim; }

  Encoded<S> encode(const SegmentInput<S>& input, bool training) const;

  // alpha over N sequences of T frames: input [N*T, d' (+ spatial)].
  nn::Var<S> alpha(const nn::Var<S>& v, const nn::Var<S>& h_self, int n, int t, bool training) const;
  // Raw beta network on P oriented pairs: inputs [P*T, .] each.
  nn::Var<S> beta(const nn::Var<S>& v_subject, const nn::Var<S>& v_object, const nn::Var<S>& h_pair, int p, int t,
                  bool training) const;
  // beta_ij for one ordered pair i != j of an encoded segment: computed for
  // the canonical orientation, negated for the reverse one.
  nn::Var<S> pair_feature(const Encoded<S>& enc, int n, int t, int i, int j, bool training) const;

  // R_V,i = (1/N(t)) [alpha_i + sum_j beta_ij] over present candidates, or
  // alpha_i alone without relational context.
  nn::Var<S> visual_relational_context(const Encoded<S>& enc, const SegmentInput<S>& input, bool training,
                                       ForwardStats* stats) const;
  nn::Var<S> av_affinity(const nn::Var<S>& v, const nn::Var<S>& a, int n, int t, bool training) const;
  // Pools eta over present candidates per frame -> [T, D].
  nn::Var<S> suppression_pool(const nn::Var<S>& eta, const SegmentInput<S>& input, Suppression mode) const;
  // Two FC layers on eta_i (+ eta_global when defined) -> [N*T, D].
  nn::Var<S> av_relational_context(const nn::Var<S>& eta, const nn::Var<S>& eta_global, int n, int t) const;

  nn::Var<S> predict_logits(const nn::Var<S>& r_v, const nn::Var<S>& r_av) const;
  nn::Var<S> visual_logits(const nn::Var<S>& r_v) const { return v_aux_(r_v); }
  nn::Var<S> audio_logits(const nn::Var<S>& a) const { return a_aux_(a); }

  // Multi-candidate forward pass (stage 2 and inference).
  ForwardOutput<S> forward(const SegmentInput<S>& input, bool training) const;
  // Single-candidate pass without relational context (stage 1).
  SingleOutput<S> forward_single(const SegmentInput<S>& input, bool training) const;

 private:
  ModelConfig config_;
  nn::ParamStore<S> params_;
  encoders::FaceEncoder<S> face_;
  encoders::AudioEncoder<S> audio_;
  encoders::HeadMapEncoder<S> spatial_;
  nn::TemporalBackend<S> alpha_net_, beta_net_, eta_net_;
  nn::Linear<S> alpha_out_, beta_out_, eta_out_;
  nn::Linear<S> rav_fc1_, rav_fc2_;
  nn::Linear<S> av_pred_, v_aux_, a_aux_;
};

}  // namespace unicon
