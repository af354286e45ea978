#pragma once

// Multi-task binary cross-entropy objective. Absent (candidate, frame)
// entries are masked out of every mean.

#include "unicon/model.hpp"

#include <vector>

namespace unicon::losses {

struct LossBreakdown {
  double l_a = 0;
  double l_v = 0;
  double l_av = 0;
  double total = 0;
  bool has_audio_term = false;
};

template <typename S>
struct Loss {
  nn::Var<S> total;  // scalar to differentiate
  LossBreakdown values;
};

// Scalar BCE of a probability against a {0,1} target, probability clamped to
// [1e-7, 1 - 1e-7].
double bce(double prob, double target);

// Per-frame audio target: max over present candidates of labels_av, unless
// the segment carries explicit frame-level audio labels.
template <typename S>
std::vector<S> audio_targets(const SegmentInput<S>& input);

// Mean over frames of BCE(sigmoid(audio_logits), audio target).
template <typename S>
nn::Var<S> audio_loss(const nn::Var<S>& audio_logits, const SegmentInput<S>& input);

// L_v + L_av + L_a from the single-candidate (stage 1) outputs.
template <typename S>
Loss<S> single_candidate_losses(const SingleOutput<S>& out, const SegmentInput<S>& input);

// L_v + L_av over all present candidates and frames (stage 2).
template <typename S>
Loss<S> multi_candidate_losses(const ForwardOutput<S>& out, const SegmentInput<S>& input);

}  // namespace unicon::losses
