#include "unicon/losses.hpp"

#include "unicon/error.hpp"

#include <algorithm>
#include <cmath>

namespace unicon::losses {

using nn::Var;

double bce(double prob, double target) {
  const double p = std::clamp(prob, nn::kProbEpsilon, 1.0 - nn::kProbEpsilon);
  return -target * std::log(p) - (1.0 - target) * std::log(1.0 - p);
}

namespace {

template <typename S>
std::vector<S> presence_weights(const SegmentInput<S>& input) {
  std::vector<S> w(input.present.size());
  std::transform(input.present.begin(), input.present.end(), w.begin(), [](std::uint8_t p) { return S(p ? 1 : 0); });
  return w;
}

template <typename S>
double scalar(const Var<S>& v) {
  return static_cast<double>(v.value()[0]);
}

}  // namespace

template <typename S>
std::vector<S> audio_targets(const SegmentInput<S>& input) {
  if (!input.labels_audio.empty()) return input.labels_audio;
  std::vector<S> y(static_cast<std::size_t>(input.frames), S(0));
  for (int i = 0; i < input.candidates; ++i) {
    for (int t = 0; t < input.frames; ++t) {
      if (input.is_present(i, t)) {
        y[t] = std::max(y[t], input.labels_av[static_cast<std::size_t>(i) * input.frames + t]);
      }
    }
  }
  return y;
}

template <typename S>
Var<S> audio_loss(const Var<S>& audio_logits, const SegmentInput<S>& input) {
  if (audio_logits.rows() != input.frames) throw InputError("audio_loss: expected one logit per frame");
  const auto target = audio_targets(input);
  const std::vector<S> ones(target.size(), S(1));
  return nn::bce(nn::sigmoid(audio_logits), std::span<const S>(target), std::span<const S>(ones));
}

template <typename S>
Loss<S> single_candidate_losses(const SingleOutput<S>& out, const SegmentInput<S>& input) {
  const auto w = presence_weights(input);
  const Var<S> l_v = nn::bce(nn::sigmoid(out.v_logits), std::span<const S>(input.labels_v), std::span<const S>(w));
  const Var<S> l_av = nn::bce(nn::sigmoid(out.av_logits), std::span<const S>(input.labels_av), std::span<const S>(w));
  const Var<S> l_a = audio_loss(out.a_logits, input);
  Loss<S> loss;
  loss.total = nn::add(nn::add(l_a, l_v), l_av);
  loss.values.l_a = scalar(l_a);
  loss.values.l_v = scalar(l_v);
  loss.values.l_av = scalar(l_av);
  loss.values.total = loss.values.l_a + loss.values.l_v + loss.values.l_av;
  loss.values.has_audio_term = true;
  return loss;
}

template <typename S>
Loss<S> multi_candidate_losses(const ForwardOutput<S>& out, const SegmentInput<S>& input) {
  const auto w = presence_weights(input);
  const Var<S> l_v = nn::bce(nn::sigmoid(out.v_logits), std::span<const S>(input.labels_v), std::span<const S>(w));
  const Var<S> l_av = nn::bce(nn::sigmoid(out.av_logits), std::span<const S>(input.labels_av), std::span<const S>(w));
  Loss<S> loss;
  loss.total = nn::add(l_v, l_av);
  loss.values.l_v = scalar(l_v);
  loss.values.l_av = scalar(l_av);
  loss.values.total = loss.values.l_v + loss.values.l_av;
  return loss;
}

#define UNICON_INSTANTIATE_LOSSES(S)                                                          \
  template std::vector<S> audio_targets<S>(const SegmentInput<S>&);                           \
  template Var<S> audio_loss<S>(const Var<S>&, const SegmentInput<S>&);                       \
  template Loss<S> single_candidate_losses<S>(const SingleOutput<S>&, const SegmentInput<S>&); \
  template Loss<S> multi_candidate_losses<S>(const ForwardOutput<S>&, const SegmentInput<S>&);

UNICON_INSTANTIATE_LOSSES(float)
UNICON_INSTANTIATE_LOSSES(double)

}  // namespace unicon::losses
