#include "unicon/model.hpp"

#include "unicon/error.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <numeric>

namespace unicon {

using nn::Tensor;
using nn::Var;

template <typename S>
void SegmentInput<S>::validate() const {
  const std::size_t rows = static_cast<std::size_t>(candidates) * frames;
  if (candidates < 1 || frames < 1) throw InputError("segment needs at least one candidate and one frame");
  if (present.size() != rows || specs.size() != rows) throw InputError("segment: presence/spec size mismatch");
  if (faces.rank() != 4 || static_cast<std::size_t>(faces.rows()) != rows) {
    throw InputError("segment: faces must be [N*T, 3, s, s], got " + nn::shape_str(faces.shape));
  }
  if (mfcc.rank() != 4 || mfcc.rows() != frames) throw InputError("segment: mfcc must be [T, 1, 13, F]");
  if (!labels_v.empty() && labels_v.size() != rows) throw InputError("segment: labels_v size mismatch");
  if (!labels_av.empty() && labels_av.size() != rows) throw InputError("segment: labels_av size mismatch");
  if (!labels_audio.empty() && labels_audio.size() != static_cast<std::size_t>(frames)) {
    throw InputError("segment: labels_audio size mismatch");
  }
}

template <typename S>
std::vector<int> canonical_ranks(const SegmentInput<S>& input) {
  const int n = input.candidates;
  const int t_len = input.frames;
  const std::size_t per_row = input.faces.size() / std::max<std::size_t>(1, input.faces.rows());
  std::vector<std::vector<double>> keys(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& key = keys[static_cast<std::size_t>(i)];
    int first = t_len, last = -1;
    for (int t = 0; t < t_len; ++t) {
      if (input.is_present(i, t)) {
        first = std::min(first, t);
        last = t;
      }
    }
    key.push_back(first);
    key.push_back(last);
    for (int t = 0; t < t_len; ++t) {
      const auto& sp = input.specs[static_cast<std::size_t>(i) * t_len + t];
      const bool here = input.is_present(i, t);
      key.push_back(here ? sp.cx : -1.0);
      key.push_back(here ? sp.cy : -1.0);
      key.push_back(here ? sp.radius : -1.0);
    }
    for (int t = 0; t < t_len; ++t) {
      const S* row = input.faces.ptr() + (static_cast<std::size_t>(i) * t_len + t) * per_row;
      double sum = 0.0;
      for (std::size_t k = 0; k < per_row; ++k) sum += static_cast<double>(row[k]) * static_cast<double>(k % 7 + 1);
      key.push_back(sum);
    }
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)]; });
  std::vector<int> rank(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r;
  return rank;
}

std::vector<CandidatePair> canonical_pairs(const std::vector<int>& ranks) {
  const int n = static_cast<int>(ranks.size());
  std::vector<int> by_rank(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) by_rank[static_cast<std::size_t>(ranks[static_cast<std::size_t>(i)])] = i;
  std::vector<CandidatePair> pairs;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) pairs.push_back({by_rank[static_cast<std::size_t>(a)], by_rank[static_cast<std::size_t>(b)]});
  }
  return pairs;
}

template <typename S>
UniconModel<S>::UniconModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& e = config_.encoder;
  const auto& r = config_.relational;
  const int d = e.reduced_dim;
  const int hd = r.hidden_dim;
  const int sp = config_.spatial ? e.spatial_dim : 0;
  const int backend_hidden = r.temporal == TemporalKind::kBiGru ? r.gru_hidden : hd;

  face_ = encoders::FaceEncoder<S>(params_, "face", e);
  audio_ = encoders::AudioEncoder<S>(params_, "audio", e);
  if (config_.spatial) spatial_ = encoders::HeadMapEncoder<S>(params_, "spatial", e.spatial_dim);

  alpha_net_ = nn::TemporalBackend<S>(params_, "alpha.backend", r.temporal, d + sp, backend_hidden);
  alpha_out_ = nn::Linear<S>(params_, "alpha.out", alpha_net_.out_dim, hd);
  if (config_.relational_context) {
    beta_net_ = nn::TemporalBackend<S>(params_, "beta.backend", r.temporal, 2 * d + sp, backend_hidden);
    beta_out_ = nn::Linear<S>(params_, "beta.out", beta_net_.out_dim, hd);
  }
  eta_net_ = nn::TemporalBackend<S>(params_, "eta.backend", r.temporal, 2 * d, backend_hidden);
  eta_out_ = nn::Linear<S>(params_, "eta.out", eta_net_.out_dim, hd);
  const int rav_in = config_.effective_suppression() == Suppression::kNone ? hd : 2 * hd;
  rav_fc1_ = nn::Linear<S>(params_, "rav.fc1", rav_in, hd);
  rav_fc2_ = nn::Linear<S>(params_, "rav.fc2", hd, hd);

  av_pred_ = nn::Linear<S>(params_, "av_pred", 2 * hd, 1);
  v_aux_ = nn::Linear<S>(params_, "v_aux", hd, 1);
  a_aux_ = nn::Linear<S>(params_, "a_aux", d, 1);
}

namespace {

template <typename S>
std::vector<int> frame_index_rows(int n, int t_len) {
  std::vector<int> rows(static_cast<std::size_t>(n) * t_len);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < t_len; ++t) rows[static_cast<std::size_t>(i) * t_len + t] = t;
  }
  return rows;
}

// k-stack rows per candidate, replicate-padded at the candidate's first and
// last visible frame.
template <typename S>
std::vector<int> face_stack_rows(const SegmentInput<S>& input, int k) {
  const int t_len = input.frames;
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(input.candidates) * t_len * k);
  for (int i = 0; i < input.candidates; ++i) {
    int lo = t_len, hi = -1;
    for (int t = 0; t < t_len; ++t) {
      if (input.is_present(i, t)) {
        lo = std::min(lo, t);
        hi = t;
      }
    }
    if (hi < 0) lo = 0, hi = t_len - 1;
    const auto r = encoders::stack_rows(i * t_len, t_len, lo, hi, k);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

// Head-map cache key: subject spec, object spec, then the sorted specs of
// every other visible candidate. Identical keys render identical maps.
std::vector<double> map_key(const headmap::GaussianSpec& s, const headmap::GaussianSpec& o,
                            std::vector<std::array<double, 3>> others) {
  std::sort(others.begin(), others.end());
  std::vector<double> key = {s.cx, s.cy, s.radius, o.cx, o.cy, o.radius};
  for (const auto& c : others) key.insert(key.end(), c.begin(), c.end());
  return key;
}

}  // namespace

template <typename S>
Encoded<S> UniconModel<S>::encode(const SegmentInput<S>& input, bool training) const {
  input.validate();
  const int n = input.candidates;
  const int t_len = input.frames;
  const int k = config_.encoder.stack_size;
  Encoded<S> enc;

  const auto rows = face_stack_rows(input, k);
  enc.v = face_.encode_stacks(Var<S>::constant(input.faces), rows, training);
  enc.a = audio_(Var<S>::constant(input.mfcc), training);
  enc.pairs = config_.relational_context ? canonical_pairs(canonical_ranks(input)) : std::vector<CandidatePair>{};

  if (!config_.spatial) return enc;

  std::map<std::vector<double>, int> cache;
  std::vector<headmap::HeadMap> maps;
  auto map_index = [&](int t, int subject, int object) {
    std::vector<headmap::GaussianSpec> local;
    std::vector<std::array<double, 3>> others;
    int si = -1, oi = -1;
    for (int c = 0; c < n; ++c) {
      if (!input.is_present(c, t)) continue;
      const auto& sp = input.specs[static_cast<std::size_t>(c) * t_len + t];
      if (c == subject) si = static_cast<int>(local.size());
      if (c == object) oi = static_cast<int>(local.size());
      if (c != subject && c != object) others.push_back({sp.cx, sp.cy, sp.radius});
      local.push_back(sp);
    }
    auto key = map_key(local[static_cast<std::size_t>(si)], local[static_cast<std::size_t>(oi)], std::move(others));
    auto [it, inserted] = cache.emplace(std::move(key), static_cast<int>(maps.size()));
    if (inserted) maps.push_back(headmap::build_pair_map(si, oi, local));
    return it->second;
  };

  std::vector<int> self_rows(static_cast<std::size_t>(n) * t_len, -1);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < t_len; ++t) {
      if (input.is_present(i, t)) self_rows[static_cast<std::size_t>(i) * t_len + t] = map_index(t, i, i);
    }
  }
  std::vector<int> pair_rows(enc.pairs.size() * static_cast<std::size_t>(t_len), -1);
  for (std::size_t p = 0; p < enc.pairs.size(); ++p) {
    const auto [s, o] = enc.pairs[p];
    for (int t = 0; t < t_len; ++t) {
      if (input.is_present(s, t) && input.is_present(o, t)) pair_rows[p * t_len + t] = map_index(t, s, o);
    }
  }
  if (maps.empty()) {
    enc.h_self = Var<S>::constant(Tensor<S>({n * t_len, config_.encoder.spatial_dim}));
    enc.h_pair = Var<S>::constant(Tensor<S>({static_cast<int>(enc.pairs.size()) * t_len, config_.encoder.spatial_dim}));
    return enc;
  }
  const Var<S> unique = spatial_(Var<S>::constant(encoders::headmap_tensor<S>(maps)));
  enc.h_self = nn::gather_rows(unique, std::span<const int>(self_rows));
  enc.h_pair = nn::gather_rows(unique, std::span<const int>(pair_rows));
  return enc;
}

template <typename S>
Var<S> UniconModel<S>::alpha(const Var<S>& v, const Var<S>& h_self, int n, int t, bool training) const {
  if (v.rows() != n * t) throw InputError("alpha: expected N*T rows");
  Var<S> x = v;
  if (config_.spatial) {
    if (!h_self.defined() || h_self.rows() != v.rows()) throw InputError("alpha: spatial input length mismatch");
    x = nn::concat_cols<S>({v, h_self});
  }
  return alpha_out_(alpha_net_(x, n, t, training));
}

template <typename S>
Var<S> UniconModel<S>::beta(const Var<S>& v_subject, const Var<S>& v_object, const Var<S>& h_pair, int p, int t,
                            bool training) const {
  if (!config_.relational_context) throw InputError("beta: relational context is disabled");
  if (v_subject.rows() != p * t || v_object.rows() != p * t) throw InputError("beta: expected P*T rows");
  std::vector<Var<S>> parts = {v_subject, v_object};
  if (config_.spatial) {
    if (!h_pair.defined() || h_pair.rows() != p * t) throw InputError("beta: pair map length mismatch");
    parts.push_back(h_pair);
  }
  return beta_out_(beta_net_(nn::concat_cols(parts), p, t, training));
}

template <typename S>
Var<S> UniconModel<S>::pair_feature(const Encoded<S>& enc, int n, int t, int i, int j, bool training) const {
  if (i == j) throw InputError("beta is only defined for i != j");
  if (i < 0 || j < 0 || i >= n || j >= n) throw InputError("beta: candidate index out of range");
  for (std::size_t p = 0; p < enc.pairs.size(); ++p) {
    const auto [s, o] = enc.pairs[p];
    if (!((s == i && o == j) || (s == j && o == i))) continue;
    std::vector<int> srows(static_cast<std::size_t>(t)), orows(static_cast<std::size_t>(t)),
        prows(static_cast<std::size_t>(t));
    for (int f = 0; f < t; ++f) {
      srows[static_cast<std::size_t>(f)] = s * t + f;
      orows[static_cast<std::size_t>(f)] = o * t + f;
      prows[static_cast<std::size_t>(f)] = static_cast<int>(p) * t + f;
    }
    const Var<S> h = config_.spatial ? nn::gather_rows(enc.h_pair, std::span<const int>(prows)) : Var<S>();
    const Var<S> raw = beta(nn::gather_rows(enc.v, std::span<const int>(srows)),
                            nn::gather_rows(enc.v, std::span<const int>(orows)), h, 1, t, training);
    return s == i ? raw : nn::neg(raw);
  }
  throw InputError("beta: pair not found in encoded segment");
}

template <typename S>
Var<S> UniconModel<S>::visual_relational_context(const Encoded<S>& enc, const SegmentInput<S>& input, bool training,
                                                 ForwardStats* stats) const {
  const int n = input.candidates;
  const int t_len = input.frames;
  const Var<S> a_out = alpha(enc.v, enc.h_self, n, t_len, training);
  if (stats) stats->alpha_evals += n;
  if (!config_.relational_context) return a_out;

  const int p = static_cast<int>(enc.pairs.size());
  std::vector<Var<S>> stacked = {a_out};
  if (p > 0) {
    std::vector<int> srows, orows;
    srows.reserve(static_cast<std::size_t>(p) * t_len);
    orows.reserve(static_cast<std::size_t>(p) * t_len);
    for (const auto& pr : enc.pairs) {
      for (int t = 0; t < t_len; ++t) {
        srows.push_back(pr.first * t_len + t);
        orows.push_back(pr.second * t_len + t);
      }
    }
    stacked.push_back(beta(nn::gather_rows(enc.v, std::span<const int>(srows)),
                           nn::gather_rows(enc.v, std::span<const int>(orows)), enc.h_pair, p, t_len, training));
    if (stats) stats->beta_evals += p;
  }

  std::vector<int> count(static_cast<std::size_t>(t_len), 0);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < t_len; ++t) count[static_cast<std::size_t>(t)] += input.is_present(i, t);
  }
  std::vector<nn::RowTerm> terms;
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < t_len; ++t) {
      if (!input.is_present(i, t)) continue;
      terms.push_back({i * t_len + t, i * t_len + t, 1.0 / count[static_cast<std::size_t>(t)]});
    }
  }
  const int base = n * t_len;
  for (int q = 0; q < p; ++q) {
    const auto [s, o] = enc.pairs[static_cast<std::size_t>(q)];
    for (int t = 0; t < t_len; ++t) {
      if (!input.is_present(s, t) || !input.is_present(o, t)) continue;
      const double c = 1.0 / count[static_cast<std::size_t>(t)];
      const int row = base + q * t_len + t;
      terms.push_back({s * t_len + t, row, c});
      terms.push_back({o * t_len + t, row, -c});
    }
  }
  const Var<S> all = stacked.size() == 1 ? stacked[0] : nn::concat_rows(stacked);
  return nn::combine_rows(all, n * t_len, std::span<const nn::RowTerm>(terms));
}

template <typename S>
Var<S> UniconModel<S>::av_affinity(const Var<S>& v, const Var<S>& a, int n, int t, bool training) const {
  if (v.rows() != n * t || a.rows() != t) throw InputError("av_affinity: length mismatch");
  const auto rows = frame_index_rows<S>(n, t);
  const Var<S> a_rep = nn::gather_rows(a, std::span<const int>(rows));
  return eta_out_(eta_net_(nn::concat_cols<S>({v, a_rep}), n, t, training));
}

template <typename S>
Var<S> UniconModel<S>::suppression_pool(const Var<S>& eta, const SegmentInput<S>& input, Suppression mode) const {
  const int n = input.candidates;
  const int t_len = input.frames;
  if (n < 1) throw InputError("suppression_pool: no candidates");
  if (mode == Suppression::kNone) return Var<S>();
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    for (int i = 0; i < n; ++i) {
      if (input.is_present(i, t)) groups[static_cast<std::size_t>(t)].push_back(i * t_len + t);
    }
  }
  if (mode == Suppression::kMax) return nn::group_max(eta, groups);
  std::vector<nn::RowTerm> terms;
  for (int t = 0; t < t_len; ++t) {
    const auto& g = groups[static_cast<std::size_t>(t)];
    for (int row : g) terms.push_back({t, row, 1.0 / static_cast<double>(g.size())});
  }
  return nn::combine_rows(eta, t_len, std::span<const nn::RowTerm>(terms));
}

template <typename S>
Var<S> UniconModel<S>::av_relational_context(const Var<S>& eta, const Var<S>& eta_global, int n, int t) const {
  if (eta.rows() != n * t) throw InputError("av_relational_context: expected N*T rows");
  Var<S> x = eta;
  if (config_.effective_suppression() != Suppression::kNone) {
    if (!eta_global.defined() || eta_global.rows() != t || eta_global.cols() != eta.cols()) {
      throw InputError("av_relational_context: pooled feature shape mismatch");
    }
    const auto rows = frame_index_rows<S>(n, t);
    x = nn::concat_cols<S>({eta, nn::gather_rows(eta_global, std::span<const int>(rows))});
  }
  return rav_fc2_(nn::relu(rav_fc1_(x)));
}

template <typename S>
Var<S> UniconModel<S>::predict_logits(const Var<S>& r_v, const Var<S>& r_av) const {
  if (r_v.rows() != r_av.rows()) throw InputError("predict: R_V and R_AV row counts differ");
  return av_pred_(nn::concat_cols<S>({r_v, r_av}));
}

template <typename S>
ForwardOutput<S> UniconModel<S>::forward(const SegmentInput<S>& input, bool training) const {
  ForwardOutput<S> out;
  out.encoded = encode(input, training);
  const int n = input.candidates;
  const int t = input.frames;
  out.r_v = visual_relational_context(out.encoded, input, training, &out.stats);
  const Var<S> eta = av_affinity(out.encoded.v, out.encoded.a, n, t, training);
  const Var<S> pooled = suppression_pool(eta, input, config_.effective_suppression());
  out.r_av = av_relational_context(eta, pooled, n, t);
  out.av_logits = predict_logits(out.r_v, out.r_av);
  out.v_logits = visual_logits(out.r_v);
  return out;
}

template <typename S>
SingleOutput<S> UniconModel<S>::forward_single(const SegmentInput<S>& input, bool training) const {
  input.validate();
  const auto stack = face_stack_rows(input, config_.encoder.stack_size);
  const Var<S> v = face_.encode_stacks(Var<S>::constant(input.faces), stack, training);
  const Var<S> a = audio_(Var<S>::constant(input.mfcc), training);
  SingleOutput<S> out;
  out.v = v;
  out.a = a;
  const auto rows = frame_index_rows<S>(input.candidates, input.frames);
  out.v_logits = v_aux_(v);
  out.av_logits = av_pred_(nn::concat_cols<S>({nn::gather_rows(a, std::span<const int>(rows)), v}));
  out.a_logits = a_aux_(a);
  return out;
}

template struct SegmentInput<float>;
template struct SegmentInput<double>;
template std::vector<int> canonical_ranks<float>(const SegmentInput<float>&);
template std::vector<int> canonical_ranks<double>(const SegmentInput<double>&);
template class UniconModel<float>;
template class UniconModel<double>;

}  // namespace unicon
