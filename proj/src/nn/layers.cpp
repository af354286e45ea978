#include "unicon/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace unicon::nn {

template <typename S>
Var<S> ParamStore<S>::add(const std::string& name, Shape shape, ParamKind kind, int fan_in, S fill) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor<S> value(std::move(shape), fill);
  Var<S> v = kind == ParamKind::kBuffer ? Var<S>::constant(std::move(value)) : Var<S>::leaf(std::move(value));
  index_[name] = entries_.size();
  entries_.push_back({name, v, kind, fan_in, kind != ParamKind::kBuffer});
  return v;
}

template <typename S>
Var<S> ParamStore<S>::weight(const std::string& name, Shape shape, int fan_in) {
  return add(name, std::move(shape), ParamKind::kWeight, fan_in, S(0));
}
template <typename S>
Var<S> ParamStore<S>::bias(const std::string& name, int n) {
  return add(name, {n}, ParamKind::kBias, 0, S(0));
}
template <typename S>
Var<S> ParamStore<S>::gamma(const std::string& name, int n) {
  return add(name, {n}, ParamKind::kGamma, 0, S(1));
}
template <typename S>
Var<S> ParamStore<S>::beta(const std::string& name, int n) {
  return add(name, {n}, ParamKind::kBeta, 0, S(0));
}
template <typename S>
Var<S> ParamStore<S>::buffer(const std::string& name, Shape shape, S fill) {
  buffer_fill_[name] = fill;
  return add(name, std::move(shape), ParamKind::kBuffer, 0, fill);
}

template <typename S>
void ParamStore<S>::init(std::mt19937_64& rng) {
  for (auto& e : entries_) {
    auto& t = e.var.mutable_value();
    switch (e.kind) {
      case ParamKind::kWeight: {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(1, e.fan_in)));
        for (auto& v : t.data) v = static_cast<S>(dist(rng));
        break;
      }
      case ParamKind::kBias:
      case ParamKind::kBeta:
        std::fill(t.data.begin(), t.data.end(), S(0));
        break;
      case ParamKind::kGamma:
        std::fill(t.data.begin(), t.data.end(), S(1));
        break;
      case ParamKind::kBuffer:
        std::fill(t.data.begin(), t.data.end(), buffer_fill_.at(e.name));
        break;
    }
  }
}

template <typename S>
void ParamStore<S>::zero_grad() {
  for (auto& e : entries_) {
    if (e.kind == ParamKind::kBuffer) continue;
    auto& g = e.var.grad();
    std::fill(g.data.begin(), g.data.end(), S(0));
  }
}

template <typename S>
void ParamStore<S>::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& e : entries_) {
    if (e.kind != ParamKind::kBuffer && e.name.rfind(prefix, 0) == 0) e.trainable = trainable;
  }
}

template <typename S>
const ParamEntry<S>* ParamStore<S>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

template <typename S>
ParamEntry<S>* ParamStore<S>::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

template <typename S>
std::size_t ParamStore<S>::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.var.value().size();
  }
  return n;
}

template <typename S>
Linear<S>::Linear(ParamStore<S>& store, const std::string& name, int in_features, int out_features, bool with_bias)
    : in(in_features), out(out_features) {
  weight = store.weight(name + ".weight", {out_features, in_features}, in_features);
  if (with_bias) bias = store.bias(name + ".bias", out_features);
}

template <typename S>
Conv2d<S>::Conv2d(ParamStore<S>& store, const std::string& name, int in_ch, int out_ch, int kernel, int stride_,
                  int pad_, bool with_bias)
    : stride(stride_), pad(pad_) {
  weight = store.weight(name + ".weight", {out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel);
  if (with_bias) bias = store.bias(name + ".bias", out_ch);
}

template <typename S>
BatchNorm<S>::BatchNorm(ParamStore<S>& store, const std::string& name, int channels) {
  gamma = store.gamma(name + ".gamma", channels);
  beta = store.beta(name + ".beta", channels);
  running_mean = store.buffer(name + ".running_mean", {channels}, S(0));
  running_var = store.buffer(name + ".running_var", {channels}, S(1));
}

template <typename S>
Var<S> BatchNorm<S>::operator()(const Var<S>& x, bool training) const {
  // Running statistics live in the store; the handles share the tensors.
  auto mean = running_mean;
  auto var = running_var;
  return batch_norm(x, gamma, beta, mean.mutable_value(), var.mutable_value(), training);
}

template <typename S>
Gru<S>::Gru(ParamStore<S>& store, const std::string& name, int in_features, int hidden_size)
    : input_proj(store, name + ".input", in_features, 3 * hidden_size),
      hidden_proj(store, name + ".hidden", hidden_size, 3 * hidden_size),
      hidden(hidden_size) {}

template <typename S>
Var<S> Gru<S>::run(const Var<S>& x, int batch, int steps, bool reverse) const {
  if (x.rows() != batch * steps) throw std::invalid_argument("Gru: row count must equal batch * steps");
  const int h = hidden;
  Var<S> xi = input_proj(x);
  Var<S> state = Var<S>::constant(Tensor<S>({batch, h}));
  std::vector<Var<S>> outputs(static_cast<std::size_t>(steps));
  std::vector<int> rows(static_cast<std::size_t>(batch));
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    for (int b = 0; b < batch; ++b) rows[b] = b * steps + t;
    Var<S> xt = gather_rows(xi, std::span<const int>(rows));
    Var<S> ht = hidden_proj(state);
    Var<S> r = sigmoid(add(slice_cols(xt, 0, h), slice_cols(ht, 0, h)));
    Var<S> z = sigmoid(add(slice_cols(xt, h, h), slice_cols(ht, h, h)));
    Var<S> n = tanh(add(slice_cols(xt, 2 * h, h), mul(r, slice_cols(ht, 2 * h, h))));
    state = add(n, mul(z, sub(state, n)));
    outputs[t] = state;
  }
  // outputs are stacked time-major (t * batch + b); reorder to b * steps + t.
  Var<S> stacked = concat_rows(outputs);
  std::vector<int> order(static_cast<std::size_t>(batch) * steps);
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < steps; ++t) order[b * steps + t] = t * batch + b;
  }
  return gather_rows(stacked, std::span<const int>(order));
}

template <typename S>
Var<S> temporal_window3(const Var<S>& x, int batch, int steps) {
  if (x.rows() != batch * steps) throw std::invalid_argument("temporal_window3: row count must equal batch * steps");
  std::vector<int> prev(static_cast<std::size_t>(batch) * steps), next(prev.size());
  for (int b = 0; b < batch; ++b) {
    for (int t = 0; t < steps; ++t) {
      prev[b * steps + t] = t > 0 ? b * steps + t - 1 : -1;
      next[b * steps + t] = t + 1 < steps ? b * steps + t + 1 : -1;
    }
  }
  return concat_cols<S>({gather_rows(x, std::span<const int>(prev)), x, gather_rows(x, std::span<const int>(next))});
}

template <typename S>
TemporalBackend<S>::TemporalBackend(ParamStore<S>& store, const std::string& name, TemporalKind k, int in_features,
                                    int hidden)
    : kind(k) {
  if (kind == TemporalKind::kConv1d) {
    conv1 = Linear<S>(store, name + ".conv1", 3 * in_features, hidden);
    bn1 = BatchNorm<S>(store, name + ".bn1", hidden);
    conv2 = Linear<S>(store, name + ".conv2", 3 * hidden, hidden);
    bn2 = BatchNorm<S>(store, name + ".bn2", hidden);
    out_dim = hidden;
  } else {
    forward_gru = Gru<S>(store, name + ".gru_fwd", in_features, hidden);
    backward_gru = Gru<S>(store, name + ".gru_bwd", in_features, hidden);
    out_dim = 2 * hidden;
  }
}

template <typename S>
Var<S> TemporalBackend<S>::operator()(const Var<S>& x, int batch, int steps, bool training) const {
  if (kind == TemporalKind::kConv1d) {
    Var<S> y = relu(bn1(conv1(temporal_window3(x, batch, steps)), training));
    return relu(bn2(conv2(temporal_window3(y, batch, steps)), training));
  }
  return concat_cols<S>({forward_gru.run(x, batch, steps, false), backward_gru.run(x, batch, steps, true)});
}

template class ParamStore<float>;
template class ParamStore<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct BatchNorm<float>;
template struct BatchNorm<double>;
template struct Gru<float>;
template struct Gru<double>;
template struct TemporalBackend<float>;
template struct TemporalBackend<double>;
template Var<float> temporal_window3<float>(const Var<float>&, int, int);
template Var<double> temporal_window3<double>(const Var<double>&, int, int);

}  // namespace unicon::nn
