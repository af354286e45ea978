#pragma once

#include "unicon/nn/ops.hpp"
#include "unicon/nn/tensor.hpp"

#include <map>
#include <random>
#include <string>
#include <vector>

namespace unicon::nn {

enum class ParamKind { kWeight, kBias, kGamma, kBeta, kBuffer };

template <typename S>
struct ParamEntry {
  std::string name;
  Var<S> var;
  ParamKind kind;
  int fan_in = 0;
  bool trainable = true;
};

// Owns every parameter and buffer of a model, keyed by module path
// ("alpha.backend.conv1.weight"). Insertion order is stable and defines the
// order used for initialization, optimization and serialization.
template <typename S>
class ParamStore {
 public:
  Var<S> weight(const std::string& name, Shape shape, int fan_in);
  Var<S> bias(const std::string& name, int n);
  Var<S> gamma(const std::string& name, int n);
  Var<S> beta(const std::string& name, int n);
  Var<S> buffer(const std::string& name, Shape shape, S fill);

  // He (fan-in scaled normal) init for weights, zeros for biases/betas,
  // ones for gammas. Buffers are reset to their fill value.
  void init(std::mt19937_64& rng);
  void zero_grad();
  // Marks every entry whose name starts with prefix as (non-)trainable.
  void set_trainable(const std::string& prefix, bool trainable);

  std::vector<ParamEntry<S>>& entries() { return entries_; }
  const std::vector<ParamEntry<S>>& entries() const { return entries_; }
  const ParamEntry<S>* find(const std::string& name) const;
  ParamEntry<S>* find(const std::string& name);
  std::size_t trainable_count() const;

 private:
  Var<S> add(const std::string& name, Shape shape, ParamKind kind, int fan_in, S fill);

  std::vector<ParamEntry<S>> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, S> buffer_fill_;
};

template <typename S>
struct Linear {
  Var<S> weight;
  Var<S> bias;
  int in = 0;
  int out = 0;

  Linear() = default;
  Linear(ParamStore<S>& store, const std::string& name, int in_features, int out_features, bool with_bias = true);
  Var<S> operator()(const Var<S>& x) const { return linear(x, weight, bias); }
};

template <typename S>
struct Conv2d {
  Var<S> weight;
  Var<S> bias;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<S>& store, const std::string& name, int in_ch, int out_ch, int kernel, int stride_, int pad_,
         bool with_bias = true);
  Var<S> operator()(const Var<S>& x) const { return conv2d(x, weight, bias, stride, pad); }
};

template <typename S>
struct BatchNorm {
  Var<S> gamma;
  Var<S> beta;
  Var<S> running_mean;
  Var<S> running_var;

  BatchNorm() = default;
  BatchNorm(ParamStore<S>& store, const std::string& name, int channels);
  Var<S> operator()(const Var<S>& x, bool training) const;
};

// Single-direction gated recurrent unit over a batch of equal-length
// sequences laid out row-major as [batch * steps, features] (row b*T + t).
template <typename S>
struct Gru {
  Linear<S> input_proj;   // gates r, z, n from x
  Linear<S> hidden_proj;  // gates r, z, n from h
  int hidden = 0;

  Gru() = default;
  Gru(ParamStore<S>& store, const std::string& name, int in_features, int hidden_size);
  Var<S> run(const Var<S>& x, int batch, int steps, bool reverse) const;
};

enum class TemporalKind { kConv1d, kBiGru };

// Sequence backend shared by the relational networks: either two temporal
// convolutions (kernel 3, same padding) each followed by batch norm and ReLU,
// or one bidirectional GRU whose directions are concatenated.
template <typename S>
struct TemporalBackend {
  TemporalKind kind = TemporalKind::kConv1d;
  Linear<S> conv1, conv2;
  BatchNorm<S> bn1, bn2;
  Gru<S> forward_gru, backward_gru;
  int out_dim = 0;

  TemporalBackend() = default;
  TemporalBackend(ParamStore<S>& store, const std::string& name, TemporalKind kind, int in_features, int hidden);
  Var<S> operator()(const Var<S>& x, int batch, int steps, bool training) const;
};

// Same-padded kernel-3 temporal window: [B*T, C] -> [B*T, 3C] holding the
// features of frames t-1, t, t+1 (zeros outside the sequence).
template <typename S>
Var<S> temporal_window3(const Var<S>& x, int batch, int steps);

}  // namespace unicon::nn
