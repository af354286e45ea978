#pragma once

#include "unicon/nn/layers.hpp"

#include <map>
#include <string>
#include <vector>

namespace unicon::nn {

struct AdamWConfig {
  double learning_rate = 3e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moments with decoupled weight decay. Moment buffers are kept in
// double regardless of the parameter scalar so that checkpoints are exact.
template <typename S>
class AdamW {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  AdamW(ParamStore<S>& store, AdamWConfig config) : store_(&store), config_(config) {}

  // Applies one update to every trainable parameter from its current gradient.
  void step();

  long steps_taken() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(long step, std::map<std::string, Moments> moments) {
    step_ = step;
    moments_ = std::move(moments);
  }

 private:
  ParamStore<S>* store_;
  AdamWConfig config_;
  long step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace unicon::nn
