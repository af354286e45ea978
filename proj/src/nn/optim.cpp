#include "unicon/nn/optim.hpp"

#include <cmath>

namespace unicon::nn {

template <typename S>
void AdamW<S>::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (auto& e : store_->entries()) {
    if (!e.trainable || e.kind == ParamKind::kBuffer) continue;
    auto& value = e.var.mutable_value();
    const auto& grad = e.var.grad();
    auto& mom = moments_[e.name];
    if (mom.m.size() != value.size()) {
      mom.m.assign(value.size(), 0.0);
      mom.v.assign(value.size(), 0.0);
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      double p = static_cast<double>(value[i]);
      p -= config_.learning_rate * config_.weight_decay * p;
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g;
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.eps);
      value[i] = static_cast<S>(p);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace unicon::nn
