#pragma once

#include "unicon/nn/layers.hpp"

#include <json.hpp>

#include <string>

namespace unicon {

enum class Backbone { kToyCnn, kResNet18 };
enum class Suppression { kNone, kMean, kMax };
using nn::TemporalKind;

struct EncoderConfig {
  Backbone face_backbone = Backbone::kToyCnn;
  Backbone audio_backbone = Backbone::kToyCnn;
  int stack_size = 5;     // k consecutive crops per time step
  int feature_dim = 64;   // pooled backbone width (512 for ResNet-18)
  int reduced_dim = 128;  // d'
  int spatial_dim = 64;
  int crop_size = 144;    // stored crop resolution
  int input_size = 128;   // network input after (center or random) crop
};

struct RelationalConfig {
  TemporalKind temporal = TemporalKind::kConv1d;
  Suppression suppression = Suppression::kMax;
  int hidden_dim = 128;  // D for alpha/beta/eta outputs
  int gru_hidden = 128;  // per direction
};

struct ModelConfig {
  EncoderConfig encoder;
  RelationalConfig relational;
  bool spatial = true;
  bool relational_context = true;

  // Parses an ablation tag: "baseline" or any combination of "+S", "+R",
  // "+T" (e.g. "+S+R+T"). T selects the BiGRU backend; without it the
  // temporal-convolution backend is used.
  void apply_ablation(const std::string& tag);
  std::string ablation_tag() const;
  // Suppression in effect: none whenever relational context is off.
  Suppression effective_suppression() const {
    return relational_context ? relational.suppression : Suppression::kNone;
  }
  // Throws InputError on inconsistent values.
  void validate() const;
};

const char* to_string(Backbone b);
const char* to_string(Suppression s);
const char* to_string(TemporalKind k);
Suppression parse_suppression(const std::string& s);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace unicon
