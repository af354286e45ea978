#include "unicon/config.hpp"

#include "unicon/error.hpp"

namespace unicon {

const char* to_string(Backbone b) { return b == Backbone::kResNet18 ? "resnet18" : "toy_cnn"; }

const char* to_string(Suppression s) {
  switch (s) {
    case Suppression::kNone:
      return "none";
    case Suppression::kMean:
      return "mean";
    case Suppression::kMax:
      return "max";
  }
  return "max";
}

const char* to_string(TemporalKind k) { return k == TemporalKind::kBiGru ? "bigru" : "conv"; }

Suppression parse_suppression(const std::string& s) {
  if (s == "none") return Suppression::kNone;
  if (s == "mean") return Suppression::kMean;
  if (s == "max") return Suppression::kMax;
  throw InputError("unknown suppression '" + s + "' (expected none, mean or max)");
}

namespace {

Backbone parse_backbone(const std::string& s) {
  if (s == "toy_cnn") return Backbone::kToyCnn;
  if (s == "resnet18") return Backbone::kResNet18;
  throw InputError("unknown backbone '" + s + "'");
}

TemporalKind parse_temporal(const std::string& s) {
  if (s == "conv") return TemporalKind::kConv1d;
  if (s == "bigru") return TemporalKind::kBiGru;
  throw InputError("unknown temporal backend '" + s + "' (expected conv or bigru)");
}

}  // namespace

void ModelConfig::apply_ablation(const std::string& tag) {
  if (tag == "baseline" || tag.empty()) {
    spatial = relational_context = false;
    relational.temporal = TemporalKind::kConv1d;
    return;
  }
  bool s = false, r = false, t = false;
  std::size_t i = 0;
  while (i < tag.size()) {
    if (tag[i] != '+' || i + 1 >= tag.size()) throw InputError("malformed ablation tag '" + tag + "'");
    switch (tag[i + 1]) {
      case 'S':
        s = true;
        break;
      case 'R':
        r = true;
        break;
      case 'T':
        t = true;
        break;
      default:
        throw InputError("malformed ablation tag '" + tag + "'");
    }
    i += 2;
  }
  spatial = s;
  relational_context = r;
  relational.temporal = t ? TemporalKind::kBiGru : TemporalKind::kConv1d;
}

std::string ModelConfig::ablation_tag() const {
  std::string tag;
  if (spatial) tag += "+S";
  if (relational_context) tag += "+R";
  if (relational.temporal == TemporalKind::kBiGru) tag += "+T";
  return tag.empty() ? "baseline" : tag;
}

void ModelConfig::validate() const {
  const auto& e = encoder;
  if (e.stack_size < 1 || e.stack_size % 2 == 0) throw InputError("encoder.stack_size must be odd and >= 1");
  if (e.feature_dim < 1 || e.reduced_dim < 1 || e.spatial_dim < 1) throw InputError("encoder dims must be >= 1");
  if (e.reduced_dim > e.feature_dim && e.face_backbone == Backbone::kResNet18) {
    throw InputError("encoder.reduced_dim must not exceed feature_dim");
  }
  if (e.input_size < 8 || e.input_size > e.crop_size) throw InputError("encoder.input_size must be in [8, crop_size]");
  if (relational.hidden_dim < 1 || relational.gru_hidden < 1) throw InputError("relational dims must be >= 1");
  // AV_pred sees a + v in the single-candidate stage and R_V + R_AV later.
  if (relational.hidden_dim != e.reduced_dim) throw InputError("relational.hidden_dim must equal encoder.reduced_dim");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"encoder",
       {{"face_backbone", to_string(c.encoder.face_backbone)},
        {"audio_backbone", to_string(c.encoder.audio_backbone)},
        {"stack_size", c.encoder.stack_size},
        {"feature_dim", c.encoder.feature_dim},
        {"reduced_dim", c.encoder.reduced_dim},
        {"spatial_dim", c.encoder.spatial_dim},
        {"crop_size", c.encoder.crop_size},
        {"input_size", c.encoder.input_size}}},
      {"relational",
       {{"temporal", to_string(c.relational.temporal)},
        {"suppression", to_string(c.relational.suppression)},
        {"hidden_dim", c.relational.hidden_dim},
        {"gru_hidden", c.relational.gru_hidden}}},
      {"spatial", c.spatial},
      {"relational_context", c.relational_context},
      {"ablation", c.ablation_tag()},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      if (e.contains("face_backbone")) c.encoder.face_backbone = parse_backbone(e.at("face_backbone"));
      if (e.contains("audio_backbone")) c.encoder.audio_backbone = parse_backbone(e.at("audio_backbone"));
      c.encoder.stack_size = e.value("stack_size", c.encoder.stack_size);
      c.encoder.feature_dim = e.value("feature_dim", c.encoder.feature_dim);
      c.encoder.reduced_dim = e.value("reduced_dim", c.encoder.reduced_dim);
      c.encoder.spatial_dim = e.value("spatial_dim", c.encoder.spatial_dim);
      c.encoder.crop_size = e.value("crop_size", c.encoder.crop_size);
      c.encoder.input_size = e.value("input_size", c.encoder.input_size);
    }
    if (j.contains("relational")) {
      const auto& r = j.at("relational");
      if (r.contains("temporal")) c.relational.temporal = parse_temporal(r.at("temporal"));
      if (r.contains("suppression")) c.relational.suppression = parse_suppression(r.at("suppression"));
      c.relational.hidden_dim = r.value("hidden_dim", c.relational.hidden_dim);
      c.relational.gru_hidden = r.value("gru_hidden", c.relational.gru_hidden);
    }
    c.spatial = j.value("spatial", c.spatial);
    c.relational_context = j.value("relational_context", c.relational_context);
    if (j.contains("ablation") && !j.contains("spatial") && !j.contains("relational_context")) {
      c.apply_ablation(j.at("ablation").get<std::string>());
    }
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("model config: ") + ex.what());
  }
  c.validate();
  return c;
}

}  // namespace unicon
