#include "unicon/train.hpp"

#include "unicon/encoders.hpp"
#include "unicon/error.hpp"
#include "unicon/parallel.hpp"
#include "unicon/synth.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>

namespace unicon::train {

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw InputError("train: stage must be 1 or 2");
  if (segment_frames < 1) throw InputError("train: segment_frames must be >= 1");
  if (max_candidates < 1) throw InputError("train: max_candidates must be >= 1");
  if (epochs < 0) throw InputError("train: epochs must be >= 0");
  if (batch_size < 1) throw InputError("train: batch_size must be >= 1");
  if (max_steps < 0) throw InputError("train: max_steps must be >= 0");
  if (!(optimizer.learning_rate > 0) || optimizer.weight_decay < 0) throw InputError("train: bad optimizer settings");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
    throw InputError("train: betas must be in [0, 1)");
  }
  for (double r : {augment.brightness, augment.contrast, augment.saturation}) {
    if (!(r >= 0 && r < 1)) throw InputError("train: jitter ranges must be in [0, 1)");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"stage", c.stage},
          {"segment_frames", c.segment_frames},
          {"max_candidates", c.max_candidates},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"optimizer",
           {{"learning_rate", c.optimizer.learning_rate},
            {"weight_decay", c.optimizer.weight_decay},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"eps", c.optimizer.eps}}},
          {"augment",
           {{"enabled", c.augment.enabled},
            {"flip", c.augment.flip},
            {"corner_crop", c.augment.corner_crop},
            {"brightness", c.augment.brightness},
            {"contrast", c.augment.contrast},
            {"saturation", c.augment.saturation}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.stage = j.value("stage", c.stage);
    c.segment_frames = j.value("segment_frames", c.segment_frames);
    c.max_candidates = j.value("max_candidates", c.max_candidates);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.eps = o.value("eps", c.optimizer.eps);
    }
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      c.augment.enabled = a.value("enabled", c.augment.enabled);
      c.augment.flip = a.value("flip", c.augment.flip);
      c.augment.corner_crop = a.value("corner_crop", c.augment.corner_crop);
      c.augment.brightness = a.value("brightness", c.augment.brightness);
      c.augment.contrast = a.value("contrast", c.augment.contrast);
      c.augment.saturation = a.value("saturation", c.augment.saturation);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

PreparedScene prepare_scene(const ingest::Scene& scene) {
  return {&scene, ingest::compute_mfcc_sequence(scene.audio, scene.fps, scene.num_frames)};
}

std::vector<PreparedScene> prepare_scenes(const std::vector<ingest::Scene>& scenes, int workers) {
  std::vector<PreparedScene> out(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t i) { out[i] = prepare_scene(scenes[i]); });
  return out;
}

std::vector<int> sample_segment(int first, int last, int frames, std::mt19937_64& rng) {
  if (last < first || frames < 1) throw InputError("sample_segment: empty span");
  const int span = last - first + 1;
  int start = first;
  if (span > frames) start = std::uniform_int_distribution<int>(first, last - frames + 1)(rng);
  std::vector<int> out(static_cast<std::size_t>(frames));
  for (int k = 0; k < frames; ++k) out[static_cast<std::size_t>(k)] = std::min(start + k, last);
  return out;
}

AugmentPlan center_plan(int crop_size, int input_size) {
  AugmentPlan p;
  p.offset_x = p.offset_y = (crop_size - input_size) / 2;
  return p;
}

AugmentPlan draw_augment(const AugmentConfig& config, int crop_size, int input_size, std::mt19937_64& rng) {
  if (!config.enabled) return center_plan(crop_size, input_size);
  AugmentPlan p = center_plan(crop_size, input_size);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (config.flip) p.flip = unit(rng) < 0.5;
  if (config.corner_crop) {
    std::uniform_int_distribution<int> offset(0, crop_size - input_size);
    p.offset_x = offset(rng);
    p.offset_y = offset(rng);
  }
  auto factor = [&](double range) { return range > 0 ? 1.0 + (2.0 * unit(rng) - 1.0) * range : 1.0; };
  p.brightness = factor(config.brightness);
  p.contrast = factor(config.contrast);
  p.saturation = factor(config.saturation);
  return p;
}

Image augment_crop(const Image& crop, const AugmentPlan& plan, int input_size) {
  if (crop.width < input_size || crop.height < input_size) {
    throw InputError("crop smaller than the network input size");
  }
  if (plan.offset_x < 0 || plan.offset_y < 0 || plan.offset_x + input_size > crop.width ||
      plan.offset_y + input_size > crop.height) {
    throw InputError("augment: crop window outside the image");
  }
  const int ch = crop.channels;
  std::vector<double> px(static_cast<std::size_t>(input_size) * input_size * 3);
  for (int y = 0; y < input_size; ++y) {
    for (int x = 0; x < input_size; ++x) {
      const int sx = plan.offset_x + (plan.flip ? input_size - 1 - x : x);
      const int sy = plan.offset_y + y;
      for (int c = 0; c < 3; ++c) {
        px[(static_cast<std::size_t>(y) * input_size + x) * 3 + c] = crop.at(sx, sy, ch == 1 ? 0 : c) * plan.brightness;
      }
    }
  }
  const bool photometric = plan.contrast != 1.0 || plan.saturation != 1.0;
  if (photometric) {
    double mean = 0.0;
    const std::size_t pixels = static_cast<std::size_t>(input_size) * input_size;
    for (std::size_t i = 0; i < pixels; ++i) mean += 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
    mean /= static_cast<double>(pixels);
    for (std::size_t i = 0; i < pixels; ++i) {
      double* p = &px[3 * i];
      for (int c = 0; c < 3; ++c) p[c] = (p[c] - mean) * plan.contrast + mean;
      const double gray = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
      for (int c = 0; c < 3; ++c) p[c] = gray + (p[c] - gray) * plan.saturation;
    }
  }
  Image out(input_size, input_size, 3);
  for (std::size_t i = 0; i < px.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px[i]), 0L, 255L));
  }
  return out;
}

template <typename S>
SegmentInput<S> build_segment(const SegmentSpec& spec, const std::vector<AugmentPlan>& plans, int input_size) {
  const ingest::Scene& scene = *spec.scene->scene;
  const int n = static_cast<int>(spec.tracks.size());
  const int t_len = static_cast<int>(spec.frames.size());
  if (plans.size() != spec.tracks.size()) throw InputError("build_segment: one augment plan per candidate");
  SegmentInput<S> in;
  in.candidates = n;
  in.frames = t_len;
  const std::size_t rows = static_cast<std::size_t>(n) * t_len;
  in.present.assign(rows, 0);
  in.specs.resize(rows);
  in.labels_v.assign(rows, S(0));
  in.labels_av.assign(rows, S(0));

  std::vector<Image> processed;
  std::vector<std::size_t> face_index(rows);
  for (int i = 0; i < n; ++i) {
    const auto& track = scene.tracks.at(static_cast<std::size_t>(spec.tracks[static_cast<std::size_t>(i)]));
    if (track.length() == 0) throw InputError("build_segment: empty track " + track.entity_id);
    if (static_cast<int>(track.crops.size()) != track.length()) {
      throw InputError("build_segment: track " + track.entity_id + " has no crops loaded");
    }
    // Augment each distinct crop once.
    std::vector<int> local(static_cast<std::size_t>(t_len));
    std::vector<int> uniq;
    for (int k = 0; k < t_len; ++k) {
      const int f = spec.frames[static_cast<std::size_t>(k)];
      local[static_cast<std::size_t>(k)] = std::clamp(f - track.first_frame, 0, track.length() - 1);
      uniq.push_back(local[static_cast<std::size_t>(k)]);
    }
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    const std::size_t base = processed.size();
    for (int u : uniq) {
      processed.push_back(augment_crop(track.crops[static_cast<std::size_t>(u)], plans[static_cast<std::size_t>(i)], input_size));
    }
    for (int k = 0; k < t_len; ++k) {
      const std::size_t row = static_cast<std::size_t>(i) * t_len + k;
      const int f = spec.frames[static_cast<std::size_t>(k)];
      const int li = local[static_cast<std::size_t>(k)];
      const auto pos = std::lower_bound(uniq.begin(), uniq.end(), li) - uniq.begin();
      face_index[row] = base + static_cast<std::size_t>(pos);
      in.specs[row] = headmap::spec_from_box(ingest::expand_box(track.boxes[static_cast<std::size_t>(li)]));
      if (track.covers(f)) {
        in.present[row] = 1;
        in.labels_v[row] = S(track.labels_v[static_cast<std::size_t>(li)]);
        in.labels_av[row] = S(track.labels_av[static_cast<std::size_t>(li)]);
      }
    }
  }
  std::vector<const Image*> faces(rows);
  for (std::size_t r = 0; r < rows; ++r) faces[r] = &processed[face_index[r]];
  in.faces = encoders::image_tensor<S>(faces);

  std::vector<ingest::MfccWindow> windows;
  windows.reserve(static_cast<std::size_t>(t_len));
  in.labels_audio.assign(static_cast<std::size_t>(t_len), S(0));
  for (int k = 0; k < t_len; ++k) {
    const int f = spec.frames[static_cast<std::size_t>(k)];
    windows.push_back(spec.scene->mfcc.at(static_cast<std::size_t>(f)));
    for (const auto& track : scene.tracks) {
      if (track.covers(f) && track.labels_av[static_cast<std::size_t>(f - track.first_frame)]) {
        in.labels_audio[static_cast<std::size_t>(k)] = S(1);
      }
    }
  }
  in.mfcc = encoders::mfcc_tensor<S>(windows);
  return in;
}

namespace {

std::mt19937_64 rng_for(std::uint64_t seed, std::uint32_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct Example {
  int scene = 0;
  int track = -1;  // stage 1: the single candidate
};

}  // namespace

void train_stage(UniconModel<float>& model, nn::AdamW<float>& optimizer, const TrainConfig& config,
                 const std::vector<PreparedScene>& data, TrainState& state, const ProgressFn& progress) {
  config.validate();
  const auto& enc = model.config().encoder;
  std::vector<Example> examples;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const auto& scene = *data[s].scene;
    if (scene.num_frames < 1 || scene.tracks.empty()) {
      std::cerr << "warning: skipping empty scene " << scene.scene_id << "\n";
      continue;
    }
    if (config.stage == 1) {
      for (std::size_t t = 0; t < scene.tracks.size(); ++t) {
        if (scene.tracks[t].length() > 0) examples.push_back({static_cast<int>(s), static_cast<int>(t)});
      }
    } else {
      examples.push_back({static_cast<int>(s), -1});
    }
  }
  if (examples.empty()) throw InputError("no training examples");
  if (config.stage == 2) model.params().set_trainable("a_aux", false);

  const long per_epoch = (static_cast<long>(examples.size()) + config.batch_size - 1) / config.batch_size;
  long total = per_epoch * config.epochs;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);
  state.stage = config.stage;

  std::vector<std::size_t> order;
  long order_epoch = -1;
  for (long step = state.step; step < total; ++step) {
    const long epoch = step / per_epoch;
    if (epoch != order_epoch) {
      order.resize(examples.size());
      std::iota(order.begin(), order.end(), 0);
      auto shuffle_rng = rng_for(config.seed, 1, static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      order_epoch = epoch;
    }
    auto rng = rng_for(config.seed, 2, static_cast<std::uint64_t>(step));
    const std::size_t begin = static_cast<std::size_t>(step % per_epoch) * config.batch_size;
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
    const float weight = 1.0f / static_cast<float>(end - begin);
    LogRow row;
    row.step = step;
    model.params().zero_grad();
    for (std::size_t b = begin; b < end; ++b) {
      const Example& ex = examples[order[b]];
      const PreparedScene& ps = data[static_cast<std::size_t>(ex.scene)];
      const auto& scene = *ps.scene;
      SegmentSpec spec;
      spec.scene = &ps;
      if (config.stage == 1) {
        const auto& track = scene.tracks[static_cast<std::size_t>(ex.track)];
        spec.frames = sample_segment(track.first_frame, track.last_frame(), config.segment_frames, rng);
        spec.tracks = {ex.track};
      } else {
        spec.frames = sample_segment(0, scene.num_frames - 1, config.segment_frames, rng);
        for (std::size_t t = 0; t < scene.tracks.size(); ++t) {
          const auto& track = scene.tracks[t];
          const bool visible = std::any_of(spec.frames.begin(), spec.frames.end(), [&](int f) { return track.covers(f); });
          if (visible) spec.tracks.push_back(static_cast<int>(t));
        }
        if (spec.tracks.empty()) continue;
        if (static_cast<int>(spec.tracks.size()) > config.max_candidates) {
          std::shuffle(spec.tracks.begin(), spec.tracks.end(), rng);
          spec.tracks.resize(static_cast<std::size_t>(config.max_candidates));
          std::sort(spec.tracks.begin(), spec.tracks.end());
        }
      }
      std::vector<AugmentPlan> plans;
      for (std::size_t i = 0; i < spec.tracks.size(); ++i) {
        const auto& crops = scene.tracks[static_cast<std::size_t>(spec.tracks[i])].crops;
        const int crop_size = crops.empty() ? enc.crop_size : crops.front().width;
        plans.push_back(draw_augment(config.augment, crop_size, enc.input_size, rng));
      }
      const SegmentInput<float> input = build_segment<float>(spec, plans, enc.input_size);
      losses::Loss<float> loss;
      if (config.stage == 1) {
        loss = losses::single_candidate_losses(model.forward_single(input, true), input);
      } else {
        loss = losses::multi_candidate_losses(model.forward(input, true), input);
      }
      if (!std::isfinite(loss.values.total)) {
        char msg[200];
        std::snprintf(msg, sizeof msg, "non-finite loss at step %ld (l_a=%g l_v=%g l_av=%g)", step, loss.values.l_a,
                      loss.values.l_v, loss.values.l_av);
        throw DivergenceError(msg);
      }
      nn::backward(nn::scale(loss.total, weight));
      row.l_a += weight * loss.values.l_a;
      row.l_v += weight * loss.values.l_v;
      row.l_av += weight * loss.values.l_av;
      row.total += weight * loss.values.total;
    }
    optimizer.step();
    for (const auto& e : model.params().entries()) {
      for (float v : e.var.value().data) {
        if (!std::isfinite(v)) throw DivergenceError("non-finite parameter " + e.name + " after step " + std::to_string(step));
      }
    }
    state.step = step + 1;
    state.log.push_back(row);
    if (progress) progress(row);
  }
}

std::string log_csv(const std::vector<LogRow>& rows) {
  std::string out = "step,l_a,l_v,l_av,total\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g\n", r.step, r.l_a, r.l_v, r.l_av, r.total);
    out += buf;
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'U', 'N', 'I', 'C', 'O', 'N', 'C', 'K'};
constexpr int kFormatVersion = 1;
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct PendingTensor {
  std::string name;
  nn::Shape shape;
  std::vector<double> data;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const UniconModel<float>& model,
                     const nn::AdamW<float>* optimizer, const TrainConfig& train, const TrainState& state) {
  std::vector<PendingTensor> tensors;
  for (const auto& e : model.params().entries()) {
    const auto& v = e.var.value();
    tensors.push_back({e.name, v.shape, std::vector<double>(v.data.begin(), v.data.end())});
  }
  if (optimizer) {
    for (const auto& [name, mom] : optimizer->moments()) {
      const auto* entry = model.params().find(name);
      if (!entry) throw RuntimeFailure("optimizer state for unknown parameter " + name);
      tensors.push_back({"optim.m/" + name, entry->var.shape(), mom.m});
      tensors.push_back({"optim.v/" + name, entry->var.shape(), mom.v});
    }
    tensors.push_back({"optim.step", {1}, {static_cast<double>(optimizer->steps_taken())}});
  }
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    index.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.data.size();
  }
  const nlohmann::json header = {{"format", "unicon-checkpoint"},
                                 {"version", kFormatVersion},
                                 {"model", to_json(model.config())},
                                 {"train", to_json(train)},
                                 {"state", {{"step", state.step}, {"stage", state.stage}}},
                                 {"tensors", index}};
  const std::string text = header.dump();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors) {
      out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!out) throw RuntimeFailure("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw RuntimeFailure("cannot move checkpoint into place: " + ec.message());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw InputError("not a checkpoint: " + path.string());
  const auto file_size = std::filesystem::file_size(path);
  if (len > file_size) throw InputError("truncated checkpoint: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    if (header.at("format") != "unicon-checkpoint" || header.at("version").get<int>() != kFormatVersion) {
      throw InputError("unsupported checkpoint format in " + path.string());
    }
    ckpt.model = model_config_from_json(header.at("model"));
    ckpt.train = train_config_from_json(header.at("train"));
    ckpt.step = header.at("state").at("step").get<long>();
    ckpt.stage = header.at("state").at("stage").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad checkpoint header: " + std::string(e.what()));
  }
  const std::uint64_t data_start = sizeof kMagic + sizeof len + len;
  const std::uint64_t available = (file_size - data_start) / sizeof(double);
  std::vector<double> data(available);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(available * sizeof(double)));
  if (!in) throw InputError("truncated checkpoint: " + path.string());
  try {
    for (const auto& t : header.at("tensors")) {
      nn::Tensor<double> tensor(t.at("shape").get<nn::Shape>());
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (offset + tensor.size() > available) throw InputError("truncated checkpoint: " + path.string());
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(offset), tensor.size(), tensor.data.begin());
      ckpt.tensors.emplace(t.at("name").get<std::string>(), std::move(tensor));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("bad checkpoint tensor index: " + std::string(e.what()));
  }
  return ckpt;
}

namespace {

std::size_t load_matching(UniconModel<float>& model, const Checkpoint& ckpt, bool strict,
                          const std::vector<std::string>* prefixes) {
  std::size_t loaded = 0;
  for (auto& e : model.params().entries()) {
    if (prefixes && std::none_of(prefixes->begin(), prefixes->end(),
                                 [&](const std::string& p) { return e.name.rfind(p, 0) == 0; })) {
      continue;
    }
    const auto it = ckpt.tensors.find(e.name);
    if (it == ckpt.tensors.end()) {
      if (strict) throw InputError("checkpoint has no tensor " + e.name);
      continue;
    }
    auto& value = e.var.mutable_value();
    if (it->second.shape != value.shape) {
      throw InputError("shape mismatch for " + e.name + ": checkpoint " + nn::shape_str(it->second.shape) + ", model " +
                       nn::shape_str(value.shape));
    }
    std::transform(it->second.data.begin(), it->second.data.end(), value.data.begin(),
                   [](double x) { return static_cast<float>(x); });
    ++loaded;
  }
  return loaded;
}

}  // namespace

std::size_t load_parameters(UniconModel<float>& model, const Checkpoint& ckpt, bool strict) {
  return load_matching(model, ckpt, strict, nullptr);
}

std::size_t load_parameters(UniconModel<float>& model, const Checkpoint& ckpt, const std::vector<std::string>& prefixes) {
  return load_matching(model, ckpt, true, &prefixes);
}

void load_optimizer(nn::AdamW<float>& optimizer, const UniconModel<float>& model, const Checkpoint& ckpt) {
  const auto step_it = ckpt.tensors.find("optim.step");
  if (step_it == ckpt.tensors.end()) throw InputError("checkpoint has no optimizer state");
  std::map<std::string, nn::AdamW<float>::Moments> moments;
  for (const auto& e : model.params().entries()) {
    const auto m = ckpt.tensors.find("optim.m/" + e.name);
    const auto v = ckpt.tensors.find("optim.v/" + e.name);
    if (m == ckpt.tensors.end() || v == ckpt.tensors.end()) continue;
    if (m->second.size() != e.var.value().size() || v->second.size() != e.var.value().size()) {
      throw InputError("optimizer state shape mismatch for " + e.name);
    }
    moments[e.name] = {m->second.data, v->second.data};
  }
  optimizer.restore(static_cast<long>(step_it->second.data.at(0)), std::move(moments));
}

std::vector<metrics::ScoredFrame> infer(const UniconModel<float>& model, const std::vector<ingest::Scene>& scenes,
                                        const InferenceOptions& options, int workers) {
  const int input_size = model.config().encoder.input_size;
  std::vector<std::vector<metrics::ScoredFrame>> per_scene(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t s) {
    nn::NoGradGuard no_grad;
    const ingest::Scene& scene = scenes[s];
    if (scene.num_frames < 1 || scene.tracks.empty()) return;
    PreparedScene prepared{&scene, {}};
    if (options.desync_shift != 0) {
      prepared.mfcc = ingest::compute_mfcc_sequence(synth::shift_audio(scene.audio, options.desync_shift, scene.fps),
                                                    scene.fps, scene.num_frames);
    } else {
      prepared.mfcc = ingest::compute_mfcc_sequence(scene.audio, scene.fps, scene.num_frames);
    }
    auto& out = per_scene[s];
    for (const auto& range : ingest::chunk_for_inference(scene.num_frames, options.max_chunk_frames)) {
      SegmentSpec spec;
      spec.scene = &prepared;
      for (int k = 0; k < range.length; ++k) spec.frames.push_back(range.start + k);
      for (std::size_t t = 0; t < scene.tracks.size(); ++t) {
        const auto& track = scene.tracks[t];
        if (track.first_frame < range.start + range.length && track.last_frame() >= range.start) {
          spec.tracks.push_back(static_cast<int>(t));
        }
      }
      if (spec.tracks.empty()) continue;
      std::vector<AugmentPlan> plans;
      for (int t : spec.tracks) {
        const auto& crops = scene.tracks[static_cast<std::size_t>(t)].crops;
        plans.push_back(center_plan(crops.empty() ? input_size : crops.front().width, input_size));
      }
      const SegmentInput<float> input = build_segment<float>(spec, plans, input_size);
      const auto fwd = model.forward(input, false);
      const auto& logits = (options.visual_only ? fwd.v_logits : fwd.av_logits).value();
      const int t_len = range.length;
      for (std::size_t i = 0; i < spec.tracks.size(); ++i) {
        const auto& track = scene.tracks[static_cast<std::size_t>(spec.tracks[i])];
        for (int k = 0; k < t_len; ++k) {
          const int f = range.start + k;
          if (!track.covers(f)) continue;
          const auto local = static_cast<std::size_t>(f - track.first_frame);
          metrics::ScoredFrame sf;
          sf.scene_id = scene.scene_id;
          sf.entity_id = track.entity_id;
          sf.frame_index = f;
          sf.score = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i * static_cast<std::size_t>(t_len) + k])));
          sf.label = track.labels_av[local];
          sf.face_width_px = track.boxes[local].width() * scene.frame_width;
          sf.faces_in_frame = scene.candidates_at(f);
          out.push_back(std::move(sf));
        }
      }
    }
  });
  std::vector<metrics::ScoredFrame> all;
  for (auto& v : per_scene) std::move(v.begin(), v.end(), std::back_inserter(all));
  if (options.smooth_window > 1) metrics::smooth_scored_frames(all, options.smooth_window);
  return all;
}

EvalResult evaluate_model(const UniconModel<float>& model, const std::vector<ingest::Scene>& scenes,
                          const EvalOptions& options, int workers) {
  InferenceOptions io;
  io.visual_only = options.visual_only;
  io.max_chunk_frames = options.max_chunk_frames;
  io.smooth_window = options.smooth_window;
  EvalResult out;
  out.frames = infer(model, scenes, io, workers);
  if (out.frames.empty()) throw InputError("evaluation data has no visible candidates");
  out.report = metrics::evaluate(out.frames);
  for (int shift : options.desync_shifts) {
    io.desync_shift = shift;
    const auto shifted = infer(model, scenes, io, workers);
    out.report.desync.push_back({shift, metrics::average_precision(shifted)});
  }
  out.report.info = {{"model", to_json(model.config())},
                     {"ablation", model.config().ablation_tag()},
                     {"suppression", to_string(model.config().effective_suppression())},
                     {"visual_only", options.visual_only},
                     {"smooth_window", options.smooth_window},
                     {"max_chunk_frames", options.max_chunk_frames},
                     {"scenes", scenes.size()}};
  return out;
}

template SegmentInput<float> build_segment<float>(const SegmentSpec&, const std::vector<AugmentPlan>&, int);
template SegmentInput<double> build_segment<double>(const SegmentSpec&, const std::vector<AugmentPlan>&, int);

}  // namespace unicon::train
