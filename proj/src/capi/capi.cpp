#include "unicon/unicon.h"

#include "unicon/error.hpp"
#include "unicon/headmap.hpp"
#include "unicon/io.hpp"
#include "unicon/parallel.hpp"
#include "unicon/plots.hpp"
#include "unicon/synth.hpp"
#include "unicon/train.hpp"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

using namespace unicon;

struct unicon_dataset {
  std::vector<ingest::Scene> scenes;
};

struct unicon_model {
  std::unique_ptr<UniconModel<float>> model;
  train::TrainState state;
  std::optional<train::TrainConfig> train;  // set once trained or loaded
  std::optional<train::Checkpoint> pending_optimizer;
  std::unique_ptr<nn::AdamW<float>> optimizer;
  int source_stage = 0;
};

namespace {

thread_local std::string g_error;

template <typename F>
int guarded(F&& fn) {
  try {
    fn();
    g_error.clear();
    return UNICON_OK;
  } catch (const InputError& e) {
    g_error = e.what();
    return UNICON_ERR_INPUT;
  } catch (const nlohmann::json::exception& e) {
    g_error = std::string("invalid JSON: ") + e.what();
    return UNICON_ERR_INPUT;
  } catch (const RuntimeFailure& e) {
    g_error = e.what();
    return UNICON_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_error = e.what();
    return UNICON_ERR_RUNTIME;
  } catch (...) {
    g_error = "unknown error";
    return UNICON_ERR_RUNTIME;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw InputError(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw RuntimeFailure("out of memory");
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

nlohmann::json parse_json(const char* text) {
  if (!text || !*text) return nlohmann::json::object();
  auto j = nlohmann::json::parse(text);
  if (!j.is_object()) throw InputError("expected a JSON object");
  return j;
}

std::filesystem::path make_dir(const char* dir) {
  require(dir, "output directory");
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw RuntimeFailure("cannot create " + p.string() + ": " + ec.message());
  return p;
}

void save_all(const std::vector<ingest::Scene>& scenes, const std::filesystem::path& root, int workers) {
  parallel_for(scenes.size(), workers, [&](std::size_t i) { io::save_scene(scenes[i], root / scenes[i].scene_id); });
}

}  // namespace

extern "C" {

const char* unicon_version(void) { return "1.0.0"; }

const char* unicon_last_error(void) { return g_error.c_str(); }

void unicon_string_free(char* s) { std::free(s); }

int unicon_num_workers(void) {
  int n = 1;
  guarded([&] { n = num_workers(); });
  return n;
}

int unicon_prepare(const char* annotations_csv, const char* media_dir, const char* out_dir, int crop_size, int workers,
                   char** summary_json) {
  return guarded([&] {
    require(annotations_csv, "annotations path");
    require(media_dir, "media directory");
    if (!std::filesystem::is_regular_file(annotations_csv)) {
      throw InputError(std::string("missing annotations file ") + annotations_csv);
    }
    io::PrepareSummary s;
    const auto scenes = io::prepare_scenes(io::read_text(annotations_csv), media_dir, crop_size, workers, &s);
    save_all(scenes, make_dir(out_dir), workers);
    set_string(summary_json, nlohmann::json{{"videos", s.videos},
                                            {"scenes", s.scenes},
                                            {"tracks", s.tracks},
                                            {"frames", s.frames},
                                            {"warnings", s.warnings},
                                            {"rejected", s.rejected}}
                                 .dump());
  });
}

int unicon_synth(const char* config_json, const char* out_dir, int workers, char** summary_json) {
  return guarded([&] {
    const auto config = synth::synth_config_from_json(parse_json(config_json));
    const auto root = make_dir(out_dir);
    const auto scenes = synth::generate_dataset(config, workers);
    save_all(scenes, root, workers);
    std::size_t tracks = 0, frames = 0;
    for (const auto& s : scenes) {
      tracks += s.tracks.size();
      frames += static_cast<std::size_t>(s.num_frames);
    }
    set_string(summary_json, nlohmann::json{{"scenes", scenes.size()}, {"tracks", tracks}, {"frames", frames}}.dump());
  });
}

int unicon_content_hash(const char* path, char** hash) {
  return guarded([&] {
    require(path, "path");
    require(hash, "hash");
    if (!std::filesystem::exists(path)) throw InputError(std::string("no such path ") + path);
    *hash = dup_string(io::content_hash({path}));
  });
}

int unicon_dataset_load(const char* dir, int workers, unicon_dataset** out) {
  return guarded([&] {
    require(dir, "dataset directory");
    require(out, "out");
    *out = nullptr;
    if (!std::filesystem::is_directory(dir)) throw InputError(std::string("no such directory ") + dir);
    auto data = std::make_unique<unicon_dataset>();
    data->scenes = io::load_dataset(dir, workers, true);
    if (data->scenes.empty()) throw InputError(std::string("no scene directories under ") + dir);
    *out = data.release();
  });
}

size_t unicon_dataset_size(const unicon_dataset* data) { return data ? data->scenes.size() : 0; }

void unicon_dataset_free(unicon_dataset* data) { delete data; }

int unicon_model_create(const char* model_config_json, uint64_t seed, unicon_model** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const auto config = model_config_from_json(parse_json(model_config_json));
    auto m = std::make_unique<unicon_model>();
    m->model = std::make_unique<UniconModel<float>>(config);
    std::mt19937_64 rng(seed);
    m->model->params().init(rng);
    *out = m.release();
  });
}

int unicon_model_load(const char* checkpoint_path, unicon_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint path");
    require(out, "out");
    *out = nullptr;
    auto ckpt = train::read_checkpoint(checkpoint_path);
    auto m = std::make_unique<unicon_model>();
    m->model = std::make_unique<UniconModel<float>>(ckpt.model);
    train::load_parameters(*m->model, ckpt, true);
    m->state.step = ckpt.step;
    m->state.stage = ckpt.stage;
    m->source_stage = ckpt.stage;
    m->train = ckpt.train;
    if (ckpt.tensors.count("optim.step")) m->pending_optimizer = std::move(ckpt);
    *out = m.release();
  });
}

void unicon_model_free(unicon_model* model) { delete model; }

int unicon_model_config(const unicon_model* model, char** config_json) {
  return guarded([&] {
    require(model, "model");
    require(config_json, "config_json");
    *config_json = dup_string(to_json(model->model->config()).dump(2));
  });
}

int unicon_model_stage(const unicon_model* model) { return model ? model->source_stage : 0; }

int unicon_model_init_from_stage1(unicon_model* model, const char* checkpoint_path) {
  return guarded([&] {
    require(model, "model");
    require(checkpoint_path, "checkpoint path");
    const auto ckpt = train::read_checkpoint(checkpoint_path);
    if (ckpt.stage != 1) throw InputError(std::string(checkpoint_path) + " is not a stage-1 checkpoint");
    if (to_json(ckpt.model)["encoder"] != to_json(model->model->config())["encoder"]) {
      throw InputError("stage-1 checkpoint encoder settings differ from the model config");
    }
    train::load_parameters(*model->model, ckpt, train::kStage1Modules);
    model->source_stage = 1;
    model->state = {};
    model->optimizer.reset();
    model->pending_optimizer.reset();
  });
}

int unicon_train(unicon_model* model, const unicon_dataset* data, const char* train_config_json,
                 unicon_progress_fn progress, void* user) {
  return guarded([&] {
    require(model, "model");
    require(data, "dataset");
    const auto config = train::train_config_from_json(parse_json(train_config_json));
    if (config.stage == 2 && model->source_stage < 1) {
      throw InputError("stage 2 needs a model initialized from a stage-1 checkpoint");
    }
    const bool resume = model->state.stage == config.stage && model->state.step > 0;
    if (!resume) {
      model->state = {};
      model->state.stage = config.stage;
      model->optimizer.reset();
      model->pending_optimizer.reset();
    }
    if (!model->optimizer) {
      model->optimizer = std::make_unique<nn::AdamW<float>>(model->model->params(), config.optimizer);
      if (model->pending_optimizer) {
        train::load_optimizer(*model->optimizer, *model->model, *model->pending_optimizer);
        model->pending_optimizer.reset();
      }
    }
    model->train = config;
    const auto prepared = train::prepare_scenes(data->scenes, num_workers());
    train::ProgressFn fn;
    if (progress) fn = [&](const train::LogRow& r) { progress(r.step, r.l_a, r.l_v, r.l_av, r.total, user); };
    train::train_stage(*model->model, *model->optimizer, config, prepared, model->state, fn);
    model->source_stage = config.stage;
  });
}

int unicon_model_save(const unicon_model* model, const char* checkpoint_path) {
  return guarded([&] {
    require(model, "model");
    require(checkpoint_path, "checkpoint path");
    const auto config = model->train.value_or(train::TrainConfig{});
    auto state = model->state;
    if (state.step == 0 && model->source_stage > 0) state.stage = model->source_stage;
    train::save_checkpoint(checkpoint_path, *model->model, model->optimizer.get(), config, state);
  });
}

int unicon_train_log_csv(const unicon_model* model, char** csv) {
  return guarded([&] {
    require(model, "model");
    require(csv, "csv");
    *csv = dup_string(train::log_csv(model->state.log));
  });
}

int unicon_evaluate(const unicon_model* model, const unicon_dataset* data, const char* options_json,
                    const char* out_dir, char** report_json) {
  return guarded([&] {
    require(model, "model");
    require(data, "dataset");
    const auto j = parse_json(options_json);
    train::EvalOptions options;
    options.visual_only = j.value("visual_only", false);
    options.smooth_window = j.value("smooth_window", 0);
    options.max_chunk_frames = j.value("max_chunk_frames", 100);
    options.desync_shifts = j.value("desync_shifts", std::vector<int>{});
    const bool plots = j.value("plots", true);
    if (options.smooth_window < 0 || (options.smooth_window > 1 && options.smooth_window % 2 == 0)) {
      throw InputError("smooth window must be odd");
    }
    const auto& enc = model->model->config().encoder;
    for (const auto& s : data->scenes) {
      for (const auto& t : s.tracks) {
        if (!t.crops.empty() && t.crops.front().width < enc.input_size) {
          throw InputError("scene " + s.scene_id + " crops are smaller than the model input size");
        }
      }
    }
    const auto result = train::evaluate_model(*model->model, data->scenes, options, num_workers());
    const std::string text = metrics::to_json(result.report).dump(2);
    if (out_dir) {
      const auto root = make_dir(out_dir);
      io::write_text(root / "report.json", text + "\n");
      io::write_text(root / "predictions.csv", metrics::predictions_csv(result.frames));
      if (plots) {
        plots::write_pr_curve(root / "pr_curve.png", result.frames);
        plots::write_breakdown(root / "breakdown.png", result.report.breakdown);
        if (!result.report.desync.empty()) plots::write_desync_curve(root / "desync.png", result.report.desync);
      }
    }
    set_string(report_json, text);
  });
}

int unicon_dump_headmaps(const unicon_dataset* data, const char* out_dir, size_t max_scenes) {
  return guarded([&] {
    require(data, "dataset");
    const auto root = make_dir(out_dir);
    const std::size_t n = std::min(max_scenes, data->scenes.size());
    for (std::size_t s = 0; s < n; ++s) {
      const auto& scene = data->scenes[s];
      int frame = -1;
      for (int f = 0; f < scene.num_frames && frame < 0; ++f) {
        if (scene.candidates_at(f) > 0) frame = f;
      }
      if (frame < 0) continue;
      std::vector<headmap::GaussianSpec> specs;
      for (const auto& t : scene.tracks) {
        if (t.covers(frame)) {
          specs.push_back(headmap::spec_from_box(ingest::expand_box(t.boxes[static_cast<std::size_t>(frame - t.first_frame)])));
        }
      }
      const std::string stem = scene.scene_id + "_f" + std::to_string(frame);
      for (int i = 0; i < static_cast<int>(specs.size()); ++i) {
        for (int k = 0; k < static_cast<int>(specs.size()); ++k) {
          const auto map = headmap::build_pair_map(i, k, specs);
          const std::string name = i == k ? stem + "_self_" + std::to_string(i) : stem + "_pair_" + std::to_string(i) + "_" + std::to_string(k);
          headmap::write_png(map, (root / (name + ".png")).string());
        }
      }
    }
  });
}

}  // extern "C"
