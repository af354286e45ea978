#include "unicon/unicon.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Failure {
  int code;
  std::string message;
};

void check(int status, const std::string& context) {
  if (status != UNICON_OK) throw Failure{status, context + ": " + unicon_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  unicon_string_free(s);
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Failure{UNICON_ERR_INPUT, "cannot read config " + path};
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Failure{UNICON_ERR_INPUT, "invalid JSON in " + path + ": " + e.what()};
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Failure{UNICON_ERR_RUNTIME, "cannot write " + path.string()};
}

std::string hash_of(const std::string& path) {
  char* h = nullptr;
  check(unicon_content_hash(path.c_str(), &h), "hashing " + path);
  return take(h);
}

void write_manifest(const fs::path& out_dir, const std::string& command, const std::vector<std::string>& argv,
                    const std::vector<std::string>& configs, std::optional<std::uint64_t> seed,
                    const std::vector<std::string>& inputs, const json& settings) {
  json m;
  m["command"] = command;
  m["argv"] = argv;
  m["config_paths"] = configs;
  m["seed"] = seed ? json(*seed) : json(nullptr);
  json hashes = json::object();
  for (const auto& p : inputs) hashes[p] = hash_of(p);
  m["input_hashes"] = hashes;
  m["output_dir"] = out_dir.string();
  m["settings"] = settings;
  m["version"] = unicon_version();
  write_file(out_dir / "manifest.json", m.dump(2) + "\n");
}

struct Dataset {
  unicon_dataset* p = nullptr;
  explicit Dataset(const std::string& dir) { check(unicon_dataset_load(dir.c_str(), unicon_num_workers(), &p), "loading " + dir); }
  ~Dataset() { unicon_dataset_free(p); }
  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;
};

struct Model {
  unicon_model* p = nullptr;
  Model() = default;
  ~Model() { unicon_model_free(p); }
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  json config() const {
    char* s = nullptr;
    check(unicon_model_config(p, &s), "model config");
    return json::parse(take(s));
  }
};

// Even shifts within [-k, k] plus the endpoints.
std::vector<int> desync_shifts(int k) {
  std::vector<int> out;
  const int m = k < 0 ? -k : k;
  for (int s = -m; s <= m; ++s) {
    if (s % 2 == 0 || s == -m || s == m) out.push_back(s);
  }
  return out;
}

void progress(long step, double l_a, double l_v, double l_av, double total, void*) {
  if (step % 25 == 0) {
    std::fprintf(stderr, "step %ld  l_a %.4f  l_v %.4f  l_av %.4f  total %.4f\n", step, l_a, l_v, l_av, total);
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Active speaker detection with spatial, relational and temporal context"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir;
  std::optional<std::uint64_t> seed;

  auto* prepare = app.add_subcommand("prepare", "Build scene directories from annotations and media");
  std::string annotations, media;
  int crop_size = 144;
  prepare->add_option("--annotations", annotations, "Annotation CSV")->required();
  prepare->add_option("--media", media, "Media root: <video>/audio.wav and <video>/frames/NNNNNN.png")->required();
  prepare->add_option("--out", out_dir, "Output directory")->required();
  prepare->add_option("--crop-size", crop_size, "Stored face crop size");
  prepare->add_option("--config", config_path, "JSON with optional crop_size");

  auto* synth = app.add_subcommand("synth", "Generate synthetic scenes");
  int n_scenes = -1;
  synth->add_option("--config", config_path, "Synth config JSON");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--seed", seed, "Overrides the config seed");
  synth->add_option("--scenes", n_scenes, "Overrides n_scenes");

  auto* train = app.add_subcommand("train", "Train one curriculum stage");
  std::string init_ckpt, resume_ckpt, ablation, suppression;
  int stage = 0;
  train->add_option("--config", config_path, "JSON with \"model\" and \"train\" sections");
  train->add_option("--data", data_dir, "Scene directory root")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--stage", stage, "1 or 2 (overrides the config)")->check(CLI::IsMember({1, 2}));
  auto* init_opt = train->add_option("--init", init_ckpt, "Stage-1 checkpoint (stage 2)");
  train->add_option("--resume", resume_ckpt, "Checkpoint to resume from")->excludes(init_opt);
  train->add_option("--seed", seed, "Overrides the train seed and the init seed");
  train->add_option("--ablation", ablation, "baseline or a combination of +S, +R, +T");
  train->add_option("--suppression", suppression, "none, mean or max")->check(CLI::IsMember({"none", "mean", "max"}));

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint;
  int desync = 0, smooth = 0, chunk = 100, dump_limit = 4;
  bool visual_only = false, dump_headmaps = false, no_plots = false;
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("--data", data_dir, "Scene directory root")->required();
  eval->add_option("--out", out_dir, "Output directory")->required();
  eval->add_option("--config", config_path, "JSON with evaluation options");
  eval->add_option("--desync", desync, "Sweep audio shifts up to +-K frames");
  eval->add_option("--smooth", smooth, "Wiener smoothing window (odd, 0 off)");
  eval->add_option("--chunk", chunk, "Maximum frames per inference chunk");
  eval->add_flag("--visual-only", visual_only, "Score with the visual head only");
  eval->add_flag("--dump-headmaps", dump_headmaps, "Write head-map PNGs for the first scenes");
  eval->add_option("--dump-limit", dump_limit, "Scenes covered by --dump-headmaps");
  eval->add_flag("--no-plots", no_plots, "Skip PNG figures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : UNICON_ERR_INPUT;
  }

  try {
    const int workers = unicon_num_workers();
    if (fs::exists(out_dir) && !fs::is_directory(out_dir)) throw Failure{UNICON_ERR_INPUT, out_dir + " is not a directory"};
    fs::create_directories(out_dir);
    std::vector<std::string> configs;
    if (!config_path.empty()) configs.push_back(config_path);

    if (*prepare) {
      if (!config_path.empty()) crop_size = read_json_file(config_path).value("crop_size", crop_size);
      char* summary = nullptr;
      check(unicon_prepare(annotations.c_str(), media.c_str(), out_dir.c_str(), crop_size, workers, &summary), "prepare");
      const json s = json::parse(take(summary));
      std::printf("scenes %zu  tracks %zu  frames %zu\n", s["scenes"].get<std::size_t>(), s["tracks"].get<std::size_t>(),
                  s["frames"].get<std::size_t>());
      write_manifest(out_dir, "prepare", args, configs, std::nullopt, {annotations}, {{"crop_size", crop_size}, {"summary", s}});
    } else if (*synth) {
      json cfg = config_path.empty() ? json::object() : read_json_file(config_path);
      if (cfg.contains("synth")) cfg = cfg["synth"];
      if (seed) cfg["seed"] = *seed;
      if (n_scenes >= 0) cfg["n_scenes"] = n_scenes;
      char* summary = nullptr;
      check(unicon_synth(cfg.dump().c_str(), out_dir.c_str(), workers, &summary), "synth");
      const json s = json::parse(take(summary));
      std::printf("scenes %zu  tracks %zu  frames %zu\n", s["scenes"].get<std::size_t>(), s["tracks"].get<std::size_t>(),
                  s["frames"].get<std::size_t>());
      write_manifest(out_dir, "synth", args, configs, cfg.value("seed", std::uint64_t{0}), configs, {{"synth", cfg}, {"summary", s}});
    } else if (*train) {
      const json cfg = config_path.empty() ? json::object() : read_json_file(config_path);
      json model_cfg = cfg.value("model", json::object());
      json train_cfg = cfg.value("train", json::object());
      if (stage) train_cfg["stage"] = stage;
      if (seed) train_cfg["seed"] = *seed;
      const int st = train_cfg.value("stage", 1);
      const std::uint64_t init_seed = train_cfg.value("seed", std::uint64_t{0});

      Model model;
      if (!resume_ckpt.empty()) {
        check(unicon_model_load(resume_ckpt.c_str(), &model.p), "loading " + resume_ckpt);
        if (!ablation.empty() || !suppression.empty()) {
          json want = model.config();
          if ((!ablation.empty() && want.value("ablation", std::string()) != ablation) ||
              (!suppression.empty() && want["relational"].value("suppression", std::string()) != suppression)) {
            throw Failure{UNICON_ERR_INPUT, "--ablation/--suppression differ from the resumed checkpoint"};
          }
        }
      } else {
        if (!ablation.empty()) {
          model_cfg["ablation"] = ablation;
          model_cfg.erase("spatial");
          model_cfg.erase("relational_context");
        }
        if (!suppression.empty()) model_cfg["relational"]["suppression"] = suppression;
        if (st == 2 && init_ckpt.empty()) throw Failure{UNICON_ERR_INPUT, "stage 2 requires --init with a stage-1 checkpoint"};
        check(unicon_model_create(model_cfg.dump().c_str(), init_seed, &model.p), "model config");
        if (!init_ckpt.empty()) check(unicon_model_init_from_stage1(model.p, init_ckpt.c_str()), "loading " + init_ckpt);
      }
      Dataset data(data_dir);
      std::fprintf(stderr, "training stage %d on %zu scenes\n", st, unicon_dataset_size(data.p));
      const int status = unicon_train(model.p, data.p, train_cfg.dump().c_str(), progress, nullptr);
      char* log = nullptr;
      if (unicon_train_log_csv(model.p, &log) == UNICON_OK) write_file(fs::path(out_dir) / "train_log.csv", take(log));
      check(status, "train");
      const auto ckpt = (fs::path(out_dir) / "checkpoint.ckpt").string();
      check(unicon_model_save(model.p, ckpt.c_str()), "saving checkpoint");
      std::vector<std::string> inputs{data_dir};
      if (!init_ckpt.empty()) inputs.push_back(init_ckpt);
      if (!resume_ckpt.empty()) inputs.push_back(resume_ckpt);
      for (const auto& c : configs) inputs.push_back(c);
      write_manifest(out_dir, "train", args, configs, init_seed, inputs, {{"model", model.config()}, {"train", train_cfg}});
      std::printf("checkpoint %s\n", ckpt.c_str());
    } else if (*eval) {
      json opts = config_path.empty() ? json::object() : read_json_file(config_path);
      if (opts.contains("eval")) opts = opts["eval"];
      if (eval->count("--smooth")) opts["smooth_window"] = smooth;
      if (eval->count("--chunk")) opts["max_chunk_frames"] = chunk;
      if (visual_only) opts["visual_only"] = true;
      if (eval->count("--desync")) opts["desync_shifts"] = desync_shifts(desync);
      if (no_plots) opts["plots"] = false;
      Model model;
      check(unicon_model_load(checkpoint.c_str(), &model.p), "loading " + checkpoint);
      Dataset data(data_dir);
      char* report = nullptr;
      check(unicon_evaluate(model.p, data.p, opts.dump().c_str(), out_dir.c_str(), &report), "eval");
      const json r = json::parse(take(report));
      std::printf("mAP %.4f  AUROC %.4f  F1 %.4f  DER %.4f\n", r["map"].get<double>(), r["auroc"].get<double>(),
                  r["f1"].get<double>(), r["der"].get<double>());
      if (r.contains("desync")) {
        for (const auto& p : r["desync"]) std::printf("shift %+d  mAP %.4f\n", p["shift"].get<int>(), p["map"].get<double>());
      }
      if (dump_headmaps) {
        const auto dir = (fs::path(out_dir) / "headmaps").string();
        check(unicon_dump_headmaps(data.p, dir.c_str(), static_cast<std::size_t>(dump_limit)), "dumping head maps");
      }
      std::vector<std::string> inputs{checkpoint, data_dir};
      for (const auto& c : configs) inputs.push_back(c);
      write_manifest(out_dir, "eval", args, configs, std::nullopt, inputs, {{"eval", opts}});
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return UNICON_ERR_RUNTIME;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return UNICON_ERR_INPUT;
  }
  return 0;
}
