#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "s2x/checkpoint.hpp"
#include "s2x/config.hpp"
#include "s2x/cube.hpp"
#include "s2x/errors.hpp"
#include "s2x/finetune.hpp"
#include "s2x/metrics.hpp"
#include "s2x/pretrain.hpp"
#include "s2x/synthetic.hpp"

namespace {

using namespace s2x;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out << text;
  if (!out.flush()) throw FormatError(path + ": write failed");
}

std::string scene_path(const ExperimentConfig& cfg) {
  if (!cfg.target.empty()) return cfg.target;
  if (!cfg.source.empty()) return cfg.source;
  throw ConfigError("set data.target or data.source in the config");
}

// Shared by fine-tuning and evaluation: a fine-tuned checkpoint applied to
// a scene. Projects bands the way the checkpoint expects, predicts every
// labeled pixel, and paints the class map (unlabeled pixels stay 0).
struct SceneEval {
  Scores scores;
  std::vector<int64_t> map;  // height x width, 0 where unlabeled
};

SceneEval eval_scene(const LoadedCheckpoint& student, const HsiCube& cube) {
  if (student.meta.kind != "finetune")
    throw ContractError("expected a fine-tuned checkpoint, got kind '" + student.meta.kind + "'");
  cube.validate();
  if (!cube.has_labels() || cube.num_classes() == 0)
    throw ContractError("no labeled pixels in scene '" + cube.name + "'");

  const int64_t classes = std::stoll(student.meta.extra.at("classes"));
  if (cube.num_classes() != classes)
    throw ContractError("checkpoint classifies " + std::to_string(classes) +
                        " classes, scene '" + cube.name + "' has " +
                        std::to_string(cube.num_classes()));

  HsiCube data;
  if (has_pca(student.params)) {
    PcaModel pca = pca_from_params(student.params);
    if (pca.in_bands != cube.bands)
      throw ContractError("checkpoint band projection expects " + std::to_string(pca.in_bands) +
                          " bands, the scene has " + std::to_string(cube.bands));
    data = project_cube(pca, cube);
  } else {
    data = cube;
  }
  if (student.meta.encoder.bands != data.bands)
    throw ContractError("checkpoint encoder expects " + std::to_string(student.meta.encoder.bands) +
                        " bands, the data has " + std::to_string(data.bands));

  const int64_t window = std::stoll(student.meta.extra.at("window"));
  const int64_t patch = std::stoll(student.meta.extra.at("patch"));

  std::vector<std::pair<int64_t, int64_t>> coords;
  for (int64_t y = 0; y < cube.height; ++y)
    for (int64_t x = 0; x < cube.width; ++x)
      if (cube.label_at(y, x) > 0) coords.emplace_back(y, x);

  std::vector<int64_t> preds =
      predict_labels(data, coords, student.params, student.meta.encoder, window, patch);

  std::vector<int64_t> truth;
  truth.reserve(coords.size());
  for (const auto& yx : coords)
    truth.push_back(static_cast<int64_t>(cube.label_at(yx.first, yx.second)));

  SceneEval out;
  out.scores = score(tally(truth, preds, classes));
  out.map.assign(static_cast<size_t>(cube.pixel_count()), 0);
  for (size_t i = 0; i < coords.size(); ++i)
    out.map[static_cast<size_t>(coords[i].first * cube.width + coords[i].second)] = preds[i];
  return out;
}

void print_scores(const char* tag, const Scores& s) {
  std::printf("%s: OA=%.4f AA=%.4f kappa=%.4f\n", tag, s.oa, s.aa, s.kappa);
}

int cmd_synth(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  write_text(cfg.out + "/config_used.txt", cfg.dump());
  SyntheticPair pair =
      make_synthetic_domains(cfg.synth.classes, cfg.synth.height, cfg.synth.width,
                             cfg.synth.bands, cfg.synth.shift, cfg.synth.seed, cfg.synth.noise);
  const std::string src = cfg.out + "/source.hsic";
  const std::string tgt = cfg.out + "/target.hsic";
  save_cube(src, pair.source);
  save_cube(tgt, pair.target);
  std::printf("synth: %lldx%lld scene, %lld bands, %lld classes, shift %g\n",
              static_cast<long long>(cfg.synth.height), static_cast<long long>(cfg.synth.width),
              static_cast<long long>(cfg.synth.bands), static_cast<long long>(cfg.synth.classes),
              cfg.synth.shift);
  std::printf("source: %s\ntarget: %s\n", src.c_str(), tgt.c_str());
  return 0;
}

int cmd_pretrain(const ExperimentConfig& cfg, bool resume) {
  if (cfg.source.empty()) throw ConfigError("data.source is required for pretraining");
  HsiCube cube = load_cube(cfg.source);
  PretrainConfig pc = resolved_pretrain(cfg);
  std::filesystem::create_directories(cfg.out);
  write_text(cfg.out + "/config_used.txt", cfg.dump());
  PretrainOutcome out = pretrain_loop(cube, pc, cfg.out + "/pretrain", resume);
  std::printf("pretrain: %lld epochs, %lld steps, loss %.9g -> %.9g\n",
              static_cast<long long>(out.epochs_completed), static_cast<long long>(out.steps_run),
              out.first_loss, out.final_loss);
  std::printf("checkpoint: %s\nlog: %s\n", out.checkpoint_path.c_str(), out.log_path.c_str());
  return 0;
}

int cmd_finetune(const ExperimentConfig& cfg, const std::string& ckpt_override) {
  HsiCube cube = load_cube(scene_path(cfg));
  const std::string teacher_path =
      ckpt_override.empty() ? cfg.out + "/pretrain/pretrain.ckpt" : ckpt_override;
  LoadedCheckpoint pretrained = load_checkpoint(teacher_path);

  std::filesystem::create_directories(cfg.out);
  write_text(cfg.out + "/config_used.txt", cfg.dump());

  FinetuneConfig base = resolved_finetune(cfg, cube.name);
  std::vector<Scores> runs;
  std::string first_student;
  for (uint64_t seed : cfg.seeds) {
    FinetuneConfig fc = base;
    fc.seed = seed;
    const std::string dir = cfg.out + "/finetune_seed" + std::to_string(seed);
    FinetuneOutcome out = finetune_loop(cube, pretrained, fc, dir);
    if (first_student.empty()) first_student = out.checkpoint_path;
    char tag[64];
    std::snprintf(tag, sizeof tag, "seed %llu", static_cast<unsigned long long>(seed));
    print_scores(tag, out.eval);
    runs.push_back(out.eval);
  }

  const std::string report_path = cfg.out + "/report.tsv";
  write_report(report_path, runs);
  std::printf("report: %s\n", report_path.c_str());

  // class map from the first seed's student
  SceneEval se = eval_scene(load_checkpoint(first_student), cube);
  const std::string map_path = cfg.out + "/map.ppm";
  export_map(map_path, se.map, cube.height, cube.width);
  std::printf("map: %s\n", map_path.c_str());
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& ckpt_path,
             const std::string& cube_override) {
  if (ckpt_path.empty()) throw ConfigError("--ckpt is required for evaluation");
  const std::string cube_path = cube_override.empty() ? scene_path(cfg) : cube_override;
  LoadedCheckpoint student = load_checkpoint(ckpt_path);
  HsiCube cube = load_cube(cube_path);

  SceneEval se = eval_scene(student, cube);
  std::filesystem::create_directories(cfg.out);
  write_report(cfg.out + "/eval_report.tsv", {se.scores});
  export_map(cfg.out + "/map.ppm", se.map, cube.height, cube.width);
  print_scores("eval", se.scores);
  std::printf("report: %s\nmap: %s\n", (cfg.out + "/eval_report.tsv").c_str(),
              (cfg.out + "/map.ppm").c_str());
  return 0;
}

std::vector<uint64_t> parse_seed_list(const std::string& text) {
  std::vector<uint64_t> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stoull(cell, &used));
      if (used != cell.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("--seeds: '" + cell + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw ConfigError("--seeds: list is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-domain hyperspectral classification pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt, cube_path, seeds_text;
  uint64_t seed = 0;
  bool no_s2former = false, no_fdc = false, no_daft = false, resume = false;
  int64_t s_classes = 0, s_height = 0, s_width = 0, s_bands = 0;
  double s_shift = 0.0, s_noise = 0.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the subcommand's seed");
  };

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic scene pair");
  add_common(synth);
  synth->add_option("--classes", s_classes, "number of classes");
  synth->add_option("--height", s_height, "scene height");
  synth->add_option("--width", s_width, "scene width");
  synth->add_option("--bands", s_bands, "spectral bands");
  synth->add_option("--shift", s_shift, "target-domain spectral shift");
  synth->add_option("--noise", s_noise, "per-element noise std");

  CLI::App* pretrain = app.add_subcommand("pretrain", "self-supervised pretraining");
  add_common(pretrain);
  pretrain->add_flag("--no_s2former", no_s2former, "disable bidirectional cross-attention");
  pretrain->add_flag("--no_fdc", no_fdc, "disable the frequency-domain term");
  pretrain->add_flag("--resume", resume, "continue from the existing checkpoint");

  CLI::App* finetune = app.add_subcommand("finetune", "few-shot fine-tuning plus evaluation");
  add_common(finetune);
  finetune->add_option("--seeds", seeds_text, "comma-separated seeds for aggregated runs");
  finetune->add_option("--ckpt", ckpt, "pretraining checkpoint (default <out>/pretrain/pretrain.ckpt)");
  finetune->add_flag("--no_daft", no_daft, "disable the trajectory term");

  CLI::App* eval = app.add_subcommand("eval", "score a fine-tuned checkpoint on a scene");
  add_common(eval);
  eval->add_option("--ckpt", ckpt, "fine-tuned checkpoint");
  eval->add_option("--cube", cube_path, "scene to evaluate (default: config data.target/source)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    ExperimentConfig cfg =
        config_path.empty() ? ExperimentConfig() : ExperimentConfig::parse_file(config_path);
    if (!out_dir.empty()) cfg.out = out_dir;

    if (synth->parsed()) {
      if (synth->count("--classes")) cfg.synth.classes = s_classes;
      if (synth->count("--height")) cfg.synth.height = s_height;
      if (synth->count("--width")) cfg.synth.width = s_width;
      if (synth->count("--bands")) cfg.synth.bands = s_bands;
      if (synth->count("--shift")) cfg.synth.shift = s_shift;
      if (synth->count("--noise")) cfg.synth.noise = s_noise;
      if (synth->count("--seed")) cfg.synth.seed = seed;
      return cmd_synth(cfg);
    }
    if (pretrain->parsed()) {
      if (no_s2former) cfg.no_s2former = true;
      if (no_fdc) cfg.no_fdc = true;
      if (pretrain->count("--seed")) cfg.pretrain.seed = seed;
      return cmd_pretrain(cfg, resume);
    }
    if (finetune->parsed()) {
      if (no_daft) cfg.no_daft = true;
      if (finetune->count("--seed")) cfg.seeds = {seed};
      if (finetune->count("--seeds")) cfg.seeds = parse_seed_list(seeds_text);
      return cmd_finetune(cfg, ckpt);
    }
    if (eval->parsed()) return cmd_eval(cfg, ckpt, cube_path);
    return 2;  // unreachable with require_subcommand(1)
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
