#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "pttr/bench.hpp"
#include "pttr/checkpoint.hpp"
#include "pttr/dataset.hpp"
#include "pttr/metrics.hpp"
#include "pttr/pipeline.hpp"
#include "support/suites.hpp"

namespace fs = std::filesystem;

namespace pttr::cli {

namespace {

// Bad input that should map to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string preset = "desk";
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  int threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--preset", c.preset, "desk | paper | tiny")->capture_default_str();
  cmd->add_option("--config", c.config, "key = value config file, applied over the preset");
  cmd->add_option("--set", c.overrides, "key=value override, repeatable");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--threads", c.threads, "worker cap for evaluation")->capture_default_str()
      ->check(CLI::Range(1, 256));
}

// Preset, then the config file (or `fallback` when none is given), then --set, then --seed.
TrainConfig resolve_config(const Common& c, const std::string& fallback = {}) {
  TrainConfig cfg = preset_config(c.preset);
  if (!c.config.empty()) {
    cfg = load_config(c.config, cfg);
  } else if (!fallback.empty() && fs::exists(fallback)) {
    cfg = load_config(fallback, cfg);
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::path dir(c.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<Tracklet> load_data(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("dataset directory '" + dir + "' not found");
  auto data = load_dataset(dir);
  if (data.empty()) throw UsageError("no tracklets under '" + dir + "'");
  return data;
}

// Checkpoint next to its config.cfg, as written by `train`.
std::string sibling_config(const std::string& checkpoint) {
  return checkpoint.empty() ? std::string{} : (fs::path(checkpoint).parent_path() / "config.cfg").string();
}

void load_weights(TrackerNet<float>& net, const std::string& checkpoint) {
  if (!fs::exists(checkpoint)) throw UsageError("checkpoint '" + checkpoint + "' not found");
  load_checkpoint(checkpoint, net.parameters());
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  int count = 8;
  int frames = 10;
  double noise = 0.02;
  double max_speed = 1.0;
  bool constant_velocity = false;
  bool scenes = false;
};

int cmd_synth(const Common& c, const SynthArgs& a) {
  const TrainConfig cfg = resolve_config(c);
  SynthSpec spec;
  spec.frames = a.frames;
  spec.noise_sigma = a.noise;
  spec.validate();
  if (a.count < 1) throw UsageError("--count must be >= 1");
  const auto suite = synth_suite(spec, a.count, cfg.seed, a.max_speed, a.constant_velocity);
  const fs::path dir = out_dir(c);
  if (a.scenes) {
    // One scene per frame, tracklets back to back; objects keep their own ids.
    std::vector<AnnotatedScene> scenes;
    for (const auto& t : suite) {
      for (const auto& f : t.frames) scenes.push_back({f.cloud, {{t.object_id, t.label, f.box}}});
    }
    write_scenes_jsonl((dir / "scenes.jsonl").string(), scenes);
    std::printf("wrote %zu scenes to %s\n", scenes.size(), (dir / "scenes.jsonl").string().c_str());
  } else {
    save_dataset(dir.string(), suite);
    std::printf("wrote %zu tracklets to %s\n", suite.size(), dir.string().c_str());
  }
  return kOk;
}

struct BuildArgs {
  std::string scenes;
  std::size_t min_points = 10;
  std::size_t min_len = 3;
};

int cmd_build(const Common& c, const BuildArgs& a) {
  if (!fs::exists(a.scenes)) throw UsageError("scenes file '" + a.scenes + "' not found");
  const auto scenes = read_scenes_jsonl(a.scenes);
  const auto tracklets = build_tracklets(scenes, a.min_points, a.min_len);
  const fs::path dir = out_dir(c);
  save_dataset(dir.string(), tracklets);
  std::size_t frames = 0;
  for (const auto& t : tracklets) frames += t.frames.size();
  std::printf("%zu scenes -> %zu tracklets, %zu frames\n", scenes.size(), tracklets.size(), frames);
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::optional<int> epochs;
};

int cmd_train(const Common& c, const TrainArgs& a) {
  TrainConfig cfg = resolve_config(c);
  if (a.epochs) {
    if (*a.epochs < 0) throw UsageError("--epochs must be >= 0");
    cfg.epochs = *a.epochs;
  }
  const fs::path dir = out_dir(c);
  TrackerNet<float> net(cfg.model);
  std::vector<EpochLog> logs;
  if (cfg.epochs == 0) {
    // Initialization only; same seeding as training.
    Rng rng(cfg.seed);
    net.init(rng);
  } else {
    const auto data = load_data(a.data);
    logs = train(data, cfg, net, [](const EpochLog& l) {
      std::printf("epoch %4d  loss %.5f  lr %.2e\n", l.epoch, l.loss.total, l.lr);
      std::fflush(stdout);
      return true;
    });
  }
  save_checkpoint((dir / "model.ckpt").string(), net.parameters());
  write_text(dir / "config.cfg", serialize_config(cfg));
  write_training_log((dir / "train_log.csv").string(), logs);
  std::printf("wrote %s\n", (dir / "model.ckpt").string().c_str());
  return kOk;
}

struct ModelArgs {
  std::string data;
  std::string checkpoint;
  bool oracle = false;
};

int cmd_track(const Common& c, const ModelArgs& a, std::size_t index) {
  const TrainConfig cfg = resolve_config(c, sibling_config(a.checkpoint));
  const auto data = load_data(a.data);
  if (index >= data.size()) {
    throw UsageError("--tracklet " + std::to_string(index) + " out of range (" +
                     std::to_string(data.size()) + " tracklets)");
  }
  TrackerNet<float> net(cfg.model);
  OracleTracker oracle_model;
  std::unique_ptr<NetworkTracker> network;
  TrackingModel* model = &oracle_model;
  if (!a.oracle) {
    load_weights(net, a.checkpoint);
    network = std::make_unique<NetworkTracker>(net);
    model = network.get();
  }
  Rng rng(cfg.seed);
  const Tracklet& t = data[index];
  const TrackResult res = track_tracklet(t, *model, cfg, rng, a.oracle);

  const fs::path path = out_dir(c) / "track.csv";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "frame,cx,cy,cz,l,w,h,yaw,iou,flagged\n";
  char buf[512];
  for (std::size_t f = 0; f < res.boxes.size(); ++f) {
    const auto& b = res.boxes[f];
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", f, b.center.x,
                  b.center.y, b.center.z, b.size.length, b.size.width, b.size.height, b.yaw,
                  box_iou_3d(b, t.frames[f].box), res.flagged[f] ? 1 : 0);
    out << buf;
  }
  std::printf("tracked %s over %zu frames -> %s\n", t.object_id.c_str(), res.boxes.size(),
              path.string().c_str());
  return kOk;
}

int cmd_eval(const Common& c, const ModelArgs& a) {
  const TrainConfig cfg = resolve_config(c, sibling_config(a.checkpoint));
  const auto data = load_data(a.data);
  TrackerNet<float> net(cfg.model);
  EvalReport report;
  if (a.oracle) {
    OracleTracker model;
    report = evaluate(data, model, cfg, cfg.seed, c.threads, true);
  } else {
    load_weights(net, a.checkpoint);
    NetworkTracker model(net);
    report = evaluate(data, model, cfg, cfg.seed, c.threads);
  }
  const fs::path dir = out_dir(c);
  write_text(dir / "eval.json", report.to_json());
  write_records_csv((dir / "records.csv").string(), report.records);
  std::cout << format_report_table(report);
  std::printf("Success %.1f / Precision %.1f\n", report.average.success, report.average.precision);
  for (const auto& f : report.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return report.failures.empty() ? kOk : kFailure;
}

int cmd_check(std::size_t iou_samples) {
  bool ok = true;
  bool gradients_ok = true;
  auto show = [&](const std::vector<oracle::CheckResult>& rows, bool& group_ok) {
    for (const auto& r : rows) {
      std::printf("%-4s %-46s %11.3e  (limit %.0e, %.2f s)\n", r.passed() ? "ok" : "FAIL", r.name.c_str(),
                  r.value, r.limit, r.seconds);
      group_ok = group_ok && r.passed();
    }
    std::fflush(stdout);
  };
  show(oracle::gradient_suite(), gradients_ok);
  show(oracle::sampling_oracle_suite(), ok);
  show(oracle::geometry_oracle_suite(iou_samples), ok);
  if (gradients_ok) std::printf("all gradient checks < 1e-4\n");
  ok = ok && gradients_ok;
  std::printf(ok ? "all checks passed\n" : "some checks FAILED\n");
  return ok ? kOk : kFailure;
}

int cmd_bench(const Common& c, int iterations) {
  const TrainConfig cfg = resolve_config(c);
  if (iterations < 1) throw UsageError("--iterations must be >= 1");
  std::cout << format_bench(bench_forward(cfg, iterations, cfg.seed));
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Point relation transformer tracker toolkit"};
  app.name("pttr");
  app.require_subcommand(1);

  Common common;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthArgs synth_args;
  add_common(synth, common);
  synth->add_option("--count", synth_args.count, "number of tracklets")->capture_default_str();
  synth->add_option("--frames", synth_args.frames, "frames per tracklet")->capture_default_str();
  synth->add_option("--noise", synth_args.noise, "point noise sigma (m)")->capture_default_str();
  synth->add_option("--max-speed", synth_args.max_speed, "m/frame")->capture_default_str();
  synth->add_flag("--constant-velocity", synth_args.constant_velocity, "no yaw rate");
  synth->add_flag("--scenes", synth_args.scenes, "write annotated scenes (scenes.jsonl) instead");

  auto* build = app.add_subcommand("build-dataset", "annotated scenes -> tracklet dataset");
  BuildArgs build_args;
  add_common(build, common);
  build->add_option("--scenes", build_args.scenes, "JSON-lines scene file")->required();
  build->add_option("--min-points", build_args.min_points)->capture_default_str();
  build->add_option("--min-len", build_args.min_len)->capture_default_str();

  auto* trn = app.add_subcommand("train", "train and write model.ckpt, config.cfg, train_log.csv");
  TrainArgs train_args;
  add_common(trn, common);
  trn->add_option("--data", train_args.data, "dataset directory");
  trn->add_option("--epochs", train_args.epochs, "overrides the config; 0 writes the initialization");

  ModelArgs model_args;
  std::size_t tracklet_index = 0;
  auto* trk = app.add_subcommand("track", "track one tracklet, write track.csv");
  add_common(trk, common);
  trk->add_option("--data", model_args.data, "dataset directory")->required();
  trk->add_option("--tracklet", tracklet_index, "index in the dataset")->capture_default_str();
  auto* trk_ckpt = trk->add_option("--checkpoint", model_args.checkpoint);
  auto* trk_oracle = trk->add_flag("--oracle", model_args.oracle, "ground-truth stand-in model");

  auto* evl = app.add_subcommand("eval", "evaluate, write eval.json and records.csv");
  add_common(evl, common);
  evl->add_option("--data", model_args.data, "dataset directory")->required();
  auto* evl_ckpt = evl->add_option("--checkpoint", model_args.checkpoint);
  auto* evl_oracle = evl->add_flag("--oracle", model_args.oracle, "ground-truth stand-in model");
  for (auto [ckpt, orc] : {std::pair{trk_ckpt, trk_oracle}, std::pair{evl_ckpt, evl_oracle}}) {
    ckpt->excludes(orc);
  }

  auto* chk = app.add_subcommand("check", "gradient and oracle suites");
  std::size_t iou_samples = 1'000'000;
  chk->add_option("--iou-samples", iou_samples, "Monte-Carlo samples per box pair")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "time forward passes");
  int iterations = 20;
  add_common(bench, common);
  bench->add_option("--iterations", iterations)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(common, synth_args);
    if (*build) return cmd_build(common, build_args);
    if (*trn) {
      if (!train_args.epochs || *train_args.epochs != 0) {
        if (train_args.data.empty()) throw UsageError("train needs --data unless --epochs 0");
      }
      return cmd_train(common, train_args);
    }
    if (*trk || *evl) {
      if (!model_args.oracle && model_args.checkpoint.empty()) {
        throw UsageError("give --checkpoint or --oracle");
      }
      return *trk ? cmd_track(common, model_args, tracklet_index) : cmd_eval(common, model_args);
    }
    if (*chk) return cmd_check(iou_samples);
    if (*bench) return cmd_bench(common, iterations);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kUsage;
}

}  // namespace pttr::cli
