#include "runner.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "paec/checkpoint.hpp"
#include "paec/evaluation.hpp"
#include "paec/manifest.hpp"
#include "paec/metrics.hpp"
#include "paec/synthetic_voices.hpp"
#include "paec/trainer.hpp"
#include "paec/wav.hpp"

namespace paec::cli {

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out_dir = ".";
  std::string preset = "desk";
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

fs::path prepare_out_dir(const Globals& g) {
  fs::path dir = g.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
  return dir;
}

std::string fmt(double v, const char* spec = "%.2f") {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

ModelConfig preset_model(const std::string& preset) {
  if (preset == "desk") return ModelConfig::desk();
  if (preset == "full") return ModelConfig::full();
  throw Error("unknown preset '" + preset + "'");
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::size_t count = 0;
  std::string speech_dir;
  std::string noise_dir;
  std::string condition = "DT";
  double duration_s = 8.0;
  std::string manifest_name = "manifest.jsonl";
  bool no_wav = false;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a, std::ostream& out) {
  const auto scenario = parse_scenario(a.scenario);
  SamplerOptions opts;
  opts.condition = parse_condition(a.condition);
  opts.duration_s = a.duration_s;
  const auto dir = prepare_out_dir(g);
  std::vector<SceneSpec> scenes;
  if (a.count > 0) {
    if (a.speech_dir.empty()) throw Error("simulate: --speech-dir is required when --count > 0");
    const auto pool = SourcePool::from_directories(a.speech_dir, a.noise_dir);
    scenes = build_scenes(a.count, scenario, pool, g.seed, opts);
  }
  const auto manifest = dir / a.manifest_name;
  write_manifest(manifest, scenes);
  out << "manifest: " << manifest.string() << " (" << scenes.size() << " scenes)\n";
  if (scenes.empty()) return kOk;

  double max_err = 0.0;
  out << "scene_id      cond   sir_db  ser_db  snr_db  (target sir/ser/snr)\n";
  for (const auto& spec : scenes) {
    const auto rec = render_scene(spec);
    auto err = [](double target, double got) {
      if (std::isinf(target) && std::isinf(got)) return 0.0;
      return std::abs(target - got);
    };
    max_err = std::max({max_err, err(spec.sir, rec.sir), err(spec.ser, rec.ser), err(spec.snr, rec.snr)});
    out << spec.scene_id << "  " << to_string(spec.condition) << "  " << fmt(rec.sir) << "  "
        << fmt(rec.ser) << "  " << fmt(rec.snr) << "  (" << fmt(spec.sir) << "/" << fmt(spec.ser)
        << "/" << fmt(spec.snr) << ")\n";
    if (!a.no_wav) {
      const auto sd = dir / "scenes";
      fs::create_directories(sd);
      const std::pair<const char*, const Waveform*> roles[] = {
          {"y", &rec.y}, {"s", &rec.s}, {"x", &rec.x}, {"z", &rec.z}, {"d", &rec.d}, {"v", &rec.v}};
      for (const auto& [role, w] : roles) {
        write_wav(sd / (spec.scene_id + "." + role + ".wav"), *w);
      }
    }
  }
  out << "max ratio deviation: " << fmt(max_err, "%.3g") << " dB\n";
  return kOk;
}

// --- synth-pool -------------------------------------------------------------

int cmd_synth_pool(const Globals& g, SyntheticPoolOptions opts, std::ostream& out) {
  opts.seed = g.seed;
  const auto dir = prepare_out_dir(g);
  const auto paths = write_synthetic_pool(dir, opts);
  out << "speech: " << paths.speech_dir.string() << "\nnoise: " << paths.noise_dir.string()
      << "\nenrollment registry: " << paths.registry.string() << "\n";
  return kOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string train_manifest;
  std::string val_manifest;
  std::string enroll;
  std::string selection;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<double> segment_s;
  bool shuffle = false;
  std::string checkpoint_name = "model.ckpt";
};

TrainConfig build_train_config(const Globals& g, const TrainArgs& a) {
  TrainConfig base;
  base.model = preset_model(g.preset);
  TrainConfig c = g.config.empty() ? base : TrainConfig::from_json(read_text(g.config), base);
  c.seed = g.seed;
  if (!a.selection.empty()) c.model.selection = parse_selection(a.selection);
  if (a.epochs) c.max_epochs = *a.epochs;
  if (a.lr) c.lr = *a.lr;
  if (a.batch) c.batch_size = *a.batch;
  if (a.segment_s) c.segment_s = *a.segment_s;
  if (a.shuffle) c.shuffle = true;
  c.model.init_seed = g.seed;
  c.validate();
  return c;
}

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  const auto config = build_train_config(g, a);
  const auto mode = config.model.selection;
  if (mode != Selection::kNone && a.enroll.empty()) {
    throw Error("train: selection " + to_string(mode) + " needs --enroll <registry.json>");
  }
  const auto dir = prepare_out_dir(g);
  auto scenes = read_manifest(a.train_manifest);
  if (scenes.empty()) throw Error("train: training manifest is empty");
  std::vector<SceneSpec> val_scenes;
  if (!a.val_manifest.empty()) {
    val_scenes = read_manifest(a.val_manifest);
  } else {
    auto split = split_validation(scenes, config.val_fraction, config.seed);
    scenes = std::move(split.first);
    val_scenes = std::move(split.second);
  }

  std::optional<EnrollmentRegistry> registry;
  std::optional<EmbeddingCache> cache;
  if (mode != Selection::kNone) {
    registry = EnrollmentRegistry::load(a.enroll);
    cache.emplace(std::make_shared<StatisticsEmbeddingProvider>(), dir / "embeddings.json");
  }
  const auto* reg = registry ? &*registry : nullptr;
  auto* cch = cache ? &*cache : nullptr;
  const auto train = prepare_examples(scenes, config, reg, cch);
  const auto val = prepare_examples(val_scenes, config, reg, cch);
  if (cache) cache->flush();

  Trainer trainer(config);
  out << "training " << to_string(mode) << " model on " << train.size() << " segments ("
      << val.size() << " validation), " << count_params(trainer.model()).total << " parameters\n";
  const auto ckpt = dir / a.checkpoint_name;
  auto record = trainer.fit(train, val, ckpt, [&](const EpochRecord& e) {
    out << "epoch " << e.epoch << " train " << fmt(e.train_loss, "%.9g") << " val "
        << fmt(e.val_loss, "%.9g") << " lr " << fmt(e.lr, "%.9g") << "\n";
    out.flush();
  });
  write_text(dir / "run.json", record.to_json() + "\n");
  out << "checkpoint: " << ckpt.string() << " (best epoch " << record.best_epoch << ")\n";
  return kOk;
}

// --- infer ------------------------------------------------------------------

struct InferArgs {
  std::string in, ref, ckpt, enroll_near, enroll_far, clean;
  std::string output = "enhanced.wav";
};

int cmd_infer(const Globals& g, const InferArgs& a, std::ostream& out, std::ostream& err) {
  if (a.ref.empty()) throw Error("infer: --ref is required (the far-end signal is a model input)");
  const auto loaded = load_checkpoint(a.ckpt);
  const auto& model = *loaded.model;
  const auto mode = model.config().selection;
  EnhanceInputs emb;
  const StatisticsEmbeddingProvider provider;
  if (mode == Selection::kNone) {
    if (!a.enroll_near.empty() || !a.enroll_far.empty()) {
      err << "warning: checkpoint uses selection None; enrollment flags are ignored\n";
    }
  } else {
    if (uses_near(mode)) {
      if (a.enroll_near.empty()) throw Error("infer: selection " + to_string(mode) + " needs --enroll-near");
      emb.raw_near = provider.extract(read_wav(a.enroll_near));
    } else if (!a.enroll_near.empty()) {
      err << "warning: selection " << to_string(mode) << " ignores --enroll-near\n";
    }
    if (uses_far(mode)) {
      if (a.enroll_far.empty()) throw Error("infer: selection " + to_string(mode) + " needs --enroll-far");
      emb.raw_far = provider.extract(read_wav(a.enroll_far));
    } else if (!a.enroll_far.empty()) {
      err << "warning: selection " << to_string(mode) << " ignores --enroll-far\n";
    }
  }
  const auto y = read_wav(a.in);
  const auto x = read_wav(a.ref);
  auto s_hat = enhance(y, x, model, emb);
  for (double v : s_hat.samples) {
    if (!std::isfinite(v) || std::abs(v) > 4.0) {
      throw Error("infer: output outside [-4, 4] before clipping; refusing to write");
    }
  }
  std::size_t clipped = 0;
  for (double& v : s_hat.samples) {
    if (std::abs(v) > 1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++clipped;
    }
  }
  fs::path output = a.output;
  if (output.is_relative()) output = prepare_out_dir(g) / output;
  write_wav(output, s_hat);
  out << "wrote " << output.string() << " (" << s_hat.size() << " samples, clip fraction "
      << fmt(static_cast<double>(clipped) / static_cast<double>(std::max<std::size_t>(1, s_hat.size())), "%.6f")
      << ")\n";
  if (!a.clean.empty()) {
    const auto s = align_to(read_wav(a.clean), y.size());
    out << "erle " << fmt(erle(y, s_hat)) << " dB, si_sdr input " << fmt(si_sdr(s, y))
        << " dB, output " << fmt(si_sdr(s, s_hat)) << " dB\n";
  }
  return kOk;
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string manifest, ckpt, baseline, enroll;
  std::string report_name = "report.json";
  std::size_t threads = 1;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a, std::ostream& out) {
  if (a.ckpt.empty() == a.baseline.empty()) {
    throw Error("evaluate: give exactly one of --ckpt or --baseline");
  }
  const auto scenes = read_manifest(a.manifest);
  const auto dir = prepare_out_dir(g);
  EvalReport report;
  if (!a.baseline.empty()) {
    report = evaluate_scenes(scenes, baseline_enhancer(a.baseline), "baseline:" + a.baseline, a.threads);
  } else {
    const auto loaded = load_checkpoint(a.ckpt);
    const auto mode = loaded.model->config().selection;
    std::optional<EnrollmentRegistry> registry;
    std::optional<EmbeddingCache> cache;
    if (mode != Selection::kNone) {
      if (a.enroll.empty()) throw Error("evaluate: selection " + to_string(mode) + " needs --enroll");
      registry = EnrollmentRegistry::load(a.enroll);
      cache.emplace(std::make_shared<StatisticsEmbeddingProvider>());
    }
    const auto enhancer = model_enhancer(*loaded.model, registry ? &*registry : nullptr,
                                         cache ? &*cache : nullptr, scenes);
    report = evaluate_scenes(scenes, enhancer, a.ckpt, a.threads);
  }
  const auto path = dir / a.report_name;
  write_text(path, report.to_json());
  out << "report: " << path.string() << " (" << report.scenes.size() << " scenes)\n";
  out << "condition  metric               n      mean    median\n";
  for (const auto& [cond, metrics] : report.summaries()) {
    for (const auto& [name, s] : metrics) {
      char line[160];
      std::snprintf(line, sizeof(line), "%-10s %-20s %-6zu %8s %8s\n", cond.c_str(), name.c_str(),
                    s.count, fmt(s.mean).c_str(), fmt(s.median).c_str());
      out << line;
    }
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Personalized acoustic echo cancellation laboratory", "paec"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config, "Training/model config JSON file");
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--preset", g.preset, "Model preset")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Synthesize scenes and write a manifest");
  simulate->fallthrough();
  simulate->add_option("--scenario", sim.scenario, "D1, D2 or D3")->required()
      ->check(CLI::IsMember({"D1", "D2", "D3"}));
  simulate->add_option("--count", sim.count, "Number of scenes")->required();
  simulate->add_option("--speech-dir", sim.speech_dir, "Speech pool: <dir>/<speaker>/*.wav");
  simulate->add_option("--noise-dir", sim.noise_dir, "Noise pool: <dir>/*.wav (default white noise)");
  simulate->add_option("--condition", sim.condition, "DT, ST-NE or ST-FE")
      ->check(CLI::IsMember({"DT", "ST-NE", "ST-FE"}))->capture_default_str();
  simulate->add_option("--duration", sim.duration_s, "Scene length in seconds")->capture_default_str();
  simulate->add_option("--manifest-name", sim.manifest_name)->capture_default_str();
  simulate->add_flag("--no-wav", sim.no_wav, "Only write the manifest");

  SyntheticPoolOptions pool;
  auto* synth = app.add_subcommand("synth-pool", "Write a synthetic speech/noise pool with enrollments");
  synth->fallthrough();
  synth->add_option("--speakers", pool.speakers)->capture_default_str();
  synth->add_option("--utterances", pool.utterances_per_speaker)->capture_default_str();
  synth->add_option("--utterance-s", pool.utterance_s)->capture_default_str();
  synth->add_option("--enroll-s", pool.enrollment_s)->capture_default_str();
  synth->add_option("--noise-files", pool.noise_files)->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a model on a manifest");
  train->fallthrough();
  train->add_option("--train", tr.train_manifest, "Training manifest")->required();
  train->add_option("--val", tr.val_manifest, "Validation manifest (default: 10% seeded split)");
  train->add_option("--enroll", tr.enroll, "Enrollment registry JSON");
  train->add_option("--selection", tr.selection, "None, Es, Ex or Emix")
      ->check(CLI::IsMember({"None", "Es", "Ex", "Emix"}));
  train->add_option("--epochs", tr.epochs);
  train->add_option("--lr", tr.lr);
  train->add_option("--batch", tr.batch);
  train->add_option("--segment", tr.segment_s, "Segment length in seconds");
  train->add_flag("--shuffle", tr.shuffle, "Seeded per-epoch shuffling");
  train->add_option("--ckpt-name", tr.checkpoint_name)->capture_default_str();

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Enhance one microphone recording");
  infer->fallthrough();
  infer->add_option("--in", inf.in, "Microphone WAV")->required();
  infer->add_option("--ref", inf.ref, "Far-end reference WAV");
  infer->add_option("--ckpt", inf.ckpt, "Checkpoint")->required();
  infer->add_option("--enroll-near", inf.enroll_near);
  infer->add_option("--enroll-far", inf.enroll_far);
  infer->add_option("--clean", inf.clean, "Clean near-end WAV for reporting");
  infer->add_option("--output", inf.output)->capture_default_str();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a manifest and write a JSON report");
  evaluate->fallthrough();
  evaluate->add_option("--manifest", ev.manifest)->required();
  evaluate->add_option("--ckpt", ev.ckpt);
  evaluate->add_option("--baseline", ev.baseline)->check(CLI::IsMember({"input", "zero"}));
  evaluate->add_option("--enroll", ev.enroll);
  evaluate->add_option("--threads", ev.threads)->capture_default_str();
  evaluate->add_option("--report-name", ev.report_name)->capture_default_str();

  SelftestOptions st;
  auto* self = app.add_subcommand("selftest", "Run the invariant suites");
  self->fallthrough();
  self->add_flag("--quick", st.quick, "Reduced sizes");
  self->add_option("--ckpt", st.checkpoint, "Also verify this checkpoint loads");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(g, sim, out);
    if (*synth) return cmd_synth_pool(g, pool, out);
    if (*train) return cmd_train(g, tr, out);
    if (*infer) return cmd_infer(g, inf, out, err);
    if (*evaluate) return cmd_evaluate(g, ev, out);
    if (*self) {
      st.seed = g.seed;
      return selftest(st, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace paec::cli
