// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 1 2 11`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include "oracles.hpp"
#include "paec/checkpoint.hpp"
#include "paec/evaluation.hpp"
#include "paec/gtcnn.hpp"
#include "paec/manifest.hpp"
#include "paec/metrics.hpp"
#include "paec/rir.hpp"
#include "paec/scene.hpp"
#include "paec/stft.hpp"
#include "paec/synthetic_voices.hpp"
#include "paec/trainer.hpp"
#include "runner.hpp"

namespace fs = std::filesystem;
using namespace paec;
using ag::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path work_root() {
  static const fs::path root = [] {
    auto p = fs::temp_directory_path() / ("paec_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

// Speech/noise pool shared by the scene-based criteria.
const SyntheticPoolPaths& pool_paths() {
  static const SyntheticPoolPaths paths = [] {
    SyntheticPoolOptions o;
    o.speakers = 8;
    o.utterances_per_speaker = 3;
    o.utterance_s = 4.0;
    o.enrollment_s = 10.0;
    o.noise_files = 2;
    o.noise_s = 8.0;
    o.seed = 2024;
    return write_synthetic_pool(work_root() / "pool", o);
  }();
  return paths;
}

const SourcePool& pool() {
  static const SourcePool p =
      SourcePool::from_directories(pool_paths().speech_dir.string(), pool_paths().noise_dir.string());
  return p;
}

double rel_l2(std::span<const double> ref, std::span<const double> got) {
  long double num = 0, den = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    num += (ref[i] - got[i]) * (ref[i] - got[i]);
    den += ref[i] * ref[i];
  }
  return static_cast<double>(std::sqrt(num / den));
}

// 1 -------------------------------------------------------------------------

Outcome stft_fidelity() {
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Waveform w(oracle::random_signal(16000, 1000 + k));
    const auto back = istft(stft(w));
    const std::size_t lo = kHopSize, hi = back.size() - kHopSize;
    worst = std::max(worst, rel_l2(std::span(w.samples).subspan(lo, hi - lo),
                                   std::span(back.samples).subspan(lo, hi - lo)));
  }
  return {worst < 1e-6, "20 signals, worst interior relative L2 error " + fmt("%.3g", worst)};
}

// 2 -------------------------------------------------------------------------

Outcome compression_inverse() {
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    ComplexSpectrogram s(20);
    s.re = oracle::random_signal(s.re.size(), 2000 + 2 * k);
    s.im = oracle::random_signal(s.im.size(), 2001 + 2 * k);
    const auto r = decompress(compress(s));
    std::vector<double> a(s.re), b(r.re);
    a.insert(a.end(), s.im.begin(), s.im.end());
    b.insert(b.end(), r.im.begin(), r.im.end());
    worst = std::max(worst, rel_l2(a, b));
  }
  return {worst < 1e-6, "100 spectrograms, worst relative error " + fmt("%.3g", worst)};
}

// 3 -------------------------------------------------------------------------

Outcome mixing_exactness() {
  double ratio_err = 0.0, sum_err = 0.0;
  std::size_t n = 0;
  for (auto sc : {Scenario::kD1, Scenario::kD2, Scenario::kD3}) {
    for (const auto& spec : build_scenes(50, sc, pool(), 300 + static_cast<int>(sc), {TalkCondition::kDoubleTalk, 4.0})) {
      const auto rec = render_scene(spec);
      const auto r = measure_ratios(rec);
      auto dev = [](double want, double got) {
        if (std::isinf(want) || std::isinf(got)) return want == got ? 0.0 : kInf;
        return std::abs(want - got);
      };
      ratio_err = std::max({ratio_err, dev(spec.sir, r.sir), dev(spec.ser, r.ser), dev(spec.snr, r.snr)});
      for (std::size_t i = 0; i < rec.y.size(); ++i) {
        sum_err = std::max(sum_err, std::abs(rec.y[i] - (rec.s[i] + rec.z[i] + rec.d[i] + rec.v[i])));
      }
      ++n;
    }
  }
  return {ratio_err <= 0.01 && sum_err <= 1e-9,
          std::to_string(n) + " scenes, max ratio deviation " + fmt("%.3g", ratio_err) +
              " dB, max |y-(s+z+d+v)| " + fmt("%.3g", sum_err)};
}

// 4 -------------------------------------------------------------------------

Outcome rir_quality() {
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto room = sample_room(4000 + k);
    const auto h = simulate_rir(room);
    const double rt = oracle::schroeder_rt60(h.samples, kSampleRate);
    worst = std::max(worst, std::abs(rt / room.rt60 - 1.0));
  }
  return {worst <= 0.2, "20 rooms, worst relative RT60 deviation " + fmt("%.1f", 100 * worst) + "%"};
}

// 5 -------------------------------------------------------------------------

Outcome gradient_check() {
  auto cfg = ModelConfig::desk();
  cfg.selection = Selection::kEs;
  cfg.init_seed = 5;
  GtcnnModel<double> model(cfg);
  const std::size_t frames = 8;
  const auto feats =
      Tensor<double>::from({4, frames, kNumBins}, oracle::random_signal(4 * frames * kNumBins, 51, 0.5));
  const SpectralEstimate<double> target{
      Tensor<double>::from({frames, kNumBins}, oracle::random_signal(frames * kNumBins, 52, 0.3)),
      Tensor<double>::from({frames, kNumBins}, oracle::random_signal(frames * kNumBins, 53, 0.3))};
  const auto raw = oracle::random_signal(kRawEmbeddingDim, 54);
  auto loss_fn = [&] {
    return spectral_loss(model.forward(feats, model.condition(raw, std::nullopt, frames)), target);
  };
  model.params().zero_grad();
  loss_fn().backward();

  const std::size_t total = model.params().scalar_count();
  Rng rng(55);
  double worst = 0.0;
  std::string worst_name;
  for (int probe = 0; probe < 100; ++probe) {
    std::size_t flat = rng.index(total);
    for (auto& p : model.params().items()) {
      if (flat >= p.tensor.size()) {
        flat -= p.tensor.size();
        continue;
      }
      auto values = p.tensor.data();
      const double analytic = p.tensor.has_grad() ? p.tensor.grad()[flat] : 0.0;
      const double keep = values[flat];
      double plus, minus;
      {
        ag::NoGradGuard ng;
        values[flat] = keep + 1e-4;
        plus = loss_fn().item();
        values[flat] = keep - 1e-4;
        minus = loss_fn().item();
        values[flat] = keep;
      }
      const double numeric = (plus - minus) / 2e-4;
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (rel > worst) {
        worst = rel;
        worst_name = p.name;
      }
      break;
    }
  }
  return {worst < 1e-4, "100 coordinates of " + std::to_string(total) + ", worst relative error " +
                            fmt("%.3g", worst) + " (" + worst_name + ")"};
}

// 6 -------------------------------------------------------------------------

Outcome causality() {
  auto cfg = ModelConfig::desk();
  cfg.selection = Selection::kEs;
  GtcnnModel<double> model(cfg);
  const std::size_t frames = 60, t = 40;
  const auto feats =
      Tensor<double>::from({4, frames, kNumBins}, oracle::random_signal(4 * frames * kNumBins, 61, 0.5));
  const auto cond = model.condition(oracle::random_signal(kRawEmbeddingDim, 62), std::nullopt, frames);
  ag::NormStatsCache stats;
  const auto base = model.forward(feats, cond, {&stats});
  auto pert = Tensor<double>::from(feats.shape(), {feats.data().begin(), feats.data().end()});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t tt = t + 1; tt < frames; ++tt)
      for (std::size_t f = 0; f < kNumBins; ++f) pert.data()[(c * frames + tt) * kNumBins + f] += 1.0;
  stats.start_replay();
  const auto moved = model.forward(pert, cond, {&stats});
  bool past_exact = true;
  for (std::size_t i = 0; i < (t + 1) * kNumBins; ++i) {
    past_exact &= base.re.data()[i] == moved.re.data()[i] && base.im.data()[i] == moved.im.data()[i];
  }

  // Lookback of one S-GTCN block, swept over offsets 30..40.
  GtcnnModel<double> plain(ModelConfig::desk());
  const auto& block = plain.blocks()[0];
  const std::size_t width = plain.config().sequence_width(), n = 80, at = 70;
  const auto x = Tensor<double>::from({width, n}, oracle::random_signal(width * n, 63));
  ag::NormStatsCache bstats;
  const auto y0 = block.forward(x, nullptr, &bstats);
  std::size_t boundary = 0;
  bool consistent = true;
  for (std::size_t back = 30; back <= 40; ++back) {
    auto xp = Tensor<double>::from({width, n}, {x.data().begin(), x.data().end()});
    for (std::size_t c = 0; c < width; ++c) xp.data()[c * n + at - back] += 1.0;
    bstats.start_replay();
    const auto y = block.forward(xp, nullptr, &bstats);
    bool changed = false;
    for (std::size_t c = 0; c < width; ++c) changed |= y.data()[c * n + at] != y0.data()[c * n + at];
    if (changed) boundary = back;
    consistent &= changed == (back <= boundary);
  }
  return {past_exact && consistent && boundary == 34,
          std::string("past frames ") + (past_exact ? "unchanged" : "CHANGED") +
              " by future edits; block lookback " + std::to_string(boundary) + " frames"};
}

// 7 -------------------------------------------------------------------------

Outcome overfit() {
  auto cfg = TrainConfig{};
  cfg.model = ModelConfig::desk();
  cfg.model.selection = Selection::kEs;
  cfg.scenario = Scenario::kD3;
  cfg.segment_s = 2.0;
  cfg.max_epochs = 200;
  cfg.lr = 1e-3;
  cfg.seed = 7;
  const auto scenes = build_scenes(10, Scenario::kD3, pool(), 700, {TalkCondition::kDoubleTalk, 2.0});
  const auto registry = EnrollmentRegistry::load(pool_paths().registry);
  EmbeddingCache cache(std::make_shared<StatisticsEmbeddingProvider>());
  const auto examples = prepare_examples(scenes, cfg, &registry, &cache);

  Trainer trainer(cfg);
  const auto run = trainer.fit(examples, {}, std::nullopt, [](const EpochRecord& e) {
    if (e.epoch % 20 == 0) {
      std::cerr << "  [7] epoch " << e.epoch << " loss " << e.train_loss << " lr " << e.lr << "\n";
    }
  });
  const double ratio = run.final_train_loss / run.initial_train_loss;

  double gain_sum = 0.0, gain_min = kInf;
  for (const auto& ex : examples) {
    const auto s_hat = enhance(ex.mic, ex.ref, trainer.model(), {ex.raw_near, ex.raw_far});
    const double gain = si_sdr(ex.clean, s_hat) - si_sdr(ex.clean, ex.mic);
    gain_sum += gain;
    gain_min = std::min(gain_min, gain);
  }
  const double gain_mean = gain_sum / static_cast<double>(examples.size());
  return {ratio <= 0.1 && gain_mean >= 5.0,
          "final/initial loss " + fmt("%.4f", ratio) + " after " + std::to_string(run.epochs.size()) +
              " epochs; SI-SDR gain mean " + fmt("%.2f", gain_mean) + " dB, min " + fmt("%.2f", gain_min) + " dB"};
}

// 8 -------------------------------------------------------------------------

Outcome echo_suppression() {
  auto cfg = TrainConfig{};
  cfg.model = ModelConfig::desk();
  cfg.scenario = Scenario::kD1;
  cfg.segment_s = 4.0;
  cfg.max_epochs = 80;
  cfg.lr = 1e-3;
  cfg.seed = 8;
  cfg.shuffle = true;
  // Training scenes alternate double talk and far-end single talk.
  std::vector<SceneSpec> train_scenes;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto cond = i % 2 ? TalkCondition::kFarEndSingleTalk : TalkCondition::kDoubleTalk;
    auto spec = sample_scene(Scenario::kD1, pool(), 800 + i, {cond, 4.0});
    spec.scene_id = "train" + std::to_string(i);
    train_scenes.push_back(spec);
  }
  auto test_scenes = build_scenes(10, Scenario::kD1, pool(), 900, {TalkCondition::kFarEndSingleTalk, 4.0});

  Trainer trainer(cfg);
  const auto before = evaluate_scenes(test_scenes, model_enhancer(trainer.model(), nullptr, nullptr, test_scenes),
                                      "untrained");
  const auto examples = prepare_examples(train_scenes, cfg, nullptr, nullptr);
  trainer.fit(examples, {}, std::nullopt, [](const EpochRecord& e) {
    std::cerr << "  [8] epoch " << e.epoch << " loss " << e.train_loss << " lr " << e.lr << "\n";
  });
  const auto after =
      evaluate_scenes(test_scenes, model_enhancer(trainer.model(), nullptr, nullptr, test_scenes), "trained");
  const double erle_after = after.summaries().at("ST-FE").at("erle").mean;
  const double erle_before = before.summaries().at("ST-FE").at("erle").mean;
  return {erle_after >= 10.0, "mean ERLE on 10 held-out ST-FE scenes " + fmt("%.2f", erle_after) +
                                  " dB (untrained " + fmt("%.2f", erle_before) + " dB)"};
}

// 9 -------------------------------------------------------------------------

Outcome selection_bookkeeping() {
  bool ok = true;
  std::ostringstream detail;
  for (const auto& base : {ModelConfig::desk(), ModelConfig::full()}) {
    auto with = [&](Selection s) {
      auto c = base;
      c.selection = s;
      return count_params(GtcnnModel<float>(c)).total;
    };
    const std::size_t none = with(Selection::kNone), es = with(Selection::kEs), ex = with(Selection::kEx),
                      emix = with(Selection::kEmix);
    const std::size_t proj = base.raw_embed_dim * base.embed_dim + base.embed_dim;
    // Per block, the first layer's input PConv gains one column per embedding
    // dimension for each hidden unit, and its residual projection gains one per
    // sequence feature.
    const std::size_t per_block = base.embed_dim * (base.gtcn_hidden + base.sequence_width());
    ok &= es - none == proj + base.n_blocks * per_block;
    ok &= ex == es;
    ok &= emix - es == proj + base.n_blocks * per_block;
    detail << (base.channels == 80 ? "full" : "desk") << " None " << none << " Es " << es << " Emix " << emix
           << "; ";
  }
  return {ok, detail.str() + "differences match projection + per-block columns"};
}

// 10 ------------------------------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto dir = work_root() / "determinism";
  std::ostringstream sink;
  std::vector<std::string> sim{"--seed", "10", "--out-dir", dir.string(), "simulate", "--scenario", "D2",
                               "--count", "4", "--duration", "1.5", "--no-wav", "--speech-dir",
                               pool_paths().speech_dir.string(), "--noise-dir", pool_paths().noise_dir.string()};
  if (cli::run(sim, sink, sink) != 0) return {false, "simulate failed: " + sink.str()};

  auto train = [&](const std::string& name, std::string& trace) {
    std::ostringstream out, err;
    const int code = cli::run({"--seed", "10", "--out-dir", (dir / name).string(), "train", "--train",
                               (dir / "manifest.jsonl").string(), "--selection", "Es", "--enroll",
                               pool_paths().registry.string(), "--epochs", "3", "--lr", "1e-3", "--shuffle"},
                              out, err);
    std::istringstream lines(out.str());
    for (std::string line; std::getline(lines, line);)
      if (line.rfind("epoch ", 0) == 0) trace += line + "\n";
    return code;
  };
  std::string trace_a, trace_b;
  if (train("a", trace_a) != 0 || train("b", trace_b) != 0) return {false, "train failed"};
  const bool same_trace = !trace_a.empty() && trace_a == trace_b;
  const bool same_ckpt = read_file(dir / "a/model.ckpt") == read_file(dir / "b/model.ckpt");

  // Zero audio and zero biases: zero loss and zero gradients, so validation
  // never decreases after the first epoch.
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.lr = 1e-4;
  Trainer t(cfg);
  const auto run = t.fit({make_example("zero", Waveform(3200), Waveform(3200), Waveform(3200))}, {});
  std::vector<double> lrs;
  for (const auto& e : run.epochs) lrs.push_back(e.lr);
  const bool halves = lrs == std::vector<double>{1e-4, 1e-4, 1e-4, 5e-5};
  std::ostringstream lr_text;
  for (double v : lrs) lr_text << v << " ";
  return {same_trace && same_ckpt && halves,
          std::string("loss trace ") + (same_trace ? "identical" : "DIFFERS") + ", checkpoint " +
              (same_ckpt ? "identical" : "DIFFERS") + ", plateau lr trace " + lr_text.str()};
}

// 11 ------------------------------------------------------------------------

Outcome metric_oracles() {
  double worst[3] = {0, 0, 0};
  for (std::uint64_t k = 0; k < 100; ++k) {
    const auto a = oracle::random_signal(8000, 11000 + 2 * k);
    const auto b = oracle::random_signal(8000, 11001 + 2 * k, 0.5);
    worst[0] = std::max(worst[0], std::abs(erle(Waveform(a), Waveform(b)) - oracle::erle(a, b)));
    worst[1] = std::max(worst[1], std::abs(si_sdr(Waveform(a), Waveform(b)) - oracle::si_sdr(a, b)));
    worst[2] = std::max(worst[2], std::abs(lsd(Waveform(a), Waveform(b)) - oracle::lsd(a, b)));
  }
  return {worst[0] < 1e-9 && worst[1] < 1e-9 && worst[2] < 1e-9,
          "100 pairs, worst |diff| ERLE " + fmt("%.2g", worst[0]) + ", SI-SDR " + fmt("%.2g", worst[1]) +
              ", LSD " + fmt("%.2g", worst[2])};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "STFT fidelity", 1.0, stft_fidelity},
      {2, "compression inverses", 1.0, compression_inverse},
      {3, "mixing exactness", 120.0, mixing_exactness},
      {4, "RIR quality", 120.0, rir_quality},
      {5, "gradient correctness", 300.0, gradient_check},
      {6, "causality and receptive field", 60.0, causality},
      {7, "overfit sanity", 1800.0, overfit},
      {8, "echo suppression direction", 7200.0, echo_suppression},
      {9, "selection-mode bookkeeping", 60.0, selection_bookkeeping},
      {10, "determinism", 600.0, determinism},
      {11, "metric oracles", 60.0, metric_oracles},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail
              << " [" << fmt("%.2f", secs) << " s, budget " << fmt("%.0f", c.budget_s) << " s"
              << (in_time ? "" : ", OVER BUDGET") << "]" << std::endl;
  }
  std::error_code ec;
  fs::remove_all(work_root(), ec);
  return failures == 0 ? 0 : 1;
}
