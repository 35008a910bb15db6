#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>

#include "paec/checkpoint.hpp"
#include "paec/manifest.hpp"
#include "paec/random.hpp"
#include "paec/synthetic_voices.hpp"
#include "runner.hpp"

namespace paec::cli {

namespace {

namespace fs = std::filesystem;

ModelConfig tiny_config(Selection selection, std::uint64_t seed) {
  ModelConfig c;
  c.channels = 4;
  c.gtcn_hidden = 8;
  c.n_blocks = 1;
  c.selection = selection;
  c.init_seed = seed;
  return c;
}

Waveform noise(std::size_t n, Rng& rng) {
  Waveform w(n);
  for (auto& v : w.samples) v = 0.1 * rng.normal();
  return w;
}

std::string check_roundtrip(const SelftestOptions& o) {
  Rng rng(o.seed);
  const auto w = noise(16000, rng);
  const auto back = istft(stft(w));
  double num = 0.0, den = 0.0;
  for (std::size_t i = kFftSize; i + kFftSize < w.size(); ++i) {
    num += (back[i] - w[i]) * (back[i] - w[i]);
    den += w[i] * w[i];
  }
  const double rel = std::sqrt(num / den);
  if (!(rel < 1e-6)) return "relative error " + std::to_string(rel);
  return {};
}

std::string check_compression(const SelftestOptions& o) {
  Rng rng(o.seed + 1);
  ComplexSpectrogram spec(20);
  for (std::size_t i = 0; i < spec.re.size(); ++i) {
    spec.re[i] = rng.normal();
    spec.im[i] = rng.normal();
  }
  const auto back = decompress(compress(spec));
  for (std::size_t i = 0; i < spec.re.size(); ++i) {
    const double mag = std::hypot(spec.re[i], spec.im[i]);
    const double err = std::hypot(back.re[i] - spec.re[i], back.im[i] - spec.im[i]);
    if (err > 1e-6 * mag) return "bin " + std::to_string(i) + " error " + std::to_string(err);
  }
  return {};
}

std::string check_gradients(const SelftestOptions& o) {
  GtcnnModel<double> model(tiny_config(Selection::kEs, o.seed));
  Rng rng(o.seed + 2);
  const std::size_t frames = 12;
  std::vector<double> feat(4 * frames * kNumBins), tr(frames * kNumBins), ti(frames * kNumBins);
  for (auto& v : feat) v = rng.normal();
  for (auto& v : tr) v = rng.normal();
  for (auto& v : ti) v = rng.normal();
  std::vector<double> emb(kRawEmbeddingDim);
  for (auto& v : emb) v = rng.normal() / std::sqrt(double(kRawEmbeddingDim));
  const auto features = ag::Tensor<double>::from({4, frames, kNumBins}, feat);
  const SpectralEstimate<double> target{ag::Tensor<double>::from({frames, kNumBins}, tr),
                                        ag::Tensor<double>::from({frames, kNumBins}, ti)};
  auto loss = [&] {
    return spectral_loss(model.forward(features, model.condition(emb, std::nullopt, frames)), target);
  };
  model.params().zero_grad();
  loss().backward();
  const std::size_t total = model.params().scalar_count();
  const std::size_t probes = o.quick ? 20 : 100;
  double worst = 0.0;
  for (std::size_t k = 0; k < probes; ++k) {
    std::size_t flat = rng.index(total);
    for (auto& p : model.params().items()) {
      if (flat >= p.tensor.size()) {
        flat -= p.tensor.size();
        continue;
      }
      const double analytic = p.tensor.has_grad() ? p.tensor.grad()[flat] : 0.0;
      auto values = p.tensor.data();
      const double keep = values[flat];
      const double eps = 1e-4;
      double plus, minus;
      {
        ag::NoGradGuard ng;
        values[flat] = keep + eps;
        plus = loss().item();
        values[flat] = keep - eps;
        minus = loss().item();
        values[flat] = keep;
      }
      const double numeric = (plus - minus) / (2 * eps);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
      break;
    }
  }
  if (!(worst < 1e-4)) return "worst relative error " + std::to_string(worst);
  return {};
}

std::string check_causality(const SelftestOptions& o) {
  GtcnnModel<double> model(tiny_config(Selection::kNone, o.seed));
  Rng rng(o.seed + 3);
  const std::size_t frames = 40, cut = 25;
  std::vector<double> a(4 * frames * kNumBins);
  for (auto& v : a) v = rng.normal();
  auto b = a;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = cut + 1; t < frames; ++t)
      for (std::size_t f = 0; f < kNumBins; ++f) b[(c * frames + t) * kNumBins + f] += rng.normal();
  ag::NoGradGuard ng;
  ag::NormStatsCache stats;
  const auto ya = model.forward(ag::Tensor<double>::from({4, frames, kNumBins}, a), std::nullopt, {&stats});
  stats.start_replay();
  const auto yb = model.forward(ag::Tensor<double>::from({4, frames, kNumBins}, b), std::nullopt, {&stats});
  for (std::size_t i = 0; i < (cut + 1) * kNumBins; ++i) {
    if (ya.re.data()[i] != yb.re.data()[i] || ya.im.data()[i] != yb.im.data()[i]) {
      return "output frame " + std::to_string(i / kNumBins) + " changed";
    }
  }
  return {};
}

std::string check_ratios(const SelftestOptions& o) {
  const auto root = fs::temp_directory_path() / ("paec_selftest_" + std::to_string(o.seed));
  fs::remove_all(root);
  SyntheticPoolOptions po;
  po.speakers = 4;
  po.utterances_per_speaker = 1;
  po.utterance_s = 2.0;
  po.enrollment_s = 1.0;
  po.noise_files = 1;
  po.noise_s = 2.0;
  po.seed = o.seed;
  const auto paths = write_synthetic_pool(root, po);
  const auto pool = SourcePool::from_directories(paths.speech_dir.string(), paths.noise_dir.string());
  std::string failure;
  for (auto scenario : {Scenario::kD1, Scenario::kD2, Scenario::kD3}) {
    const auto scenes = build_scenes(o.quick ? 2 : 5, scenario, pool, o.seed, {.duration_s = 2.0});
    for (const auto& spec : scenes) {
      const auto rec = render_scene(spec);
      auto off = [](double want, double got) {
        return std::isinf(want) ? !std::isinf(got) : !(std::abs(want - got) <= 0.01);
      };
      if (off(spec.sir, rec.sir) || off(spec.ser, rec.ser) || off(spec.snr, rec.snr)) {
        failure = spec.scene_id + " ratios off";
      }
      for (std::size_t i = 0; i < rec.y.size(); ++i) {
        if (std::abs(rec.y[i] - (rec.s[i] + rec.z[i] + rec.d[i] + rec.v[i])) > 1e-9) {
          failure = spec.scene_id + " mixture is not the component sum";
          break;
        }
      }
    }
  }
  fs::remove_all(root);
  return failure;
}

std::string check_checkpoint(const SelftestOptions& o) {
  GtcnnModel<float> model(tiny_config(Selection::kEmix, o.seed));
  const auto bytes = serialize_checkpoint(model);
  const auto loaded = deserialize_checkpoint(bytes);
  if (serialize_checkpoint(*loaded.model) != bytes) return "re-serialized bytes differ";
  auto corrupt = bytes;
  corrupt[0] ^= 0xFF;
  try {
    deserialize_checkpoint(corrupt);
    return "corrupted magic was accepted";
  } catch (const Error&) {
  }
  return {};
}

}  // namespace

int selftest(const SelftestOptions& options, std::ostream& out) {
  const std::vector<std::pair<const char*, std::function<std::string(const SelftestOptions&)>>> suites{
      {"stft round trip", check_roundtrip},
      {"compression inverse", check_compression},
      {"gradient check", check_gradients},
      {"causality", check_causality},
      {"mixing ratios", check_ratios},
      {"checkpoint round trip", check_checkpoint},
  };
  bool ok = true;
  for (const auto& [name, fn] : suites) {
    const auto start = std::chrono::steady_clock::now();
    std::string failure;
    try {
      failure = fn(options);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << (failure.empty() ? "PASS " : "FAIL ") << name << " (" << secs << " s)";
    if (!failure.empty()) out << ": " << failure;
    out << "\n";
    ok = ok && failure.empty();
  }
  if (!options.checkpoint.empty()) {
    try {
      const auto loaded = load_checkpoint(options.checkpoint);
      out << "PASS checkpoint " << options.checkpoint << " (selection "
          << to_string(loaded.model->config().selection) << ")\n";
    } catch (const std::exception& e) {
      out << "FAIL checkpoint " << options.checkpoint << ": " << e.what() << "\n";
      ok = false;
    }
  }
  return ok ? kOk : kInvalid;
}

}  // namespace paec::cli
