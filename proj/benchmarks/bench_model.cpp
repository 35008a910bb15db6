#include <benchmark/benchmark.h>

#include <random>

#include "paec/adam.hpp"
#include "paec/gtcnn.hpp"

using namespace paec;

namespace {

Waveform noise(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> d(0.0, 0.05);
  Waveform w(n);
  for (auto& x : w.samples) x = d(gen);
  return w;
}

ModelConfig preset(int which) { return which == 0 ? ModelConfig::desk() : ModelConfig::full(); }

// Real-time factor is seconds of audio per second of compute.
void BM_Enhance(benchmark::State& state) {
  const GtcnnModel<float> model(preset(static_cast<int>(state.range(0))));
  const auto y = noise(32000, 1), x = noise(32000, 2);
  for (auto _ : state) benchmark::DoNotOptimize(enhance(y, x, model));
  state.counters["audio_s"] = benchmark::Counter(2.0 * static_cast<double>(state.iterations()),
                                                 benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Enhance)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto cfg = ModelConfig::desk();
  cfg.selection = Selection::kEs;
  GtcnnModel<float> model(cfg);
  ag::Adam<float> adam(model.params());
  const auto y = noise(32000, 3), x = noise(32000, 4), s = noise(32000, 5);
  const auto features = feature_tensor<float>(make_features(y, x));
  const auto target = target_spectrum<float>(s);
  const std::vector<double> raw(kRawEmbeddingDim, 1.0 / std::sqrt(double(kRawEmbeddingDim)));
  for (auto _ : state) {
    model.params().zero_grad();
    const auto cond = model.condition(raw, std::nullopt, features.dim(1));
    spectral_loss(model.forward(features, cond), target).backward();
    adam.step(model.params());
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
