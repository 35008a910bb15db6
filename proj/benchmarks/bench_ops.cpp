#include <benchmark/benchmark.h>

#include <random>

#include "paec/ops.hpp"
#include "paec/stft.hpp"

using namespace paec;
using ag::Tensor;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

void BM_Stft(benchmark::State& state) {
  Waveform w(static_cast<std::size_t>(state.range(0)));
  std::mt19937 gen(1);
  std::normal_distribution<double> d;
  for (auto& x : w.samples) x = d(gen);
  for (auto _ : state) benchmark::DoNotOptimize(stft(w));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stft)->Arg(16000)->Arg(128000);

void BM_StftRoundTrip(benchmark::State& state) {
  Waveform w(16000);
  std::mt19937 gen(2);
  std::normal_distribution<double> d;
  for (auto& x : w.samples) x = d(gen);
  for (auto _ : state) benchmark::DoNotOptimize(istft(compress(stft(w))));
}
BENCHMARK(BM_StftRoundTrip);

// Encoder-shaped convolution: 24 channels, 200 frames, 161 -> 80 bins.
void BM_Conv2dForward(benchmark::State& state) {
  const std::size_t c = 24, t = 200;
  const auto x = Tensor<float>::from({c, t, 161}, noise(c * t * 161, 3));
  const auto w = Tensor<float>::from({c, c, 2, 3}, noise(c * c * 6, 4));
  for (auto _ : state) benchmark::DoNotOptimize(ag::conv2d_causal(x, w, Tensor<float>(), 2));
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dBackward(benchmark::State& state) {
  const std::size_t c = 24, t = 200;
  auto x = Tensor<float>::from({c, t, 161}, noise(c * t * 161, 5), true);
  auto w = Tensor<float>::from({c, c, 2, 3}, noise(c * c * 6, 6), true);
  for (auto _ : state) {
    ag::sum(ag::conv2d_causal(x, w, Tensor<float>(), 2)).backward();
    x.zero_grad();
    w.zero_grad();
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_DilatedConv1d(benchmark::State& state) {
  const std::size_t h = 64, t = 800;
  const auto x = Tensor<float>::from({h, t}, noise(h * t, 7));
  const auto w = Tensor<float>::from({h, h, 3}, noise(h * h * 3, 8));
  for (auto _ : state) benchmark::DoNotOptimize(ag::conv1d_causal(x, w, Tensor<float>(), 9));
}
BENCHMARK(BM_DilatedConv1d);

}  // namespace
