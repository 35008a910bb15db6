#include "paec/stft.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "fft.hpp"

namespace paec {

const std::vector<double>& sqrt_hann_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kFftSize);
    for (std::size_t n = 0; n < kFftSize; ++n) {
      const double hann =
          0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / kFftSize);
      w[n] = std::sqrt(hann);
    }
    return w;
  }();
  return window;
}

std::size_t frame_count(std::size_t num_samples) {
  if (num_samples < kFftSize) return 0;
  return (num_samples - kFftSize) / kHopSize + 1;
}

ComplexSpectrogram stft(const Waveform& w) {
  if (w.sample_rate != kSampleRate) throw Error("stft: sample rate must be 16000");
  if (w.size() < kFftSize) throw Error("stft: input too short");
  const auto& window = sqrt_hann_window();
  ComplexSpectrogram spec(frame_count(w.size()));
  auto& fft = detail::thread_fft(kFftSize);
  std::vector<double> frame(kFftSize);
  std::vector<std::complex<double>> bins(kNumBins);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    const double* src = w.samples.data() + t * kHopSize;
    for (std::size_t n = 0; n < kFftSize; ++n) frame[n] = src[n] * window[n];
    fft.forward(frame, bins);
    for (std::size_t f = 0; f < kNumBins; ++f) {
      spec.re[spec.index(t, f)] = bins[f].real();
      spec.im[spec.index(t, f)] = bins[f].imag();
    }
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec) {
  if (spec.fft_size != kFftSize || spec.hop != kHopSize || spec.bins != kNumBins) {
    throw Error("istft: spectrogram does not match the 320/160 analysis configuration");
  }
  if (spec.re.size() != spec.frames * spec.bins || spec.im.size() != spec.re.size()) {
    throw Error("istft: malformed spectrogram dimensions");
  }
  if (spec.frames == 0) return Waveform{};
  const auto& window = sqrt_hann_window();
  Waveform out((spec.frames - 1) * kHopSize + kFftSize);
  auto& fft = detail::thread_fft(kFftSize);
  std::vector<std::complex<double>> bins(kNumBins);
  std::vector<double> frame(kFftSize);
  const double scale = 1.0 / static_cast<double>(kFftSize);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t f = 0; f < kNumBins; ++f) {
      bins[f] = {spec.re[spec.index(t, f)], spec.im[spec.index(t, f)]};
    }
    // DC and Nyquist of a real signal carry no imaginary part.
    bins[0] = {bins[0].real(), 0.0};
    bins[kNumBins - 1] = {bins[kNumBins - 1].real(), 0.0};
    fft.inverse(bins, frame);
    double* dst = out.samples.data() + t * kHopSize;
    for (std::size_t n = 0; n < kFftSize; ++n) dst[n] += frame[n] * scale * window[n];
  }
  return out;
}

ComplexSpectrogram power_law(const ComplexSpectrogram& spec, double exponent) {
  ComplexSpectrogram out = spec;
  for (std::size_t i = 0; i < spec.re.size(); ++i) {
    const double mag = std::hypot(spec.re[i], spec.im[i]);
    if (mag < 1e-12) {
      out.re[i] = 0.0;
      out.im[i] = 0.0;
      continue;
    }
    const double gain = std::pow(mag, exponent - 1.0);
    out.re[i] = gain * spec.re[i];
    out.im[i] = gain * spec.im[i];
  }
  return out;
}

Waveform align_to(const Waveform& w, std::size_t length) {
  Waveform out(length, w.sample_rate);
  const std::size_t n = std::min(length, w.size());
  std::copy(w.samples.begin(), w.samples.begin() + static_cast<std::ptrdiff_t>(n),
            out.samples.begin());
  return out;
}

FeatureBlock make_features(const Waveform& mic, const Waveform& reference) {
  if (mic.size() != reference.size()) {
    throw Error("make_features: microphone and reference lengths differ (" +
                std::to_string(mic.size()) + " vs " + std::to_string(reference.size()) + ")");
  }
  const ComplexSpectrogram y = compress(stft(mic));
  const ComplexSpectrogram x = compress(stft(reference));
  FeatureBlock block;
  block.frames = y.frames;
  const std::size_t plane = y.frames * y.bins;
  block.data.resize(FeatureBlock::kChannels * plane);
  std::copy(y.re.begin(), y.re.end(), block.data.begin());
  std::copy(y.im.begin(), y.im.end(), block.data.begin() + static_cast<std::ptrdiff_t>(plane));
  std::copy(x.re.begin(), x.re.end(), block.data.begin() + static_cast<std::ptrdiff_t>(2 * plane));
  std::copy(x.im.begin(), x.im.end(), block.data.begin() + static_cast<std::ptrdiff_t>(3 * plane));
  return block;
}

}  // namespace paec
