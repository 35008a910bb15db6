#pragma once

#include <cstddef>
#include <vector>

#include "paec/audio.hpp"

namespace paec {

inline constexpr std::size_t kFftSize = 320;  // 20 ms at 16 kHz
inline constexpr std::size_t kHopSize = 160;  // 10 ms
inline constexpr std::size_t kNumBins = kFftSize / 2 + 1;

// One-sided complex spectrogram stored as two row-major frames x bins planes.
struct ComplexSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = kNumBins;
  std::size_t fft_size = kFftSize;
  std::size_t hop = kHopSize;
  std::vector<double> re;
  std::vector<double> im;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t t, std::size_t f = kNumBins)
      : frames(t), bins(f), re(t * f, 0.0), im(t * f, 0.0) {}

  std::size_t index(std::size_t t, std::size_t f) const { return t * bins + f; }
};

// Periodic square-root Hann window; its square overlap-adds to one at hop N/2.
const std::vector<double>& sqrt_hann_window();

std::size_t frame_count(std::size_t num_samples);

ComplexSpectrogram stft(const Waveform& w);

// Weighted overlap-add inverse. The output has (frames - 1) * hop + fft_size
// samples; it reconstructs the input exactly away from the first and last
// half frame.
Waveform istft(const ComplexSpectrogram& spec);

// Scales every bin magnitude to |X|^exponent while keeping the phase.
// Bins with magnitude below 1e-12 map to zero.
ComplexSpectrogram power_law(const ComplexSpectrogram& spec, double exponent);

inline ComplexSpectrogram compress(const ComplexSpectrogram& spec) {
  return power_law(spec, 0.5);
}
inline ComplexSpectrogram decompress(const ComplexSpectrogram& spec) {
  return power_law(spec, 2.0);
}

// Network input: compressed microphone and reference spectra stacked on the
// channel axis. Stored channel-major: data[(c * frames + t) * bins + f].
struct FeatureBlock {
  static constexpr std::size_t kChannels = 4;
  std::size_t frames = 0;
  std::size_t bins = kNumBins;
  std::vector<double> data;

  double at(std::size_t t, std::size_t c, std::size_t f) const {
    return data[(c * frames + t) * bins + f];
  }
};

FeatureBlock make_features(const Waveform& mic, const Waveform& reference);

// Zero-pads or truncates a reference signal to the given length.
Waveform align_to(const Waveform& w, std::size_t length);

}  // namespace paec
