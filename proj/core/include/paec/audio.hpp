#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace paec {

inline constexpr int kSampleRate = 16000;

// Raised for malformed inputs and violated preconditions. Command-line
// front ends map it to the "validation failure" exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mono signal. All pipeline signals run at kSampleRate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::size_t n, int rate = kSampleRate)
      : samples(n, 0.0), sample_rate(rate) {}
  Waveform(std::vector<double> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double& operator[](std::size_t i) { return samples[i]; }
  double operator[](std::size_t i) const { return samples[i]; }
  std::span<const double> view() const { return samples; }
};

double energy(std::span<const double> x);

// Throws paec::Error if any sample is NaN or infinite.
void require_finite(std::span<const double> x, const std::string& what);

}  // namespace paec
