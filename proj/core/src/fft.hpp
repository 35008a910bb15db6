#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace paec::detail {

// Real-input FFT of a fixed size backed by FFTW. Instances own their plans
// and scratch buffers, so one instance must not be shared between threads.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // in.size() == size(); out.size() == bins(). Unnormalized forward DFT.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // Unnormalized inverse: forward followed by inverse scales by size().
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_ = nullptr;
  void* spectrum_ = nullptr;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

// Per-thread cached transform of the requested size.
RealFft& thread_fft(std::size_t n);

// Linear convolution of a and b (full length a + b - 1) via FFT.
std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b);

}  // namespace paec::detail
