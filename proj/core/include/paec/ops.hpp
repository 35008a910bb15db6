#pragma once

#include <cstddef>
#include <vector>

#include "paec/tensor.hpp"

// Differentiable operators over channel-major tensors. Feature maps are laid
// out [channels][frames][bins] and sequences [channels][frames]; every
// temporal convolution pads only on the left, so output frame t never reads
// input frames after t.
namespace paec::ag {

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);
template <typename Real>
Tensor<Real> square(const Tensor<Real>& a);
template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& a);

// Per-channel slope for negative inputs; alpha has shape [channels].
template <typename Real>
Tensor<Real> prelu(const Tensor<Real>& x, const Tensor<Real>& alpha);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x);

// sqrt(re^2 + im^2) elementwise; the gradient is taken as zero at the origin.
template <typename Real>
Tensor<Real> magnitude(const Tensor<Real>& re, const Tensor<Real>& im);

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);

// Joins two tensors along axis 0; trailing dimensions must agree.
template <typename Real>
Tensor<Real> concat_channels(const Tensor<Real>& a, const Tensor<Real>& b);

// [dim] -> [dim][frames], every column a copy of the vector.
template <typename Real>
Tensor<Real> tile_time(const Tensor<Real>& v, std::size_t frames);

// [C][T][F] -> [C*F][T] with row index c * F + f, and back.
template <typename Real>
Tensor<Real> flatten_freq(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> unflatten_freq(const Tensor<Real>& x, std::size_t bins);

// x [Cin][T][F], weight [Cout][Cin][KT][KF], bias [Cout] or undefined.
// Output [Cout][T][(F - KF) / stride_f + 1]. Tap kt reads frame
// t - (KT - 1 - kt) * dilation_t.
template <typename Real>
Tensor<Real> conv2d_causal(const Tensor<Real>& x, const Tensor<Real>& weight,
                           const Tensor<Real>& bias, std::size_t stride_f,
                           std::size_t dilation_t = 1);

// Frequency-transposed counterpart of conv2d_causal. weight [Cin][Cout][KT][KF];
// input bin f feeds output bins f * stride_f + kf and input frame t feeds
// output frame t + (KT - 1 - kt). out_bins may exceed (F - 1) * stride + KF by
// less than the stride; the extra bins carry only the bias.
template <typename Real>
Tensor<Real> tconv2d_causal(const Tensor<Real>& x, const Tensor<Real>& weight,
                            const Tensor<Real>& bias, std::size_t stride_f,
                            std::size_t out_bins);

// x [Cin][T], weight [Cout][Cin][K]. Output frame t reads t - j * dilation
// for j = 0..K-1; the last tap is the current frame.
template <typename Real>
Tensor<Real> conv1d_causal(const Tensor<Real>& x, const Tensor<Real>& weight,
                           const Tensor<Real>& bias, std::size_t dilation);

// 1x1 channel mixing over any trailing layout. weight [Cout][Cin].
template <typename Real>
Tensor<Real> pointwise(const Tensor<Real>& x, const Tensor<Real>& weight,
                       const Tensor<Real>& bias);

// Affine map over the last axis. weight [Out][In], bias [Out] or undefined.
template <typename Real>
Tensor<Real> dense(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias);

// Per-layer normalization statistics, used to pin instance-norm statistics
// while probing causality. In kRecord mode every instance_norm call appends
// its statistics; in kReplay mode calls consume them in the same order.
struct NormStatsCache {
  enum class Mode { kRecord, kReplay };
  Mode mode = Mode::kRecord;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> inv_std;
  std::size_t cursor = 0;

  void start_replay() {
    mode = Mode::kReplay;
    cursor = 0;
  }
};

inline constexpr double kInstanceNormEps = 1e-8;

// x [C][T]: each channel is normalized over time to zero mean and unit
// (biased) variance, then scaled by gamma [C] and shifted by beta [C].
template <typename Real>
Tensor<Real> instance_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                           const Tensor<Real>& beta, NormStatsCache* stats = nullptr,
                           double eps = kInstanceNormEps);

}  // namespace paec::ag
