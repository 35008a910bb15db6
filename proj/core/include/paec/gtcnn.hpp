#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paec/ops.hpp"
#include "paec/parameters.hpp"
#include "paec/speaker.hpp"
#include "paec/stft.hpp"

namespace paec {

struct ModelConfig {
  std::size_t channels = 80;  // C
  std::size_t gtcn_hidden = 64;
  std::vector<std::size_t> dilations{1, 2, 5, 9};
  std::size_t n_blocks = 3;
  std::size_t embed_dim = kProjectedEmbeddingDim;
  std::size_t raw_embed_dim = kRawEmbeddingDim;
  Selection selection = Selection::kNone;
  std::size_t encoder_layers = 5;
  std::size_t kernel_t = 2;
  std::size_t kernel_f = 3;
  std::size_t stride_f = 2;
  std::size_t dconv_kernel = 3;
  std::size_t fft_size = kFftSize;
  std::size_t hop = kHopSize;
  std::uint64_t init_seed = 0;

  static ModelConfig full();
  // Reduced width for tests and laptop-scale training.
  static ModelConfig desk();

  std::size_t bins() const { return fft_size / 2 + 1; }
  // Frequency sizes along the encoder: 161, 80, 39, 19, 9, 4 by default.
  std::vector<std::size_t> frequency_ladder() const;
  std::size_t sequence_width() const;  // channels * final ladder entry
  std::size_t conditioning_width() const;  // 0, 256 or 512
  // Frames of history one S-GTCN block sees: (kernel - 1) * sum(dilations).
  std::size_t block_lookback() const;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

// conv_feature(x) * sigmoid(conv_gate(x))
template <typename Real>
ag::Tensor<Real> gated_conv(const ag::Tensor<Real>& x, const ag::Tensor<Real>& feat_w,
                            const ag::Tensor<Real>& feat_b, const ag::Tensor<Real>& gate_w,
                            const ag::Tensor<Real>& gate_b, std::size_t stride_f);

template <typename Real>
ag::Tensor<Real> gated_tconv(const ag::Tensor<Real>& x, const ag::Tensor<Real>& feat_w,
                             const ag::Tensor<Real>& feat_b, const ag::Tensor<Real>& gate_w,
                             const ag::Tensor<Real>& gate_b, std::size_t stride_f,
                             std::size_t out_bins);

template <typename Real>
struct GatedConvLayer {
  ag::Tensor<Real> feat_w, feat_b, gate_w, gate_b;
  std::size_t stride_f = 2;
  std::size_t out_bins = 0;  // transposed layers only
};

// One gated temporal convolution layer over a [width][T] sequence:
// pconv_in -> PReLU -> instance norm -> (dilated feature conv * sigmoid(dilated
// gate conv)) -> pconv_out, plus the residual. When the layer also receives
// an embedding, pconv_in sees [x; E] and the residual adds a learned
// pointwise map of E to x, so the residual is a pointwise projection of the
// concatenated input whose feature block is the identity.
template <typename Real>
struct GtcnLayer {
  ag::Tensor<Real> in_w, in_b;
  ag::Tensor<Real> alpha;
  ag::Tensor<Real> norm_gamma, norm_beta;
  ag::Tensor<Real> feat_w, feat_b, gate_w, gate_b;
  ag::Tensor<Real> out_w, out_b;
  ag::Tensor<Real> residual_w;  // [width][embed]; undefined without embedding
  std::size_t dilation = 1;

  ag::Tensor<Real> forward(const ag::Tensor<Real>& x, const ag::Tensor<Real>* embedding,
                           ag::NormStatsCache* stats) const;
};

template <typename Real>
struct SgtcnBlock {
  std::vector<GtcnLayer<Real>> layers;

  ag::Tensor<Real> forward(const ag::Tensor<Real>& x, const ag::Tensor<Real>* embedding,
                           ag::NormStatsCache* stats) const;
};

// Estimated near-end spectrum, each part [T][bins].
template <typename Real>
struct SpectralEstimate {
  ag::Tensor<Real> re;
  ag::Tensor<Real> im;
};

struct ForwardOptions {
  ag::NormStatsCache* norm_stats = nullptr;
};

template <typename Real>
class GtcnnModel {
 public:
  explicit GtcnnModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ag::ParameterSet<Real>& params() { return params_; }
  const ag::ParameterSet<Real>& params() const { return params_; }

  // features [4][T][bins]; conditioning [width][T] as produced by
  // condition(), required exactly when the selection mode uses embeddings.
  SpectralEstimate<Real> forward(const ag::Tensor<Real>& features,
                                 const std::optional<ag::Tensor<Real>>& conditioning,
                                 const ForwardOptions& options = {}) const;

  // Dense layer outputs W before decompression, each [T][bins].
  SpectralEstimate<Real> forward_compressed(const ag::Tensor<Real>& features,
                                            const std::optional<ag::Tensor<Real>>& conditioning,
                                            const ForwardOptions& options = {}) const;

  // Projects raw 512-d embeddings through the near/far dense layers and
  // tiles them over `frames` according to the selection mode.
  std::optional<ag::Tensor<Real>> condition(const std::optional<std::vector<double>>& raw_near,
                                            const std::optional<std::vector<double>>& raw_far,
                                            std::size_t frames) const;

  // Copies values from another parameter set with identical names/shapes.
  template <typename Other>
  void load_values(const ag::ParameterSet<Other>& other);

  const std::vector<GatedConvLayer<Real>>& encoder() const { return encoder_; }
  const std::vector<SgtcnBlock<Real>>& blocks() const { return blocks_; }

 private:
  ag::Tensor<Real> decode(const std::vector<GatedConvLayer<Real>>& decoder,
                          const ag::Tensor<Real>& bottleneck,
                          const std::vector<ag::Tensor<Real>>& skips) const;

  ModelConfig config_;
  ag::ParameterSet<Real> params_;
  std::vector<GatedConvLayer<Real>> encoder_;
  std::vector<std::pair<ag::Tensor<Real>, ag::Tensor<Real>>> skip_;
  std::vector<SgtcnBlock<Real>> blocks_;
  std::vector<GatedConvLayer<Real>> real_decoder_;
  std::vector<GatedConvLayer<Real>> imag_decoder_;
  ag::Tensor<Real> dense_r_w_, dense_r_b_, dense_i_w_, dense_i_b_;
  ag::Tensor<Real> proj_s_w_, proj_s_b_, proj_x_w_, proj_x_b_;
};

template <typename Real>
template <typename Other>
void GtcnnModel<Real>::load_values(const ag::ParameterSet<Other>& other) {
  if (other.size() != params_.size()) throw Error("load_values: parameter count mismatch");
  for (std::size_t i = 0; i < other.size(); ++i) {
    const auto& src = other.items()[i];
    auto& dst = params_.items()[i];
    if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
      throw Error("load_values: parameter mismatch at " + dst.name);
    }
    auto out = dst.tensor.data();
    const auto in = src.tensor.data();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<Real>(in[k]);
  }
}

// Feature tensor [4][T][bins] in the model's precision.
template <typename Real>
ag::Tensor<Real> feature_tensor(const FeatureBlock& block);

// Uncompressed target spectrum of the clean near-end speech, [T][bins] each.
template <typename Real>
SpectralEstimate<Real> target_spectrum(const Waveform& clean);

// Mean over frames and bins of |S_r - est_r|^2 + |S_i - est_i|^2.
template <typename Real>
ag::Tensor<Real> spectral_loss(const SpectralEstimate<Real>& estimate,
                               const SpectralEstimate<Real>& target);

struct EnhanceInputs {
  std::optional<std::vector<double>> raw_near;  // enrollment embedding, 512-d
  std::optional<std::vector<double>> raw_far;
};

// Runs the model on a microphone/reference pair and resynthesizes the
// estimate. The output has the same length as `mic`.
template <typename Real>
Waveform enhance(const Waveform& mic, const Waveform& reference, const GtcnnModel<Real>& model,
                 const EnhanceInputs& embeddings = {});

struct ParamCount {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_module;
};

template <typename Real>
ParamCount count_params(const GtcnnModel<Real>& model);

extern template class GtcnnModel<float>;
extern template class GtcnnModel<double>;

}  // namespace paec
