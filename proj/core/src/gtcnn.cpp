#include "paec/gtcnn.hpp"

#include <numeric>

#include "json.hpp"
#include "paec/random.hpp"

namespace paec {

using ag::Shape;
using ag::Tensor;

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.channels = 24;
  c.gtcn_hidden = 32;
  c.n_blocks = 2;
  return c;
}

std::vector<std::size_t> ModelConfig::frequency_ladder() const {
  std::vector<std::size_t> ladder{bins()};
  for (std::size_t i = 0; i < encoder_layers; ++i) {
    const std::size_t f = ladder.back();
    if (f < kernel_f) throw Error("model config: frequency axis collapses before the last encoder layer");
    ladder.push_back((f - kernel_f) / stride_f + 1);
  }
  return ladder;
}

std::size_t ModelConfig::sequence_width() const { return channels * frequency_ladder().back(); }

std::size_t ModelConfig::conditioning_width() const {
  switch (selection) {
    case Selection::kNone: return 0;
    case Selection::kEs:
    case Selection::kEx: return embed_dim;
    case Selection::kEmix: return 2 * embed_dim;
  }
  return 0;
}

std::size_t ModelConfig::block_lookback() const {
  return (dconv_kernel - 1) * std::accumulate(dilations.begin(), dilations.end(), std::size_t{0});
}

void ModelConfig::validate() const {
  if (channels == 0 || gtcn_hidden == 0 || n_blocks == 0 || encoder_layers == 0) {
    throw Error("model config: channels, gtcn_hidden, n_blocks and encoder_layers must be positive");
  }
  if (dilations.empty()) throw Error("model config: dilations must not be empty");
  for (auto d : dilations) {
    if (d == 0) throw Error("model config: dilations must be positive");
  }
  if (kernel_t == 0 || kernel_f == 0 || stride_f == 0 || dconv_kernel == 0) {
    throw Error("model config: kernel and stride sizes must be positive");
  }
  if (fft_size != kFftSize || hop != kHopSize) {
    throw Error("model config: only the 320-point / 160-hop analysis is supported");
  }
  if (embed_dim == 0 || raw_embed_dim == 0) throw Error("model config: embedding sizes must be positive");
  frequency_ladder();
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["channels"] = channels;
  j["gtcn_hidden"] = gtcn_hidden;
  j["dilations"] = dilations;
  j["n_blocks"] = n_blocks;
  j["embed_dim"] = embed_dim;
  j["raw_embed_dim"] = raw_embed_dim;
  j["selection"] = to_string(selection);
  j["encoder_layers"] = encoder_layers;
  j["kernel_t"] = kernel_t;
  j["kernel_f"] = kernel_f;
  j["stride_f"] = stride_f;
  j["dconv_kernel"] = dconv_kernel;
  j["fft_size"] = fft_size;
  j["hop"] = hop;
  j["init_seed"] = init_seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.channels = j.value("channels", c.channels);
    c.gtcn_hidden = j.value("gtcn_hidden", c.gtcn_hidden);
    c.dilations = j.value("dilations", c.dilations);
    c.n_blocks = j.value("n_blocks", c.n_blocks);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.raw_embed_dim = j.value("raw_embed_dim", c.raw_embed_dim);
    c.selection = parse_selection(j.value("selection", std::string("None")));
    c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
    c.kernel_t = j.value("kernel_t", c.kernel_t);
    c.kernel_f = j.value("kernel_f", c.kernel_f);
    c.stride_f = j.value("stride_f", c.stride_f);
    c.dconv_kernel = j.value("dconv_kernel", c.dconv_kernel);
    c.fft_size = j.value("fft_size", c.fft_size);
    c.hop = j.value("hop", c.hop);
    c.init_seed = j.value("init_seed", c.init_seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model config: invalid JSON: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename Real>
Tensor<Real> gated_conv(const Tensor<Real>& x, const Tensor<Real>& feat_w,
                        const Tensor<Real>& feat_b, const Tensor<Real>& gate_w,
                        const Tensor<Real>& gate_b, std::size_t stride_f) {
  if (feat_w.shape() != gate_w.shape()) throw Error("gated_conv: branch geometries differ");
  auto feature = ag::conv2d_causal(x, feat_w, feat_b, stride_f);
  auto gate = ag::sigmoid(ag::conv2d_causal(x, gate_w, gate_b, stride_f));
  return ag::mul(feature, gate);
}

template <typename Real>
Tensor<Real> gated_tconv(const Tensor<Real>& x, const Tensor<Real>& feat_w,
                         const Tensor<Real>& feat_b, const Tensor<Real>& gate_w,
                         const Tensor<Real>& gate_b, std::size_t stride_f, std::size_t out_bins) {
  if (feat_w.shape() != gate_w.shape()) throw Error("gated_tconv: branch geometries differ");
  auto feature = ag::tconv2d_causal(x, feat_w, feat_b, stride_f, out_bins);
  auto gate = ag::sigmoid(ag::tconv2d_causal(x, gate_w, gate_b, stride_f, out_bins));
  return ag::mul(feature, gate);
}

template <typename Real>
Tensor<Real> GtcnLayer<Real>::forward(const Tensor<Real>& x, const Tensor<Real>* embedding,
                                      ag::NormStatsCache* stats) const {
  if (residual_w.defined() != (embedding != nullptr)) {
    throw Error("gtcn layer: embedding presence does not match the layer configuration");
  }
  const Tensor<Real> input = embedding ? ag::concat_channels(x, *embedding) : x;
  auto h = ag::pointwise(input, in_w, in_b);
  h = ag::prelu(h, alpha);
  h = ag::instance_norm(h, norm_gamma, norm_beta, stats);
  auto feature = ag::conv1d_causal(h, feat_w, feat_b, dilation);
  auto gate = ag::sigmoid(ag::conv1d_causal(h, gate_w, gate_b, dilation));
  auto y = ag::pointwise(ag::mul(feature, gate), out_w, out_b);
  Tensor<Real> residual = x;
  if (embedding) residual = ag::add(x, ag::pointwise(*embedding, residual_w, Tensor<Real>()));
  return ag::add(y, residual);
}

template <typename Real>
Tensor<Real> SgtcnBlock<Real>::forward(const Tensor<Real>& x, const Tensor<Real>* embedding,
                                       ag::NormStatsCache* stats) const {
  Tensor<Real> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h, i == 0 ? embedding : nullptr, stats);
  }
  return h;
}

namespace {

template <typename Real>
GatedConvLayer<Real> make_gated(ag::ParameterSet<Real>& ps, const std::string& prefix,
                                std::size_t cin, std::size_t cout, const ModelConfig& c,
                                bool transposed, std::size_t out_bins, Rng& rng) {
  GatedConvLayer<Real> layer;
  layer.stride_f = c.stride_f;
  layer.out_bins = out_bins;
  const Shape shape = transposed ? Shape{cin, cout, c.kernel_t, c.kernel_f}
                                 : Shape{cout, cin, c.kernel_t, c.kernel_f};
  // Transposed layers: each output bin hears about kernel_f / stride inputs.
  const std::size_t fan_in =
      transposed ? cin * c.kernel_t * ((c.kernel_f + c.stride_f - 1) / c.stride_f)
                 : cin * c.kernel_t * c.kernel_f;
  layer.feat_w = ps.add_kaiming(prefix + ".feat.weight", shape, fan_in, rng);
  layer.feat_b = ps.add_constant(prefix + ".feat.bias", {cout}, Real(0));
  layer.gate_w = ps.add_kaiming(prefix + ".gate.weight", shape, fan_in, rng);
  layer.gate_b = ps.add_constant(prefix + ".gate.bias", {cout}, Real(0));
  return layer;
}

}  // namespace

template <typename Real>
GtcnnModel<Real>::GtcnnModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const auto ladder = c.frequency_ladder();
  const std::size_t width = c.sequence_width();
  const std::size_t cond = c.conditioning_width();
  const std::size_t layers = c.encoder_layers;
  Rng rng(c.init_seed);
  auto& ps = params_;

  for (std::size_t i = 0; i < layers; ++i) {
    encoder_.push_back(make_gated(ps, "encoder." + std::to_string(i), i == 0 ? 4 : c.channels,
                                  c.channels, c, false, ladder[i + 1], rng));
  }
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string p = "skip." + std::to_string(i);
    auto w = ps.add_kaiming(p + ".weight", {c.channels, c.channels}, c.channels, rng);
    auto b = ps.add_constant(p + ".bias", {c.channels}, Real(0));
    skip_.emplace_back(w, b);
  }
  if (uses_near(c.selection)) {
    proj_s_w_ = ps.add_kaiming("speaker.proj_s.weight", {c.embed_dim, c.raw_embed_dim},
                               c.raw_embed_dim, rng);
    proj_s_b_ = ps.add_constant("speaker.proj_s.bias", {c.embed_dim}, Real(0));
  }
  if (uses_far(c.selection)) {
    proj_x_w_ = ps.add_kaiming("speaker.proj_x.weight", {c.embed_dim, c.raw_embed_dim},
                               c.raw_embed_dim, rng);
    proj_x_b_ = ps.add_constant("speaker.proj_x.bias", {c.embed_dim}, Real(0));
  }
  const std::size_t h = c.gtcn_hidden;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    SgtcnBlock<Real> block;
    for (std::size_t l = 0; l < c.dilations.size(); ++l) {
      const std::string p = "blocks." + std::to_string(b) + ".layers." + std::to_string(l);
      const std::size_t extra = l == 0 ? cond : 0;
      GtcnLayer<Real> layer;
      layer.dilation = c.dilations[l];
      layer.in_w = ps.add_kaiming(p + ".pconv_in.weight", {h, width + extra}, width + extra, rng);
      layer.in_b = ps.add_constant(p + ".pconv_in.bias", {h}, Real(0));
      layer.alpha = ps.add_constant(p + ".prelu.alpha", {h}, Real(0.25));
      layer.norm_gamma = ps.add_constant(p + ".norm.gamma", {h}, Real(1));
      layer.norm_beta = ps.add_constant(p + ".norm.beta", {h}, Real(0));
      layer.feat_w = ps.add_kaiming(p + ".dconv_feat.weight", {h, h, c.dconv_kernel},
                                    h * c.dconv_kernel, rng);
      layer.feat_b = ps.add_constant(p + ".dconv_feat.bias", {h}, Real(0));
      layer.gate_w = ps.add_kaiming(p + ".dconv_gate.weight", {h, h, c.dconv_kernel},
                                    h * c.dconv_kernel, rng);
      layer.gate_b = ps.add_constant(p + ".dconv_gate.bias", {h}, Real(0));
      layer.out_w = ps.add_kaiming(p + ".pconv_out.weight", {width, h}, h, rng);
      layer.out_b = ps.add_constant(p + ".pconv_out.bias", {width}, Real(0));
      if (extra > 0) {
        layer.residual_w = ps.add_kaiming(p + ".residual.weight", {width, extra}, extra, rng);
      }
      block.layers.push_back(std::move(layer));
    }
    blocks_.push_back(std::move(block));
  }
  for (const char* name : {"real_decoder", "imag_decoder"}) {
    auto& dec = std::string(name) == "real_decoder" ? real_decoder_ : imag_decoder_;
    for (std::size_t j = 0; j < layers; ++j) {
      const std::size_t cout = j + 1 == layers ? 1 : c.channels;
      dec.push_back(make_gated(ps, std::string(name) + "." + std::to_string(j), c.channels, cout, c,
                               true, ladder[layers - 1 - j], rng));
    }
  }
  const std::size_t f = c.bins();
  dense_r_w_ = ps.add_kaiming("out_dense_r.weight", {f, f}, f, rng);
  dense_r_b_ = ps.add_constant("out_dense_r.bias", {f}, Real(0));
  dense_i_w_ = ps.add_kaiming("out_dense_i.weight", {f, f}, f, rng);
  dense_i_b_ = ps.add_constant("out_dense_i.bias", {f}, Real(0));
}

template <typename Real>
Tensor<Real> GtcnnModel<Real>::decode(const std::vector<GatedConvLayer<Real>>& decoder,
                                      const Tensor<Real>& bottleneck,
                                      const std::vector<Tensor<Real>>& skips) const {
  Tensor<Real> d = bottleneck;
  const std::size_t layers = decoder.size();
  for (std::size_t j = 0; j < layers; ++j) {
    const auto& l = decoder[j];
    d = ag::add(d, skips[layers - 1 - j]);
    d = gated_tconv(d, l.feat_w, l.feat_b, l.gate_w, l.gate_b, l.stride_f, l.out_bins);
  }
  return d;
}

template <typename Real>
SpectralEstimate<Real> GtcnnModel<Real>::forward_compressed(
    const Tensor<Real>& features, const std::optional<Tensor<Real>>& conditioning,
    const ForwardOptions& options) const {
  const auto& c = config_;
  if (features.rank() != 3 || features.dim(0) != 4 || features.dim(2) != c.bins()) {
    throw Error("forward: features must be [4][T][" + std::to_string(c.bins()) + "], got " +
                ag::shape_string(features.shape()));
  }
  const std::size_t frames = features.dim(1);
  const std::size_t cond = c.conditioning_width();
  if (cond == 0 && conditioning) {
    throw Error("forward: selection None takes no speaker embedding");
  }
  if (cond > 0) {
    if (!conditioning) {
      throw Error("forward: selection " + to_string(c.selection) + " requires a speaker embedding");
    }
    if (conditioning->shape() != Shape{cond, frames}) {
      throw Error("forward: embedding must be [" + std::to_string(cond) + "][" +
                  std::to_string(frames) + "], got " + ag::shape_string(conditioning->shape()));
    }
  }

  Tensor<Real> x = features;
  std::vector<Tensor<Real>> skips;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const auto& l = encoder_[i];
    x = gated_conv(x, l.feat_w, l.feat_b, l.gate_w, l.gate_b, l.stride_f);
    skips.push_back(ag::pointwise(x, skip_[i].first, skip_[i].second));
  }
  const std::size_t bottom_bins = x.dim(2);
  Tensor<Real> h = ag::flatten_freq(x);
  const Tensor<Real>* emb = conditioning ? &*conditioning : nullptr;
  for (const auto& block : blocks_) h = block.forward(h, emb, options.norm_stats);
  const Tensor<Real> bottleneck = ag::unflatten_freq(h, bottom_bins);

  const Shape frame_major{frames, c.bins()};
  auto wr = ag::reshape(decode(real_decoder_, bottleneck, skips), frame_major);
  auto wi = ag::reshape(decode(imag_decoder_, bottleneck, skips), frame_major);
  return {ag::dense(wr, dense_r_w_, dense_r_b_), ag::dense(wi, dense_i_w_, dense_i_b_)};
}

template <typename Real>
SpectralEstimate<Real> GtcnnModel<Real>::forward(const Tensor<Real>& features,
                                                 const std::optional<Tensor<Real>>& conditioning,
                                                 const ForwardOptions& options) const {
  auto w = forward_compressed(features, conditioning, options);
  // |W|^2 at the phase of W, i.e. |W| * W.
  auto mag = ag::magnitude(w.re, w.im);
  return {ag::mul(mag, w.re), ag::mul(mag, w.im)};
}

template <typename Real>
std::optional<Tensor<Real>> GtcnnModel<Real>::condition(
    const std::optional<std::vector<double>>& raw_near,
    const std::optional<std::vector<double>>& raw_far, std::size_t frames) const {
  const auto mode = config_.selection;
  auto to_tensor = [&](const std::vector<double>& v, const char* which) {
    if (v.size() != config_.raw_embed_dim) {
      throw Error(std::string("condition: ") + which + " embedding has " +
                  std::to_string(v.size()) + " values, expected " +
                  std::to_string(config_.raw_embed_dim));
    }
    return Tensor<Real>::from({v.size()}, std::vector<Real>(v.begin(), v.end()));
  };
  std::optional<Tensor<Real>> near, far;
  if (uses_near(mode)) {
    if (!raw_near) throw Error("condition: selection " + to_string(mode) + " needs a near-end embedding");
    near = project_embedding(to_tensor(*raw_near, "near-end"), proj_s_w_, proj_s_b_);
  }
  if (uses_far(mode)) {
    if (!raw_far) throw Error("condition: selection " + to_string(mode) + " needs a far-end embedding");
    far = project_embedding(to_tensor(*raw_far, "far-end"), proj_x_w_, proj_x_b_);
  }
  return select_and_tile(near, far, mode, frames);
}

template <typename Real>
Tensor<Real> feature_tensor(const FeatureBlock& block) {
  return Tensor<Real>::from({FeatureBlock::kChannels, block.frames, block.bins},
                            std::vector<Real>(block.data.begin(), block.data.end()));
}

template <typename Real>
SpectralEstimate<Real> target_spectrum(const Waveform& clean) {
  const auto spec = stft(clean);
  return {Tensor<Real>::from({spec.frames, spec.bins}, std::vector<Real>(spec.re.begin(), spec.re.end())),
          Tensor<Real>::from({spec.frames, spec.bins}, std::vector<Real>(spec.im.begin(), spec.im.end()))};
}

template <typename Real>
Tensor<Real> spectral_loss(const SpectralEstimate<Real>& estimate,
                           const SpectralEstimate<Real>& target) {
  if (estimate.re.shape() != target.re.shape() || estimate.im.shape() != target.im.shape() ||
      estimate.re.shape() != estimate.im.shape()) {
    throw Error("spectral_loss: shape mismatch between estimate " +
                ag::shape_string(estimate.re.shape()) + " and target " +
                ag::shape_string(target.re.shape()));
  }
  auto lr = ag::mean(ag::square(ag::sub(target.re, estimate.re)));
  auto li = ag::mean(ag::square(ag::sub(target.im, estimate.im)));
  return ag::add(lr, li);
}

template <typename Real>
Waveform enhance(const Waveform& mic, const Waveform& reference, const GtcnnModel<Real>& model,
                 const EnhanceInputs& embeddings) {
  if (reference.empty()) throw Error("enhance: the far-end reference signal is required");
  if (mic.size() < kFftSize) throw Error("enhance: input too short");
  ag::NoGradGuard no_grad;
  const auto block = make_features(mic, align_to(reference, mic.size()));
  const auto cond = model.condition(embeddings.raw_near, embeddings.raw_far, block.frames);
  const auto est = model.forward(feature_tensor<Real>(block), cond);
  ComplexSpectrogram spec(block.frames, block.bins);
  const auto re = est.re.data();
  const auto im = est.im.data();
  for (std::size_t i = 0; i < spec.re.size(); ++i) {
    spec.re[i] = static_cast<double>(re[i]);
    spec.im[i] = static_cast<double>(im[i]);
  }
  return align_to(istft(spec), mic.size());
}

template <typename Real>
ParamCount count_params(const GtcnnModel<Real>& model) {
  return {model.params().scalar_count(), model.params().breakdown(1)};
}

#define PAEC_INSTANTIATE_GTCNN(R)                                                               \
  template class GtcnnModel<R>;                                                                 \
  template struct GtcnLayer<R>;                                                                 \
  template struct SgtcnBlock<R>;                                                                \
  template Tensor<R> gated_conv(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,           \
                                const Tensor<R>&, const Tensor<R>&, std::size_t);               \
  template Tensor<R> gated_tconv(const Tensor<R>&, const Tensor<R>&, const Tensor<R>&,          \
                                 const Tensor<R>&, const Tensor<R>&, std::size_t, std::size_t); \
  template Tensor<R> feature_tensor<R>(const FeatureBlock&);                                    \
  template SpectralEstimate<R> target_spectrum<R>(const Waveform&);                             \
  template Tensor<R> spectral_loss(const SpectralEstimate<R>&, const SpectralEstimate<R>&);     \
  template Waveform enhance(const Waveform&, const Waveform&, const GtcnnModel<R>&,             \
                            const EnhanceInputs&);                                              \
  template ParamCount count_params(const GtcnnModel<R>&);

PAEC_INSTANTIATE_GTCNN(float)
PAEC_INSTANTIATE_GTCNN(double)

#undef PAEC_INSTANTIATE_GTCNN

}  // namespace paec
