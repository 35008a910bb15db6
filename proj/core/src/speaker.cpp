#include "paec/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "fft.hpp"
#include "json.hpp"
#include "paec/ops.hpp"
#include "paec/wav.hpp"

namespace paec {

std::string to_string(Selection s) {
  switch (s) {
    case Selection::kNone: return "None";
    case Selection::kEs: return "Es";
    case Selection::kEx: return "Ex";
    case Selection::kEmix: return "Emix";
  }
  return "None";
}

Selection parse_selection(const std::string& s) {
  if (s == "None" || s == "none") return Selection::kNone;
  if (s == "Es" || s == "es") return Selection::kEs;
  if (s == "Ex" || s == "ex") return Selection::kEx;
  if (s == "Emix" || s == "emix") return Selection::kEmix;
  throw Error("unknown selection mode '" + s + "' (expected None, Es, Ex or Emix)");
}

bool uses_near(Selection s) { return s == Selection::kEs || s == Selection::kEmix; }
bool uses_far(Selection s) { return s == Selection::kEx || s == Selection::kEmix; }

namespace {

constexpr std::size_t kFrame = 400;  // 25 ms
constexpr std::size_t kHop = 160;
// Zero-padded transform so the narrow low-frequency mel bands still cover
// several bins.
constexpr std::size_t kFft = 2048;
constexpr double kMelLow = 20.0;
constexpr double kMelHigh = 8000.0;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MelBank {
  std::vector<std::vector<std::pair<std::size_t, double>>> bands;

  MelBank() {
    const std::size_t n = StatisticsEmbeddingProvider::kMelBands;
    const double lo = hz_to_mel(kMelLow), hi = hz_to_mel(kMelHigh);
    std::vector<double> edges(n + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n + 1));
    }
    const double bin_hz = static_cast<double>(kSampleRate) / kFft;
    const std::size_t bins = kFft / 2 + 1;
    bands.resize(n);
    for (std::size_t b = 0; b < n; ++b) {
      const double left = edges[b], centre = edges[b + 1], right = edges[b + 2];
      for (std::size_t k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * bin_hz;
        double w = 0.0;
        if (f > left && f <= centre) w = (f - left) / (centre - left);
        else if (f > centre && f < right) w = (right - f) / (right - centre);
        if (w > 0.0) bands[b].emplace_back(k, w);
      }
      if (bands[b].empty()) {
        bands[b].emplace_back(static_cast<std::size_t>(std::lround(centre / bin_hz)), 1.0);
      }
    }
  }
};

const MelBank& mel_bank() {
  static const MelBank bank;
  return bank;
}

}  // namespace

std::vector<double> StatisticsEmbeddingProvider::extract(const Waveform& enrollment) const {
  if (enrollment.sample_rate != kSampleRate) throw Error("extract: enrollment must be 16 kHz");
  const double seconds = static_cast<double>(enrollment.size()) / kSampleRate;
  if (seconds < min_enrollment_s_ || enrollment.size() < kFrame) {
    throw Error("extract: enrollment too short (" + std::to_string(seconds) + " s, need " +
                std::to_string(min_enrollment_s_) + " s)");
  }
  require_finite(enrollment.view(), "enrollment");

  const auto& bank = mel_bank();
  const std::size_t n_bands = kMelBands;
  const std::size_t frames = (enrollment.size() - kFrame) / kHop + 1;
  std::vector<double> window(kFrame);
  for (std::size_t i = 0; i < kFrame; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / kFrame);
  }

  auto& fft = detail::thread_fft(kFft);
  std::vector<double> buf(kFft, 0.0);
  std::vector<std::complex<double>> spec(fft.bins());
  std::vector<double> power(fft.bins());
  std::vector<double> logmel(frames * n_bands);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (std::size_t i = 0; i < kFrame; ++i) buf[i] = enrollment[t * kHop + i] * window[i];
    fft.forward(buf, spec);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
    for (std::size_t b = 0; b < n_bands; ++b) {
      double e = 0.0;
      for (auto [k, w] : bank.bands[b]) e += w * power[k];
      logmel[t * n_bands + b] = std::log(e + 1e-10);
    }
  }

  std::vector<double> out(4 * n_bands, 0.0);
  const double n = static_cast<double>(frames);
  for (std::size_t b = 0; b < n_bands; ++b) {
    double mean = 0.0;
    for (std::size_t t = 0; t < frames; ++t) mean += logmel[t * n_bands + b];
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double d = logmel[t * n_bands + b] - mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double sd = std::sqrt(m2);
    const bool flat = m2 < 1e-12;
    out[b] = mean;
    out[n_bands + b] = sd;
    out[2 * n_bands + b] = flat ? 0.0 : m3 / (m2 * sd);
    out[3 * n_bands + b] = flat ? 0.0 : m4 / (m2 * m2) - 3.0;
  }
  double norm = 0.0;
  for (double v : out) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw Error("extract: degenerate enrollment statistics");
  for (double& v : out) v /= norm;
  return out;
}

template <typename Real>
ag::Tensor<Real> project_embedding(const ag::Tensor<Real>& raw, const ag::Tensor<Real>& weight,
                                   const ag::Tensor<Real>& bias) {
  if (raw.rank() != 1 || weight.rank() != 2 || raw.dim(0) != weight.dim(1)) {
    throw Error("project_embedding: expected a " +
                std::to_string(weight.rank() == 2 ? weight.dim(1) : 0) +
                "-d input, got " + ag::shape_string(raw.shape()));
  }
  return ag::dense(raw, weight, bias);
}

template <typename Real>
std::optional<ag::Tensor<Real>> select_and_tile(const std::optional<ag::Tensor<Real>>& near,
                                                const std::optional<ag::Tensor<Real>>& far,
                                                Selection mode, std::size_t frames) {
  if (frames == 0) throw Error("select_and_tile: frame count must be positive");
  auto need = [&](const std::optional<ag::Tensor<Real>>& e, const char* which) -> const ag::Tensor<Real>& {
    if (!e || !e->defined()) {
      throw Error("select_and_tile: mode " + to_string(mode) + " requires the " + which + " embedding");
    }
    return *e;
  };
  switch (mode) {
    case Selection::kNone: return std::nullopt;
    case Selection::kEs: return ag::tile_time(need(near, "near-end"), frames);
    case Selection::kEx: return ag::tile_time(need(far, "far-end"), frames);
    case Selection::kEmix:
      return ag::tile_time(ag::concat_channels(need(near, "near-end"), need(far, "far-end")), frames);
  }
  return std::nullopt;
}

template ag::Tensor<float> project_embedding(const ag::Tensor<float>&, const ag::Tensor<float>&,
                                             const ag::Tensor<float>&);
template ag::Tensor<double> project_embedding(const ag::Tensor<double>&, const ag::Tensor<double>&,
                                              const ag::Tensor<double>&);
template std::optional<ag::Tensor<float>> select_and_tile(const std::optional<ag::Tensor<float>>&,
                                                          const std::optional<ag::Tensor<float>>&,
                                                          Selection, std::size_t);
template std::optional<ag::Tensor<double>> select_and_tile(const std::optional<ag::Tensor<double>>&,
                                                           const std::optional<ag::Tensor<double>>&,
                                                           Selection, std::size_t);

EnrollmentRegistry EnrollmentRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open enrollment registry " + path.string());
  EnrollmentRegistry reg;
  try {
    const auto j = nlohmann::json::parse(in);
    if (!j.is_object()) throw Error("enrollment registry must be a JSON object");
    const auto base = path.parent_path();
    for (const auto& [speaker, value] : j.items()) {
      std::filesystem::path p = value.get<std::string>();
      if (p.is_relative()) p = base / p;
      reg.set(speaker, p.string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("enrollment registry " + path.string() + ": " + e.what());
  }
  return reg;
}

void EnrollmentRegistry::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [speaker, p] : paths_) j[speaker] = p;
  std::ofstream out(path);
  if (!out) throw Error("cannot write enrollment registry " + path.string());
  out << j.dump(2) << "\n";
}

const std::string& EnrollmentRegistry::path_for(const std::string& speaker) const {
  const auto it = paths_.find(speaker);
  if (it == paths_.end()) throw Error("no enrollment registered for speaker '" + speaker + "'");
  return it->second;
}

EmbeddingCache::EmbeddingCache(std::shared_ptr<const EmbeddingProvider> provider,
                               std::optional<std::filesystem::path> file)
    : provider_(std::move(provider)), file_(std::move(file)) {
  if (!provider_) throw Error("embedding cache needs a provider");
  if (!file_ || !std::filesystem::exists(*file_)) return;
  std::ifstream in(*file_);
  try {
    const auto j = nlohmann::json::parse(in);
    const auto& entries = j.at("entries");
    for (const auto& e : entries) {
      if (e.at("version").get<std::string>() != provider_->version()) continue;
      cache_[e.at("speaker").get<std::string>()] = e.at("embedding").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("embedding cache " + file_->string() + ": " + e.what());
  }
}

const std::vector<double>& EmbeddingCache::get(const std::string& speaker,
                                               const std::string& wav_path) {
  auto it = cache_.find(speaker);
  if (it != cache_.end()) return it->second;
  auto emb = provider_->extract(read_wav(wav_path));
  return cache_.emplace(speaker, std::move(emb)).first->second;
}

void EmbeddingCache::flush() const {
  if (!file_) return;
  nlohmann::ordered_json j;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& [speaker, emb] : cache_) {
    nlohmann::ordered_json e;
    e["speaker"] = speaker;
    e["version"] = provider_->version();
    e["embedding"] = emb;
    j["entries"].push_back(e);
  }
  std::ofstream out(*file_);
  if (!out) throw Error("cannot write embedding cache " + file_->string());
  // Round-trippable doubles.
  out << j.dump() << "\n";
}

}  // namespace paec
