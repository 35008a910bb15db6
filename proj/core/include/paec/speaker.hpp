#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "paec/audio.hpp"
#include "paec/tensor.hpp"

namespace paec {

inline constexpr std::size_t kRawEmbeddingDim = 512;
inline constexpr std::size_t kProjectedEmbeddingDim = 256;

// Which speaker embeddings condition the network.
enum class Selection { kNone, kEs, kEx, kEmix };

std::string to_string(Selection s);
Selection parse_selection(const std::string& s);
bool uses_near(Selection s);
bool uses_far(Selection s);

// Maps enrollment audio to a fixed-size utterance-level speaker vector.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<double> extract(const Waveform& enrollment) const = 0;
  virtual bool deterministic() const = 0;
  virtual std::string version() const = 0;
};

// Spectral-statistics extractor: 128 log-mel band energies (20 Hz to 8 kHz)
// summarized over frames by mean, standard deviation, skewness and excess
// kurtosis, giving 512 values scaled to unit L2 norm.
class StatisticsEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kMelBands = 128;

  explicit StatisticsEmbeddingProvider(double min_enrollment_s = 1.0)
      : min_enrollment_s_(min_enrollment_s) {}

  std::vector<double> extract(const Waveform& enrollment) const override;
  bool deterministic() const override { return true; }
  std::string version() const override { return "stats-logmel128-v1"; }

 private:
  double min_enrollment_s_;
};

inline std::vector<double> extract_standin(const Waveform& enrollment) {
  return StatisticsEmbeddingProvider().extract(enrollment);
}

// Affine 512 -> 256 projection for one talker (no activation).
template <typename Real>
ag::Tensor<Real> project_embedding(const ag::Tensor<Real>& raw, const ag::Tensor<Real>& weight,
                                   const ag::Tensor<Real>& bias);

// Repeats the selected projected embeddings along time. kNone yields nothing;
// kEmix stacks [E_s; E_x]. Output layout is [dim][frames].
template <typename Real>
std::optional<ag::Tensor<Real>> select_and_tile(const std::optional<ag::Tensor<Real>>& near,
                                                const std::optional<ag::Tensor<Real>>& far,
                                                Selection mode, std::size_t frames);

// speaker_id -> enrollment WAV path, stored as a flat JSON object.
class EnrollmentRegistry {
 public:
  static EnrollmentRegistry load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  void set(const std::string& speaker, const std::string& wav_path) { paths_[speaker] = wav_path; }
  const std::string& path_for(const std::string& speaker) const;
  bool contains(const std::string& speaker) const { return paths_.count(speaker) != 0; }
  const std::map<std::string, std::string>& entries() const { return paths_; }

 private:
  std::map<std::string, std::string> paths_;
};

// Raw embeddings keyed by (speaker, extractor version), optionally persisted.
class EmbeddingCache {
 public:
  EmbeddingCache(std::shared_ptr<const EmbeddingProvider> provider,
                 std::optional<std::filesystem::path> file = std::nullopt);

  const std::vector<double>& get(const std::string& speaker, const std::string& wav_path);
  void flush() const;
  const EmbeddingProvider& provider() const { return *provider_; }

 private:
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::optional<std::filesystem::path> file_;
  std::map<std::string, std::vector<double>> cache_;
};

}  // namespace paec
