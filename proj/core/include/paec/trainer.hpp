#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "paec/adam.hpp"
#include "paec/gtcnn.hpp"
#include "paec/scene.hpp"
#include "paec/speaker.hpp"

namespace paec {

struct TrainConfig {
  ModelConfig model = ModelConfig::desk();
  Scenario scenario = Scenario::kD1;
  double lr = 1e-4;
  std::size_t plateau_patience = 2;
  double lr_factor = 0.5;
  std::size_t batch_size = 1;
  double segment_s = 8.0;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 0;
  bool shuffle = false;
  double val_fraction = 0.1;

  void validate() const;
  std::string to_json() const;
  // Fields missing from the JSON keep the values of `base`.
  static TrainConfig from_json(const std::string& text, const TrainConfig& base);
  static TrainConfig from_json(const std::string& text) { return from_json(text, TrainConfig{}); }
};

// Halves (by `factor`) once the validation loss has failed to go below the
// best value so far for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(std::size_t patience, double factor);

  // Returns the learning rate for the next epoch.
  double observe(double val_loss, double lr);
  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double factor_;
  double best_;
  std::size_t bad_epochs_ = 0;
  bool improved_ = false;
};

// One fixed-length training segment with its precomputed network inputs.
struct TrainingExample {
  std::string scene_id;
  Waveform mic, ref, clean;
  ag::Tensor<float> features;
  SpectralEstimate<float> target;
  std::optional<std::vector<double>> raw_near;
  std::optional<std::vector<double>> raw_far;
};

TrainingExample make_example(std::string scene_id, Waveform mic, Waveform ref, Waveform clean,
                             std::optional<std::vector<double>> raw_near = std::nullopt,
                             std::optional<std::vector<double>> raw_far = std::nullopt);

// Renders every scene, cuts it into segment_s pieces (a scene shorter than
// one segment is used whole) and attaches the enrollment embeddings the
// selection mode needs.
std::vector<TrainingExample> prepare_examples(const std::vector<SceneSpec>& scenes,
                                              const TrainConfig& config,
                                              const EnrollmentRegistry* registry,
                                              EmbeddingCache* cache);

// Seeded hold-out of round(fraction * n) scenes: at least one when n > 1 and
// fraction > 0, and never all of them.
std::pair<std::vector<SceneSpec>, std::vector<SceneSpec>> split_validation(
    const std::vector<SceneSpec>& scenes, double fraction, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean over the epoch's updates
  double val_loss = 0.0;
  double lr = 0.0;  // used during the epoch
  double wall_s = 0.0;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::string checkpoint_path;

  std::string to_json() const;
};

class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  using EpochCallback = std::function<void(const EpochRecord&)>;

  // The best-validation parameters are restored at the end and, when
  // `checkpoint` is given, written there whenever validation improves.
  RunRecord fit(const std::vector<TrainingExample>& train, const std::vector<TrainingExample>& val,
                const std::optional<std::filesystem::path>& checkpoint = std::nullopt,
                const EpochCallback& on_epoch = {});

  // Mean spectral loss over the examples, no gradient recording.
  double evaluate_loss(const std::vector<TrainingExample>& examples) const;

  GtcnnModel<float>& model() { return *model_; }
  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
  std::unique_ptr<GtcnnModel<float>> model_;
};

}  // namespace paec
