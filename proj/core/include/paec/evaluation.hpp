#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paec/gtcnn.hpp"
#include "paec/scene.hpp"
#include "paec/speaker.hpp"

namespace paec {

inline constexpr int kEvalReportSchemaVersion = 1;

struct SceneResult {
  std::string scene_id;
  Scenario scenario = Scenario::kD1;
  TalkCondition condition = TalkCondition::kDoubleTalk;
  // ST-FE scenes carry ERLE; DT and ST-NE scenes carry the others.
  std::optional<double> erle;
  std::optional<double> si_sdr;
  std::optional<double> si_sdr_input;
  std::optional<double> si_sdr_improvement;
  std::optional<double> lsd;
};

struct MetricSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
};

struct EvalReport {
  std::string model;  // checkpoint path or baseline name
  std::vector<SceneResult> scenes;

  // condition -> metric -> summary, recomputed from the rows.
  std::map<std::string, std::map<std::string, MetricSummary>> summaries() const;
  std::string to_json() const;
};

// Produces the enhanced signal for one rendered scene.
using Enhancer = std::function<Waveform(const MixtureRecord&)>;

// "input" passes the microphone signal through; "zero" outputs silence.
Enhancer baseline_enhancer(const std::string& name);

// Embeddings are looked up for every scene before any enhancement runs.
Enhancer model_enhancer(const GtcnnModel<float>& model, const EnrollmentRegistry* registry,
                        EmbeddingCache* cache, const std::vector<SceneSpec>& scenes);

SceneResult score_scene(const MixtureRecord& record, const Waveform& enhanced);

// Renders, enhances and scores every scene. Scenes are spread over `threads`
// workers; the row order always follows the manifest.
EvalReport evaluate_scenes(const std::vector<SceneSpec>& scenes, const Enhancer& enhancer,
                           const std::string& model_label, std::size_t threads = 1);

}  // namespace paec
