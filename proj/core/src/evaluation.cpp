#include "paec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "json.hpp"
#include "paec/metrics.hpp"

namespace paec {

namespace {

nlohmann::ordered_json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? number(*v) : nlohmann::ordered_json(nullptr);
}

MetricSummary summarize(std::vector<double> values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  if (std::isnan(s.median)) s.median = values[mid];
  return s;
}

}  // namespace

Enhancer baseline_enhancer(const std::string& name) {
  if (name == "input") return [](const MixtureRecord& r) { return r.y; };
  if (name == "zero") return [](const MixtureRecord& r) { return Waveform(r.y.size()); };
  throw Error("unknown baseline '" + name + "' (expected input or zero)");
}

Enhancer model_enhancer(const GtcnnModel<float>& model, const EnrollmentRegistry* registry,
                        EmbeddingCache* cache, const std::vector<SceneSpec>& scenes) {
  const auto mode = model.config().selection;
  std::map<std::string, EnhanceInputs> inputs;
  if (mode != Selection::kNone) {
    if (!registry || !cache) {
      throw Error("selection " + to_string(mode) + " needs an enrollment registry");
    }
    for (const auto& s : scenes) {
      EnhanceInputs in;
      if (uses_near(mode)) in.raw_near = cache->get(s.near_end.speaker, registry->path_for(s.near_end.speaker));
      if (uses_far(mode)) in.raw_far = cache->get(s.far_end.speaker, registry->path_for(s.far_end.speaker));
      inputs[s.scene_id] = std::move(in);
    }
  }
  return [&model, inputs = std::move(inputs)](const MixtureRecord& r) {
    const auto it = inputs.find(r.spec.scene_id);
    return enhance(r.y, r.x, model, it == inputs.end() ? EnhanceInputs{} : it->second);
  };
}

SceneResult score_scene(const MixtureRecord& record, const Waveform& enhanced) {
  SceneResult row;
  row.scene_id = record.spec.scene_id;
  row.scenario = record.spec.scenario;
  row.condition = record.spec.condition;
  if (enhanced.size() != record.y.size()) throw Error("evaluate: enhanced length differs from the mixture");
  if (row.condition == TalkCondition::kFarEndSingleTalk) {
    row.erle = erle(record.y, enhanced);
    return row;
  }
  row.si_sdr = si_sdr(record.s, enhanced);
  row.si_sdr_input = si_sdr(record.s, record.y);
  row.si_sdr_improvement = *row.si_sdr == *row.si_sdr_input ? 0.0 : *row.si_sdr - *row.si_sdr_input;
  row.lsd = lsd(record.s, enhanced);
  return row;
}

EvalReport evaluate_scenes(const std::vector<SceneSpec>& scenes, const Enhancer& enhancer,
                           const std::string& model_label, std::size_t threads) {
  EvalReport report;
  report.model = model_label;
  report.scenes.resize(scenes.size());
  std::vector<std::exception_ptr> errors(scenes.size());
  auto work = [&](std::size_t worker, std::size_t stride) {
    for (std::size_t i = worker; i < scenes.size(); i += stride) {
      try {
        const auto rec = render_scene(scenes[i]);
        report.scenes[i] = score_scene(rec, enhancer(rec));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, scenes.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

std::map<std::string, std::map<std::string, MetricSummary>> EvalReport::summaries() const {
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  for (const auto& row : scenes) {
    auto& m = values[to_string(row.condition)];
    if (row.erle) m["erle"].push_back(*row.erle);
    if (row.si_sdr) m["si_sdr"].push_back(*row.si_sdr);
    if (row.si_sdr_improvement) m["si_sdr_improvement"].push_back(*row.si_sdr_improvement);
    if (row.lsd) m["lsd"].push_back(*row.lsd);
  }
  std::map<std::string, std::map<std::string, MetricSummary>> out;
  for (auto& [cond, metrics] : values) {
    for (auto& [name, v] : metrics) out[cond][name] = summarize(std::move(v));
  }
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = kEvalReportSchemaVersion;
  j["model"] = model;
  j["erle_convention"] = "mean of per-utterance dB";
  j["infinity_encoding"] = "inf";
  j["scenes"] = nlohmann::ordered_json::array();
  for (const auto& row : scenes) {
    nlohmann::ordered_json r;
    r["scene_id"] = row.scene_id;
    r["scenario"] = to_string(row.scenario);
    r["condition"] = to_string(row.condition);
    r["erle_db"] = optional_number(row.erle);
    r["si_sdr_db"] = optional_number(row.si_sdr);
    r["si_sdr_input_db"] = optional_number(row.si_sdr_input);
    r["si_sdr_improvement_db"] = optional_number(row.si_sdr_improvement);
    r["lsd_db"] = optional_number(row.lsd);
    j["scenes"].push_back(r);
  }
  nlohmann::ordered_json agg = nlohmann::ordered_json::object();
  for (const auto& [cond, metrics] : summaries()) {
    for (const auto& [name, s] : metrics) {
      agg[cond][name] = {{"count", s.count}, {"mean", number(s.mean)}, {"median", number(s.median)}};
    }
  }
  j["aggregate"] = agg;
  return j.dump(2) + "\n";
}

}  // namespace paec
