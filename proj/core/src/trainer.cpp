#include "paec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "paec/checkpoint.hpp"
#include "paec/random.hpp"
#include "paec/wav.hpp"

namespace paec {

void TrainConfig::validate() const {
  model.validate();
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error("train config: lr must be positive");
  if (plateau_patience == 0) throw Error("train config: plateau_patience must be positive");
  if (!(lr_factor > 0.0 && lr_factor <= 1.0)) throw Error("train config: lr_factor must be in (0, 1]");
  if (batch_size == 0) throw Error("train config: batch_size must be positive");
  if (segment_s * kSampleRate < static_cast<double>(kFftSize)) {
    throw Error("train config: segment shorter than one STFT frame");
  }
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error("train config: val_fraction must be in [0, 1)");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = nlohmann::ordered_json::parse(model.to_json());
  j["scenario"] = to_string(scenario);
  j["lr"] = lr;
  j["plateau_patience"] = plateau_patience;
  j["lr_factor"] = lr_factor;
  j["batch_size"] = batch_size;
  j["segment_s"] = segment_s;
  j["max_epochs"] = max_epochs;
  j["seed"] = seed;
  j["shuffle"] = shuffle;
  j["val_fraction"] = val_fraction;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text, const TrainConfig& base) {
  TrainConfig c = base;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw Error("train config: expected a JSON object");
    if (j.contains("model")) {
      auto merged = nlohmann::json::parse(base.model.to_json());
      merged.update(j["model"]);
      c.model = ModelConfig::from_json(merged.dump());
    }
    if (j.contains("scenario")) c.scenario = parse_scenario(j["scenario"].get<std::string>());
    c.lr = j.value("lr", c.lr);
    c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
    c.lr_factor = j.value("lr_factor", c.lr_factor);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.segment_s = j.value("segment_s", c.segment_s);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.shuffle = j.value("shuffle", c.shuffle);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

PlateauScheduler::PlateauScheduler(std::size_t patience, double factor)
    : patience_(patience), factor_(factor), best_(kInf) {}

double PlateauScheduler::observe(double val_loss, double lr) {
  improved_ = val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return lr;
  }
  if (++bad_epochs_ >= patience_) {
    bad_epochs_ = 0;
    return lr * factor_;
  }
  return lr;
}

TrainingExample make_example(std::string scene_id, Waveform mic, Waveform ref, Waveform clean,
                             std::optional<std::vector<double>> raw_near,
                             std::optional<std::vector<double>> raw_far) {
  if (mic.size() != clean.size()) throw Error("make_example: mic and clean lengths differ");
  TrainingExample ex;
  ex.scene_id = std::move(scene_id);
  ex.features = feature_tensor<float>(make_features(mic, align_to(ref, mic.size())));
  ex.target = target_spectrum<float>(clean);
  ex.mic = std::move(mic);
  ex.ref = std::move(ref);
  ex.clean = std::move(clean);
  ex.raw_near = std::move(raw_near);
  ex.raw_far = std::move(raw_far);
  return ex;
}

namespace {

Waveform slice(const Waveform& w, std::size_t start, std::size_t len) {
  return Waveform(std::vector<double>(w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                                      w.samples.begin() + static_cast<std::ptrdiff_t>(start + len)));
}

}  // namespace

std::vector<TrainingExample> prepare_examples(const std::vector<SceneSpec>& scenes,
                                              const TrainConfig& config,
                                              const EnrollmentRegistry* registry,
                                              EmbeddingCache* cache) {
  const auto mode = config.model.selection;
  if (mode != Selection::kNone && (!registry || !cache)) {
    throw Error("selection " + to_string(mode) + " needs an enrollment registry");
  }
  auto embedding_for = [&](const SourceRef& src) -> std::vector<double> {
    return cache->get(src.speaker, registry->path_for(src.speaker));
  };
  const auto seg = static_cast<std::size_t>(std::llround(config.segment_s * kSampleRate));
  std::vector<TrainingExample> out;
  for (const auto& spec : scenes) {
    std::optional<std::vector<double>> near, far;
    if (uses_near(mode)) near = embedding_for(spec.near_end);
    if (uses_far(mode)) far = embedding_for(spec.far_end);
    const auto rec = render_scene(spec);
    const std::size_t n = rec.y.size();
    if (n <= seg) {
      out.push_back(make_example(spec.scene_id, rec.y, rec.x, rec.s, near, far));
      continue;
    }
    for (std::size_t start = 0; start + seg <= n; start += seg) {
      out.push_back(make_example(spec.scene_id, slice(rec.y, start, seg), slice(rec.x, start, seg),
                                 slice(rec.s, start, seg), near, far));
    }
  }
  return out;
}

std::pair<std::vector<SceneSpec>, std::vector<SceneSpec>> split_validation(
    const std::vector<SceneSpec>& scenes, double fraction, std::uint64_t seed) {
  const std::size_t n = scenes.size();
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (fraction > 0.0 && k == 0 && n > 1) k = 1;
  if (n > 0) k = std::min(k, n - 1);  // always keep something to train on
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(splitmix64(seed ^ 0x56414C4944ull));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  std::vector<bool> held(n, false);
  for (std::size_t i = 0; i < k; ++i) held[order[i]] = true;
  std::pair<std::vector<SceneSpec>, std::vector<SceneSpec>> split;
  for (std::size_t i = 0; i < n; ++i) (held[i] ? split.second : split.first).push_back(scenes[i]);
  return split;
}

std::string RunRecord::to_json() const {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["initial_train_loss"] = initial_train_loss;
  j["final_train_loss"] = final_train_loss;
  j["best_val_loss"] = best_val_loss;
  j["best_epoch"] = best_epoch;
  j["checkpoint"] = checkpoint_path;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_loss", e.val_loss},
                           {"lr", e.lr},
                           {"wall_s", e.wall_s}});
  }
  return j.dump(2);
}

Trainer::Trainer(const TrainConfig& config)
    : config_(config), model_(std::make_unique<GtcnnModel<float>>(config.model)) {
  config_.validate();
}

double Trainer::evaluate_loss(const std::vector<TrainingExample>& examples) const {
  if (examples.empty()) return 0.0;
  ag::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : examples) {
    const auto cond = model_->condition(ex.raw_near, ex.raw_far, ex.features.dim(1));
    total += spectral_loss(model_->forward(ex.features, cond), ex.target).item();
  }
  return total / static_cast<double>(examples.size());
}

RunRecord Trainer::fit(const std::vector<TrainingExample>& train,
                       const std::vector<TrainingExample>& val,
                       const std::optional<std::filesystem::path>& checkpoint,
                       const EpochCallback& on_epoch) {
  if (train.empty()) throw Error("train: no training examples");
  const auto& val_set = val.empty() ? train : val;
  auto& params = model_->params();
  ag::Adam<float> adam(params, {.lr = config_.lr});
  PlateauScheduler scheduler(config_.plateau_patience, config_.lr_factor);

  RunRecord record;
  record.initial_train_loss = evaluate_loss(train);
  if (checkpoint) record.checkpoint_path = checkpoint->string();
  std::vector<std::vector<float>> best_values;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(splitmix64(config_.seed ^ 0x5348554646ull));

  for (std::size_t epoch = 1; epoch <= config_.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    if (config_.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    }
    EpochRecord er;
    er.epoch = epoch;
    er.lr = adam.lr();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config_.batch_size) {
      const std::size_t end = std::min(order.size(), b + config_.batch_size);
      params.zero_grad();
      const auto scale = 1.0f / static_cast<float>(end - b);
      for (std::size_t k = b; k < end; ++k) {
        const auto& ex = train[order[k]];
        const auto cond = model_->condition(ex.raw_near, ex.raw_far, ex.features.dim(1));
        auto loss = spectral_loss(model_->forward(ex.features, cond), ex.target);
        loss_sum += loss.item();
        ag::scale(loss, scale).backward();
      }
      adam.step(params);
    }
    er.train_loss = loss_sum / static_cast<double>(train.size());
    er.val_loss = evaluate_loss(val_set);
    adam.set_lr(scheduler.observe(er.val_loss, adam.lr()));
    if (scheduler.improved()) {
      record.best_val_loss = er.val_loss;
      record.best_epoch = epoch;
      best_values.clear();
      for (const auto& p : params.items()) {
        const auto d = p.tensor.data();
        best_values.emplace_back(d.begin(), d.end());
      }
      if (checkpoint) {
        nlohmann::ordered_json meta;
        meta["epoch"] = epoch;
        meta["val_loss"] = er.val_loss;
        meta["train"] = nlohmann::ordered_json::parse(config_.to_json());
        save_checkpoint(*checkpoint, *model_, meta.dump());
      }
    }
    er.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    record.epochs.push_back(er);
    if (on_epoch) on_epoch(er);
  }

  if (!best_values.empty()) {
    for (std::size_t i = 0; i < best_values.size(); ++i) {
      auto d = params.items()[i].tensor.data();
      std::copy(best_values[i].begin(), best_values[i].end(), d.begin());
    }
  }
  record.final_train_loss = evaluate_loss(train);
  return record;
}

}  // namespace paec
