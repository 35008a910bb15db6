#include "paec/scene.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "paec/random.hpp"
#include "paec/wav.hpp"

namespace paec {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kD1: return "D1";
    case Scenario::kD2: return "D2";
    case Scenario::kD3: return "D3";
  }
  return "?";
}

std::string to_string(TalkCondition c) {
  switch (c) {
    case TalkCondition::kDoubleTalk: return "DT";
    case TalkCondition::kNearEndSingleTalk: return "ST-NE";
    case TalkCondition::kFarEndSingleTalk: return "ST-FE";
  }
  return "?";
}

Scenario parse_scenario(const std::string& s) {
  if (s == "D1") return Scenario::kD1;
  if (s == "D2") return Scenario::kD2;
  if (s == "D3") return Scenario::kD3;
  throw Error("unknown scenario '" + s + "' (expected D1, D2 or D3)");
}

TalkCondition parse_condition(const std::string& s) {
  if (s == "DT") return TalkCondition::kDoubleTalk;
  if (s == "ST-NE") return TalkCondition::kNearEndSingleTalk;
  if (s == "ST-FE") return TalkCondition::kFarEndSingleTalk;
  throw Error("unknown talk condition '" + s + "' (expected DT, ST-NE or ST-FE)");
}

ScenarioRanges scenario_ranges(Scenario s) {
  switch (s) {
    case Scenario::kD1: return {std::nullopt, {-10.0, 20.0}, {-5.0, 40.0}};
    case Scenario::kD2: return {RatioRange{0.0, 20.0}, {-10.0, 20.0}, {-5.0, 40.0}};
    case Scenario::kD3: return {RatioRange{0.0, 20.0}, {-10.0, 20.0}, {15.0, 45.0}};
  }
  throw Error("invalid scenario");
}

SourcePool SourcePool::from_directories(const std::string& speech_dir,
                                        const std::string& noise_dir) {
  namespace fs = std::filesystem;
  SourcePool pool;
  if (!fs::is_directory(speech_dir)) throw Error("speech pool is not a directory: " + speech_dir);
  std::vector<fs::path> speakers;
  for (const auto& e : fs::directory_iterator(speech_dir)) {
    if (e.is_directory()) speakers.push_back(e.path());
  }
  std::sort(speakers.begin(), speakers.end());
  for (const auto& dir : speakers) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) pool.speech.push_back({dir.filename().string(), f.string()});
  }
  if (!noise_dir.empty()) {
    if (!fs::is_directory(noise_dir)) throw Error("noise pool is not a directory: " + noise_dir);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(noise_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) pool.noise.push_back({"noise", f.string()});
  }
  return pool;
}

std::vector<std::string> SourcePool::speakers() const {
  std::set<std::string> ids;
  for (const auto& s : speech) ids.insert(s.speaker);
  return {ids.begin(), ids.end()};
}

double ratio_gain(double target_energy, double component_energy, double ratio_db) {
  return std::sqrt(target_energy / (component_energy * std::pow(10.0, ratio_db / 10.0)));
}

namespace {

double measured_ratio(double target_energy, double component_energy) {
  if (component_energy <= 0.0) return kInf;
  return 10.0 * std::log10(target_energy / component_energy);
}

Waveform scaled_component(const Waveform& c, double target_energy, double ratio_db,
                          const char* name) {
  Waveform out(c.size());
  if (std::isinf(ratio_db) && ratio_db > 0) return out;
  if (!std::isfinite(ratio_db)) throw Error(std::string(name) + " ratio must be finite or +inf");
  const double e = energy(c.samples);
  if (e <= 0.0) {
    throw Error(std::string("mix_at_ratios: ") + name +
                " has zero energy but a finite target ratio");
  }
  const double g = ratio_gain(target_energy, e, ratio_db);
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = g * c[i];
  return out;
}

}  // namespace

MixtureRecord mix_at_ratios(const Waveform& s, const Waveform& z, const Waveform& d,
                            const Waveform& v, const SceneSpec& spec) {
  const std::size_t n = s.size();
  if (z.size() != n || d.size() != n || v.size() != n) {
    throw Error("mix_at_ratios: components must have equal lengths");
  }
  const double es = energy(s.samples);
  if (es <= 0.0) throw Error("mix_at_ratios: target speech has zero energy");
  MixtureRecord rec;
  rec.spec = spec;
  rec.s = s;
  rec.z = scaled_component(z, es, spec.sir, "interference");
  rec.d = scaled_component(d, es, spec.ser, "echo");
  rec.v = scaled_component(v, es, spec.snr, "noise");
  rec.y = Waveform(n);
  for (std::size_t i = 0; i < n; ++i) rec.y[i] = rec.s[i] + rec.z[i] + rec.d[i] + rec.v[i];
  rec.sir = measured_ratio(es, energy(rec.z.samples));
  rec.ser = measured_ratio(es, energy(rec.d.samples));
  rec.snr = measured_ratio(es, energy(rec.v.samples));
  return rec;
}

RoomSpec sample_room(std::uint64_t seed) {
  Rng rng(seed);
  RoomSpec room;
  room.width = rng.uniform(5.0, 8.0);
  room.height = rng.uniform(3.0, 4.0);
  room.depth = rng.uniform(3.0, 5.0);
  room.rt60 = rng.uniform(0.2, 0.7);
  const std::array<double, 3> dims{room.width, room.depth, room.height};
  const double margin = 0.5;
  for (auto* pos : {&room.source_pos, &room.mic_pos}) {
    for (std::size_t a = 0; a < 2; ++a) (*pos)[a] = rng.uniform(margin, dims[a] - margin);
  }
  // Talker-height loudspeaker and microphone.
  room.source_pos[2] = rng.uniform(1.0, 1.8);
  room.mic_pos[2] = rng.uniform(1.0, 1.8);
  room.seed = seed;
  return room;
}

SceneSpec sample_scene(Scenario scenario, const SourcePool& pool, std::uint64_t seed,
                       const SamplerOptions& options) {
  if (pool.speech.empty()) throw Error("sample_scene: empty speech pool");
  const auto speakers = pool.speakers();
  const bool needs_interferer = scenario != Scenario::kD1;
  const std::size_t required = needs_interferer ? 3 : 2;
  if (speakers.size() < required) {
    throw Error("sample_scene: scenario " + to_string(scenario) + " needs at least " +
                std::to_string(required) + " distinct speakers, pool has " +
                std::to_string(speakers.size()));
  }

  Rng rng(seed);
  auto pick_utterance = [&](const std::string& speaker) {
    std::vector<const SourceRef*> utts;
    for (const auto& s : pool.speech) {
      if (s.speaker == speaker) utts.push_back(&s);
    }
    return *utts[rng.index(utts.size())];
  };
  std::vector<std::string> remaining = speakers;
  auto take_speaker = [&] {
    const std::size_t i = rng.index(remaining.size());
    std::string id = remaining[i];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(i));
    return id;
  };

  SceneSpec spec;
  spec.scenario = scenario;
  spec.condition = options.condition;
  spec.duration_s = options.duration_s;
  spec.seed = seed;
  spec.near_end = pick_utterance(take_speaker());
  spec.far_end = pick_utterance(take_speaker());
  if (needs_interferer) spec.interferer = pick_utterance(take_speaker());
  if (!pool.noise.empty()) spec.noise = pool.noise[rng.index(pool.noise.size())];

  const auto ranges = scenario_ranges(scenario);
  spec.sir = ranges.sir ? rng.uniform(ranges.sir->lo, ranges.sir->hi) : kInf;
  spec.ser = rng.uniform(ranges.ser.lo, ranges.ser.hi);
  spec.snr = rng.uniform(ranges.snr.lo, ranges.snr.hi);
  spec.echo_delay_ms = rng.uniform(0.0, 512.0);
  spec.room = sample_room(rng.next());
  if (spec.condition == TalkCondition::kNearEndSingleTalk) spec.ser = kInf;
  return spec;
}

Waveform fit_length(const Waveform& w, std::size_t length) {
  if (w.empty()) throw Error("fit_length: empty source");
  Waveform out(length, w.sample_rate);
  for (std::size_t i = 0; i < length; ++i) out[i] = w[i % w.size()];
  return out;
}

Waveform white_noise(std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  Waveform out(length);
  for (auto& v : out.samples) v = rng.normal();
  return out;
}

MixtureRecord render_scene(const SceneSpec& spec) {
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * kSampleRate));
  if (n < 320) throw Error("render_scene: duration shorter than one frame");

  const Waveform s = fit_length(read_wav(spec.near_end.path), n);
  Waveform x = fit_length(read_wav(spec.far_end.path), n);
  Waveform z(n);
  if (spec.interferer && std::isfinite(spec.sir)) z = fit_length(read_wav(spec.interferer->path), n);
  const Waveform v = spec.noise ? fit_length(read_wav(spec.noise->path), n)
                                : white_noise(n, splitmix64(spec.seed ^ 0x6E6F697365ull));

  if (spec.condition == TalkCondition::kNearEndSingleTalk) x = Waveform(n);
  Waveform h = simulate_rir(spec.room);
  // Unit direct-path gain; the echo level is set by SER afterwards.
  double direct = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    const double delta = spec.room.source_pos[a] - spec.room.mic_pos[a];
    direct += delta * delta;
  }
  const double gain = std::max(std::sqrt(direct), 1e-3);
  for (auto& tap : h.samples) tap *= gain;
  const Waveform d = render_echo(x, h, spec.echo_delay_ms);

  MixtureRecord rec = mix_at_ratios(s, z, d, v, spec);
  rec.x = std::move(x);
  if (spec.condition == TalkCondition::kFarEndSingleTalk) {
    for (std::size_t i = 0; i < n; ++i) {
      rec.s[i] = 0.0;
      rec.y[i] = rec.z[i] + rec.d[i] + rec.v[i];
    }
  }
  return rec;
}

}  // namespace paec
