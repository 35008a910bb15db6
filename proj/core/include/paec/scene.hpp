#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "paec/audio.hpp"
#include "paec/rir.hpp"

namespace paec {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Scenario { kD1, kD2, kD3 };
enum class TalkCondition { kDoubleTalk, kNearEndSingleTalk, kFarEndSingleTalk };

std::string to_string(Scenario s);
std::string to_string(TalkCondition c);
Scenario parse_scenario(const std::string& s);
TalkCondition parse_condition(const std::string& s);

struct RatioRange {
  double lo;
  double hi;
};

struct ScenarioRanges {
  std::optional<RatioRange> sir;  // absent: no interferer
  RatioRange ser;
  RatioRange snr;
};

ScenarioRanges scenario_ranges(Scenario s);

struct SourceRef {
  std::string speaker;
  std::string path;  // empty for generated noise

  bool operator==(const SourceRef&) const = default;
};

struct SourcePool {
  std::vector<SourceRef> speech;
  std::vector<SourceRef> noise;  // empty: seeded white noise is used

  // <speech_dir>/<speaker>/*.wav and optionally <noise_dir>/*.wav, sorted.
  static SourcePool from_directories(const std::string& speech_dir, const std::string& noise_dir);
  std::vector<std::string> speakers() const;
};

struct SceneSpec {
  std::string scene_id;
  Scenario scenario = Scenario::kD1;
  TalkCondition condition = TalkCondition::kDoubleTalk;
  double ser = 0.0;  // dB; +inf when there is no echo
  double sir = kInf;  // dB; +inf when there is no interferer
  double snr = 0.0;  // dB
  double echo_delay_ms = 0.0;
  double duration_s = 8.0;
  RoomSpec room;
  SourceRef near_end;
  SourceRef far_end;
  std::optional<SourceRef> interferer;
  std::optional<SourceRef> noise;  // absent: white noise seeded by `seed`
  std::uint64_t seed = 0;

  bool operator==(const SceneSpec&) const = default;
};

struct MixtureRecord {
  Waveform y, s, x, z, d, v;
  SceneSpec spec;
  double sir = kInf;
  double ser = kInf;
  double snr = kInf;
};

// Rescales z, d and v (never s) so that the energy ratios against s match the
// spec, then sums the mixture. Ratios are taken over whole utterances.
MixtureRecord mix_at_ratios(const Waveform& s, const Waveform& z, const Waveform& d,
                            const Waveform& v, const SceneSpec& spec);

// Amplitude factor that brings `component` to `ratio_db` below `target`.
double ratio_gain(double target_energy, double component_energy, double ratio_db);

struct SamplerOptions {
  TalkCondition condition = TalkCondition::kDoubleTalk;
  double duration_s = 8.0;
};

// Draws a scene for the scenario. Near-end, far-end and interfering talkers
// are always distinct speakers.
SceneSpec sample_scene(Scenario scenario, const SourcePool& pool, std::uint64_t seed,
                       const SamplerOptions& options = {});

RoomSpec sample_room(std::uint64_t seed);

// Loads the sources named in the spec, renders echo and noise and mixes at the
// requested ratios. Far-end single talk calibrates levels against the
// near-end source and then removes it; near-end single talk silences the
// far-end reference.
MixtureRecord render_scene(const SceneSpec& spec);

// Sources are looped or truncated to `length` samples.
Waveform fit_length(const Waveform& w, std::size_t length);

Waveform white_noise(std::size_t length, std::uint64_t seed);

}  // namespace paec
