#include "paec/synthetic_voices.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "paec/random.hpp"
#include "paec/speaker.hpp"
#include "paec/wav.hpp"

namespace paec {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// F1, F2, F3 of a few adult vowels, Hz.
constexpr std::array<std::array<double, 3>, 6> kVowels{{
    {730, 1090, 2440},
    {270, 2290, 3010},
    {530, 1840, 2480},
    {570, 840, 2410},
    {300, 870, 2240},
    {660, 1720, 2410},
}};

double resonance(double f, double centre, double bandwidth) {
  const double x = (f - centre) / (0.5 * bandwidth);
  return 1.0 / (1.0 + x * x);
}

void normalize_rms(Waveform& w, double target) {
  const double rms = std::sqrt(energy(w.samples) / static_cast<double>(w.size()));
  if (rms <= 0.0) return;
  for (auto& v : w.samples) v *= target / rms;
}

}  // namespace

VoiceProfile make_voice(std::uint64_t speaker_seed) {
  Rng rng(speaker_seed);
  VoiceProfile v;
  const bool low = rng.uniform() < 0.5;
  v.f0 = low ? rng.uniform(85.0, 150.0) : rng.uniform(165.0, 260.0);
  v.formant_scale = low ? rng.uniform(0.85, 1.0) : rng.uniform(1.05, 1.25);
  v.tilt = rng.uniform(0.7, 1.6);
  v.syllable_rate = rng.uniform(3.0, 5.5);
  v.fricative_prob = rng.uniform(0.1, 0.5);
  return v;
}

Waveform synth_utterance(const VoiceProfile& voice, double seconds, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * kSampleRate));
  Waveform out(n);
  Rng rng(seed);
  const double fs = kSampleRate;
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.02, 0.2) * fs);
  while (pos < n) {
    const double syl_s = rng.uniform(0.6, 1.4) / voice.syllable_rate;
    const auto len = std::min(n - pos, static_cast<std::size_t>(syl_s * fs));
    const auto& a = kVowels[rng.index(kVowels.size())];
    const auto& b = kVowels[rng.index(kVowels.size())];
    const double f0_start = voice.f0 * rng.uniform(0.85, 1.15);
    const double f0_end = voice.f0 * rng.uniform(0.8, 1.1);
    const double level = rng.uniform(0.5, 1.0);

    if (rng.uniform() < voice.fricative_prob) {
      // Unvoiced onset: first-differenced noise has a rising spectrum.
      const auto fl = std::min(len, static_cast<std::size_t>(rng.uniform(0.04, 0.1) * fs));
      double prev = 0.0;
      for (std::size_t i = 0; i < fl; ++i) {
        const double e = rng.normal();
        const double env = std::sin(std::numbers::pi * static_cast<double>(i) / fl);
        out[pos + i] += 0.15 * level * env * (e - prev);
        prev = e;
      }
    }

    const std::size_t harmonics = static_cast<std::size_t>(7000.0 / (voice.f0 * 0.8));
    std::vector<double> phase(harmonics, 0.0);
    for (auto& p : phase) p = rng.uniform(0.0, kTwoPi);
    const std::size_t block = 80;
    for (std::size_t start = 0; start < len; start += block) {
      const double u = static_cast<double>(start) / static_cast<double>(len);
      const double f0 = f0_start + (f0_end - f0_start) * u;
      std::array<double, 3> formant{};
      for (std::size_t k = 0; k < 3; ++k) {
        formant[k] = voice.formant_scale * (a[k] + (b[k] - a[k]) * u);
      }
      std::vector<double> amp(harmonics, 0.0);
      for (std::size_t h = 0; h < harmonics; ++h) {
        const double f = f0 * static_cast<double>(h + 1);
        if (f >= 7600.0) break;
        const double shape = resonance(f, formant[0], 90.0) + 0.7 * resonance(f, formant[1], 120.0) +
                             0.4 * resonance(f, formant[2], 180.0) + 0.02;
        amp[h] = shape / std::pow(static_cast<double>(h + 1), voice.tilt);
      }
      const std::size_t stop = std::min(len, start + block);
      for (std::size_t i = start; i < stop; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(len);
        const double env = std::pow(std::sin(std::numbers::pi * t), 0.6);
        double sample = 0.0;
        for (std::size_t h = 0; h < harmonics; ++h) {
          if (amp[h] == 0.0) continue;
          sample += amp[h] * std::sin(phase[h]);
          phase[h] += kTwoPi * f0 * static_cast<double>(h + 1) / fs;
          if (phase[h] > kTwoPi) phase[h] -= kTwoPi;
        }
        out[pos + i] += level * env * sample;
      }
    }
    pos += len;
    // Short gap between syllables, with an occasional phrase pause.
    const double gap = rng.uniform() < 0.15 ? rng.uniform(0.25, 0.6) : rng.uniform(0.03, 0.12);
    pos += static_cast<std::size_t>(gap * fs);
  }
  normalize_rms(out, 0.05);
  return out;
}

Waveform synth_noise(double seconds, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * kSampleRate));
  Waveform out(n);
  Rng rng(seed);
  const double mix = rng.uniform(0.2, 0.8);
  double pink = 0.0, rumble = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = rng.normal();
    pink = 0.9 * pink + 0.1 * e;
    rumble = 0.995 * rumble + 0.005 * rng.normal();
    out[i] = mix * pink + (1.0 - mix) * 10.0 * rumble + 0.05 * e;
  }
  normalize_rms(out, 0.05);
  return out;
}

SyntheticPoolPaths write_synthetic_pool(const std::filesystem::path& root,
                                        const SyntheticPoolOptions& options) {
  namespace fs = std::filesystem;
  SyntheticPoolPaths paths{root / "speech", root / "noise", root / "enrollment.json"};
  const auto enroll_dir = root / "enroll";
  fs::create_directories(paths.speech_dir);
  fs::create_directories(paths.noise_dir);
  fs::create_directories(enroll_dir);

  EnrollmentRegistry registry;
  char name[32];
  for (std::size_t s = 0; s < options.speakers; ++s) {
    std::snprintf(name, sizeof(name), "spk%03zu", s);
    const std::string speaker = name;
    const std::uint64_t speaker_seed = splitmix64(options.seed * 1000003ull + s);
    const auto voice = make_voice(speaker_seed);
    const auto dir = paths.speech_dir / speaker;
    fs::create_directories(dir);
    for (std::size_t u = 0; u < options.utterances_per_speaker; ++u) {
      std::snprintf(name, sizeof(name), "utt%02zu.wav", u);
      write_wav(dir / name, synth_utterance(voice, options.utterance_s, splitmix64(speaker_seed + 1 + u)));
    }
    const auto enroll = enroll_dir / (speaker + ".wav");
    write_wav(enroll, synth_utterance(voice, options.enrollment_s, splitmix64(~speaker_seed)));
    registry.set(speaker, fs::relative(enroll, root).string());
  }
  for (std::size_t k = 0; k < options.noise_files; ++k) {
    std::snprintf(name, sizeof(name), "noise%02zu.wav", k);
    write_wav(paths.noise_dir / name, synth_noise(options.noise_s, splitmix64(options.seed + 0x4E0153ull + k)));
  }
  registry.save(paths.registry);
  return paths;
}

}  // namespace paec
