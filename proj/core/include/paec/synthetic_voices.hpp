#pragma once

#include <cstdint>
#include <filesystem>

#include "paec/audio.hpp"

// Speech-like test material for environments without a speech corpus:
// harmonic voiced syllables shaped by vowel formants, fricative bursts and
// pauses. Each synthetic speaker has its own pitch, vocal-tract scale and
// spectral tilt, which is enough for the embedding stand-in to tell them apart.
namespace paec {

struct VoiceProfile {
  double f0 = 120.0;  // Hz, mean pitch
  double formant_scale = 1.0;
  double tilt = 1.0;  // harmonic roll-off exponent
  double syllable_rate = 4.0;  // syllables per second
  double fricative_prob = 0.3;
};

VoiceProfile make_voice(std::uint64_t speaker_seed);

// RMS-normalized utterance of the given duration.
Waveform synth_utterance(const VoiceProfile& voice, double seconds, std::uint64_t seed);

// Coloured stationary noise (mixture of pink-like and low-frequency rumble).
Waveform synth_noise(double seconds, std::uint64_t seed);

struct SyntheticPoolOptions {
  std::size_t speakers = 6;
  std::size_t utterances_per_speaker = 3;
  double utterance_s = 4.0;
  double enrollment_s = 10.0;
  std::size_t noise_files = 2;
  double noise_s = 8.0;
  std::uint64_t seed = 0;
};

struct SyntheticPoolPaths {
  std::filesystem::path speech_dir;  // <speaker>/<n>.wav
  std::filesystem::path noise_dir;
  std::filesystem::path registry;  // speaker -> enrollment WAV
};

// Writes speech/, noise/, enroll/ and enrollment.json under `root`.
SyntheticPoolPaths write_synthetic_pool(const std::filesystem::path& root,
                                        const SyntheticPoolOptions& options = {});

}  // namespace paec
