#pragma once

#include <filesystem>

#include "paec/audio.hpp"

namespace paec {

enum class WavFormat { kPcm16, kFloat32 };

// Reads a mono 16 kHz RIFF/WAVE file (16-bit PCM or 32-bit IEEE float).
// Other sample rates or channel counts are rejected; nothing is resampled.
Waveform read_wav(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavFormat format = WavFormat::kFloat32);

}  // namespace paec
