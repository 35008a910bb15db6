#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "paec/audio.hpp"

namespace paec {

inline constexpr double kSpeedOfSound = 343.0;  // m/s

// Shoebox room. Axes: x spans width, y spans depth, z spans height.
struct RoomSpec {
  double width = 6.0;
  double height = 3.5;
  double depth = 4.0;
  double rt60 = 0.4;
  std::array<double, 3> source_pos{1.0, 1.0, 1.5};
  std::array<double, 3> mic_pos{2.0, 2.0, 1.5};
  std::uint64_t seed = 0;

  double volume() const { return width * height * depth; }
  double surface() const { return 2.0 * (width * height + width * depth + height * depth); }
  bool operator==(const RoomSpec&) const = default;
};

struct RirOptions {
  // Caps the total number of wall reflections per image; 0 keeps only the
  // direct path. Unset: every image that arrives within rt60 seconds.
  std::optional<int> max_order;
  // Overrides the calibrated absorption coefficient.
  std::optional<double> absorption;
};

// Minimum wall clearance for source and microphone positions, metres.
inline constexpr double kWallClearance = 0.1;

void validate_room(const RoomSpec& room);

// Uniform wall absorption that makes Sabine's reverberation time equal rt60.
double sabine_absorption(const RoomSpec& room);

// Uniform absorption for which the image-source response below has a
// Schroeder T20 reverberation time within 1% of rt60 (starting from Sabine).
double calibrated_absorption(const RoomSpec& room);

// Image-source impulse response at 16 kHz, at least rt60 * 16000 samples
// long. Each image contributes beta^reflections / distance at its rounded
// arrival sample.
Waveform simulate_rir(const RoomSpec& room, const RirOptions& options = {});

// Schroeder backward-integrated energy decay curve in dB, normalized to 0 dB
// at the first sample. Trailing silence maps to -infinity.
std::vector<double> schroeder_decay_db(const Waveform& h);

// Reverberation time extrapolated from a least-squares line fitted to the
// decay curve between -5 dB and -25 dB.
double estimate_rt60(const Waveform& h);

// d = (x * h) delayed by round(delay_ms * 16) samples, cut to len(x).
Waveform render_echo(const Waveform& x, const Waveform& h, double delay_ms);

}  // namespace paec
