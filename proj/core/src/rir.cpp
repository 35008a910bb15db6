#include "paec/rir.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fft.hpp"

namespace paec {
namespace {

// Image coordinate along one axis and the number of wall hits it implies.
struct AxisImage {
  double offset;  // image coordinate minus receiver coordinate
  int reflections;
};

std::vector<AxisImage> axis_images(double src, double mic, double length, double reach) {
  const int n_max = static_cast<int>(std::ceil(reach / (2.0 * length))) + 1;
  std::vector<AxisImage> out;
  for (int n = -n_max; n <= n_max; ++n) {
    for (int q = 0; q <= 1; ++q) {
      const double pos = (q == 0 ? src : -src) + 2.0 * n * length;
      const double offset = pos - mic;
      if (std::abs(offset) > reach) continue;
      out.push_back({offset, std::abs(n - q) + std::abs(n)});
    }
  }
  return out;
}

}  // namespace

void validate_room(const RoomSpec& room) {
  if (!(room.width > 0.0 && room.height > 0.0 && room.depth > 0.0)) {
    throw Error("room dimensions must be positive");
  }
  if (!(room.rt60 > 0.0 && std::isfinite(room.rt60))) throw Error("rt60 must be positive");
  const std::array<double, 3> dims{room.width, room.depth, room.height};
  for (const auto* pos : {&room.source_pos, &room.mic_pos}) {
    for (int a = 0; a < 3; ++a) {
      const double p = (*pos)[static_cast<std::size_t>(a)];
      if (!(p >= kWallClearance && p <= dims[static_cast<std::size_t>(a)] - kWallClearance)) {
        throw Error("source/microphone must lie inside the room with 0.1 m wall clearance");
      }
    }
  }
}

double sabine_absorption(const RoomSpec& room) {
  return std::min(1.0, 0.161 * room.volume() / (room.surface() * room.rt60));
}

namespace {

Waveform image_source(const RoomSpec& room, double alpha, int max_order) {
  const double beta = std::sqrt(1.0 - alpha);

  const double fs = static_cast<double>(kSampleRate);
  const double reach = room.rt60 * kSpeedOfSound;
  const auto length = static_cast<std::size_t>(std::ceil(room.rt60 * fs)) + 1;
  Waveform h(length);

  const auto xs = axis_images(room.source_pos[0], room.mic_pos[0], room.width, reach);
  const auto ys = axis_images(room.source_pos[1], room.mic_pos[1], room.depth, reach);
  const auto zs = axis_images(room.source_pos[2], room.mic_pos[2], room.height, reach);

  // beta^k for every reachable reflection count.
  std::vector<double> beta_pow(1, 1.0);
  for (const auto& x : xs) {
    for (const auto& y : ys) {
      const double dxy2 = x.offset * x.offset + y.offset * y.offset;
      if (dxy2 > reach * reach) continue;
      for (const auto& z : zs) {
        const int order = x.reflections + y.reflections + z.reflections;
        if (order > max_order) continue;
        const double dist = std::sqrt(dxy2 + z.offset * z.offset);
        if (dist > reach) continue;
        const auto sample = static_cast<std::size_t>(std::llround(dist / kSpeedOfSound * fs));
        if (sample >= length) continue;
        while (beta_pow.size() <= static_cast<std::size_t>(order)) {
          beta_pow.push_back(beta_pow.back() * beta);
        }
        h.samples[sample] += beta_pow[static_cast<std::size_t>(order)] / std::max(dist, 1e-3);
      }
    }
  }
  return h;
}

}  // namespace

double calibrated_absorption(const RoomSpec& room) {
  validate_room(room);
  // T60 scales roughly with 1 / -ln(1 - alpha), so rescale that exponent by
  // the measured-to-target ratio until the simulated decay agrees.
  double alpha = sabine_absorption(room);
  double exponent = -std::log1p(-std::min(alpha, 0.999));
  for (int iter = 0; iter < 12; ++iter) {
    const double measured =
        estimate_rt60(image_source(room, alpha, std::numeric_limits<int>::max()));
    const double ratio = measured / room.rt60;
    if (std::abs(ratio - 1.0) < 0.01) break;
    exponent *= ratio;
    alpha = std::clamp(-std::expm1(-exponent), 1e-4, 0.999);
    exponent = -std::log1p(-alpha);
  }
  return alpha;
}

Waveform simulate_rir(const RoomSpec& room, const RirOptions& options) {
  validate_room(room);
  const double alpha = options.absorption ? *options.absorption : calibrated_absorption(room);
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("absorption must lie in (0, 1]");
  return image_source(room, alpha, options.max_order.value_or(std::numeric_limits<int>::max()));
}

std::vector<double> schroeder_decay_db(const Waveform& h) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (std::size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  const double total = edc.empty() ? 0.0 : edc.front();
  for (double& e : edc) {
    e = (total > 0.0 && e > 0.0) ? 10.0 * std::log10(e / total)
                                 : -std::numeric_limits<double>::infinity();
  }
  return edc;
}

double estimate_rt60(const Waveform& h) {
  const auto edc = schroeder_decay_db(h);
  // Regression window from the -5 dB to the -25 dB crossing.
  std::size_t begin = edc.size(), end = edc.size();
  for (std::size_t i = 0; i < edc.size(); ++i) {
    if (begin == edc.size() && edc[i] <= -5.0) begin = i;
    if (edc[i] <= -25.0) {
      end = i;
      break;
    }
  }
  if (begin >= end || end == edc.size()) throw Error("estimate_rt60: decay never reaches -25 dB");
  const double fs = static_cast<double>(kSampleRate);
  double st = 0, sd = 0, stt = 0, std_ = 0;
  const double n = static_cast<double>(end - begin + 1);
  for (std::size_t i = begin; i <= end; ++i) {
    const double t = static_cast<double>(i) / fs;
    st += t;
    sd += edc[i];
    stt += t * t;
    std_ += t * edc[i];
  }
  const double slope = (n * std_ - st * sd) / (n * stt - st * st);
  if (!(slope < 0.0)) throw Error("estimate_rt60: non-decaying response");
  return -60.0 / slope;
}

Waveform render_echo(const Waveform& x, const Waveform& h, double delay_ms) {
  if (!(delay_ms >= 0.0)) throw Error("render_echo: delay must be non-negative");
  if (delay_ms > 512.0) throw Error("render_echo: delay must not exceed 512 ms");
  const auto shift = static_cast<std::size_t>(std::llround(delay_ms * kSampleRate / 1000.0));
  Waveform d(x.size(), x.sample_rate);
  if (shift >= x.size() || h.empty() || x.empty()) return d;
  // Only the first len(x) - shift convolution samples survive the cut.
  const std::size_t keep = x.size() - shift;
  const std::span<const double> xs(x.samples.data(), keep);
  const std::span<const double> hs(h.samples.data(), std::min(h.size(), keep));
  const auto full = detail::fft_convolve(xs, hs);
  std::copy_n(full.begin(), keep, d.samples.begin() + static_cast<std::ptrdiff_t>(shift));
  return d;
}

}  // namespace paec
