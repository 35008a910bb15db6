#include "paec/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "paec/stft.hpp"

namespace paec {

namespace {

void require_same_length(const Waveform& a, const Waveform& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()) + ")");
  }
}

double db_ratio(double num, double den) {
  if (den <= 0.0) return kInf;
  return 10.0 * std::log10(num / den);
}

}  // namespace

double erle(const Waveform& y, const Waveform& s_hat) {
  require_same_length(y, s_hat, "erle");
  return db_ratio(energy(y.samples), energy(s_hat.samples));
}

MixRatios measure_ratios(const MixtureRecord& record) {
  const double es = energy(record.s.samples);
  if (es <= 0.0) throw Error("measure_ratios: target speech has zero energy");
  return {db_ratio(es, energy(record.z.samples)), db_ratio(es, energy(record.d.samples)),
          db_ratio(es, energy(record.v.samples))};
}

double si_sdr(const Waveform& reference, const Waveform& estimate) {
  require_same_length(reference, estimate, "si_sdr");
  const double rr = energy(reference.samples);
  if (rr <= 0.0) throw Error("si_sdr: reference has zero energy");
  double re = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) re += reference[i] * estimate[i];
  const double alpha = re / rr;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = alpha * reference[i];
    const double e = estimate[i] - t;
    target += t * t;
    residual += e * e;
  }
  // Residual at rounding level relative to the target counts as exact.
  if (residual <= 1e-24 * target) return kInf;
  return 10.0 * std::log10(target / residual);
}

double lsd(const Waveform& reference, const Waveform& estimate) {
  require_same_length(reference, estimate, "lsd");
  const auto a = stft(reference);
  const auto b = stft(estimate);
  double total = 0.0;
  for (std::size_t t = 0; t < a.frames; ++t) {
    double frame = 0.0;
    for (std::size_t f = 0; f < a.bins; ++f) {
      const auto i = a.index(t, f);
      const double ma = std::max(std::hypot(a.re[i], a.im[i]), 1e-8);
      const double mb = std::max(std::hypot(b.re[i], b.im[i]), 1e-8);
      const double d = 20.0 * std::log10(ma) - 20.0 * std::log10(mb);
      frame += d * d;
    }
    total += frame / static_cast<double>(a.bins);
  }
  return std::sqrt(total / static_cast<double>(a.frames));
}

}  // namespace paec
