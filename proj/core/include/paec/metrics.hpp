#pragma once

#include "paec/audio.hpp"
#include "paec/scene.hpp"

namespace paec {

// 10 log10(sum y^2 / sum s_hat^2). A silent estimate yields +inf.
double erle(const Waveform& y, const Waveform& s_hat);

struct MixRatios {
  double sir = kInf;
  double ser = kInf;
  double snr = kInf;
};

// Energy ratios of the target speech against interference, echo and noise.
// Silent components give +inf; a silent target is an error.
MixRatios measure_ratios(const MixtureRecord& record);

// Scale-invariant SDR in dB. An estimate that is an exact (scaled) copy of
// the reference gives +inf.
double si_sdr(const Waveform& reference, const Waveform& estimate);

// Root mean square over STFT frames of the per-frame RMS difference of
// 20 log10 max(|X|, 1e-8) across bins.
double lsd(const Waveform& reference, const Waveform& estimate);

}  // namespace paec
