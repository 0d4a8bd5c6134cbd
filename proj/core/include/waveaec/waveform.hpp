#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "waveaec/errors.hpp"

namespace waveaec {

constexpr int kSampleRate = 16000;

// Mono 16 kHz audio, nominal range [-1, 1]. Samples are kept in double so
// repeated DSP passes do not accumulate float roundoff; file I/O converts.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<double> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}
  static Waveform zeros(std::size_t n) {
    return Waveform(std::vector<double>(n, 0.0));
  }

  std::size_t size() const { return samples.size(); }
  double& operator[](std::size_t i) { return samples[i]; }
  double operator[](std::size_t i) const { return samples[i]; }

  bool all_finite() const {
    for (double v : samples)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double signal_power(const Waveform& w) {
  double e = 0.0;
  for (double v : w.samples) e += v * v;
  return w.samples.empty() ? 0.0 : e / static_cast<double>(w.samples.size());
}

inline double signal_energy(const Waveform& w) {
  double e = 0.0;
  for (double v : w.samples) e += v * v;
  return e;
}

}  // namespace waveaec
