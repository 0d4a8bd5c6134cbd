#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "waveaec/waveform.hpp"

namespace testsup {

// Speech-like synthetic signal: harmonic voicing with pitch drift, a
// syllabic amplitude envelope, and short pauses. Active enough everywhere
// for power measurements while still having structure to learn.
inline waveaec::Waveform speechy(std::size_t n, uint64_t seed,
                                 double rms = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double f0_base = 110.0 + 110.0 * unif(rng);
  const double drift_hz = 0.2 + 0.6 * unif(rng);
  const double syllable_hz = 2.5 + 2.0 * unif(rng);
  const double phase0 = 2.0 * M_PI * unif(rng);
  const double phase1 = 2.0 * M_PI * unif(rng);

  waveaec::Waveform w = waveaec::Waveform::zeros(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / waveaec::kSampleRate;
    const double f0 =
        f0_base * (1.0 + 0.15 * std::sin(2.0 * M_PI * drift_hz * t + phase0));
    phase += 2.0 * M_PI * f0 / waveaec::kSampleRate;
    double s = 0.0;
    for (int h = 1; h <= 5; ++h) s += std::sin(h * phase) / double(h);
    // syllabic envelope, never fully silent
    const double env =
        0.25 + 0.75 * 0.5 *
                   (1.0 + std::sin(2.0 * M_PI * syllable_hz * t + phase1));
    w.samples[i] = s * env;
  }
  // normalize to the requested RMS
  double p = 0.0;
  for (double v : w.samples) p += v * v;
  p = std::sqrt(p / double(n));
  if (p > 0.0)
    for (double& v : w.samples) v *= rms / p;
  return w;
}

inline waveaec::Waveform white(std::size_t n, uint64_t seed,
                               double amp = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, amp);
  waveaec::Waveform w = waveaec::Waveform::zeros(n);
  for (double& v : w.samples) v = dist(rng);
  return w;
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("waveaec_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace testsup
