#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "waveaec/waveform.hpp"

namespace waveaec {

// Synthetic shoebox room impulse response, direct path normalized to unit
// gain.
struct Rir {
  std::vector<double> taps;
  int sample_rate = kSampleRate;
  double rt60_ms = 0.0;
  double source_distance_m = 0.0;
};

// Image-method RIR for a randomized shoebox room (sides 3-8 m),
// frequency-independent absorption chosen to hit rt60, truncated at rt60.
// rt60_ms == 0 is the anechoic flag: a single tap at the propagation delay.
Rir generate_rir(double rt60_ms, double distance_m, uint64_t seed);

// Schroeder backward integration of the energy decay curve; returns the
// -60 dB decay time in ms extrapolated from the -5..-35 dB fit.
double measure_rt60_ms(const Rir& rir);

Waveform convolve(const Waveform& x, const std::vector<double>& taps);

// Memoryless soft clipper tanh(drive*x)/drive; drive <= 0 is a no-op.
Waveform soft_clip(const Waveform& x, double drive);

// Recipe for one synthetic example.
struct MixtureSpec {
  Waveform target;
  Waveform reference;
  Rir target_rir;
  Rir echo_rir;
  double ser_db = 0.0;
  std::optional<Waveform> noise;
  std::optional<double> snr_db;
  double preamble_ms = 0.0;
  double nonlinear_drive = 0.0;
  uint64_t seed = 0;
};

struct ExampleMeta {
  double ser_db = 0.0;
  double measured_ser_db = 0.0;
  std::optional<double> snr_db;
  double preamble_ms = 0.0;
  double nonlinear_drive = 0.0;
  uint64_t seed = 0;
};

// All waveforms share one length; mixture[i] == target_reverberant[i] +
// echo[i] + noise[i] in that exact evaluation order.
struct Example {
  Waveform mixture;
  Waveform reference;
  Waveform target_reverberant;
  Waveform echo;
  Waveform noise;
  ExampleMeta meta;
};

Example mix(const MixtureSpec& spec);

// Power over active regions only (20 ms frames above -60 dBFS RMS).
double active_power(const Waveform& w, std::size_t begin, std::size_t end);

// ---------------------------------------------------------------------------
// Manifests: one UTF-8 line per example, tab-separated, fixed field order:
// id, mixture_wav, reference_wav, target_wav, ser_db, preamble_ms, seed,
// rt60_ms, nonlinear_drive, snr_db ("-" when absent).

struct ManifestEntry {
  std::string id;
  std::string mixture_path;
  std::string reference_path;
  std::string target_path;
  double ser_db = 0.0;
  double preamble_ms = 0.0;
  uint64_t seed = 0;
  double rt60_ms = 0.0;
  double nonlinear_drive = 0.0;
  std::optional<double> snr_db;
};

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Pre-simulation recipe line: corpus paths plus mixing parameters.
// Tab-separated fields: target, reference, noise ("-" when absent), ser_db,
// preamble_ms, seed.
struct RecipeEntry {
  std::string target_path;
  std::string reference_path;
  std::string noise_path;  // empty = none
  double ser_db = 0.0;
  double preamble_ms = 0.0;
  uint64_t seed = 0;
};

struct SimConfig {
  int count = 0;                 // 0: every target x every ser_list value
  double ser_min = -20.0;
  double ser_max = 5.0;
  std::vector<double> ser_list;  // when non-empty, cycles instead of sampling
  double preamble_ms = 0.0;
  double rt60_ms = 200.0;
  double echo_rt60_ms = 150.0;
  double nonlinear_drive = 0.0;
  std::optional<double> snr_db;
};

// Pairs corpus files into mixing recipes with a deterministic shuffle and
// per-line seeds. SERs cycle over cfg.ser_list when given, else draw
// uniformly from [ser_min, ser_max].
std::vector<RecipeEntry> build_manifest(const std::string& corpus_dir,
                                        const SimConfig& cfg, uint64_t seed);

void write_recipes(const std::string& path,
                   const std::vector<RecipeEntry>& entries);
std::vector<RecipeEntry> read_recipes(const std::string& path);

// Scans corpus_dir/{target,reference}[,noise], simulates examples into
// out_dir as WAV triples plus a sidecar .meta record, and returns the
// manifest entries (deterministic in seed).
std::vector<ManifestEntry> simulate_corpus(const std::string& corpus_dir,
                                           const std::string& out_dir,
                                           const SimConfig& cfg,
                                           uint64_t seed);

}  // namespace waveaec
