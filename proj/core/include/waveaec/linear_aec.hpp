#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "waveaec/stft.hpp"
#include "waveaec/waveform.hpp"

namespace waveaec {

struct LinearAecConfig {
  int stft_frame_ms = 128;   // 2048 samples at 16 kHz
  int taps = 4;              // within-band filter order, fixed
  double step_size = 0.5;    // NLMS step, in (0, 1]
  double reg_scale = 1e-6;   // regularizer = reg_scale * mean ref power + floor
  // When set, adaptation runs only during the first preamble_ms of the
  // utterance (the echo-only region) and is frozen afterwards.
  std::optional<double> preamble_ms;

  FrameSpec frame_spec() const {
    const int win = stft_frame_ms * kSampleRate / 1000;
    return FrameSpec(win, win / 2);
  }
};

// Per-bin complex NLMS state: 4 filter taps across consecutive STFT frames
// and the matching reference history.
struct SubbandFilterState {
  std::vector<std::vector<std::complex<double>>> taps;         // [bins][order]
  std::vector<std::vector<std::complex<double>>> ref_history;  // [bins][order]
  std::vector<double> mean_ref_power;                          // [bins]
  double step_size = 0.5;
  double reg_scale = 1e-6;
  bool adaptation_enabled = true;
  long frames_seen = 0;

  SubbandFilterState(std::size_t num_bins, const LinearAecConfig& cfg);

  // Filter one STFT frame of the reference and return the residual
  // mixture - estimate; NLMS-updates the taps when adaptation is enabled.
  void process_frame(const std::vector<std::complex<double>>& mixture_bins,
                     const std::vector<std::complex<double>>& reference_bins,
                     std::vector<std::complex<double>>* residual,
                     std::vector<std::complex<double>>* echo_estimate);
};

inline void freeze_adaptation(SubbandFilterState& s) {
  s.adaptation_enabled = false;
}
inline void resume_adaptation(SubbandFilterState& s) {
  s.adaptation_enabled = true;
}

struct LinearAecOutput {
  Waveform enhanced;
  Waveform echo_estimate;
  double erle_db = 0.0;
};

// Streaming subband AEC over a full utterance. The returned waveforms have
// the same length as the mixture. ERLE is measured over the echo-only
// preamble when cfg.preamble_ms is set, else over the whole signal.
LinearAecOutput linear_aec_process(const Waveform& mixture,
                                   const Waveform& reference,
                                   const LinearAecConfig& cfg = {});

// Same, but with an externally managed state (for freeze/resume control).
LinearAecOutput linear_aec_process(const Waveform& mixture,
                                   const Waveform& reference,
                                   const LinearAecConfig& cfg,
                                   SubbandFilterState& state);

}  // namespace waveaec
