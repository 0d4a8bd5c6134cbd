#pragma once

#include <complex>
#include <vector>

#include "waveaec/framing.hpp"
#include "waveaec/waveform.hpp"

namespace waveaec {

struct Spectrogram {
  // frames[t][b], b in [0, window_len/2].
  std::vector<std::vector<std::complex<double>>> frames;
  FrameSpec spec;

  std::size_t num_frames() const { return frames.size(); }
  std::size_t num_bins() const {
    return frames.empty() ? 0 : frames[0].size();
  }
};

// WOLA pair with square-root Hann analysis and synthesis windows at 50%
// overlap; istft(stft(w)) reconstructs the interior within 1e-6.
Spectrogram stft(const Waveform& w, const FrameSpec& spec);
Waveform istft(const Spectrogram& s);

std::vector<double> sqrt_hann_window(int n);

}  // namespace waveaec
