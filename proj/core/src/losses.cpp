#include "waveaec/losses.hpp"

namespace waveaec {

std::vector<double> mel_filterbank_matrix(const LogmelFrontendConfig& cfg) {
  const int bins = cfg.fft_size / 2 + 1;
  const int mels = cfg.num_mels;
  std::vector<double> fb(std::size_t(bins) * std::size_t(mels), 0.0);

  const double mel_lo = hz_to_mel(cfg.mel_low_hz);
  const double mel_hi = hz_to_mel(cfg.mel_high_hz);
  std::vector<double> edges(std::size_t(mels) + 2);
  for (int m = 0; m < mels + 2; ++m)
    edges[std::size_t(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * double(m) / double(mels + 1));

  for (int b = 0; b < bins; ++b) {
    const double freq = double(b) * kSampleRate / cfg.fft_size;
    for (int m = 0; m < mels; ++m) {
      const double left = edges[std::size_t(m)];
      const double center = edges[std::size_t(m) + 1];
      const double right = edges[std::size_t(m) + 2];
      double w = 0.0;
      if (freq > left && freq < center)
        w = (freq - left) / (center - left);
      else if (freq >= center && freq < right)
        w = (right - freq) / (right - center);
      fb[std::size_t(b * mels + m)] = w;
    }
  }
  return fb;
}

}  // namespace waveaec
