#include "waveaec/stft.hpp"

#include <cmath>

#include "waveaec/fft.hpp"

namespace waveaec {

std::vector<double> sqrt_hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[std::size_t(i)] =
        std::sqrt(0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(n)));
  return w;
}

Spectrogram stft(const Waveform& w, const FrameSpec& spec) {
  const auto window = sqrt_hann_window(spec.window_len);
  auto frames = frame_signal(w, spec);
  Spectrogram out;
  out.spec = spec;
  out.frames.reserve(frames.size());
  for (auto& f : frames) {
    for (int i = 0; i < spec.window_len; ++i)
      f[std::size_t(i)] *= window[std::size_t(i)];
    out.frames.push_back(rfft(f));
  }
  return out;
}

Waveform istft(const Spectrogram& s) {
  const FrameSpec& spec = s.spec;
  const auto window = sqrt_hann_window(spec.window_len);
  const std::size_t T = s.num_frames();
  if (T == 0) return Waveform{};
  const std::size_t expected_bins = std::size_t(spec.window_len) / 2 + 1;
  const std::size_t out_len = (T - 1) * std::size_t(spec.hop) + spec.window_len;
  Waveform out = Waveform::zeros(out_len);
  for (std::size_t t = 0; t < T; ++t) {
    if (s.frames[t].size() != expected_bins)
      throw ShapeError("istft: bin count mismatch");
    auto frame = irfft(s.frames[t], spec.window_len);
    const std::size_t start = t * std::size_t(spec.hop);
    // Square-root Hann on both sides; shifted squared windows sum to one at
    // 50% overlap, so no further normalization.
    for (int i = 0; i < spec.window_len; ++i)
      out.samples[start + std::size_t(i)] +=
          frame[std::size_t(i)] * window[std::size_t(i)];
  }
  return out;
}

}  // namespace waveaec
