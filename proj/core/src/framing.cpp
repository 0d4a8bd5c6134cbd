#include "waveaec/framing.hpp"

namespace waveaec {

std::vector<std::vector<double>> frame_signal(const Waveform& w,
                                              const FrameSpec& spec) {
  const std::size_t n = w.size();
  const std::size_t T = num_frames(n, spec);
  std::vector<std::vector<double>> frames(
      T, std::vector<double>(spec.window_len, 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t start = t * std::size_t(spec.hop);
    for (int i = 0; i < spec.window_len; ++i) {
      const std::size_t idx = start + std::size_t(i);
      if (idx < n) frames[t][std::size_t(i)] = w.samples[idx];
    }
  }
  return frames;
}

Waveform overlap_add(const std::vector<std::vector<double>>& frames,
                     const FrameSpec& spec) {
  if (frames.empty()) return Waveform{};
  for (const auto& f : frames)
    if (int(f.size()) != spec.window_len)
      throw ShapeError("overlap_add: frame length " +
                       std::to_string(f.size()) + " != window_len " +
                       std::to_string(spec.window_len));
  const std::size_t T = frames.size();
  const std::size_t out_len = (T - 1) * std::size_t(spec.hop) + spec.window_len;
  Waveform out = Waveform::zeros(out_len);
  const double gain = double(spec.hop) / double(spec.window_len);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t start = t * std::size_t(spec.hop);
    for (int i = 0; i < spec.window_len; ++i)
      out.samples[start + std::size_t(i)] += frames[t][std::size_t(i)] * gain;
  }
  return out;
}

}  // namespace waveaec
