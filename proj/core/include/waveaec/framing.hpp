#pragma once

#include <cstddef>
#include <vector>

#include "waveaec/waveform.hpp"

namespace waveaec {

struct FrameSpec {
  int window_len = 80;
  int hop = 40;

  FrameSpec() = default;
  FrameSpec(int win, int h) : window_len(win), hop(h) {
    if (win <= 0 || h <= 0 || h > win)
      throw ShapeError("FrameSpec requires 0 < hop <= window_len");
  }
};

// Rectangular-window framing: row t = samples[t*hop .. t*hop+window_len),
// tail zero-padded. Input shorter than one window yields a single padded
// frame.
std::vector<std::vector<double>> frame_signal(const Waveform& w,
                                              const FrameSpec& spec);

// Inverse of frame_signal under 50% overlap: each frame is accumulated at
// t*hop and the result scaled by hop/window_len, which makes
// overlap_add(frame_signal(w)) == w exactly on the fully-overlapped
// interior. Output length is (T-1)*hop + window_len; caller truncates.
Waveform overlap_add(const std::vector<std::vector<double>>& frames,
                     const FrameSpec& spec);

inline std::size_t num_frames(std::size_t n, const FrameSpec& spec) {
  if (n <= std::size_t(spec.window_len)) return 1;
  return (n - spec.window_len + spec.hop - 1) / spec.hop + 1;
}

}  // namespace waveaec
