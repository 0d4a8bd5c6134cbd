#pragma once

#include <string>

#include "waveaec/waveform.hpp"

namespace waveaec {

enum class WavEncoding { kPcm16, kFloat32 };

// Mono 16 kHz RIFF/WAVE only. PCM16 and IEEE float32 are accepted; anything
// else raises UnsupportedFormatError / SampleRateError / ChannelCountError.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w,
               WavEncoding enc = WavEncoding::kPcm16);

}  // namespace waveaec
