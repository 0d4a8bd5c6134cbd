#include "waveaec/wav_io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace waveaec {
namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

void put_u32(std::vector<char>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::vector<char>& b, uint16_t v) {
  for (int i = 0; i < 2; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24);
}
uint16_t get_u16(const unsigned char* p) { return uint16_t(p[0] | (p[1] << 8)); }

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open WAV file: " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw UnsupportedFormatError("not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_len = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const unsigned char* hdr = raw.data() + pos;
    uint32_t chunk_len = get_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_len > raw.size()) chunk_len = uint32_t(raw.size() - pos - 8);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = get_u16(body);
      channels = get_u16(body + 2);
      rate = get_u32(body + 4);
      bits = get_u16(body + 14);
      if (format == kFormatExtensible && chunk_len >= 40)
        format = get_u16(body + 24);  // wFormatTag from the GUID
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }

  if (!have_fmt || data == nullptr)
    throw UnsupportedFormatError("missing fmt/data chunk: " + path);
  if (channels != 1)
    throw ChannelCountError("expected mono, got " + std::to_string(channels) +
                            " channels: " + path);
  if (rate != kSampleRate)
    throw SampleRateError("expected 16000 Hz, got " + std::to_string(rate) +
                          " Hz: " + path);

  Waveform w;
  if (format == kFormatPcm && bits == 16) {
    std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      int16_t v = int16_t(get_u16(data + 2 * i));
      w.samples[i] = double(v) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      uint32_t u = get_u32(data + 4 * i);
      float v;
      std::memcpy(&v, &u, 4);
      w.samples[i] = double(v);
    }
  } else {
    throw UnsupportedFormatError("unsupported encoding (format tag " +
                                 std::to_string(format) + ", " +
                                 std::to_string(bits) + " bit): " + path);
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w, WavEncoding enc) {
  if (w.sample_rate != kSampleRate)
    throw SampleRateError("write_wav: sample rate must be 16000");
  const uint16_t bytes_per = enc == WavEncoding::kPcm16 ? 2 : 4;
  const uint32_t data_len = uint32_t(w.size() * bytes_per);

  std::vector<char> b;
  b.reserve(44 + data_len);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put_u32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E'});
  b.insert(b.end(), {'f', 'm', 't', ' '});
  put_u32(b, 16);
  put_u16(b, enc == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(b, 1);
  put_u32(b, kSampleRate);
  put_u32(b, kSampleRate * bytes_per);
  put_u16(b, bytes_per);
  put_u16(b, uint16_t(8 * bytes_per));
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, data_len);

  if (enc == WavEncoding::kPcm16) {
    for (double s : w.samples) {
      double v = std::clamp(s, -1.0, 32767.0 / 32768.0);
      int16_t q = int16_t(std::lround(v * 32768.0));
      put_u16(b, uint16_t(q));
    }
  } else {
    for (double s : w.samples) {
      float v = float(s);
      uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(b, u);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.write(b.data(), std::streamsize(b.size()));
  if (!f) throw DataError("short write: " + path);
}

}  // namespace waveaec
