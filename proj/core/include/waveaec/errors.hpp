#pragma once

#include <stdexcept>
#include <string>

namespace waveaec {

// Error taxonomy mirrored by the CLI exit codes: usage (1), data (2),
// numerical (3).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : DataError {
  explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

// WAV loading failures, each its own type so callers can distinguish a
// wrong-format file from a wrong-rate or multichannel one.
struct UnsupportedFormatError : DataError {
  explicit UnsupportedFormatError(const std::string& msg) : DataError(msg) {}
};

struct SampleRateError : DataError {
  explicit SampleRateError(const std::string& msg) : DataError(msg) {}
};

struct ChannelCountError : DataError {
  explicit ChannelCountError(const std::string& msg) : DataError(msg) {}
};

}  // namespace waveaec
