#pragma once

#include <complex>
#include <vector>

#include "waveaec/errors.hpp"

namespace waveaec {

// In-place iterative radix-2 FFT. Length must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Real FFT returning the n/2+1 non-negative-frequency bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// Inverse of rfft for a real length-n signal; bins.size() must be n/2+1.
std::vector<double> irfft(const std::vector<std::complex<double>>& bins, int n);

}  // namespace waveaec
