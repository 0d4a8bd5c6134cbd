#include "waveaec/fft.hpp"

#include <cmath>

namespace waveaec {

namespace {
bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) throw ShapeError("fft: length must be a power of two");
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / double(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& v : a) v /= double(n);
  }
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  std::vector<std::complex<double>> a(x.begin(), x.end());
  fft_inplace(a, false);
  a.resize(x.size() / 2 + 1);
  return a;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& bins, int n) {
  if (int(bins.size()) != n / 2 + 1)
    throw ShapeError("irfft: expected n/2+1 bins");
  std::vector<std::complex<double>> a(static_cast<std::size_t>(n));
  for (int k = 0; k <= n / 2; ++k) a[std::size_t(k)] = bins[std::size_t(k)];
  for (int k = n / 2 + 1; k < n; ++k)
    a[std::size_t(k)] = std::conj(bins[std::size_t(n - k)]);
  fft_inplace(a, true);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[std::size_t(i)] = a[std::size_t(i)].real();
  return out;
}

}  // namespace waveaec
