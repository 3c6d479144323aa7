#include "savg/fft.hpp"

#include <cmath>

#include "savg/errors.hpp"

namespace savg {

bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<std::complex<double>>& data, bool inverse) {
  const size_t n = data.size();
  if (!is_power_of_two(n)) throw InvalidInputError("fft: size must be a power of two");
  if (n == 1) return;

  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = data[i + k];
        std::complex<double> v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : data) x *= inv;
  }
}

std::vector<std::complex<double>> rdft_half(const std::vector<double>& frame, size_t n) {
  std::vector<std::complex<double>> buf(n, {0.0, 0.0});
  const size_t m = std::min(frame.size(), n);
  for (size_t i = 0; i < m; ++i) buf[i] = {frame[i], 0.0};
  fft_inplace(buf, false);
  buf.resize(n / 2 + 1);
  return buf;
}

}  // namespace savg
