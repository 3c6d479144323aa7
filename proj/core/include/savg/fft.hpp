#pragma once

#include <complex>
#include <vector>

namespace savg {

bool is_power_of_two(size_t n);

// In-place iterative radix-2 FFT. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data, bool inverse);

// DFT of a real frame zero-padded to n bins; returns bins 0..n/2 inclusive.
std::vector<std::complex<double>> rdft_half(const std::vector<double>& frame, size_t n);

}  // namespace savg
