#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "savg/audio.hpp"

namespace savg {

enum class WindowKind { SqrtHann, Hann };

// Analysis/synthesis configuration. The default (256/128, sqrt-Hann at 50%
// overlap) satisfies COLA for the squared window, so stft -> istft is exact.
struct StftConfig {
  size_t window_size = 256;
  size_t hop_size = 128;
  size_t fft_size = 256;
  WindowKind window = WindowKind::SqrtHann;

  size_t num_bins() const { return fft_size / 2 + 1; }
  bool operator==(const StftConfig&) const = default;
};

void validate(const StftConfig& cfg);
std::vector<double> make_window(const StftConfig& cfg);

struct Spectrogram {
  // row-major T x F
  std::vector<std::complex<double>> frames;
  size_t num_frames = 0;
  size_t num_bins = 0;
  StftConfig config;
  size_t original_length = 0;

  std::complex<double>& at(size_t t, size_t f) { return frames[t * num_bins + f]; }
  const std::complex<double>& at(size_t t, size_t f) const { return frames[t * num_bins + f]; }
};

// Analysis pads the signal with this many zeros on the left (and as needed on
// the right), so every real sample carries full overlap-add weight and
// istft(stft(x)) is exact to rounding.
size_t stft_left_pad(const StftConfig& cfg);

// Frame t starts at t*hop - stft_left_pad in signal coordinates.
size_t stft_num_frames(size_t length, const StftConfig& cfg);

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg);

// Overlap-add synthesis with the same window, normalized by the overlap-added
// squared window (bins below 1e-8 are left unnormalized), truncated to
// original_length.
AudioClip istft(const Spectrogram& spec);

struct MixResult {
  AudioClip mixture;
  AudioClip scaled_interferer;
  double gain = 1.0;  // applied to the interferer
};

// Scales the interferer so that 10*log10(E_target / E_interferer') == snr_db,
// then adds. Both inputs must have equal length/rate and nonzero energy.
MixResult mix_at_snr(const AudioClip& target, const AudioClip& interferer, double snr_db);

// Per-channel piecewise-linear interpolation of an L_in x D row-major array
// onto target_len uniformly spaced rows. L_in == 1 broadcasts the single row.
std::vector<double> interp_time(const std::vector<double>& features, size_t l_in, size_t dim,
                                size_t target_len);

// Source position and blend weights for output row j of interp_time; shared
// with the differentiable interpolation op so both paths agree exactly.
struct InterpWeight {
  size_t i0, i1;
  double w0, w1;
};
InterpWeight interp_weight(size_t l_in, size_t l_out, size_t j);

}  // namespace savg
