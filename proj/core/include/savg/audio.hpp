#pragma once

#include <string>
#include <vector>

namespace savg {

// Mono waveform. Samples are dimensionless amplitudes, 64-bit internally;
// the file boundary is 16-bit PCM (see wav_read/wav_write).
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 16000;

  size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Throws InvalidInputError if the clip is empty, the rate is not positive, or
// any sample is non-finite.
void validate(const AudioClip& clip, const std::string& what);

double energy(const AudioClip& clip);
double peak_abs(const AudioClip& clip);

// RIFF/WAVE, PCM 16-bit little-endian, mono. Anything else is rejected with a
// descriptive InvalidInputError. Quantization is round(x * 32767) with clamp.
AudioClip wav_read(const std::string& path);
void wav_write(const std::string& path, const AudioClip& clip);

int16_t quantize_i16(double x);
// Maps a clip onto the 16-bit lattice (quantize then dequantize); lattice
// clips survive a WAV round trip bit-exactly.
AudioClip to_i16_lattice(const AudioClip& clip);

}  // namespace savg
