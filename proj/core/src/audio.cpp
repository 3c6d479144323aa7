#include "savg/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "savg/errors.hpp"

namespace savg {

void validate(const AudioClip& clip, const std::string& what) {
  if (clip.samples.empty()) throw InvalidInputError(what + ": empty audio clip");
  if (clip.sample_rate <= 0) throw InvalidInputError(what + ": sample_rate must be positive");
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw InvalidInputError(what + ": non-finite sample");
  }
}

double energy(const AudioClip& clip) {
  double e = 0.0;
  for (double s : clip.samples) e += s * s;
  return e;
}

double peak_abs(const AudioClip& clip) {
  double p = 0.0;
  for (double s : clip.samples) p = std::max(p, std::abs(s));
  return p;
}

int16_t quantize_i16(double x) {
  double v = std::round(x * 32767.0);
  v = std::min(32767.0, std::max(-32768.0, v));
  return static_cast<int16_t>(v);
}

AudioClip to_i16_lattice(const AudioClip& clip) {
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.reserve(clip.samples.size());
  for (double s : clip.samples) out.samples.push_back(quantize_i16(s) / 32767.0);
  return out;
}

namespace {

void put_u32(std::string& buf, uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

void wav_write(const std::string& path, const AudioClip& clip) {
  validate(clip, "wav_write");
  const uint32_t data_bytes = static_cast<uint32_t>(clip.samples.size() * 2);
  std::string buf;
  buf.reserve(44 + data_bytes);
  buf += "RIFF";
  put_u32(buf, 36 + data_bytes);
  buf += "WAVE";
  buf += "fmt ";
  put_u32(buf, 16);
  put_u16(buf, 1);  // PCM
  put_u16(buf, 1);  // mono
  put_u32(buf, static_cast<uint32_t>(clip.sample_rate));
  put_u32(buf, static_cast<uint32_t>(clip.sample_rate * 2));
  put_u16(buf, 2);   // block align
  put_u16(buf, 16);  // bits per sample
  buf += "data";
  put_u32(buf, data_bytes);
  for (double s : clip.samples) {
    put_u16(buf, static_cast<uint16_t>(quantize_i16(s)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("wav_write: cannot open " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw InvalidInputError("wav_write: write failed for " + path);
}

AudioClip wav_read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("wav_read: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw InvalidInputError("wav_read: " + path + " is not a RIFF/WAVE file");
  }

  AudioClip clip;
  bool have_fmt = false, have_data = false;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    uint32_t chunk_size = get_u32(p + pos + 4);
    size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      throw InvalidInputError("wav_read: truncated chunk in " + path);
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw InvalidInputError("wav_read: malformed fmt chunk in " + path);
      uint16_t format = get_u16(p + body);
      uint16_t channels = get_u16(p + body + 2);
      uint32_t rate = get_u32(p + body + 4);
      uint16_t bits = get_u16(p + body + 14);
      if (format != 1) {
        throw InvalidInputError("wav_read: " + path + ": only PCM (format 1) is supported, got format " +
                                std::to_string(format));
      }
      if (channels != 1) {
        throw InvalidInputError("wav_read: " + path + ": only mono is supported, got " +
                                std::to_string(channels) + " channels");
      }
      if (bits != 16) {
        throw InvalidInputError("wav_read: " + path + ": only 16-bit samples are supported, got " +
                                std::to_string(bits) + " bits");
      }
      clip.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw InvalidInputError("wav_read: data chunk before fmt in " + path);
      size_t n = chunk_size / 2;
      clip.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        int16_t q = static_cast<int16_t>(get_u16(p + body + 2 * i));
        clip.samples[i] = q / 32767.0;
      }
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are word-aligned
  }
  if (!have_fmt || !have_data) {
    throw InvalidInputError("wav_read: missing fmt or data chunk in " + path);
  }
  validate(clip, "wav_read(" + path + ")");
  return clip;
}

}  // namespace savg
