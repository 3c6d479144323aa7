#include "savg/stft.hpp"

#include <cmath>

#include "savg/errors.hpp"
#include "savg/fft.hpp"

namespace savg {

void validate(const StftConfig& cfg) {
  if (cfg.window_size == 0 || cfg.hop_size == 0 || cfg.fft_size == 0) {
    throw ConfigError("stft config: sizes must be positive");
  }
  if (cfg.hop_size > cfg.window_size || cfg.window_size > cfg.fft_size) {
    throw ConfigError("stft config: need hop_size <= window_size <= fft_size");
  }
  if (!is_power_of_two(cfg.fft_size)) {
    throw ConfigError("stft config: fft_size must be a power of two");
  }
}

std::vector<double> make_window(const StftConfig& cfg) {
  // periodic Hann; its 50%-overlap shifts sum to exactly 1
  std::vector<double> w(cfg.window_size);
  for (size_t i = 0; i < cfg.window_size; ++i) {
    double hann = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                        static_cast<double>(cfg.window_size)));
    w[i] = cfg.window == WindowKind::SqrtHann ? std::sqrt(hann) : hann;
  }
  return w;
}

size_t stft_left_pad(const StftConfig& cfg) { return cfg.window_size - cfg.hop_size; }

size_t stft_num_frames(size_t length, const StftConfig& cfg) {
  if (length == 0) return 0;
  // the last frame starts at floor((length-1+pad)/hop)*hop in padded
  // coordinates, which gives the final sample its full overlap weight
  return (length - 1 + stft_left_pad(cfg)) / cfg.hop_size + 1;
}

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
  validate(clip, "stft");
  validate(cfg);

  const auto window = make_window(cfg);
  const size_t n = clip.samples.size();
  const size_t num_frames = stft_num_frames(n, cfg);
  const size_t num_bins = cfg.num_bins();

  Spectrogram spec;
  spec.config = cfg;
  spec.original_length = n;
  spec.num_frames = num_frames;
  spec.num_bins = num_bins;
  spec.frames.resize(num_frames * num_bins);

  // frames are laid out over the signal left-padded by window-hop zeros, so
  // edge samples are covered with full overlap weight and reconstruct exactly
  const long pad = static_cast<long>(stft_left_pad(cfg));
  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (size_t t = 0; t < num_frames; ++t) {
    const long start = static_cast<long>(t * cfg.hop_size) - pad;
    std::fill(buf.begin(), buf.end(), std::complex<double>{0.0, 0.0});
    for (size_t i = 0; i < cfg.window_size; ++i) {
      const long idx = start + static_cast<long>(i);
      buf[i] = {idx >= 0 && idx < static_cast<long>(n) ? window[i] * clip.samples[idx] : 0.0,
                0.0};
    }
    fft_inplace(buf, false);
    for (size_t f = 0; f < num_bins; ++f) spec.at(t, f) = buf[f];
  }
  return spec;
}

AudioClip istft(const Spectrogram& spec) {
  validate(spec.config);
  const auto& cfg = spec.config;
  if (spec.num_bins != cfg.num_bins()) {
    throw InvalidInputError("istft: spectrogram bin count does not match its config");
  }
  if (spec.num_frames == 0 || spec.num_frames * spec.num_bins != spec.frames.size()) {
    throw InvalidInputError("istft: inconsistent frame storage");
  }

  const auto window = make_window(cfg);
  const size_t total = (spec.num_frames - 1) * cfg.hop_size + cfg.window_size;
  std::vector<double> acc(total, 0.0);
  std::vector<double> wsq(total, 0.0);

  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (size_t t = 0; t < spec.num_frames; ++t) {
    // reconstitute Hermitian bins; only the real synthesis output is kept
    buf[0] = spec.at(t, 0);
    buf[cfg.fft_size / 2] = spec.at(t, cfg.fft_size / 2);
    for (size_t f = 1; f < cfg.fft_size / 2; ++f) {
      buf[f] = spec.at(t, f);
      buf[cfg.fft_size - f] = std::conj(spec.at(t, f));
    }
    fft_inplace(buf, true);
    const size_t start = t * cfg.hop_size;
    for (size_t i = 0; i < cfg.window_size; ++i) {
      acc[start + i] += buf[i].real() * window[i];
      wsq[start + i] += window[i] * window[i];
    }
  }

  AudioClip out;
  out.sample_rate = 16000;
  const size_t pad = stft_left_pad(cfg);
  const size_t n = spec.original_length ? spec.original_length : total - pad;
  if (n + pad > total) throw InvalidInputError("istft: original_length exceeds synthesis span");
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const size_t q = i + pad;  // position in the padded overlap-add buffer
    out.samples[i] = wsq[q] > 1e-8 ? acc[q] / wsq[q] : acc[q];
  }
  return out;
}

MixResult mix_at_snr(const AudioClip& target, const AudioClip& interferer, double snr_db) {
  validate(target, "mix_at_snr target");
  validate(interferer, "mix_at_snr interferer");
  if (target.samples.size() != interferer.samples.size()) {
    throw InvalidInputError("mix_at_snr: length mismatch");
  }
  if (target.sample_rate != interferer.sample_rate) {
    throw InvalidInputError("mix_at_snr: sample rate mismatch");
  }
  const double e_t = energy(target);
  const double e_i = energy(interferer);
  if (e_t <= 0.0) throw InvalidInputError("mix_at_snr: target has zero energy");
  if (e_i <= 0.0) throw InvalidInputError("mix_at_snr: interferer has zero energy");

  const double alpha = std::sqrt(e_t / e_i) * std::pow(10.0, -snr_db / 20.0);
  MixResult r;
  r.gain = alpha;
  r.scaled_interferer.sample_rate = interferer.sample_rate;
  r.scaled_interferer.samples.resize(interferer.samples.size());
  r.mixture.sample_rate = target.sample_rate;
  r.mixture.samples.resize(target.samples.size());
  for (size_t i = 0; i < target.samples.size(); ++i) {
    r.scaled_interferer.samples[i] = alpha * interferer.samples[i];
    r.mixture.samples[i] = target.samples[i] + r.scaled_interferer.samples[i];
  }
  return r;
}

InterpWeight interp_weight(size_t l_in, size_t l_out, size_t j) {
  InterpWeight w;
  if (l_in == 1 || l_out == 1) {
    // single input row broadcasts; a single output row samples position 0
    w.i0 = 0;
    w.i1 = 0;
    w.w0 = 1.0;
    w.w1 = 0.0;
    return w;
  }
  const double pos = static_cast<double>(j) * static_cast<double>(l_in - 1) /
                     static_cast<double>(l_out - 1);
  size_t i0 = static_cast<size_t>(pos);
  if (i0 >= l_in - 1) i0 = l_in - 2;
  const double frac = pos - static_cast<double>(i0);
  w.i0 = i0;
  w.i1 = i0 + 1;
  w.w0 = 1.0 - frac;
  w.w1 = frac;
  return w;
}

std::vector<double> interp_time(const std::vector<double>& features, size_t l_in, size_t dim,
                                size_t target_len) {
  if (l_in < 1 || target_len < 1) throw InvalidInputError("interp_time: lengths must be >= 1");
  if (features.size() != l_in * dim) throw InvalidInputError("interp_time: size mismatch");
  std::vector<double> out(target_len * dim);
  for (size_t j = 0; j < target_len; ++j) {
    const InterpWeight w = interp_weight(l_in, target_len, j);
    for (size_t d = 0; d < dim; ++d) {
      out[j * dim + d] = w.w0 * features[w.i0 * dim + d] + w.w1 * features[w.i1 * dim + d];
    }
  }
  return out;
}

}  // namespace savg
