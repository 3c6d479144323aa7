#pragma once

#include <map>
#include <string>

#include "savg/classifier.hpp"
#include "savg/gridnet.hpp"
#include "savg/simulate.hpp"
#include "savg/train.hpp"

namespace savg {

// INI-style text: `key = value` lines, `[section]` headers prefixing later
// keys with "section.", full-line comments starting with '#' or ';'. Keys can
// be dotted themselves, so every hyperparameter below is addressable either
// way. The last assignment to a key wins.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  size_t get_size(const std::string& key, size_t fallback) const;
  int get_int(const std::string& key, int fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Typed views over dotted keys; unset keys keep the struct defaults.
// simulate.{count,duration_s,sample_rate,speech_ratio,seed,image_size}
sim::SceneSpec scene_spec_from(const Config& cfg, const std::string& prefix = "simulate");

// gridnet.{embed_dim,blocks,deconv_kernel,deconv_stride,lstm_hidden,
//          attn_heads,attn_qk_channels}
// gridnet.stft.{window_size,hop_size,fft_size,window}  (window: hann|sqrt_hann)
// gridnet.visual.{conv3d_channels,embed_dim,vtcn_reps,image_size}
nn::GridNetConfig gridnet_from(const Config& cfg, const std::string& prefix = "gridnet");

// classifier.{audio_channels,conv_kernel,conv_stride,pool,audio_tcn_blocks,
//             backend_tcn_blocks,backend_hidden}
// classifier.visual.{...} as above
nn::ClassifierConfig classifier_from(const Config& cfg, const std::string& prefix = "classifier");

// train.{max_epochs,lr,clip_seconds,seed,dynamic_mixing,verbose}
// train.loss.{gamma,log_magnitude,resolutions}
// resolutions value: comma list of fft:hop:window triples.
train::TrainConfig train_from(const Config& cfg, const std::string& prefix = "train");

}  // namespace savg
