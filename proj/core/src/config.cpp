#include "savg/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "savg/errors.hpp"

namespace savg {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.values_[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigError("config key '" + key + "': '" + it->second + "' is not a number");
  }
  return v;
}

size_t Config::get_size(const std::string& key, size_t fallback) const {
  const double v = get_double(key, static_cast<double>(fallback));
  if (v < 0 || v != static_cast<double>(static_cast<size_t>(v))) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer");
  }
  return static_cast<size_t>(v);
}

int Config::get_int(const std::string& key, int fallback) const {
  const double v = get_double(key, static_cast<double>(fallback));
  if (v != static_cast<double>(static_cast<int>(v))) {
    throw ConfigError("config key '" + key + "': expected an integer");
  }
  return static_cast<int>(v);
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigError("config key '" + key + "': '" + it->second +
                      "' is not an unsigned integer");
  }
  return static_cast<uint64_t>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

sim::SceneSpec scene_spec_from(const Config& cfg, const std::string& prefix) {
  sim::SceneSpec spec;
  spec.count = cfg.get_size(prefix + ".count", spec.count);
  spec.duration_s = cfg.get_double(prefix + ".duration_s", spec.duration_s);
  spec.sample_rate = cfg.get_int(prefix + ".sample_rate", spec.sample_rate);
  spec.speech_ratio = cfg.get_double(prefix + ".speech_ratio", spec.speech_ratio);
  spec.seed = cfg.get_u64(prefix + ".seed", spec.seed);
  spec.image_size = cfg.get_size(prefix + ".image_size", spec.image_size);
  return spec;
}

namespace {

StftConfig stft_from(const Config& cfg, const std::string& prefix, StftConfig base) {
  base.window_size = cfg.get_size(prefix + ".window_size", base.window_size);
  base.hop_size = cfg.get_size(prefix + ".hop_size", base.hop_size);
  base.fft_size = cfg.get_size(prefix + ".fft_size", base.fft_size);
  const std::string kind = cfg.get_string(
      prefix + ".window", base.window == WindowKind::Hann ? "hann" : "sqrt_hann");
  if (kind == "hann") {
    base.window = WindowKind::Hann;
  } else if (kind == "sqrt_hann") {
    base.window = WindowKind::SqrtHann;
  } else {
    throw ConfigError("config key '" + prefix + ".window': unknown window '" + kind + "'");
  }
  return base;
}

nn::VisualFrontendConfig visual_from(const Config& cfg, const std::string& prefix,
                                     nn::VisualFrontendConfig base) {
  base.conv3d_channels = cfg.get_size(prefix + ".conv3d_channels", base.conv3d_channels);
  base.embed_dim = cfg.get_size(prefix + ".embed_dim", base.embed_dim);
  base.vtcn_reps = cfg.get_size(prefix + ".vtcn_reps", base.vtcn_reps);
  base.image_size = cfg.get_size(prefix + ".image_size", base.image_size);
  return base;
}

std::vector<nn::DeltaSpecResolution> resolutions_from(const Config& cfg, const std::string& key,
                                                      std::vector<nn::DeltaSpecResolution> base) {
  if (!cfg.has(key)) return base;
  const std::string text = cfg.get_string(key, "");
  std::vector<nn::DeltaSpecResolution> out;
  std::stringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    unsigned long long fft = 0, hop = 0, window = 0;
    if (std::sscanf(item.c_str(), "%llu:%llu:%llu", &fft, &hop, &window) != 3) {
      throw ConfigError("config key '" + key + "': expected fft:hop:window triples, got '" +
                        item + "'");
    }
    out.push_back({static_cast<size_t>(fft), static_cast<size_t>(hop),
                   static_cast<size_t>(window)});
  }
  if (out.empty()) throw ConfigError("config key '" + key + "': empty resolution list");
  return out;
}

}  // namespace

nn::GridNetConfig gridnet_from(const Config& cfg, const std::string& prefix) {
  nn::GridNetConfig g = nn::GridNetConfig::toy();
  if (cfg.get_string(prefix + ".preset", "toy") == "full_scale") {
    g = nn::GridNetConfig::full_scale();
  }
  g.embed_dim = cfg.get_size(prefix + ".embed_dim", g.embed_dim);
  g.blocks = cfg.get_size(prefix + ".blocks", g.blocks);
  g.deconv_kernel = cfg.get_size(prefix + ".deconv_kernel", g.deconv_kernel);
  g.deconv_stride = cfg.get_size(prefix + ".deconv_stride", g.deconv_stride);
  g.lstm_hidden = cfg.get_size(prefix + ".lstm_hidden", g.lstm_hidden);
  g.attn_heads = cfg.get_size(prefix + ".attn_heads", g.attn_heads);
  g.attn_qk_channels = cfg.get_size(prefix + ".attn_qk_channels", g.attn_qk_channels);
  g.stft = stft_from(cfg, prefix + ".stft", g.stft);
  g.visual = visual_from(cfg, prefix + ".visual", g.visual);
  return g;
}

nn::ClassifierConfig classifier_from(const Config& cfg, const std::string& prefix) {
  nn::ClassifierConfig c;
  c.audio_channels = cfg.get_size(prefix + ".audio_channels", c.audio_channels);
  c.conv_kernel = cfg.get_size(prefix + ".conv_kernel", c.conv_kernel);
  c.conv_stride = cfg.get_size(prefix + ".conv_stride", c.conv_stride);
  c.pool = cfg.get_size(prefix + ".pool", c.pool);
  c.audio_tcn_blocks = cfg.get_size(prefix + ".audio_tcn_blocks", c.audio_tcn_blocks);
  c.backend_tcn_blocks = cfg.get_size(prefix + ".backend_tcn_blocks", c.backend_tcn_blocks);
  c.backend_hidden = cfg.get_size(prefix + ".backend_hidden", c.backend_hidden);
  c.visual = visual_from(cfg, prefix + ".visual", c.visual);
  return c;
}

train::TrainConfig train_from(const Config& cfg, const std::string& prefix) {
  train::TrainConfig t;
  t.max_epochs = cfg.get_size(prefix + ".max_epochs", t.max_epochs);
  t.lr = cfg.get_double(prefix + ".lr", t.lr);
  t.clip_seconds = cfg.get_double(prefix + ".clip_seconds", t.clip_seconds);
  t.seed = cfg.get_u64(prefix + ".seed", t.seed);
  t.dynamic_mixing = cfg.get_bool(prefix + ".dynamic_mixing", t.dynamic_mixing);
  t.verbose = cfg.get_bool(prefix + ".verbose", t.verbose);
  t.loss.gamma = cfg.get_double(prefix + ".loss.gamma", t.loss.gamma);
  t.loss.log_magnitude = cfg.get_bool(prefix + ".loss.log_magnitude", t.loss.log_magnitude);
  t.loss.resolutions = resolutions_from(cfg, prefix + ".loss.resolutions", t.loss.resolutions);
  return t;
}

}  // namespace savg
