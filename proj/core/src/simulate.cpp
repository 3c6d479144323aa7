#include "savg/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "savg/errors.hpp"
#include "savg/stft.hpp"

namespace savg::sim {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

size_t sample_count(double duration_s, int sample_rate, const char* who) {
  if (duration_s <= 0.0) throw InvalidInputError(std::string(who) + ": duration must be positive");
  if (sample_rate <= 0) throw InvalidInputError(std::string(who) + ": sample rate must be positive");
  const double n = std::round(duration_s * sample_rate);
  if (n < 1.0) throw InvalidInputError(std::string(who) + ": duration is below one sample");
  return static_cast<size_t>(n);
}

void peak_normalize(AudioClip& clip) {
  const double pk = peak_abs(clip);
  if (pk <= 0.0) return;
  for (double& s : clip.samples) s /= pk;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

AudioClip gen_speechlike(Rng& rng, double duration_s, int sample_rate) {
  const size_t n = sample_count(duration_s, sample_rate, "gen_speechlike");
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(n, 0.0);

  // F0 walk on 10 ms control points, linearly interpolated between them.
  const size_t cp_hop = std::max<size_t>(1, static_cast<size_t>(sample_rate) / 100);
  const size_t ncp = n / cp_hop + 2;
  std::vector<double> f0(ncp);
  f0[0] = rng.uniform(110.0, 260.0);
  for (size_t k = 1; k < ncp; ++k) {
    f0[k] = std::clamp(f0[k - 1] + 6.0 * rng.normal(), 80.0, 300.0);
  }

  // 1/h tilt plus a slow independent drift per harmonic.
  constexpr size_t kHarmonics = 10;
  double drift_rate[kHarmonics], drift_phase[kHarmonics];
  for (size_t h = 0; h < kHarmonics; ++h) {
    drift_rate[h] = rng.uniform(0.2, 1.2);
    drift_phase[h] = rng.uniform(0.0, kTwoPi);
  }
  const double am_rate = rng.uniform(3.0, 6.0);  // syllabic modulation
  const double am_phase = rng.uniform(0.0, kTwoPi);
  double phase = rng.uniform(0.0, kTwoPi);

  const double nyq_limit = 0.45 * sample_rate;
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const size_t cp = i / cp_hop;
    const double frac = static_cast<double>(i % cp_hop) / static_cast<double>(cp_hop);
    const double f = f0[cp] + (f0[cp + 1] - f0[cp]) * frac;
    phase += kTwoPi * f / sample_rate;
    double s = 0.0;
    for (size_t h = 0; h < kHarmonics; ++h) {
      const double hf = static_cast<double>(h + 1) * f;
      if (hf >= nyq_limit) break;
      const double gain =
          (1.0 / static_cast<double>(h + 1)) *
          (1.0 + 0.5 * std::sin(kTwoPi * drift_rate[h] * t + drift_phase[h]));
      s += gain * std::sin(static_cast<double>(h + 1) * phase);
    }
    const double am = 0.12 + 0.88 * 0.5 * (1.0 + std::sin(kTwoPi * am_rate * t + am_phase));
    clip.samples[i] = am * s;
  }
  peak_normalize(clip);
  return clip;
}

AudioClip gen_noiselike(Rng& rng, double duration_s, int sample_rate) {
  const size_t n = sample_count(duration_s, sample_rate, "gen_noiselike");
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(n, 0.0);

  const double tilt = rng.uniform(-0.85, 0.85);  // one-pole spectral tilt
  double prev = 0.0;
  for (size_t i = 0; i < n; ++i) {
    prev = rng.normal() + tilt * prev;
    clip.samples[i] = prev;
  }

  if (rng.uniform() < 0.5) {  // occasional impulsive bursts
    const size_t bursts = 1 + static_cast<size_t>(rng.below(3));
    for (size_t b = 0; b < bursts; ++b) {
      const double center = rng.uniform(0.0, static_cast<double>(n));
      const double width = rng.uniform(0.005, 0.02) * sample_rate;
      const double gain = rng.uniform(2.0, 5.0);
      const size_t lo = static_cast<size_t>(std::max(0.0, center - 4.0 * width));
      const size_t hi = std::min(n, static_cast<size_t>(center + 4.0 * width) + 1);
      for (size_t i = lo; i < hi; ++i) {
        const double z = (static_cast<double>(i) - center) / width;
        clip.samples[i] *= 1.0 + gain * std::exp(-0.5 * z * z);
      }
    }
  }
  peak_normalize(clip);
  return clip;
}

nn::FaceTrack gen_face_track(const AudioClip& target, Rng& rng, size_t image_size) {
  validate(target, "gen_face_track target");
  if (image_size < 2) throw InvalidInputError("gen_face_track: image size must be at least 2");
  const double fps = 25.0;
  const long frames = std::lround(target.duration_s() * fps);
  if (frames < 1) throw InvalidInputError("gen_face_track: target too short for a 25 fps track");

  // 25 Hz amplitude envelope, normalized to [0,1].
  const size_t n = target.size();
  std::vector<double> env(static_cast<size_t>(frames), 0.0);
  double env_max = 0.0;
  for (long k = 0; k < frames; ++k) {
    const size_t lo = std::min(n, static_cast<size_t>(std::lround(k * target.sample_rate / fps)));
    const size_t hi =
        std::min(n, static_cast<size_t>(std::lround((k + 1) * target.sample_rate / fps)));
    double acc = 0.0;
    for (size_t i = lo; i < hi; ++i) acc += std::abs(target.samples[i]);
    env[static_cast<size_t>(k)] = hi > lo ? acc / static_cast<double>(hi - lo) : 0.0;
    env_max = std::max(env_max, env[static_cast<size_t>(k)]);
  }
  if (env_max > 0.0) {
    for (double& e : env) e /= env_max;
  }

  // Static seeded texture; only its brightness tracks the envelope, so a
  // silent target produces identical frames.
  nn::FaceTrack track;
  track.frames = static_cast<size_t>(frames);
  track.height = image_size;
  track.width = image_size;
  track.fps = fps;
  const size_t npix = image_size * image_size;
  std::vector<double> texture(npix);
  for (double& t : texture) t = rng.uniform(-1.0, 1.0);
  track.pixels.resize(track.frames * npix);
  for (size_t k = 0; k < track.frames; ++k) {
    for (size_t p = 0; p < npix; ++p) {
      // snap to f32 so the track file round-trips losslessly
      track.pixels[k * npix + p] = static_cast<float>(0.25 + 0.5 * env[k] + 0.2 * texture[p]);
    }
  }
  return track;
}

Scenario scenario_for_index(size_t index, double speech_ratio) {
  const double lo = static_cast<double>(index) * speech_ratio;
  const double hi = static_cast<double>(index + 1) * speech_ratio;
  return std::floor(hi + 1e-9) > std::floor(lo + 1e-9) ? Scenario::Speech : Scenario::Noise;
}

void validate(const SceneSpec& spec) {
  if (spec.count == 0) throw ConfigError("scene spec: need at least one scene");
  if (spec.duration_s < 0.5) throw ConfigError("scene spec: duration must be at least 0.5 s");
  if (spec.sample_rate <= 0) throw ConfigError("scene spec: sample rate must be positive");
  if (spec.speech_ratio < 0.0 || spec.speech_ratio > 1.0) {
    throw ConfigError("scene spec: speech ratio must lie in [0,1]");
  }
  if (spec.image_size < 2) throw ConfigError("scene spec: image size must be at least 2");
}

void validate(const Scene& scene) {
  savg::validate(scene.target, "scene " + scene.scene_id + " target");
  savg::validate(scene.interferer, "scene " + scene.scene_id + " interferer");
  savg::validate(scene.mixture, "scene " + scene.scene_id + " mixture");
  nn::validate(scene.face);
  const double lo = scene.scenario == Scenario::Speech ? -15.0 : -10.0;
  const double hi = scene.scenario == Scenario::Speech ? 5.0 : 10.0;
  if (scene.snr_db < lo || scene.snr_db > hi) {
    throw InvalidInputError("scene " + scene.scene_id + ": SNR " + format_double(scene.snr_db) +
                            " dB is outside the " + std::string(to_string(scene.scenario)) +
                            " range");
  }
  const MixResult remix = mix_at_snr(scene.target, scene.interferer, scene.snr_db);
  if (remix.mixture.samples != scene.mixture.samples) {
    throw InvalidInputError("scene " + scene.scene_id +
                            ": mixture is not the exact mix of its stems");
  }
}

Scene make_scene(const SceneSpec& spec, size_t index) {
  validate(spec);
  if (index >= spec.count) {
    throw InvalidInputError("make_scene: index " + std::to_string(index) + " out of range");
  }
  Rng rng = Rng::derive(spec.seed, index);
  Scene sc;
  char idbuf[24];
  std::snprintf(idbuf, sizeof(idbuf), "scene%05zu", index);
  sc.scene_id = idbuf;
  sc.scenario = scenario_for_index(index, spec.speech_ratio);
  const bool speech = sc.scenario == Scenario::Speech;
  sc.snr_db = speech ? rng.uniform(-15.0, 5.0) : rng.uniform(-10.0, 10.0);

  AudioClip target = gen_speechlike(rng, spec.duration_s, spec.sample_rate);
  AudioClip interferer = speech ? gen_speechlike(rng, spec.duration_s, spec.sample_rate)
                                : gen_noiselike(rng, spec.duration_s, spec.sample_rate);

  // Joint headroom: scale both stems so the mixture clears 16-bit range, then
  // snap the stems to the lattice and mix those exact stored values.
  const MixResult probe = mix_at_snr(target, interferer, sc.snr_db);
  const double pk = std::max(1.0, peak_abs(probe.mixture));
  const double gain = 0.98 / pk;
  for (double& s : target.samples) s *= gain;
  for (double& s : interferer.samples) s *= gain;
  sc.target = to_i16_lattice(target);
  sc.interferer = to_i16_lattice(interferer);
  sc.mixture = mix_at_snr(sc.target, sc.interferer, sc.snr_db).mixture;
  sc.face = gen_face_track(sc.target, rng, spec.image_size);
  return sc;
}

std::string manifest_path(const std::string& dataset_dir) {
  return (fs::path(dataset_dir) / "manifest.tsv").string();
}

std::vector<ManifestRow> build_dataset(const SceneSpec& spec, const std::string& out_dir) {
  validate(spec);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw InvalidInputError("build_dataset: cannot create " + out_dir + ": " + ec.message());

  std::vector<ManifestRow> rows;
  std::string manifest;
  for (size_t index = 0; index < spec.count; ++index) {
    Scene sc = make_scene(spec, index);
    ManifestRow row;
    row.scene_id = sc.scene_id;
    row.scenario = sc.scenario;
    row.snr_db = sc.snr_db;
    const std::string target_name = sc.scene_id + "_target.wav";
    const std::string interferer_name = sc.scene_id + "_interferer.wav";
    const std::string mixture_name = sc.scene_id + "_mixture.wav";
    const std::string face_name = sc.scene_id + "_face.ftrk";
    row.target_path = (fs::path(out_dir) / target_name).string();
    row.interferer_path = (fs::path(out_dir) / interferer_name).string();
    row.mixture_path = (fs::path(out_dir) / mixture_name).string();
    row.face_path = (fs::path(out_dir) / face_name).string();
    try {
      wav_write(row.target_path, sc.target);
      wav_write(row.interferer_path, sc.interferer);
      wav_write(row.mixture_path, sc.mixture);
      nn::write_face_track(row.face_path, sc.face);
    } catch (const std::exception& e) {
      throw InvalidInputError(sc.scene_id + ": " + e.what());
    }
    manifest += row.scene_id + "\t" + target_name + "\t" + interferer_name + "\t" + mixture_name +
                "\t" + face_name + "\t" + to_string(sc.scenario) + "\t" +
                format_double(sc.snr_db) + "\n";
    rows.push_back(std::move(row));
  }

  const std::string mpath = manifest_path(out_dir);
  std::ofstream out(mpath, std::ios::binary);
  if (!out) throw InvalidInputError("build_dataset: cannot open " + mpath);
  out << manifest;
  if (!out) throw InvalidInputError("build_dataset: failed writing " + mpath);
  return rows;
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("read_manifest: cannot open " + path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&base](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (base / p).string();
  };

  std::vector<ManifestRow> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 7) {
      throw InvalidInputError("read_manifest: line " + std::to_string(lineno) + " has " +
                              std::to_string(fields.size()) + " fields, expected 7");
    }
    ManifestRow row;
    row.scene_id = fields[0];
    row.target_path = resolve(fields[1]);
    row.interferer_path = resolve(fields[2]);
    row.mixture_path = resolve(fields[3]);
    row.face_path = resolve(fields[4]);
    row.scenario = parse_scenario(fields[5]);
    try {
      row.snr_db = std::stod(fields[6]);
    } catch (const std::exception&) {
      throw InvalidInputError("read_manifest: line " + std::to_string(lineno) +
                              ": bad snr_db value '" + fields[6] + "'");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Scene load_scene(const ManifestRow& row) {
  Scene sc;
  sc.scene_id = row.scene_id;
  sc.scenario = row.scenario;
  sc.snr_db = row.snr_db;
  AudioClip stored_mixture;
  try {
    sc.target = wav_read(row.target_path);
    sc.interferer = wav_read(row.interferer_path);
    stored_mixture = wav_read(row.mixture_path);
    sc.face = nn::read_face_track(row.face_path);
  } catch (const std::exception& e) {
    throw InvalidInputError(row.scene_id + ": " + e.what());
  }
  sc.mixture = mix_at_snr(sc.target, sc.interferer, sc.snr_db).mixture;
  if (stored_mixture.size() != sc.mixture.size()) {
    throw InvalidInputError(row.scene_id + ": stored mixture length differs from the stems");
  }
  for (size_t i = 0; i < sc.mixture.size(); ++i) {
    if (quantize_i16(sc.mixture.samples[i]) != quantize_i16(stored_mixture.samples[i])) {
      throw InvalidInputError(row.scene_id + ": stored mixture does not match the remixed stems");
    }
  }
  return sc;
}

StemPool build_stem_pool(const SceneSpec& spec) {
  validate(spec);
  StemPool pool;
  for (size_t i = 0; i < spec.count; ++i) {
    Rng rt = Rng::derive(spec.seed, "pool-target:" + std::to_string(i));
    pool.targets.push_back(gen_speechlike(rt, spec.duration_s, spec.sample_rate));
    pool.faces.push_back(gen_face_track(pool.targets.back(), rt, spec.image_size));
    Rng rs = Rng::derive(spec.seed, "pool-intspeech:" + std::to_string(i));
    pool.speech_interferers.push_back(gen_speechlike(rs, spec.duration_s, spec.sample_rate));
    Rng rn = Rng::derive(spec.seed, "pool-intnoise:" + std::to_string(i));
    pool.noise_interferers.push_back(gen_noiselike(rn, spec.duration_s, spec.sample_rate));
  }
  return pool;
}

Scene dynamic_mix(Rng& rng, const StemPool& pool, double speech_ratio) {
  if (pool.targets.empty()) throw InvalidInputError("dynamic_mix: empty target pool");
  if (pool.faces.size() != pool.targets.size()) {
    throw InvalidInputError("dynamic_mix: face pool must align with the target pool");
  }
  const bool speech = rng.uniform() < speech_ratio;
  const auto& interferers = speech ? pool.speech_interferers : pool.noise_interferers;
  if (interferers.empty()) {
    throw InvalidInputError(std::string("dynamic_mix: empty ") +
                            (speech ? "speech" : "noise") + " interferer pool");
  }
  const size_t ti = static_cast<size_t>(rng.below(pool.targets.size()));
  const size_t ii = static_cast<size_t>(rng.below(interferers.size()));
  Scene sc;
  sc.scenario = speech ? Scenario::Speech : Scenario::Noise;
  sc.snr_db = speech ? rng.uniform(-15.0, 5.0) : rng.uniform(-10.0, 10.0);
  sc.scene_id = std::string("dm-") + std::to_string(ti) + (speech ? "-s" : "-n") +
                std::to_string(ii);
  sc.target = pool.targets[ti];
  sc.face = pool.faces[ti];
  sc.interferer = interferers[ii];
  sc.mixture = mix_at_snr(sc.target, sc.interferer, sc.snr_db).mixture;
  return sc;
}

}  // namespace savg::sim
