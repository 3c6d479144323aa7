#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "savg/audio.hpp"
#include "savg/errors.hpp"
#include "savg/rng.hpp"
#include "savg/simulate.hpp"
#include "savg/stft.hpp"

using namespace savg;
using namespace savg::sim;

namespace {

namespace fs = std::filesystem;

// geometric mean / arithmetic mean of the power spectrum; 1 for white noise,
// near 0 for line spectra
double spectral_flatness(const AudioClip& clip) {
  StftConfig cfg;
  cfg.window_size = 512;
  cfg.hop_size = 256;
  cfg.fft_size = 512;
  Spectrogram s = stft(clip, cfg);
  double log_acc = 0.0, lin_acc = 0.0;
  size_t n = 0;
  for (size_t t = 1; t + 1 < s.num_frames; ++t) {  // skip edge frames
    for (size_t f = 1; f < s.num_bins; ++f) {
      const double p = std::norm(s.at(t, f)) + 1e-20;
      log_acc += std::log(p);
      lin_acc += p;
      ++n;
    }
  }
  return std::exp(log_acc / double(n)) / (lin_acc / double(n));
}

// normalized autocorrelation maximum over pitch-period lags (80..300 Hz)
double pitch_autocorr_peak(const AudioClip& clip) {
  const size_t n = clip.size();
  double e = 0.0;
  for (double v : clip.samples) e += v * v;
  double best = 0.0;
  const size_t lag_lo = 16000 / 300, lag_hi = 16000 / 80;
  for (size_t lag = lag_lo; lag <= lag_hi; ++lag) {
    double acc = 0.0;
    for (size_t i = 0; i + lag < n; ++i) acc += clip.samples[i] * clip.samples[i + lag];
    best = std::max(best, acc / e);
  }
  return best;
}

// magnitude of the DFT of the frame-energy envelope at freq hz
double envelope_modulation(const AudioClip& clip, double hz) {
  const size_t frame = 160;  // 100 Hz envelope rate
  std::vector<double> env;
  for (size_t i = 0; i + frame <= clip.size(); i += frame) {
    double acc = 0.0;
    for (size_t j = 0; j < frame; ++j) acc += std::abs(clip.samples[i + j]);
    env.push_back(acc / frame);
  }
  double mean = 0.0;
  for (double v : env) mean += v;
  mean /= double(env.size());
  std::complex<double> acc = 0.0;
  for (size_t k = 0; k < env.size(); ++k) {
    const double t = double(k) / 100.0;
    acc += (env[k] - mean) * std::exp(std::complex<double>(0, -2.0 * std::numbers::pi * hz * t));
  }
  return std::abs(acc) / double(env.size());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

SceneSpec tiny_spec() {
  SceneSpec spec;
  spec.count = 6;
  spec.duration_s = 0.5;
  spec.speech_ratio = 0.5;
  spec.seed = 77;
  spec.image_size = 8;
  return spec;
}

}  // namespace

TEST_CASE("generators: deterministic given the stream") {
  Rng a(5), b(5);
  AudioClip sa = gen_speechlike(a, 0.5), sb = gen_speechlike(b, 0.5);
  REQUIRE(sa.size() == sb.size());
  for (size_t i = 0; i < sa.size(); ++i) CHECK(sa.samples[i] == sb.samples[i]);
  AudioClip na = gen_noiselike(a, 0.5), nb = gen_noiselike(b, 0.5);
  for (size_t i = 0; i < na.size(); ++i) CHECK(na.samples[i] == nb.samples[i]);
}

TEST_CASE("generators: peak-normalized, correct length") {
  Rng rng(6);
  for (double dur : {0.5, 1.0}) {
    AudioClip s = gen_speechlike(rng, dur);
    CHECK(s.size() == size_t(dur * 16000));
    CHECK(peak_abs(s) == doctest::Approx(1.0).epsilon(1e-12));
    AudioClip n = gen_noiselike(rng, dur);
    CHECK(n.size() == size_t(dur * 16000));
    CHECK(peak_abs(n) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("speechlike is spectrally peaky, noiselike is flat-ish") {
  Rng rng(7);
  double worst_speech = 0.0, best_noise = 1.0;
  for (int i = 0; i < 5; ++i) {
    worst_speech = std::max(worst_speech, spectral_flatness(gen_speechlike(rng, 1.0)));
    best_noise = std::min(best_noise, spectral_flatness(gen_noiselike(rng, 1.0)));
  }
  CHECK(worst_speech < 0.05);       // harmonic comb
  CHECK(best_noise > 0.2);          // broadband
  CHECK(best_noise > worst_speech * 4);
}

TEST_CASE("speechlike carries pitch periodicity, noiselike does not") {
  Rng rng(8);
  for (int i = 0; i < 4; ++i) {
    CHECK(pitch_autocorr_peak(gen_speechlike(rng, 0.8)) > 0.35);
    CHECK(pitch_autocorr_peak(gen_noiselike(rng, 0.8)) < 0.25);
  }
}

TEST_CASE("speechlike has syllabic-rate amplitude modulation") {
  Rng rng(9);
  AudioClip s = gen_speechlike(rng, 2.0);
  double in_band = 0.0;
  for (double hz = 2.5; hz <= 6.5; hz += 0.25) in_band = std::max(in_band, envelope_modulation(s, hz));
  double out_band = 0.0;
  for (double hz = 12.0; hz <= 20.0; hz += 0.5) out_band = std::max(out_band, envelope_modulation(s, hz));
  CHECK(in_band > 2.0 * out_band);
}

TEST_CASE("face track: frame count, envelope correlation, silent case") {
  Rng rng(10);
  AudioClip s = gen_speechlike(rng, 1.0);
  Rng frng(11);
  nn::FaceTrack track = gen_face_track(s, frng, 8);
  CHECK(track.frames == 25);
  CHECK(track.fps == 25.0);
  CHECK(track.height == 8);
  nn::validate(track);

  // per-frame mean intensity must follow the 25 Hz amplitude envelope
  std::vector<double> mean_px(track.frames, 0.0), env(track.frames, 0.0);
  const size_t hop = 16000 / 25;
  for (size_t k = 0; k < track.frames; ++k) {
    for (size_t p = 0; p < 64; ++p) mean_px[k] += track.pixels[k * 64 + p];
    mean_px[k] /= 64.0;
    for (size_t j = 0; j < hop; ++j) env[k] += std::abs(s.samples[k * hop + j]);
  }
  CHECK(pearson(mean_px, env) > 0.9);

  AudioClip silent;
  silent.samples.assign(16000, 0.0);
  Rng srng(12);
  nn::FaceTrack st = gen_face_track(silent, srng, 8);
  for (size_t k = 1; k < st.frames; ++k) {
    for (size_t p = 0; p < 64; ++p) CHECK(st.pixels[k * 64 + p] == st.pixels[p]);
  }

  AudioClip blip;
  blip.samples.assign(160, 0.1);  // 10 ms -> rounds to zero frames
  Rng brng(13);
  CHECK_THROWS_AS(gen_face_track(blip, brng, 8), InvalidInputError);
}

TEST_CASE("scenario_for_index: prefix counts follow the ratio exactly") {
  for (double ratio : {0.0, 0.25, 1.0 / 3.0, 0.5, 0.75, 1.0}) {
    size_t speech = 0;
    for (size_t i = 0; i < 120; ++i) {
      if (scenario_for_index(i, ratio) == Scenario::Speech) ++speech;
      // prefix property: running count never drifts more than one scene
      CHECK(std::abs(double(speech) - ratio * double(i + 1)) < 1.0 + 1e-9);
    }
    CHECK(speech == size_t(std::llround(120 * ratio)));
  }
}

TEST_CASE("make_scene: structural invariants hold") {
  SceneSpec spec = tiny_spec();
  for (size_t i = 0; i < spec.count; ++i) {
    Scene sc = make_scene(spec, i);
    validate(sc);  // exact remix identity + SNR range
    CHECK(sc.scenario == scenario_for_index(i, spec.speech_ratio));
    if (sc.scenario == Scenario::Speech) {
      CHECK(sc.snr_db >= -15.0);
      CHECK(sc.snr_db <= 5.0);
    } else {
      CHECK(sc.snr_db >= -10.0);
      CHECK(sc.snr_db <= 10.0);
    }
    CHECK(sc.target.size() == size_t(spec.duration_s * spec.sample_rate));
    CHECK(sc.face.frames == size_t(std::lround(spec.duration_s * 25)));
    // stems must sit on the 16-bit lattice so the WAV round trip is lossless
    AudioClip snapped = to_i16_lattice(sc.target);
    for (size_t k = 0; k < snapped.size(); ++k) CHECK(snapped.samples[k] == sc.target.samples[k]);
  }
}

TEST_CASE("make_scene: tampering with any invariant is caught") {
  Scene sc = make_scene(tiny_spec(), 0);
  Scene bad = sc;
  bad.mixture.samples[10] += 1e-9;
  CHECK_THROWS_AS(validate(bad), InvalidInputError);
  bad = sc;
  bad.snr_db = 11.0;  // outside the noise range
  CHECK_THROWS_AS(validate(bad), InvalidInputError);
  bad = sc;
  bad.interferer.samples.pop_back();
  CHECK_THROWS_AS(validate(bad), InvalidInputError);
}

TEST_CASE("validate(SceneSpec): rejects out-of-range settings") {
  SceneSpec s = tiny_spec();
  s.count = 0;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = tiny_spec();
  s.duration_s = 0.25;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = tiny_spec();
  s.speech_ratio = 1.5;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = tiny_spec();
  s.image_size = 1;
  CHECK_THROWS_AS(validate(s), ConfigError);
}

TEST_CASE("build_dataset: byte-identical across runs, manifest round trips") {
  SceneSpec spec = tiny_spec();
  const fs::path d1 = fs::temp_directory_path() / "savg_ds_a";
  const fs::path d2 = fs::temp_directory_path() / "savg_ds_b";
  fs::remove_all(d1);
  fs::remove_all(d2);
  auto rows1 = build_dataset(spec, d1.string());
  auto rows2 = build_dataset(spec, d2.string());
  REQUIRE(rows1.size() == spec.count);

  size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(d1)) {
    const auto other = d2 / entry.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(slurp(entry.path()) == slurp(other));
    ++compared;
  }
  CHECK(compared == spec.count * 4 + 1);  // 3 wavs + 1 ftrk per scene + manifest

  auto rows_back = read_manifest(manifest_path(d1.string()));
  REQUIRE(rows_back.size() == rows1.size());
  for (size_t i = 0; i < rows1.size(); ++i) {
    CHECK(rows_back[i].scene_id == rows1[i].scene_id);
    CHECK(rows_back[i].scenario == rows1[i].scenario);
    CHECK(rows_back[i].snr_db == rows1[i].snr_db);  // %.17g survives the trip
    CHECK(rows_back[i].target_path == rows1[i].target_path);
  }
  fs::remove_all(d2);

  // loaded scenes replicate the in-memory construction bit-exactly
  for (size_t i = 0; i < rows1.size(); ++i) {
    Scene mem = make_scene(spec, i);
    Scene disk = load_scene(rows1[i]);
    CHECK(disk.scene_id == mem.scene_id);
    CHECK(disk.scenario == mem.scenario);
    CHECK(disk.snr_db == mem.snr_db);
    REQUIRE(disk.target.size() == mem.target.size());
    for (size_t k = 0; k < mem.target.size(); ++k) {
      CHECK(disk.target.samples[k] == mem.target.samples[k]);
      CHECK(disk.interferer.samples[k] == mem.interferer.samples[k]);
      CHECK(disk.mixture.samples[k] == mem.mixture.samples[k]);
    }
    REQUIRE(disk.face.pixels.size() == mem.face.pixels.size());
    for (size_t k = 0; k < mem.face.pixels.size(); ++k) {
      CHECK(disk.face.pixels[k] == mem.face.pixels[k]);
    }
  }
  fs::remove_all(d1);
}

TEST_CASE("load_scene: detects tampered stems") {
  SceneSpec spec = tiny_spec();
  const fs::path dir = fs::temp_directory_path() / "savg_ds_tamper";
  fs::remove_all(dir);
  auto rows = build_dataset(spec, dir.string());

  // overwrite one sample of the target stem
  AudioClip t = wav_read(rows[0].target_path);
  t.samples[100] = t.samples[100] > 0 ? t.samples[100] - 0.01 : t.samples[100] + 0.01;
  wav_write(rows[0].target_path, t);
  CHECK_THROWS_AS(load_scene(rows[0]), InvalidInputError);
  CHECK_NOTHROW(load_scene(rows[1]));
  fs::remove_all(dir);
}

TEST_CASE("read_manifest: missing and malformed rows") {
  CHECK_THROWS_AS(read_manifest("/nonexistent/manifest.tsv"), InvalidInputError);
  const fs::path dir = fs::temp_directory_path() / "savg_bad_manifest";
  fs::create_directories(dir);
  std::ofstream(dir / "manifest.tsv") << "only\tthree\tcolumns\n";
  CHECK_THROWS_AS(read_manifest((dir / "manifest.tsv").string()), InvalidInputError);
  std::ofstream(dir / "manifest.tsv")
      << "id\ta.wav\tb.wav\tc.wav\td.ftrk\tnoise\tnot_a_number\n";
  CHECK_THROWS_AS(read_manifest((dir / "manifest.tsv").string()), InvalidInputError);
  fs::remove_all(dir);
}

TEST_CASE("stem pool: deterministic, sized by the SceneSpec") {
  SceneSpec spec = tiny_spec();
  StemPool p1 = build_stem_pool(spec);
  StemPool p2 = build_stem_pool(spec);
  CHECK(p1.targets.size() == spec.count);
  CHECK(p1.faces.size() == p1.targets.size());
  CHECK(p1.speech_interferers.size() + p1.noise_interferers.size() >= 2);
  for (size_t i = 0; i < p1.targets.size(); ++i) {
    for (size_t k = 0; k < p1.targets[i].size(); ++k) {
      CHECK(p1.targets[i].samples[k] == p2.targets[i].samples[k]);
    }
  }
}

TEST_CASE("dynamic_mix: valid scenes, SNR uniform over its range") {
  SceneSpec spec = tiny_spec();
  StemPool pool = build_stem_pool(spec);
  Rng rng(99);
  std::array<size_t, 10> hist{};
  size_t speech_count = 0;
  const size_t n = 400;
  for (size_t i = 0; i < n; ++i) {
    Scene sc = dynamic_mix(rng, pool, 0.5);
    validate(sc);
    if (sc.scenario == Scenario::Speech) {
      ++speech_count;
      const double u = (sc.snr_db + 15.0) / 20.0;
      ++hist[std::min(size_t(u * 10), size_t(9))];
    }
  }
  // scenario draw is Bernoulli(0.5)
  CHECK(speech_count > n / 2 - 60);
  CHECK(speech_count < n / 2 + 60);
  // SNR histogram: every bin within ~3 sigma of the uniform expectation
  const double expect = double(speech_count) / 10.0;
  for (size_t b = 0; b < 10; ++b) {
    CHECK(double(hist[b]) > expect - 3.5 * std::sqrt(expect));
    CHECK(double(hist[b]) < expect + 3.5 * std::sqrt(expect));
  }

  // same seed, same stream
  Rng r1(123), r2(123);
  Scene a = dynamic_mix(r1, pool, 0.5), b = dynamic_mix(r2, pool, 0.5);
  CHECK(a.scene_id == b.scene_id);
  for (size_t k = 0; k < a.mixture.size(); ++k) CHECK(a.mixture.samples[k] == b.mixture.samples[k]);
}
