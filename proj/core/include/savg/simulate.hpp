#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "savg/audio.hpp"
#include "savg/rng.hpp"
#include "savg/scenario.hpp"
#include "savg/visual.hpp"

namespace savg::sim {

// One labeled audio-visual scene. The stems live on the 16-bit lattice so a
// WAV round trip is lossless; the mixture is the exact double-precision mix of
// those stems (its WAV copy is the quantized rendering of that mix).
struct Scene {
  std::string scene_id;
  AudioClip target;
  AudioClip interferer;
  AudioClip mixture;
  nn::FaceTrack face;
  Scenario scenario = Scenario::Noise;
  double snr_db = 0.0;
};

// Checks the structural invariants: equal lengths/rates, mixture ==
// mix_at_snr(target, interferer, snr_db) bit-exactly, SNR inside the range of
// its scenario (speech [-15,+5], noise [-10,+10]).
void validate(const Scene& scene);

struct SceneSpec {
  size_t count = 8;
  double duration_s = 1.0;
  int sample_rate = 16000;
  double speech_ratio = 0.5;  // fraction of scenes whose interferer is speech
  uint64_t seed = 1;
  size_t image_size = 16;  // face crop side length
};

void validate(const SceneSpec& spec);

// Harmonic source: randomized 80-300 Hz F0 walk, 1/h spectral tilt with slow
// per-harmonic envelope drift, syllabic (3-6 Hz) amplitude modulation.
// Peak-normalized to 1.
AudioClip gen_speechlike(Rng& rng, double duration_s, int sample_rate = 16000);

// Tilted broadband noise (random one-pole filter), optionally with a few
// impulsive bursts; no harmonic structure. Peak-normalized to 1.
AudioClip gen_noiselike(Rng& rng, double duration_s, int sample_rate = 16000);

// 25 fps face track: a fixed seeded texture whose brightness follows the
// target's 25 Hz amplitude envelope, so the stream identifies the target.
// A silent target yields a constant-intensity track.
nn::FaceTrack gen_face_track(const AudioClip& target, Rng& rng, size_t image_size = 16);

// Deterministic scene index -> scenario assignment: prefix counts track
// speech_ratio as closely as integer counts allow.
Scenario scenario_for_index(size_t index, double speech_ratio);

// The scene build_dataset would materialize at this index, fully in memory.
// Each scene derives its own stream from (seed, index).
Scene make_scene(const SceneSpec& spec, size_t index);

// Manifest line: scene_id, stem/mixture/face paths, scenario, snr_db.
struct ManifestRow {
  std::string scene_id;
  std::string target_path;
  std::string interferer_path;
  std::string mixture_path;
  std::string face_path;
  Scenario scenario = Scenario::Noise;
  double snr_db = 0.0;
};

// Writes <out_dir>/manifest.tsv plus per-scene WAV/FTRK files and returns the
// rows with paths resolved. Bytes are a pure function of the SceneSpec.
std::vector<ManifestRow> build_dataset(const SceneSpec& spec, const std::string& out_dir);

std::string manifest_path(const std::string& dataset_dir);
std::vector<ManifestRow> read_manifest(const std::string& path);

// Reads the stems and face track and re-mixes the stored stems; the result is
// bit-identical to the scene the simulator built (the mixture WAV is checked
// against the remix after quantization).
Scene load_scene(const ManifestRow& row);

// Stems for on-the-fly remixing during training.
struct StemPool {
  std::vector<AudioClip> targets;
  std::vector<nn::FaceTrack> faces;  // aligned with targets
  std::vector<AudioClip> speech_interferers;
  std::vector<AudioClip> noise_interferers;
};

StemPool build_stem_pool(const SceneSpec& spec);

// Fresh target/interferer/SNR combination per call; no materialization.
Scene dynamic_mix(Rng& rng, const StemPool& pool, double speech_ratio = 0.5);

}  // namespace savg::sim
