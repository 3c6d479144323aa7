// Microbenchmarks for the signal path, the scene simulator, and the neural
// models at toy scale. Run ./savg_bench --benchmark_filter=<regex> to focus.
#include <benchmark/benchmark.h>

#include <vector>

#include "savg/cascade.hpp"
#include "savg/classifier.hpp"
#include "savg/gridnet.hpp"
#include "savg/losses.hpp"
#include "savg/rng.hpp"
#include "savg/simulate.hpp"
#include "savg/stft.hpp"
#include "savg/train.hpp"

using namespace savg;

namespace {

AudioClip random_clip(size_t len, uint64_t seed) {
  Rng rng(seed);
  AudioClip c;
  c.samples.resize(len);
  for (double& v : c.samples) v = rng.uniform(-0.8, 0.8);
  return c;
}

sim::Scene bench_scene(double duration_s) {
  sim::SceneSpec spec;
  spec.count = 1;
  spec.duration_s = duration_s;
  spec.speech_ratio = 0.0;
  spec.seed = 12345;
  spec.image_size = 8;
  return sim::make_scene(spec, 0);
}

nn::GridNetConfig bench_gridnet_config() {
  nn::GridNetConfig cfg;  // toy preset: width 8, 2 blocks
  cfg.visual.image_size = 8;
  return cfg;
}

}  // namespace

// ---- signal path ----

static void BM_StftRoundTrip(benchmark::State& state) {
  const AudioClip clip = random_clip(static_cast<size_t>(state.range(0)), 7);
  const StftConfig cfg;
  for (auto _ : state) {
    AudioClip back = istft(stft(clip, cfg));
    benchmark::DoNotOptimize(back.samples.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_StftRoundTrip)->Arg(8000)->Arg(16000)->Arg(48000);

static void BM_MixAtSnr(benchmark::State& state) {
  const AudioClip target = random_clip(16000, 11);
  const AudioClip interferer = random_clip(16000, 12);
  for (auto _ : state) {
    MixResult r = mix_at_snr(target, interferer, -3.0);
    benchmark::DoNotOptimize(r.mixture.samples.data());
  }
}
BENCHMARK(BM_MixAtSnr);

static void BM_SiSdrMetric(benchmark::State& state) {
  const AudioClip ref = random_clip(16000, 21);
  const AudioClip est = random_clip(16000, 22);
  for (auto _ : state) {
    double v = nn::si_sdr_db(ref.samples, est.samples);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(BM_SiSdrMetric);

static void BM_HybridLossBackward(benchmark::State& state) {
  const AudioClip ref = random_clip(8000, 31);
  const AudioClip est = random_clip(8000, 32);
  nn::HybridLossConfig cfg;  // three spectral resolutions
  for (auto _ : state) {
    nn::Tensor r(nn::Shape{ref.size()}, std::vector<double>(ref.samples), false);
    nn::Tensor e(nn::Shape{est.size()}, std::vector<double>(est.samples), true);
    nn::Tensor loss = nn::hybrid_loss(r, e, cfg);
    nn::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_HybridLossBackward);

// ---- simulator ----

static void BM_MakeScene(benchmark::State& state) {
  sim::SceneSpec spec;
  spec.count = 64;
  spec.duration_s = 0.5;
  spec.speech_ratio = 0.5;
  spec.seed = 99;
  spec.image_size = 8;
  size_t index = 0;
  for (auto _ : state) {
    sim::Scene s = sim::make_scene(spec, index);
    index = (index + 1) % spec.count;
    benchmark::DoNotOptimize(s.mixture.samples.data());
  }
}
BENCHMARK(BM_MakeScene);

// ---- models (toy scale) ----

static void BM_ExtractorForward(benchmark::State& state) {
  nn::ParamStore store(5);
  nn::AvGridNet model = nn::AvGridNet::build(store, bench_gridnet_config());
  const sim::Scene scene = bench_scene(0.5);
  for (auto _ : state) {
    AudioClip out = model.extract(scene.mixture, scene.face);
    benchmark::DoNotOptimize(out.samples.data());
  }
}
BENCHMARK(BM_ExtractorForward)->Unit(benchmark::kMillisecond);

static void BM_ExtractorTrainEpoch(benchmark::State& state) {
  const std::vector<sim::Scene> scenes{bench_scene(0.5)};
  for (auto _ : state) {
    state.PauseTiming();
    nn::ParamStore store(5);
    nn::AvGridNet model = nn::AvGridNet::build(store, bench_gridnet_config());
    train::TrainConfig cfg;
    cfg.max_epochs = 1;
    cfg.lr = 1e-3;
    cfg.seed = 5;
    state.ResumeTiming();
    train::TrainResult r =
        train::train_extractor(model, store, train::Role::Universal, scenes, scenes, cfg);
    benchmark::DoNotOptimize(r.best_dev_loss);
  }
}
BENCHMARK(BM_ExtractorTrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_ClassifierForward(benchmark::State& state) {
  nn::ParamStore store(6);
  nn::ScenarioClassifier model = nn::ScenarioClassifier::build(store, nn::ClassifierConfig{});
  const sim::Scene scene = bench_scene(0.5);
  for (auto _ : state) {
    nn::ScenarioPrediction p = model.classify(scene.mixture, scene.face);
    benchmark::DoNotOptimize(p.probability);
  }
}
BENCHMARK(BM_ClassifierForward)->Unit(benchmark::kMillisecond);

static void BM_CascadeRoute(benchmark::State& state) {
  nn::ParamStore ustore(5), sstore(6), nstore(7), cstore(8);
  nn::AvGridNet universal = nn::AvGridNet::build(ustore, bench_gridnet_config());
  nn::AvGridNet expert_s = nn::AvGridNet::build(sstore, bench_gridnet_config());
  nn::AvGridNet expert_n = nn::AvGridNet::build(nstore, bench_gridnet_config());
  nn::ScenarioClassifier clf = nn::ScenarioClassifier::build(cstore, nn::ClassifierConfig{});
  cascade::ExpertBundle bundle;
  bundle.classify = [&](const AudioClip& x, const nn::FaceTrack& v) { return clf.classify(x, v); };
  bundle.universal = [&](const AudioClip& x, const nn::FaceTrack& v) {
    return universal.extract(x, v);
  };
  bundle.expert_speech = [&](const AudioClip& x, const nn::FaceTrack& v) {
    return expert_s.extract(x, v);
  };
  bundle.expert_noise = [&](const AudioClip& x, const nn::FaceTrack& v) {
    return expert_n.extract(x, v);
  };
  const sim::Scene scene = bench_scene(0.5);
  const auto strategy = static_cast<cascade::Strategy>(state.range(0));
  for (auto _ : state) {
    cascade::RouteResult r = cascade::route_one(cascade::to_routing_input(scene), bundle, strategy);
    benchmark::DoNotOptimize(r.output.samples.data());
  }
}
BENCHMARK(BM_CascadeRoute)
    ->Arg(static_cast<int>(cascade::Strategy::Plain))
    ->Arg(static_cast<int>(cascade::Strategy::PostProc1))
    ->Arg(static_cast<int>(cascade::Strategy::PostProc2))
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
