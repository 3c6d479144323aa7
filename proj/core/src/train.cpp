#include "savg/train.hpp"

#include <cmath>
#include <cstdio>

#include "savg/errors.hpp"
#include "savg/optim.hpp"

namespace savg::train {

const char* to_string(Role role) {
  switch (role) {
    case Role::Universal: return "universal";
    case Role::ExpertSpeech: return "speech";
    case Role::ExpertNoise: return "noise";
  }
  return "?";
}

Role parse_role(const std::string& text) {
  if (text == "universal") return Role::Universal;
  if (text == "speech") return Role::ExpertSpeech;
  if (text == "noise") return Role::ExpertNoise;
  throw InvalidInputError("unknown role '" + text + "' (expected universal, speech or noise)");
}

void check_role_scenes(Role role, const std::vector<sim::Scene>& scenes, const char* which) {
  if (role == Role::Universal) return;
  const Scenario wanted = role == Role::ExpertSpeech ? Scenario::Speech : Scenario::Noise;
  for (const sim::Scene& sc : scenes) {
    if (sc.scenario != wanted) {
      throw ConfigError(std::string("role ") + to_string(role) + " cannot train on " +
                        to_string(sc.scenario) + "-scenario scene '" + sc.scene_id + "' (" +
                        which + " set)");
    }
  }
}

namespace {

sim::Scene truncate_scene(const sim::Scene& scene, double clip_seconds) {
  if (clip_seconds <= 0.0) return scene;
  const size_t n =
      static_cast<size_t>(std::lround(clip_seconds * scene.mixture.sample_rate));
  if (n == 0 || n >= scene.mixture.size()) return scene;
  sim::Scene cut = scene;
  cut.target.samples.resize(n);
  cut.interferer.samples.resize(n);
  cut.mixture.samples.resize(n);
  const size_t frames =
      std::max<size_t>(1, static_cast<size_t>(std::lround(cut.mixture.duration_s() * cut.face.fps)));
  if (frames < cut.face.frames) {
    cut.face.frames = frames;
    cut.face.pixels.resize(frames * cut.face.height * cut.face.width);
  }
  return cut;
}

struct Snapshot {
  std::vector<std::vector<double>> values;
};

Snapshot take_snapshot(const nn::ParamStore& store) {
  Snapshot s;
  s.values.reserve(store.all().size());
  for (const auto& p : store.all()) s.values.push_back(p->tensor.value());
  return s;
}

void restore_snapshot(nn::ParamStore& store, const Snapshot& snap) {
  const auto& params = store.all();
  for (size_t i = 0; i < params.size(); ++i) params[i]->tensor.raw() = snap.values[i];
}

// Shared epoch loop: steps() runs one pass and returns the mean training
// loss; dev() scores the fixed dev set without touching gradients.
template <typename StepFn, typename DevFn>
TrainResult run_schedule(nn::ParamStore& store, const TrainConfig& cfg, StepFn&& steps,
                         DevFn&& dev) {
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  nn::Adam opt(store, adam_cfg);
  nn::LrSchedule sched;
  TrainResult result;
  Snapshot best = take_snapshot(store);
  result.best_dev_loss = std::numeric_limits<double>::infinity();

  for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochStats stats;
    stats.lr = opt.lr();
    stats.train_loss = steps(opt);
    stats.dev_loss = dev();
    const nn::LrSchedule::Action action = sched.observe(stats.dev_loss);
    if (sched.epochs_since_best() == 0) {
      result.best_dev_loss = stats.dev_loss;
      result.best_epoch = epoch;
      best = take_snapshot(store);
    }
    result.history.push_back(stats);
    if (cfg.verbose) {
      std::fprintf(stderr, "epoch %zu: train %.6f dev %.6f lr %.2e\n", epoch, stats.train_loss,
                   stats.dev_loss, stats.lr);
    }
    if (action == nn::LrSchedule::Action::Halve) {
      opt.set_lr(opt.lr() * 0.5);
    } else if (action == nn::LrSchedule::Action::Stop) {
      result.stopped_early = true;
      break;
    }
  }
  restore_snapshot(store, best);
  return result;
}

}  // namespace

TrainResult train_extractor(nn::AvGridNet& model, nn::ParamStore& store, Role role,
                            const std::vector<sim::Scene>& train_scenes,
                            const std::vector<sim::Scene>& dev_scenes, const TrainConfig& cfg,
                            const sim::StemPool* pool) {
  check_role_scenes(role, train_scenes, "train");
  check_role_scenes(role, dev_scenes, "dev");
  if (cfg.dynamic_mixing && pool == nullptr) {
    throw ConfigError("dynamic mixing needs a stem pool");
  }
  if (!cfg.dynamic_mixing && train_scenes.empty()) {
    throw ConfigError("extractor training needs at least one scene");
  }
  if (dev_scenes.empty()) throw ConfigError("extractor training needs a dev set");

  const double speech_ratio = role == Role::Universal      ? 0.5
                              : role == Role::ExpertSpeech ? 1.0
                                                           : 0.0;
  const size_t steps_per_epoch = cfg.dynamic_mixing
                                     ? (train_scenes.empty() ? pool->targets.size()
                                                             : train_scenes.size())
                                     : train_scenes.size();
  Rng dm_rng = Rng::derive(cfg.seed, "dynamic-mix");

  auto step_scene = [&](nn::Adam& opt, const sim::Scene& scene) {
    const sim::Scene cut = truncate_scene(scene, cfg.clip_seconds);
    store.zero_grad();
    nn::Tensor est = model.forward(cut.mixture, cut.face);
    nn::Tensor ref({cut.target.samples.size()}, cut.target.samples);
    nn::Tensor loss = nn::hybrid_loss(ref, est, cfg.loss);
    nn::backward(loss);
    opt.step();
    return loss.item();
  };

  auto run_steps = [&](nn::Adam& opt) {
    double acc = 0.0;
    for (size_t i = 0; i < steps_per_epoch; ++i) {
      const sim::Scene scene = cfg.dynamic_mixing ? sim::dynamic_mix(dm_rng, *pool, speech_ratio)
                                                  : train_scenes[i];
      acc += step_scene(opt, scene);
    }
    return acc / static_cast<double>(steps_per_epoch);
  };

  auto run_dev = [&]() {
    nn::NoGradGuard guard;
    double acc = 0.0;
    for (const sim::Scene& scene : dev_scenes) {
      const sim::Scene cut = truncate_scene(scene, cfg.clip_seconds);
      nn::Tensor est = model.forward(cut.mixture, cut.face);
      nn::Tensor ref({cut.target.samples.size()}, cut.target.samples);
      acc += nn::hybrid_loss(ref, est, cfg.loss).item();
    }
    return acc / static_cast<double>(dev_scenes.size());
  };

  return run_schedule(store, cfg, run_steps, run_dev);
}

TrainResult train_classifier(nn::ScenarioClassifier& model, nn::ParamStore& store,
                             const std::vector<sim::Scene>& train_scenes,
                             const std::vector<sim::Scene>& dev_scenes, const TrainConfig& cfg) {
  if (train_scenes.empty()) throw ConfigError("classifier training needs at least one scene");
  if (dev_scenes.empty()) throw ConfigError("classifier training needs a dev set");
  size_t noise_count = 0;
  for (const sim::Scene& sc : train_scenes) noise_count += sc.scenario == Scenario::Noise;
  if (noise_count == 0 || noise_count == train_scenes.size()) {
    std::fprintf(stderr,
                 "warning: classifier training set contains a single scenario (%zu/%zu noise)\n",
                 noise_count, train_scenes.size());
  }

  auto run_steps = [&](nn::Adam& opt) {
    double acc = 0.0;
    for (const sim::Scene& scene : train_scenes) {
      const sim::Scene cut = truncate_scene(scene, cfg.clip_seconds);
      store.zero_grad();
      nn::Tensor prob = model.forward(cut.mixture, cut.face);
      const double label = cut.scenario == Scenario::Noise ? 1.0 : 0.0;
      nn::Tensor loss = nn::bce_loss(label, prob);
      nn::backward(loss);
      opt.step();
      acc += loss.item();
    }
    return acc / static_cast<double>(train_scenes.size());
  };

  auto run_dev = [&]() {
    nn::NoGradGuard guard;
    double acc = 0.0;
    for (const sim::Scene& scene : dev_scenes) {
      const sim::Scene cut = truncate_scene(scene, cfg.clip_seconds);
      const double label = cut.scenario == Scenario::Noise ? 1.0 : 0.0;
      acc += nn::bce_loss_value(label, model.forward(cut.mixture, cut.face).item());
    }
    return acc / static_cast<double>(dev_scenes.size());
  };

  return run_schedule(store, cfg, run_steps, run_dev);
}

}  // namespace savg::train
