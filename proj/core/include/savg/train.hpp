#pragma once

#include <string>
#include <vector>

#include "savg/classifier.hpp"
#include "savg/gridnet.hpp"
#include "savg/losses.hpp"
#include "savg/simulate.hpp"

namespace savg::train {

enum class Role { Universal, ExpertSpeech, ExpertNoise };

const char* to_string(Role role);
Role parse_role(const std::string& text);  // universal | speech | noise

struct TrainConfig {
  size_t max_epochs = 200;
  double lr = 1e-3;
  double clip_seconds = 0.0;  // truncate clips before each step; 0 keeps whole clips
  uint64_t seed = 1;          // dynamic-mixing draw stream
  bool dynamic_mixing = false;
  bool verbose = false;            // one progress line per epoch on stderr
  nn::HybridLossConfig loss;       // extractor objective
};

struct EpochStats {
  double train_loss = 0.0;  // mean over the epoch's steps
  double dev_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double best_dev_loss = 0.0;
  size_t best_epoch = 0;  // 1-based epoch that produced best_dev_loss
  bool stopped_early = false;
};

// Experts must only see their own scenario; a wrong-scenario scene is a
// configuration error. The universal role accepts both.
void check_role_scenes(Role role, const std::vector<sim::Scene>& scenes, const char* which);

// Adam (lr halved after 6 stale epochs, stop after 20), hybrid loss, one scene
// per step in dataset order. The store is left holding the best-dev-loss
// parameters. Warm starts load a checkpoint into the store beforehand; the
// optimizer and its step counter always start fresh here. With dynamic_mixing
// the training steps draw fresh mixtures from `pool` (required), while the dev
// scenes stay fixed.
TrainResult train_extractor(nn::AvGridNet& model, nn::ParamStore& store, Role role,
                            const std::vector<sim::Scene>& train_scenes,
                            const std::vector<sim::Scene>& dev_scenes, const TrainConfig& cfg,
                            const sim::StemPool* pool = nullptr);

// Same schedule with mean binary cross-entropy (noise = 1). A single-class
// training set only warns; training proceeds.
TrainResult train_classifier(nn::ScenarioClassifier& model, nn::ParamStore& store,
                             const std::vector<sim::Scene>& train_scenes,
                             const std::vector<sim::Scene>& dev_scenes, const TrainConfig& cfg);

}  // namespace savg::train
