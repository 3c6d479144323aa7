#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "savg/classifier.hpp"
#include "savg/gridnet.hpp"
#include "savg/simulate.hpp"

namespace savg::cascade {

enum class Strategy { Plain, PostProc1, PostProc2, Oracle };

const char* to_string(Strategy s);
Strategy parse_strategy(const std::string& text);

enum class ChosenModel { Universal, ExpertSpeech, ExpertNoise };

const char* to_string(ChosenModel m);

// Function-backed so routing logic is testable with stub models; the loaded
// checkpoint path wraps real networks in these closures (see ModelSet).
struct ExpertBundle {
  std::function<nn::ScenarioPrediction(const AudioClip&, const nn::FaceTrack&)> classify;
  std::function<AudioClip(const AudioClip&, const nn::FaceTrack&)> universal;
  std::function<AudioClip(const AudioClip&, const nn::FaceTrack&)> expert_speech;
  std::function<AudioClip(const AudioClip&, const nn::FaceTrack&)> expert_noise;
};

// Incomplete bundle (an unset model) is a configuration error.
void validate(const ExpertBundle& bundle);

struct RoutingDecision {
  std::string scene_id;
  double probability = 0.0;  // ŷ; synthesized as 1/0 under oracle routing
  Scenario classifier_label = Scenario::Noise;
  std::optional<bool> output_check;  // agreement test, set only when it was evaluated
  std::optional<bool> mixture_check;  // mixture-distance test, set only when evaluated
  Scenario final_label = Scenario::Noise;
  ChosenModel chosen_model = ChosenModel::Universal;
};

// scene_id, ŷ, classifier_label, output_check, mixture_check, final_label, chosen_model as one
// tab-separated line; unevaluated criteria print "-".
std::string trail_line(const RoutingDecision& d);

struct RouteResult {
  AudioClip output;
  RoutingDecision decision;
};

// Dispatch on the classifier label alone; exactly one expert runs.
RouteResult route_plain(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle);

// Noise predictions must additionally be confirmed by the agreement test
// (universal output closer to the noise expert than to the speech expert in
// SI-SDR loss); unconfirmed samples fall back to the universal output.
// Equal losses count as not confirmed.
RouteResult post_proc1(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle);

// Like post_proc1, but noise is confirmed by the agreement test OR by the
// mixture-distance test (mixture further from the noise expert's output than
// from the speech expert's, in SI-SDR loss). The second test only runs when
// the first fails.
RouteResult post_proc2(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle);

// Ground-truth label replaces the classifier.
RouteResult route_oracle(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle,
                         Scenario truth);

struct RoutingInput {
  std::string scene_id;
  AudioClip mixture;
  nn::FaceTrack face;
  std::optional<Scenario> truth;  // required by the oracle strategy
};

RoutingInput to_routing_input(const sim::Scene& scene);

RouteResult route_one(const RoutingInput& input, const ExpertBundle& bundle, Strategy strategy);

std::vector<RouteResult> batch_route(const std::vector<RoutingInput>& inputs,
                                     const ExpertBundle& bundle, Strategy strategy);

// Owns the stores and networks behind a bundle built from checkpoints.
struct ModelSet {
  std::shared_ptr<nn::ParamStore> classifier_store, universal_store, speech_store, noise_store;
  std::shared_ptr<nn::ScenarioClassifier> classifier;
  std::shared_ptr<nn::AvGridNet> universal, speech, noise;

  ExpertBundle bundle() const;
};

// Missing checkpoint files are configuration errors.
ModelSet load_model_set(const std::string& classifier_ckpt, const std::string& universal_ckpt,
                        const std::string& speech_ckpt, const std::string& noise_ckpt,
                        const nn::ClassifierConfig& classifier_cfg,
                        const nn::GridNetConfig& gridnet_cfg);

}  // namespace savg::cascade
