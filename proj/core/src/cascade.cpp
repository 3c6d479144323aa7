#include "savg/cascade.hpp"

#include <cstdio>
#include <filesystem>

#include "savg/checkpoint.hpp"
#include "savg/errors.hpp"
#include "savg/losses.hpp"

namespace savg::cascade {

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Plain: return "plain";
    case Strategy::PostProc1: return "pp1";
    case Strategy::PostProc2: return "pp2";
    case Strategy::Oracle: return "oracle";
  }
  return "?";
}

Strategy parse_strategy(const std::string& text) {
  if (text == "plain") return Strategy::Plain;
  if (text == "pp1") return Strategy::PostProc1;
  if (text == "pp2") return Strategy::PostProc2;
  if (text == "oracle") return Strategy::Oracle;
  throw InvalidInputError("unknown strategy '" + text + "' (expected plain, pp1, pp2 or oracle)");
}

const char* to_string(ChosenModel m) {
  switch (m) {
    case ChosenModel::Universal: return "universal";
    case ChosenModel::ExpertSpeech: return "expert_speech";
    case ChosenModel::ExpertNoise: return "expert_noise";
  }
  return "?";
}

void validate(const ExpertBundle& bundle) {
  if (!bundle.classify) throw ConfigError("bundle: missing classifier model");
  if (!bundle.universal) throw ConfigError("bundle: missing universal model");
  if (!bundle.expert_speech) throw ConfigError("bundle: missing speech expert model");
  if (!bundle.expert_noise) throw ConfigError("bundle: missing noise expert model");
}

std::string trail_line(const RoutingDecision& d) {
  char prob[40];
  std::snprintf(prob, sizeof(prob), "%.17g", d.probability);
  auto flag = [](const std::optional<bool>& b) { return !b ? "-" : (*b ? "1" : "0"); };
  std::string line = d.scene_id;
  line += '\t';
  line += prob;
  line += '\t';
  line += to_string(d.classifier_label);
  line += '\t';
  line += flag(d.output_check);
  line += '\t';
  line += flag(d.mixture_check);
  line += '\t';
  line += to_string(d.final_label);
  line += '\t';
  line += to_string(d.chosen_model);
  return line;
}

namespace {

RouteResult speech_path(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle,
                        const nn::ScenarioPrediction& pred) {
  RouteResult r;
  r.decision.probability = pred.probability;
  r.decision.classifier_label = Scenario::Speech;
  r.decision.final_label = Scenario::Speech;
  r.decision.chosen_model = ChosenModel::ExpertSpeech;
  r.output = bundle.expert_speech(x, v);
  return r;
}

}  // namespace

RouteResult route_plain(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle) {
  validate(bundle);
  const nn::ScenarioPrediction pred = bundle.classify(x, v);
  if (pred.label == Scenario::Speech) return speech_path(x, v, bundle, pred);
  RouteResult r;
  r.decision.probability = pred.probability;
  r.decision.classifier_label = Scenario::Noise;
  r.decision.final_label = Scenario::Noise;
  r.decision.chosen_model = ChosenModel::ExpertNoise;
  r.output = bundle.expert_noise(x, v);
  return r;
}

RouteResult post_proc1(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle) {
  validate(bundle);
  const nn::ScenarioPrediction pred = bundle.classify(x, v);
  if (pred.label == Scenario::Speech) return speech_path(x, v, bundle, pred);

  const AudioClip universal = bundle.universal(x, v);
  const AudioClip est_noise = bundle.expert_noise(x, v);
  const AudioClip est_speech = bundle.expert_speech(x, v);
  RouteResult r;
  r.decision.probability = pred.probability;
  r.decision.classifier_label = Scenario::Noise;
  const bool output_check = nn::si_sdr_loss_value(universal.samples, est_noise.samples) < nn::si_sdr_loss_value(universal.samples, est_speech.samples);
  r.decision.output_check = output_check;
  if (output_check) {
    r.decision.final_label = Scenario::Noise;
    r.decision.chosen_model = ChosenModel::ExpertNoise;
    r.output = est_noise;
  } else {
    r.decision.final_label = Scenario::Speech;
    r.decision.chosen_model = ChosenModel::Universal;
    r.output = universal;
  }
  return r;
}

RouteResult post_proc2(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle) {
  validate(bundle);
  const nn::ScenarioPrediction pred = bundle.classify(x, v);
  if (pred.label == Scenario::Speech) return speech_path(x, v, bundle, pred);

  const AudioClip universal = bundle.universal(x, v);
  const AudioClip est_noise = bundle.expert_noise(x, v);
  const AudioClip est_speech = bundle.expert_speech(x, v);
  RouteResult r;
  r.decision.probability = pred.probability;
  r.decision.classifier_label = Scenario::Noise;
  const bool output_check = nn::si_sdr_loss_value(universal.samples, est_noise.samples) < nn::si_sdr_loss_value(universal.samples, est_speech.samples);
  r.decision.output_check = output_check;
  bool confirmed = output_check;
  if (!output_check) {
    const bool mixture_check = nn::si_sdr_loss_value(x.samples, est_noise.samples) > nn::si_sdr_loss_value(x.samples, est_speech.samples);
    r.decision.mixture_check = mixture_check;
    confirmed = mixture_check;
  }
  if (confirmed) {
    r.decision.final_label = Scenario::Noise;
    r.decision.chosen_model = ChosenModel::ExpertNoise;
    r.output = est_noise;
  } else {
    r.decision.final_label = Scenario::Speech;
    r.decision.chosen_model = ChosenModel::Universal;
    r.output = universal;
  }
  return r;
}

RouteResult route_oracle(const AudioClip& x, const nn::FaceTrack& v, const ExpertBundle& bundle,
                         Scenario truth) {
  validate(bundle);
  RouteResult r;
  r.decision.probability = truth == Scenario::Noise ? 1.0 : 0.0;
  r.decision.classifier_label = truth;
  r.decision.final_label = truth;
  if (truth == Scenario::Noise) {
    r.decision.chosen_model = ChosenModel::ExpertNoise;
    r.output = bundle.expert_noise(x, v);
  } else {
    r.decision.chosen_model = ChosenModel::ExpertSpeech;
    r.output = bundle.expert_speech(x, v);
  }
  return r;
}

RoutingInput to_routing_input(const sim::Scene& scene) {
  RoutingInput in;
  in.scene_id = scene.scene_id;
  in.mixture = scene.mixture;
  in.face = scene.face;
  in.truth = scene.scenario;
  return in;
}

RouteResult route_one(const RoutingInput& input, const ExpertBundle& bundle, Strategy strategy) {
  RouteResult r;
  switch (strategy) {
    case Strategy::Plain: r = route_plain(input.mixture, input.face, bundle); break;
    case Strategy::PostProc1: r = post_proc1(input.mixture, input.face, bundle); break;
    case Strategy::PostProc2: r = post_proc2(input.mixture, input.face, bundle); break;
    case Strategy::Oracle:
      if (!input.truth) {
        throw InvalidInputError("oracle routing needs a ground-truth label for scene '" +
                                input.scene_id + "'");
      }
      r = route_oracle(input.mixture, input.face, bundle, *input.truth);
      break;
  }
  r.decision.scene_id = input.scene_id;
  return r;
}

std::vector<RouteResult> batch_route(const std::vector<RoutingInput>& inputs,
                                     const ExpertBundle& bundle, Strategy strategy) {
  validate(bundle);
  std::vector<RouteResult> results;
  results.reserve(inputs.size());
  for (const RoutingInput& in : inputs) results.push_back(route_one(in, bundle, strategy));
  return results;
}

ExpertBundle ModelSet::bundle() const {
  ExpertBundle b;
  if (classifier) {
    auto model = classifier;
    b.classify = [model](const AudioClip& x, const nn::FaceTrack& v) {
      return model->classify(x, v);
    };
  }
  auto wrap = [](const std::shared_ptr<nn::AvGridNet>& model)
      -> std::function<AudioClip(const AudioClip&, const nn::FaceTrack&)> {
    if (!model) return nullptr;
    return [model](const AudioClip& x, const nn::FaceTrack& v) { return model->extract(x, v); };
  };
  b.universal = wrap(universal);
  b.expert_speech = wrap(speech);
  b.expert_noise = wrap(noise);
  return b;
}

ModelSet load_model_set(const std::string& classifier_ckpt, const std::string& universal_ckpt,
                        const std::string& speech_ckpt, const std::string& noise_ckpt,
                        const nn::ClassifierConfig& classifier_cfg,
                        const nn::GridNetConfig& gridnet_cfg) {
  for (const std::string& path :
       {classifier_ckpt, universal_ckpt, speech_ckpt, noise_ckpt}) {
    if (!std::filesystem::exists(path)) throw ConfigError("missing checkpoint: " + path);
  }
  ModelSet set;
  set.classifier_store = std::make_shared<nn::ParamStore>();
  set.classifier = std::make_shared<nn::ScenarioClassifier>(
      nn::ScenarioClassifier::build(*set.classifier_store, classifier_cfg));
  load_checkpoint(classifier_ckpt, *set.classifier_store);

  auto load_extractor = [&gridnet_cfg](std::shared_ptr<nn::ParamStore>& store,
                                       const std::string& path) {
    store = std::make_shared<nn::ParamStore>();
    auto model = std::make_shared<nn::AvGridNet>(nn::AvGridNet::build(*store, gridnet_cfg));
    load_checkpoint(path, *store);
    return model;
  };
  set.universal = load_extractor(set.universal_store, universal_ckpt);
  set.speech = load_extractor(set.speech_store, speech_ckpt);
  set.noise = load_extractor(set.noise_store, noise_ckpt);
  return set;
}

}  // namespace savg::cascade
