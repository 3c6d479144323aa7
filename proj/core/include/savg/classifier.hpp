#pragma once

#include <vector>

#include "savg/audio.hpp"
#include "savg/scenario.hpp"
#include "savg/visual.hpp"

namespace savg::nn {

struct ScenarioPrediction {
  double probability = 0.0;  // ŷ, probability that the interferer is noise
  Scenario label = Scenario::Noise;
};

// ŷ ≥ 0.5 → noise; the tie goes to the positive class so the rule is total.
inline ScenarioPrediction make_prediction(double probability) {
  return {probability, probability >= 0.5 ? Scenario::Noise : Scenario::Speech};
}

// Concrete layer plan for the audio-visual scenario classifier. The published
// diagram only fixes the layer kinds (strided conv + pooling + TCN front-end,
// frozen visual stack + V-TCN, TCN back-end with pooling and a sigmoid head);
// the sizes below are our reconstruction, chosen so that with 16 kHz audio the
// pooled speech-feature rate lands exactly on the 25 Hz video rate
// (16000 / 16 / 40 = 25). Other rates are realigned by interpolation.
struct ClassifierConfig {
  size_t audio_channels = 16;  // speech front-end width
  size_t conv_kernel = 32;     // strided encoder conv [32/16]
  size_t conv_stride = 16;
  size_t pool = 40;            // average pooling window and stride
  size_t audio_tcn_blocks = 4;   // dilations 1..2^(n-1), upper bound {8}
  size_t backend_tcn_blocks = 2;
  size_t backend_hidden = 16;  // bottleneck width inside back-end TCN blocks
  VisualFrontendConfig visual;
};

void validate(const ClassifierConfig& cfg);

// Residual unit: LN -> 1x1 conv -> PReLU -> dilated depthwise -> PReLU -> 1x1.
struct TcnBlock {
  Tensor ln_g, ln_b;
  Tensor in_w, in_b;    // pointwise C -> H
  Tensor dw_w, dw_b;    // depthwise kernel 3, dilation 2^r
  Tensor out_w, out_b;  // pointwise H -> C
  Tensor prelu_in, prelu_dw;
};

TcnBlock build_tcn_block(ParamStore& store, const std::string& base, size_t channels,
                         size_t hidden);
// x: (T, C) -> (T, C)
Tensor run_tcn_block(const Tensor& x, const TcnBlock& block, size_t dilation);

struct ScenarioClassifier {
  ClassifierConfig cfg;
  Tensor enc_w, enc_b;  // strided 1-D conv, 1 -> Ca
  std::vector<TcnBlock> audio_tcn;
  VisualFrontend visual;
  std::vector<TcnBlock> backend_tcn;
  Tensor head_w, head_b;  // (Ca+Dv) -> 1

  static ScenarioClassifier build(ParamStore& store, const ClassifierConfig& cfg);

  // Differentiable ŷ as a {1} tensor in (0,1).
  Tensor forward(const AudioClip& mixture, const FaceTrack& face) const;
  // Inference-only wrapper applying the 0.5 threshold.
  ScenarioPrediction classify(const AudioClip& mixture, const FaceTrack& face) const;
};

}  // namespace savg::nn
