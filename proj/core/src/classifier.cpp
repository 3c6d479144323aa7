#include "savg/classifier.hpp"

#include <cmath>
#include <string>

#include "savg/errors.hpp"

namespace savg::nn {

void validate(const ClassifierConfig& cfg) {
  if (cfg.audio_channels == 0 || cfg.conv_kernel == 0 || cfg.conv_stride == 0 || cfg.pool == 0 ||
      cfg.audio_tcn_blocks == 0 || cfg.backend_tcn_blocks == 0 || cfg.backend_hidden == 0) {
    throw ConfigError("classifier config: all sizes must be positive");
  }
  if (cfg.conv_stride > cfg.conv_kernel) {
    throw ConfigError("classifier config: encoder stride must not exceed its kernel");
  }
}

TcnBlock build_tcn_block(ParamStore& store, const std::string& base, size_t channels,
                         size_t hidden) {
  TcnBlock b;
  b.ln_g = store.create(base + ".ln.g", {channels}, InitSpec::constant(1.0));
  b.ln_b = store.create(base + ".ln.b", {channels}, InitSpec::zeros());
  b.in_w = store.create(base + ".in.w", {hidden, channels, 1}, InitSpec::fan_in_uniform(channels));
  b.in_b = store.create(base + ".in.b", {hidden}, InitSpec::zeros());
  b.dw_w = store.create(base + ".dw.w", {hidden, 1, 3}, InitSpec::fan_in_uniform(3));
  b.dw_b = store.create(base + ".dw.b", {hidden}, InitSpec::zeros());
  b.out_w = store.create(base + ".out.w", {channels, hidden, 1}, InitSpec::fan_in_uniform(hidden));
  b.out_b = store.create(base + ".out.b", {channels}, InitSpec::zeros());
  b.prelu_in = store.create(base + ".prelu_in", {1}, InitSpec::constant(0.25));
  b.prelu_dw = store.create(base + ".prelu_dw", {1}, InitSpec::constant(0.25));
  return b;
}

Tensor run_tcn_block(const Tensor& x, const TcnBlock& block, size_t dilation) {
  Tensor y = layer_norm(x, block.ln_g, block.ln_b);
  y = transpose(y, {1, 0});  // (C, T)
  y = prelu(conv1d(y, block.in_w, block.in_b, {}), block.prelu_in);
  Conv1dSpec dw;
  dw.pad = dilation;
  dw.dilation = dilation;
  dw.groups = block.dw_w.dim(0);
  y = prelu(conv1d(y, block.dw_w, block.dw_b, dw), block.prelu_dw);
  y = conv1d(y, block.out_w, block.out_b, {});
  return add(x, transpose(y, {1, 0}));
}

ScenarioClassifier ScenarioClassifier::build(ParamStore& store, const ClassifierConfig& cfg) {
  validate(cfg);
  ScenarioClassifier c;
  c.cfg = cfg;
  const size_t ca = cfg.audio_channels;
  c.enc_w = store.create("enc.w", {ca, 1, cfg.conv_kernel},
                         InitSpec::fan_in_uniform(cfg.conv_kernel));
  c.enc_b = store.create("enc.b", {ca}, InitSpec::zeros());
  for (size_t r = 0; r < cfg.audio_tcn_blocks; ++r) {
    c.audio_tcn.push_back(build_tcn_block(store, "atcn" + std::to_string(r), ca, ca));
  }
  c.visual = VisualFrontend::build(store, cfg.visual, "visual.");
  const size_t fused = ca + cfg.visual.embed_dim;
  for (size_t r = 0; r < cfg.backend_tcn_blocks; ++r) {
    c.backend_tcn.push_back(
        build_tcn_block(store, "btcn" + std::to_string(r), fused, cfg.backend_hidden));
  }
  c.head_w = store.create("head.w", {fused, 1}, InitSpec::fan_in_uniform(fused));
  c.head_b = store.create("head.b", {1}, InitSpec::zeros());
  return c;
}

Tensor ScenarioClassifier::forward(const AudioClip& mixture, const FaceTrack& face) const {
  savg::validate(mixture, "classifier input");
  validate(face);
  const double expected_frames = mixture.duration_s() * face.fps;
  if (std::abs(static_cast<double>(face.frames) - expected_frames) > 1.0 + 1e-9) {
    throw InvalidInputError("classifier: face track has " + std::to_string(face.frames) +
                            " frames but the mixture spans " + std::to_string(expected_frames));
  }

  Tensor x({1, mixture.size()}, mixture.samples);
  Conv1dSpec enc;
  enc.stride = cfg.conv_stride;
  enc.pad = cfg.conv_kernel / 2;
  Tensor h = relu(conv1d(x, enc_w, enc_b, enc));  // (Ca, La)
  if (h.dim(1) < cfg.pool) {
    throw InvalidInputError("classifier: clip too short for the pooled front-end");
  }
  h = avg_pool1d(h, cfg.pool, cfg.pool);  // (Ca, Lp)
  const size_t lp = h.dim(1);

  Tensor seq = transpose(h, {1, 0});  // (Lp, Ca)
  for (size_t r = 0; r < audio_tcn.size(); ++r) {
    seq = run_tcn_block(seq, audio_tcn[r], size_t{1} << r);
  }

  Tensor v = interp_rows(visual.encode(face), lp);  // (Lp, Dv)
  Tensor fusedseq = concat({seq, v}, 1);            // (Lp, Ca+Dv)
  for (size_t r = 0; r < backend_tcn.size(); ++r) {
    fusedseq = run_tcn_block(fusedseq, backend_tcn[r], size_t{1} << r);
  }

  Tensor pooled = adaptive_avg_pool1d(transpose(fusedseq, {1, 0}), 1);  // (Ca+Dv, 1)
  Tensor logit = linear(reshape(pooled, {1, fusedseq.dim(1)}), head_w, head_b);
  return reshape(sigmoid(logit), {1});
}

ScenarioPrediction ScenarioClassifier::classify(const AudioClip& mixture,
                                                const FaceTrack& face) const {
  NoGradGuard guard;
  return make_prediction(forward(mixture, face).value()[0]);
}

}  // namespace savg::nn
