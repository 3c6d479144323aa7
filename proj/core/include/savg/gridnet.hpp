#pragma once

#include <string>
#include <vector>

#include "savg/ops.hpp"
#include "savg/stft.hpp"
#include "savg/visual.hpp"

namespace savg::nn {

struct GridNetConfig {
  size_t embed_dim = 8;         // D
  size_t blocks = 2;            // B
  size_t deconv_kernel = 4;     // I
  size_t deconv_stride = 1;     // J
  size_t lstm_hidden = 16;      // H
  size_t attn_heads = 4;        // L
  size_t attn_qk_channels = 4;  // E
  StftConfig stft;
  VisualFrontendConfig visual;

  static GridNetConfig toy();
  static GridNetConfig full_scale();  // D=48, B=6, H=192, R=5
};

void validate(const GridNetConfig& cfg);

// One BLSTM lane of a block: LN, bidirectional LSTM along one axis, and the
// 1-D transposed conv that restores the channel count (tail-cropped back to
// the axis length).
struct SequenceModule {
  Tensor ln_g, ln_b;
  LstmWeights fwd, bwd;
  Tensor deconv_w, deconv_b;  // (2H, D, I)
  size_t deconv_stride = 1;   // J
};

struct AttentionModule {
  std::vector<Tensor> wq, wk;  // per head (D, E), applied at every (t,f)
  std::vector<Tensor> wv;      // per head (D, D/L)
  Tensor wo, bo;               // output projection (D, D)
};

struct GridBlock {
  Tensor fuse_w, fuse_b;  // (D+Dv, D)
  SequenceModule intra;     // across frequency
  SequenceModule temporal;  // across time
  AttentionModule attn;
};

// AV-GridNet: encoder, B visually fused GridNet blocks, decoder. The same
// struct serves the universal model and both scenario experts; any checkpoint
// with a matching config loads into any role.
struct AvGridNet {
  GridNetConfig cfg;
  Tensor enc_w, enc_b;        // Conv2D 2 -> D, 3x3, same padding
  Tensor enc_ln_g, enc_ln_b;  // channel layer norm
  std::vector<GridBlock> blocks;
  Tensor dec_w, dec_b;  // transposed Conv2D D -> 2, 3x3
  VisualFrontend visual;

  static AvGridNet build(ParamStore& store, const GridNetConfig& cfg,
                         const std::string& prefix = "");

  // Differentiable waveform estimate of the target speaker.
  Tensor forward(const AudioClip& mixture, const FaceTrack& track) const;

  // Inference convenience: forward without tape state.
  AudioClip extract(const AudioClip& mixture, const FaceTrack& track) const;
};

// Spectrogram -> constant (2, T, F) tensor (real, imaginary channels).
Tensor spec_to_tensor(const Spectrogram& spec);

// Differentiable inverse STFT of a (2, T, F) tensor; forward matches
// savg::istft on the equivalent spectrogram exactly.
Tensor istft_op(const Tensor& ri, const StftConfig& cfg, size_t original_length);

}  // namespace savg::nn
