#pragma once

#include <string>
#include <vector>

#include "savg/ops.hpp"

namespace savg::nn {

// Grayscale face crop sequence at a fixed frame rate, pixels in [0,1].
struct FaceTrack {
  size_t frames = 0;
  size_t height = 0;
  size_t width = 0;
  double fps = 25.0;
  std::vector<double> pixels;  // (Tv, H, W) row-major
};

void validate(const FaceTrack& track);

// Raw little-endian f32 container: magic "FTRK", u32 Tv/H/W, f32 fps, payload.
void write_face_track(const std::string& path, const FaceTrack& track);
FaceTrack read_face_track(const std::string& path);

struct VisualFrontendConfig {
  size_t conv3d_channels = 8;  // channels out of the frozen 3-D conv
  size_t embed_dim = 16;       // Dv
  size_t vtcn_reps = 2;        // residual V-TCN repetitions (full-scale 5)
  size_t image_size = 16;      // expected square input size
};

struct VTcnBlock {
  Tensor ln_g, ln_b;
  Tensor dw_w, dw_b;  // depthwise, kernel 3, dilation 2^r
  Tensor pw_w, pw_b;  // pointwise
  Tensor prelu_a;
};

// Conv3D + per-frame conv stack, both frozen stand-ins for pre-trained
// lip-reading weights (real weights can be restored through load_checkpoint),
// followed by the trainable V-TCN stack.
struct VisualFrontend {
  VisualFrontendConfig cfg;
  Tensor conv3d_w, conv3d_b;            // frozen
  std::vector<Tensor> stub_w, stub_b;   // frozen stride-2 conv2d stages
  std::vector<VTcnBlock> vtcn;

  static VisualFrontend build(ParamStore& store, const VisualFrontendConfig& cfg,
                              const std::string& prefix);

  // FaceTrack -> (Tv, Dv) embedding
  Tensor encode(const FaceTrack& track) const;
};

// Broadcast one visual row across all F bins of its frame and project the
// concatenated channels back to the audio width: (T,F,D) + (T,Dv) -> (T,F,D).
Tensor fuse(const Tensor& audio_emb, const Tensor& visual_seq, const Tensor& w, const Tensor& b);

}  // namespace savg::nn
