#include "savg/visual.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "savg/errors.hpp"

namespace savg::nn {

void validate(const FaceTrack& track) {
  if (track.frames == 0 || track.height == 0 || track.width == 0) {
    throw InvalidInputError("face track: empty");
  }
  if (track.pixels.size() != track.frames * track.height * track.width) {
    throw InvalidInputError("face track: pixel count does not match header");
  }
  if (track.fps <= 0.0) throw InvalidInputError("face track: fps must be positive");
  for (double p : track.pixels) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidInputError("face track: pixel values must lie in [0,1]");
    }
  }
}

namespace {

constexpr char kMagic[4] = {'F', 'T', 'R', 'K'};

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw InvalidInputError("face track '" + path + "': truncated");
  }
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_face_track(const std::string& path, const FaceTrack& track) {
  validate(track);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInputError("face track: cannot write '" + path + "'");
  os.write(kMagic, 4);
  put_u32(os, static_cast<uint32_t>(track.frames));
  put_u32(os, static_cast<uint32_t>(track.height));
  put_u32(os, static_cast<uint32_t>(track.width));
  put_u32(os, std::bit_cast<uint32_t>(static_cast<float>(track.fps)));
  for (double p : track.pixels) put_u32(os, std::bit_cast<uint32_t>(static_cast<float>(p)));
  if (!os) throw InvalidInputError("face track: write failed for '" + path + "'");
}

FaceTrack read_face_track(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInputError("face track: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw InvalidInputError("face track '" + path + "': bad magic");
  }
  FaceTrack t;
  t.frames = get_u32(is, path);
  t.height = get_u32(is, path);
  t.width = get_u32(is, path);
  t.fps = static_cast<double>(std::bit_cast<float>(get_u32(is, path)));
  t.pixels.resize(t.frames * t.height * t.width);
  for (auto& p : t.pixels) p = static_cast<double>(std::bit_cast<float>(get_u32(is, path)));
  validate(t);
  return t;
}

VisualFrontend VisualFrontend::build(ParamStore& store, const VisualFrontendConfig& cfg,
                                     const std::string& prefix) {
  if (cfg.conv3d_channels == 0 || cfg.embed_dim == 0 || cfg.image_size == 0) {
    throw ConfigError("visual frontend: channel counts and image size must be positive");
  }
  VisualFrontend fe;
  fe.cfg = cfg;
  const size_t cv = cfg.conv3d_channels;
  fe.conv3d_w = store.create(prefix + "conv3d.w", {cv, 1, 5, 3, 3},
                             InitSpec::fan_in_uniform(1 * 5 * 3 * 3), /*frozen=*/true);
  fe.conv3d_b = store.create(prefix + "conv3d.b", {cv}, InitSpec::zeros(), /*frozen=*/true);
  const size_t stage_ch[5] = {cv, 16, 16, 16, cfg.embed_dim};
  for (size_t s = 0; s < 4; ++s) {
    const std::string base = prefix + "stub" + std::to_string(s);
    fe.stub_w.push_back(store.create(base + ".w", {stage_ch[s + 1], stage_ch[s], 3, 3},
                                     InitSpec::fan_in_uniform(stage_ch[s] * 9), /*frozen=*/true));
    fe.stub_b.push_back(
        store.create(base + ".b", {stage_ch[s + 1]}, InitSpec::zeros(), /*frozen=*/true));
  }
  for (size_t r = 0; r < cfg.vtcn_reps; ++r) {
    const std::string base = prefix + "vtcn" + std::to_string(r);
    VTcnBlock b;
    b.ln_g = store.create(base + ".ln.g", {cfg.embed_dim}, InitSpec::constant(1.0));
    b.ln_b = store.create(base + ".ln.b", {cfg.embed_dim}, InitSpec::zeros());
    b.dw_w = store.create(base + ".dw.w", {cfg.embed_dim, 1, 3}, InitSpec::fan_in_uniform(3));
    b.dw_b = store.create(base + ".dw.b", {cfg.embed_dim}, InitSpec::zeros());
    b.pw_w = store.create(base + ".pw.w", {cfg.embed_dim, cfg.embed_dim, 1},
                          InitSpec::fan_in_uniform(cfg.embed_dim));
    b.pw_b = store.create(base + ".pw.b", {cfg.embed_dim}, InitSpec::zeros());
    b.prelu_a = store.create(base + ".prelu", {1}, InitSpec::constant(0.25));
    fe.vtcn.push_back(std::move(b));
  }
  return fe;
}

Tensor VisualFrontend::encode(const FaceTrack& track) const {
  validate(track);
  if (track.height != cfg.image_size || track.width != cfg.image_size) {
    throw InvalidInputError("visual frontend: track is " + std::to_string(track.height) + "x" +
                            std::to_string(track.width) + ", expected " +
                            std::to_string(cfg.image_size) + " square");
  }
  const size_t tv = track.frames;
  Tensor x({1, tv, track.height, track.width}, track.pixels);
  // frozen 3-D conv keeps the time axis, halves the spatial axes
  Tensor h = conv3d(x, conv3d_w, conv3d_b, 1, 2, 2, 2, 1, 1);
  h = relu(h);
  // (Cv, Tv, H', W') -> per-frame batch (Tv, Cv, H', W')
  h = transpose(h, {1, 0, 2, 3});
  for (size_t s = 0; s < stub_w.size(); ++s) {
    h = relu(conv2d(h, stub_w[s], stub_b[s], 2, 2, 1, 1));
  }
  // spatial average -> (Tv, Dv)
  const size_t spatial = h.dim(2) * h.dim(3);
  h = adaptive_avg_pool1d(reshape(h, {tv, cfg.embed_dim, spatial}), 1);
  Tensor seq = reshape(h, {tv, cfg.embed_dim});

  for (size_t r = 0; r < vtcn.size(); ++r) {
    const auto& b = vtcn[r];
    const size_t dilation = size_t{1} << r;
    Tensor y = layer_norm(seq, b.ln_g, b.ln_b);
    y = transpose(y, {1, 0});  // (Dv, Tv)
    Conv1dSpec dw_spec;
    dw_spec.pad = dilation;
    dw_spec.dilation = dilation;
    dw_spec.groups = cfg.embed_dim;
    y = conv1d(y, b.dw_w, b.dw_b, dw_spec);
    y = conv1d(y, b.pw_w, b.pw_b, {});
    y = prelu(y, b.prelu_a);
    seq = add(seq, transpose(y, {1, 0}));
  }
  return seq;
}

Tensor fuse(const Tensor& audio_emb, const Tensor& visual_seq, const Tensor& w, const Tensor& b) {
  if (audio_emb.rank() != 3 || visual_seq.rank() != 2) {
    throw ShapeError("fuse: expects audio (T,F,D) and visual (T,Dv)");
  }
  const size_t t = audio_emb.dim(0), f = audio_emb.dim(1), d = audio_emb.dim(2);
  const size_t dv = visual_seq.dim(1);
  if (visual_seq.dim(0) != t) {
    throw ShapeError("fuse: visual sequence has " + std::to_string(visual_seq.dim(0)) +
                     " rows, audio has " + std::to_string(t) + " frames");
  }
  Tensor cat = concat({audio_emb, repeat_middle(visual_seq, f)}, 2);
  Tensor out = linear(reshape(cat, {t * f, d + dv}), w, b);
  return reshape(out, {t, f, d});
}

}  // namespace savg::nn
