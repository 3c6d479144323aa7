#include "savg/gridnet.hpp"

#include <cmath>

#include "savg/errors.hpp"
#include "savg/fft.hpp"

namespace savg::nn {

GridNetConfig GridNetConfig::toy() { return {}; }

GridNetConfig GridNetConfig::full_scale() {
  GridNetConfig cfg;
  cfg.embed_dim = 48;
  cfg.blocks = 6;
  cfg.lstm_hidden = 192;
  cfg.visual.vtcn_reps = 5;
  return cfg;
}

void validate(const GridNetConfig& cfg) {
  savg::validate(cfg.stft);
  if (cfg.embed_dim == 0 || cfg.blocks == 0 || cfg.lstm_hidden == 0 || cfg.attn_heads == 0 ||
      cfg.attn_qk_channels == 0 || cfg.deconv_kernel == 0 || cfg.deconv_stride == 0) {
    throw ConfigError("gridnet config: all sizes must be positive");
  }
  if (cfg.deconv_stride > cfg.deconv_kernel) {
    throw ConfigError("gridnet config: deconv stride must not exceed its kernel");
  }
  if (cfg.embed_dim % cfg.attn_heads != 0) {
    throw ConfigError("gridnet config: attention heads must divide the embedding width");
  }
}

namespace {

SequenceModule build_sequence_module(ParamStore& store, const GridNetConfig& cfg,
                                     const std::string& base) {
  const size_t d = cfg.embed_dim, h = cfg.lstm_hidden;
  SequenceModule m;
  m.ln_g = store.create(base + ".ln.g", {d}, InitSpec::constant(1.0));
  m.ln_b = store.create(base + ".ln.b", {d}, InitSpec::zeros());
  for (const char* dir : {"fwd", "bwd"}) {
    LstmWeights w;
    w.w_ih = store.create(base + ".lstm." + dir + ".w_ih", {4 * h, d}, InitSpec::fan_in_uniform(d));
    w.w_hh = store.create(base + ".lstm." + dir + ".w_hh", {4 * h, h}, InitSpec::fan_in_uniform(h));
    w.b = store.create(base + ".lstm." + dir + ".b", {4 * h}, InitSpec::zeros());
    (dir[0] == 'f' ? m.fwd : m.bwd) = w;
  }
  m.deconv_w = store.create(base + ".deconv.w", {2 * h, d, cfg.deconv_kernel},
                            InitSpec::fan_in_uniform(2 * h * cfg.deconv_kernel));
  m.deconv_b = store.create(base + ".deconv.b", {d}, InitSpec::zeros());
  m.deconv_stride = cfg.deconv_stride;
  return m;
}

AttentionModule build_attention(ParamStore& store, const GridNetConfig& cfg,
                                const std::string& base) {
  const size_t d = cfg.embed_dim, e = cfg.attn_qk_channels, l = cfg.attn_heads;
  AttentionModule a;
  for (size_t head = 0; head < l; ++head) {
    const std::string hb = base + ".head" + std::to_string(head);
    a.wq.push_back(store.create(hb + ".wq", {d, e}, InitSpec::fan_in_uniform(d)));
    a.wk.push_back(store.create(hb + ".wk", {d, e}, InitSpec::fan_in_uniform(d)));
    a.wv.push_back(store.create(hb + ".wv", {d, d / l}, InitSpec::fan_in_uniform(d)));
  }
  a.wo = store.create(base + ".wo", {d, d}, InitSpec::fan_in_uniform(d));
  a.bo = store.create(base + ".bo", {d}, InitSpec::zeros());
  return a;
}

// (T,F,D) -> LN -> BLSTM along the middle axis of `seq_view` -> transposed
// conv back to D channels, cropped to the axis length -> residual.
Tensor run_sequence_module(const Tensor& emb, const SequenceModule& m, bool across_time) {
  const size_t t = emb.dim(0), f = emb.dim(1), d = emb.dim(2);
  Tensor x = layer_norm(emb, m.ln_g, m.ln_b);
  // arrange as (batch, length, D): frequency runs per frame for the intra
  // module, time runs per frequency for the temporal module
  Tensor seq = across_time ? transpose(x, {1, 0, 2}) : x;
  const size_t batch = across_time ? f : t;
  const size_t len = across_time ? t : f;
  Tensor y = blstm_sequence(seq, m.fwd, m.bwd);     // (batch, len, 2H)
  y = transpose(y, {0, 2, 1});                      // (batch, 2H, len)
  y = transposed_conv1d(y, m.deconv_w, m.deconv_b,  // (batch, D, (len-1)*J + I)
                        m.deconv_stride);
  y = slice_axis(y, 2, 0, len);
  y = transpose(y, {0, 2, 1});  // (batch, len, D)
  if (across_time) y = transpose(y, {1, 0, 2});
  (void)batch;
  (void)d;
  return add(emb, y);
}

Tensor run_attention(const Tensor& emb, const AttentionModule& a) {
  const size_t t = emb.dim(0), f = emb.dim(1), d = emb.dim(2);
  const size_t heads = a.wq.size();
  const size_t dv = d / heads;
  const size_t e = a.wq[0].dim(1);
  Tensor flat = reshape(emb, {t * f, d});
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(e * f));
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (size_t head = 0; head < heads; ++head) {
    // pointwise projections at every (t,f), flattened to full-band rows
    Tensor q = reshape(matmul(flat, a.wq[head]), {t, f * e});
    Tensor k = reshape(matmul(flat, a.wk[head]), {t, f * e});
    Tensor v = reshape(matmul(flat, a.wv[head]), {t, f * dv});
    Tensor attn = softmax_lastdim(scale(matmul(q, transpose(k, {1, 0})), inv_scale));
    head_out.push_back(reshape(matmul(attn, v), {t, f, dv}));
  }
  Tensor cat = concat(head_out, 2);  // (T,F,D)
  Tensor out = linear(reshape(cat, {t * f, d}), a.wo, a.bo);
  return add(emb, reshape(out, {t, f, d}));
}

}  // namespace

AvGridNet AvGridNet::build(ParamStore& store, const GridNetConfig& cfg,
                           const std::string& prefix) {
  validate(cfg);
  AvGridNet net;
  net.cfg = cfg;
  const size_t d = cfg.embed_dim, dv = cfg.visual.embed_dim;
  net.enc_w = store.create(prefix + "enc.w", {d, 2, 3, 3}, InitSpec::fan_in_uniform(2 * 9));
  net.enc_b = store.create(prefix + "enc.b", {d}, InitSpec::zeros());
  net.enc_ln_g = store.create(prefix + "enc.ln.g", {d}, InitSpec::constant(1.0));
  net.enc_ln_b = store.create(prefix + "enc.ln.b", {d}, InitSpec::zeros());
  net.visual = VisualFrontend::build(store, cfg.visual, prefix + "visual.");
  for (size_t bi = 0; bi < cfg.blocks; ++bi) {
    const std::string base = prefix + "block" + std::to_string(bi);
    GridBlock block;
    block.fuse_w = store.create(base + ".fuse.w", {d + dv, d}, InitSpec::fan_in_uniform(d + dv));
    block.fuse_b = store.create(base + ".fuse.b", {d}, InitSpec::zeros());
    block.intra = build_sequence_module(store, cfg, base + ".intra");
    block.temporal = build_sequence_module(store, cfg, base + ".temporal");
    block.attn = build_attention(store, cfg, base + ".attn");
    net.blocks.push_back(std::move(block));
  }
  net.dec_w = store.create(prefix + "dec.w", {d, 2, 3, 3}, InitSpec::fan_in_uniform(d * 9));
  net.dec_b = store.create(prefix + "dec.b", {2}, InitSpec::zeros());
  return net;
}

Tensor spec_to_tensor(const Spectrogram& spec) {
  const size_t t = spec.num_frames, f = spec.num_bins;
  std::vector<double> data(2 * t * f);
  for (size_t i = 0; i < t * f; ++i) {
    data[i] = spec.frames[i].real();
    data[t * f + i] = spec.frames[i].imag();
  }
  return Tensor({2, t, f}, std::move(data));
}

Tensor istft_op(const Tensor& ri, const StftConfig& cfg, size_t original_length) {
  if (ri.rank() != 3 || ri.dim(0) != 2) {
    throw ShapeError("istft_op: expects (2,T,F), got " + shape_str(ri.shape()));
  }
  if (ri.dim(2) != cfg.num_bins()) {
    throw ShapeError("istft_op: bin count " + std::to_string(ri.dim(2)) +
                     " does not match the config's " + std::to_string(cfg.num_bins()));
  }
  const size_t t = ri.dim(1), f = ri.dim(2);
  Spectrogram spec;
  spec.config = cfg;
  spec.num_frames = t;
  spec.num_bins = f;
  spec.original_length = original_length;
  spec.frames.resize(t * f);
  const auto& v = ri.value();
  for (size_t i = 0; i < t * f; ++i) spec.frames[i] = {v[i], v[t * f + i]};
  AudioClip wave = istft(spec);
  const size_t len = wave.samples.size();

  // synthesis normalization replicated for the adjoint
  const auto window = std::make_shared<std::vector<double>>(make_window(cfg));
  const size_t total = (t - 1) * cfg.hop_size + cfg.window_size;
  auto norm = std::make_shared<std::vector<double>>(total, 0.0);
  for (size_t ti = 0; ti < t; ++ti) {
    for (size_t i = 0; i < cfg.window_size; ++i) {
      (*norm)[ti * cfg.hop_size + i] += (*window)[i] * (*window)[i];
    }
  }
  for (auto& z : *norm) z = z > 1e-8 ? z : 1.0;

  auto rn = ri.node();
  const long pad = static_cast<long>(stft_left_pad(cfg));
  return make_op(
      "istft", {len}, std::move(wave.samples), {ri},
      [rn, window, norm, cfg, t, f, len, pad](TensorNode& nd) {
        if (!rn->requires_grad) return;
        auto& g = rn->ensure_grad();
        const size_t n = cfg.fft_size;
        std::vector<std::complex<double>> buf(n);
        for (size_t ti = 0; ti < t; ++ti) {
          const size_t base = ti * cfg.hop_size;
          std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
          bool any = false;
          for (size_t i = 0; i < cfg.window_size; ++i) {
            const long s = static_cast<long>(base + i) - pad;  // output sample index
            if (s < 0) continue;
            if (s >= static_cast<long>(len)) break;
            const double gs = nd.grad[s] * (*window)[i] / (*norm)[base + i];
            if (gs != 0.0) any = true;
            buf[i] = {gs, 0.0};
          }
          if (!any) continue;
          fft_inplace(buf, /*inverse=*/false);
          // each interior bin contributed twice (itself and its conjugate
          // mirror) to the real synthesis frame
          for (size_t fi = 0; fi < f; ++fi) {
            const double w = (fi == 0 || fi == n / 2) ? 1.0 : 2.0;
            g[ti * f + fi] += w / static_cast<double>(n) * buf[fi].real();
            g[t * f + ti * f + fi] += w / static_cast<double>(n) * buf[fi].imag();
          }
        }
      });
}

Tensor AvGridNet::forward(const AudioClip& mixture, const FaceTrack& track) const {
  const double expected_frames = mixture.duration_s() * track.fps;
  if (std::abs(static_cast<double>(track.frames) - expected_frames) > 1.0 + 1e-9) {
    throw InvalidInputError("av_gridnet: face track covers " + std::to_string(track.frames) +
                            " frames, mixture needs about " + std::to_string(expected_frames));
  }
  Spectrogram sx = stft(mixture, cfg.stft);
  const size_t t = sx.num_frames, f = sx.num_bins, d = cfg.embed_dim;

  Tensor emb = conv2d(spec_to_tensor(sx), enc_w, enc_b, 1, 1, 1, 1);  // (D,T,F)
  emb = transpose(emb, {1, 2, 0});                                    // (T,F,D)
  emb = layer_norm(emb, enc_ln_g, enc_ln_b);

  Tensor v = visual.encode(track);   // (Tv, Dv)
  Tensor vt = interp_rows(v, t);     // (T, Dv), shared by every block

  for (const auto& block : blocks) {
    emb = fuse(emb, vt, block.fuse_w, block.fuse_b);
    emb = run_sequence_module(emb, block.intra, /*across_time=*/false);
    emb = run_sequence_module(emb, block.temporal, /*across_time=*/true);
    emb = run_attention(emb, block.attn);
  }

  Tensor spec_out = transposed_conv2d(transpose(emb, {2, 0, 1}), dec_w, dec_b, 1, 1);
  spec_out = slice_axis(spec_out, 1, 1, t);  // center-crop the 3x3 halo
  spec_out = slice_axis(spec_out, 2, 1, f);
  (void)d;
  return istft_op(spec_out, cfg.stft, mixture.samples.size());
}

AudioClip AvGridNet::extract(const AudioClip& mixture, const FaceTrack& track) const {
  NoGradGuard no_grad;
  Tensor wave = forward(mixture, track);
  AudioClip out;
  out.sample_rate = mixture.sample_rate;
  out.samples = wave.value();
  return out;
}

}  // namespace savg::nn
