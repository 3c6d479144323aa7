#include "savg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "savg/errors.hpp"
#include "savg/fft.hpp"
#include "savg/ops.hpp"
#include "savg/stft.hpp"

namespace savg::nn {

namespace {

constexpr double kNormGuard = 1e-8;
constexpr double kProbClamp = 1e-7;
constexpr double kDbFactor = 20.0 / 2.302585092994045684;  // 20 / ln 10

struct SiSdrParts {
  double alpha = 0.0;
  double norm_s_sq = 0.0;
  double res_energy = 0.0;
  bool proj_clamped = false;
  bool res_clamped = false;
  double loss = 0.0;
};

SiSdrParts si_sdr_parts(const double* ref, const double* est, size_t n) {
  SiSdrParts p;
  double dot = 0.0;
  for (size_t i = 0; i < n; ++i) {
    dot += est[i] * ref[i];
    p.norm_s_sq += ref[i] * ref[i];
  }
  if (p.norm_s_sq <= 0.0) throw InvalidInputError("si_sdr: reference has zero energy");
  p.alpha = dot / p.norm_s_sq;
  for (size_t i = 0; i < n; ++i) {
    const double r = est[i] - p.alpha * ref[i];
    p.res_energy += r * r;
  }
  const double proj_norm = std::abs(p.alpha) * std::sqrt(p.norm_s_sq);
  const double res_norm = std::sqrt(p.res_energy);
  p.proj_clamped = proj_norm < kNormGuard;
  p.res_clamped = res_norm < kNormGuard;
  p.loss = -20.0 * std::log10(std::max(proj_norm, kNormGuard) / std::max(res_norm, kNormGuard));
  return p;
}

}  // namespace

double si_sdr_loss_value(const std::vector<double>& ref, const std::vector<double>& est) {
  if (ref.size() != est.size() || ref.empty()) {
    throw InvalidInputError("si_sdr: signals must share a nonzero length");
  }
  return si_sdr_parts(ref.data(), est.data(), ref.size()).loss;
}

double si_sdr_db(const std::vector<double>& ref, const std::vector<double>& est) {
  return -si_sdr_loss_value(ref, est);
}

Tensor si_sdr_loss(const Tensor& ref, const Tensor& est) {
  if (ref.size() != est.size() || ref.size() == 0) {
    throw InvalidInputError("si_sdr: signals must share a nonzero length");
  }
  if (ref.requires_grad()) {
    throw InvalidInputError("si_sdr: the reference must not require gradients");
  }
  auto parts = std::make_shared<SiSdrParts>(si_sdr_parts(ref.value().data(), est.value().data(),
                                                         ref.size()));
  auto refs = std::make_shared<std::vector<double>>(ref.value());
  auto en = est.node();
  return make_op("si_sdr_loss", {1}, {parts->loss}, {est}, [en, parts, refs](TensorNode& nd) {
    if (!en->requires_grad) return;
    const double go = nd.grad[0];
    const double c_proj =
        parts->proj_clamped ? 0.0 : kDbFactor / (parts->alpha * parts->norm_s_sq);
    const double c_res = parts->res_clamped ? 0.0 : kDbFactor / parts->res_energy;
    auto& g = en->ensure_grad();
    const auto& rv = *refs;
    for (size_t i = 0; i < rv.size(); ++i) {
      const double res = en->value[i] - parts->alpha * rv[i];
      g[i] += go * (c_res * res - c_proj * rv[i]);
    }
  });
}

namespace {

StftConfig delta_cfg(const DeltaSpecResolution& res) {
  StftConfig cfg;
  cfg.window_size = res.window;
  cfg.hop_size = res.hop;
  cfg.fft_size = res.fft_size;
  cfg.window = WindowKind::Hann;
  return cfg;
}

std::vector<double> mag_grid(const Spectrogram& s, bool log_magnitude) {
  std::vector<double> m(s.frames.size());
  for (size_t i = 0; i < m.size(); ++i) {
    const double a = std::abs(s.frames[i]);
    m[i] = log_magnitude ? std::log1p(a) : a;
  }
  return m;
}

double delta_mae(const std::vector<double>& me, const std::vector<double>& mr, size_t frames,
                 size_t bins, std::vector<double>* diff_out) {
  double acc = 0.0;
  if (diff_out) diff_out->resize((frames - 1) * bins);
  for (size_t t = 0; t + 1 < frames; ++t) {
    for (size_t f = 0; f < bins; ++f) {
      const double d = (me[(t + 1) * bins + f] - me[t * bins + f]) -
                       (mr[(t + 1) * bins + f] - mr[t * bins + f]);
      if (diff_out) (*diff_out)[t * bins + f] = d;
      acc += std::abs(d);
    }
  }
  return acc / (static_cast<double>(frames - 1) * static_cast<double>(bins));
}

void check_delta_inputs(size_t ref_len, size_t est_len, const DeltaSpecResolution& res,
                        size_t frames) {
  if (ref_len != est_len || ref_len == 0) {
    throw InvalidInputError("freq_delta: signals must share a nonzero length");
  }
  if (ref_len < res.window) {
    throw InvalidInputError("freq_delta: clip shorter than one analysis frame (" +
                            std::to_string(ref_len) + " < " + std::to_string(res.window) + ")");
  }
  if (frames < 2) {
    throw InvalidInputError("freq_delta: clip too short to form a temporal delta");
  }
}

}  // namespace

double freq_delta_loss_value(const std::vector<double>& ref, const std::vector<double>& est,
                             const DeltaSpecResolution& res, bool log_magnitude) {
  const StftConfig cfg = delta_cfg(res);
  const size_t frames = stft_num_frames(ref.size(), cfg);
  check_delta_inputs(ref.size(), est.size(), res, frames);
  Spectrogram se = stft(AudioClip{est}, cfg);
  Spectrogram sr = stft(AudioClip{ref}, cfg);
  const auto me = mag_grid(se, log_magnitude);
  const auto mr = mag_grid(sr, log_magnitude);
  return delta_mae(me, mr, frames, cfg.num_bins(), nullptr);
}

Tensor freq_delta_loss(const Tensor& ref, const Tensor& est, const DeltaSpecResolution& res,
                       bool log_magnitude) {
  if (ref.requires_grad()) {
    throw InvalidInputError("freq_delta: the reference must not require gradients");
  }
  const StftConfig cfg = delta_cfg(res);
  const size_t frames = stft_num_frames(ref.size(), cfg);
  check_delta_inputs(ref.size(), est.size(), res, frames);
  const size_t bins = cfg.num_bins();

  auto se = std::make_shared<Spectrogram>(stft(AudioClip{est.value()}, cfg));
  Spectrogram sr = stft(AudioClip{ref.value()}, cfg);
  auto raw_mag = std::make_shared<std::vector<double>>(mag_grid(*se, false));
  std::vector<double> me(raw_mag->size());
  for (size_t i = 0; i < me.size(); ++i) {
    me[i] = log_magnitude ? std::log1p((*raw_mag)[i]) : (*raw_mag)[i];
  }
  const auto mr = mag_grid(sr, log_magnitude);
  auto diff = std::make_shared<std::vector<double>>();
  const double loss = delta_mae(me, mr, frames, bins, diff.get());

  auto window = std::make_shared<std::vector<double>>(make_window(cfg));
  auto en = est.node();
  const size_t len = est.size();
  return make_op(
      "freq_delta_loss", {1}, {loss}, {est},
      [en, se, raw_mag, diff, window, cfg, frames, bins, len, log_magnitude](TensorNode& nd) {
        if (!en->requires_grad) return;
        const double go = nd.grad[0] / (static_cast<double>(frames - 1) * static_cast<double>(bins));
        auto& g = en->ensure_grad();
        const size_t n = cfg.fft_size;
        std::vector<std::complex<double>> a(n);
        for (size_t t = 0; t < frames; ++t) {
          std::fill(a.begin(), a.end(), std::complex<double>(0.0, 0.0));
          bool any = false;
          for (size_t f = 0; f < bins; ++f) {
            // d loss / d magnitude: the delta at t-1 adds it, the one at t subtracts it
            double gm = 0.0;
            if (t > 0 && (*diff)[(t - 1) * bins + f] != 0.0) {
              gm += go * ((*diff)[(t - 1) * bins + f] > 0.0 ? 1.0 : -1.0);
            }
            if (t + 1 < frames && (*diff)[t * bins + f] != 0.0) {
              gm -= go * ((*diff)[t * bins + f] > 0.0 ? 1.0 : -1.0);
            }
            if (gm == 0.0) continue;
            const double mag = (*raw_mag)[t * bins + f];
            if (mag == 0.0) continue;
            if (log_magnitude) gm /= 1.0 + mag;
            // fold the magnitude chain into a Hermitian grid; interior bins
            // appear twice after mirroring, so they carry half weight
            const std::complex<double> c = se->at(t, f) * (gm / mag);
            if (f == 0 || f == n / 2) {
              a[f] = c;
            } else {
              a[f] = 0.5 * c;
              a[n - f] = std::conj(0.5 * c);
            }
            any = true;
          }
          if (!any) continue;
          fft_inplace(a, /*inverse=*/true);
          const long base =
              static_cast<long>(t * cfg.hop_size) - static_cast<long>(stft_left_pad(cfg));
          for (size_t i = 0; i < cfg.window_size; ++i) {
            const long s = base + static_cast<long>(i);
            if (s < 0) continue;
            if (s >= static_cast<long>(len)) break;
            g[s] += static_cast<double>(n) * a[i].real() * (*window)[i];
          }
        }
      });
}

Tensor hybrid_loss(const Tensor& ref, const Tensor& est, const HybridLossConfig& cfg) {
  if (cfg.gamma < 0.0) throw ConfigError("hybrid_loss: gamma must be >= 0");
  Tensor total = si_sdr_loss(ref, est);
  if (cfg.gamma == 0.0 || cfg.resolutions.empty()) return total;
  Tensor acc;
  for (const auto& res : cfg.resolutions) {
    Tensor term = freq_delta_loss(ref, est, res, cfg.log_magnitude);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return add(total, scale(acc, cfg.gamma / static_cast<double>(cfg.resolutions.size())));
}

double bce_loss_value(double target, double prob) {
  if (target != 0.0 && target != 1.0) {
    throw InvalidInputError("bce: target must be 0 or 1");
  }
  const double q = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return -(target * std::log(q) + (1.0 - target) * std::log(1.0 - q));
}

Tensor bce_loss(double target, const Tensor& prob) {
  if (prob.size() != 1) {
    throw InvalidInputError("bce: probability must be a single value");
  }
  const double p = prob.value()[0];
  const double loss = bce_loss_value(target, p);
  const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
  auto pn = prob.node();
  return make_op("bce_loss", {1}, {loss}, {prob}, [pn, target, clamped](TensorNode& nd) {
    if (!pn->requires_grad || clamped) return;
    const double q = pn->value[0];
    pn->ensure_grad()[0] += nd.grad[0] * (q - target) / (q * (1.0 - q));
  });
}

}  // namespace savg::nn
