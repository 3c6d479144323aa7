#pragma once

#include <vector>

#include "savg/tensor.hpp"

namespace savg::nn {

// Negative scale-invariant SDR of est against reference ref, guarded by
// eps = 1e-8 on both norms so perfect and orthogonal estimates stay finite.
double si_sdr_loss_value(const std::vector<double>& ref, const std::vector<double>& est);

// The metric in dB; always the exact negation of si_sdr_loss_value.
double si_sdr_db(const std::vector<double>& ref, const std::vector<double>& est);

// Differentiable w.r.t. est; ref is treated as a constant.
Tensor si_sdr_loss(const Tensor& ref, const Tensor& est);

struct DeltaSpecResolution {
  size_t fft_size;
  size_t hop;
  size_t window;
};

struct HybridLossConfig {
  double gamma = 1.0;
  bool log_magnitude = false;
  std::vector<DeltaSpecResolution> resolutions = {
      {512, 50, 240}, {1024, 120, 600}, {2048, 240, 1200}};
};

// Mean absolute error between the temporal first differences of the two
// linear magnitude spectrograms at one resolution (Hann analysis window,
// zero-padded to fft_size). log_magnitude switches to log(1 + |S|).
Tensor freq_delta_loss(const Tensor& ref, const Tensor& est, const DeltaSpecResolution& res,
                       bool log_magnitude = false);
double freq_delta_loss_value(const std::vector<double>& ref, const std::vector<double>& est,
                             const DeltaSpecResolution& res, bool log_magnitude = false);

// si_sdr_loss + gamma * mean over resolutions of freq_delta_loss
Tensor hybrid_loss(const Tensor& ref, const Tensor& est, const HybridLossConfig& cfg = {});

// Binary cross-entropy for a hard target; prob is a 1-element tensor clamped
// to [1e-7, 1 - 1e-7].
Tensor bce_loss(double target, const Tensor& prob);
double bce_loss_value(double target, double prob);

}  // namespace savg::nn
