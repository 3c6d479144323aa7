#include "savg/optim.hpp"

#include <cmath>

#include "savg/errors.hpp"

namespace savg::nn {

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {}

void Adam::step() {
  const auto& params = store_->all();
  if (moments_.size() < params.size()) moments_.resize(params.size());
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    if (p.frozen) continue;
    if (!p.tensor.has_grad()) {
      throw ConfigError("adam: no gradient for trainable parameter '" + p.name + "'");
    }
    auto& mom = moments_[pi];
    const size_t n = p.tensor.size();
    if (mom.m.empty()) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    auto& theta = p.tensor.raw();
    const auto& g = p.tensor.grad();
    for (size_t i = 0; i < n; ++i) {
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

LrSchedule::Action LrSchedule::observe(double dev_loss) {
  if (dev_loss < best_) {
    best_ = dev_loss;
    since_best_ = 0;
    return Action::None;
  }
  ++since_best_;
  if (since_best_ >= 20) return Action::Stop;
  if (since_best_ % 6 == 0) return Action::Halve;
  return Action::None;
}

}  // namespace savg::nn
