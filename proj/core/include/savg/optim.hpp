#pragma once

#include <limits>
#include <vector>

#include "savg/tensor.hpp"

namespace savg::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Frozen parameters are never touched.
class Adam {
 public:
  explicit Adam(ParamStore& store, AdamConfig cfg = {});

  // Applies one update from the gradients currently held by the store's
  // trainable parameters. Missing gradients raise ConfigError.
  void step();

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) { cfg_.lr = lr; }
  size_t steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  ParamStore* store_;
  AdamConfig cfg_;
  size_t t_ = 0;
  std::vector<Moments> moments_;  // parallel to store order, empty slots for frozen
};

// Dev-loss plateau schedule: halve after every 6 consecutive epochs without
// improvement, stop after 20.
class LrSchedule {
 public:
  enum class Action { None, Halve, Stop };

  Action observe(double dev_loss);

  double best() const { return best_; }
  int epochs_since_best() const { return since_best_; }

 private:
  double best_ = std::numeric_limits<double>::infinity();
  int since_best_ = 0;
};

}  // namespace savg::nn
