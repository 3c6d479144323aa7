#include "savg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "savg/errors.hpp"

namespace savg::nn {

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt, double eps) {
  for (const auto& t : wrt) {
    if (!t.requires_grad()) {
      throw InvalidInputError("grad_check: checked tensor does not require gradients");
    }
    const_cast<Tensor&>(t).zero_grad();
  }
  Tensor loss = f();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(wrt.size());
  for (const auto& t : wrt) {
    analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0));
  }

  double max_rel = 0.0;
  NoGradGuard no_grad;
  for (size_t ti = 0; ti < wrt.size(); ++ti) {
    auto& vals = const_cast<Tensor&>(wrt[ti]).raw();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double up = f().item();
      vals[i] = saved - eps;
      const double down = f().item();
      vals[i] = saved;
      const double cd = (up - down) / (2.0 * eps);
      const double a = analytic[ti][i];
      const double rel = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

double grad_check(const std::function<Tensor()>& f, ParamStore& store, double eps) {
  std::vector<Tensor> wrt;
  for (Parameter* p : store.trainable()) wrt.push_back(p->tensor);
  return grad_check(f, wrt, eps);
}

}  // namespace savg::nn
