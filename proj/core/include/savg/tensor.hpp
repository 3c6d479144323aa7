#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "savg/errors.hpp"

namespace savg::nn {

using Shape = std::vector<size_t>;

std::string shape_str(const Shape& s);
size_t shape_numel(const Shape& s);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One tape entry. value is row-major; grad is allocated on first accumulation.
// backward_fn reads this node's grad and accumulates into the parents' grads.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;
  const char* op = "leaf";

  size_t size() const { return value.size(); }
  std::vector<double>& ensure_grad();
};

// Thread-local switch: while disabled, ops produce constant nodes with no tape
// state, which is what inference paths use.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
  Tensor(Shape shape, double fill, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t rank() const { return node_->shape.size(); }
  size_t dim(size_t i) const { return node_->shape[i]; }
  size_t size() const { return node_->value.size(); }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& raw() { return node_->value; }
  const std::vector<double>& grad() const;
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  double item() const;
  void zero_grad();
  NodePtr node() const { return node_; }

 private:
  NodePtr node_;
};

// Builds a result node: computes requires_grad from the parents and the
// thread-local switch, drops tape state for constants, and NaN-checks the
// value (NumericalError names the op).
Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents, std::function<void(TensorNode&)> backward_fn);

// Reverse traversal from a scalar loss; gradients accumulate across all uses.
void backward(const Tensor& loss);

// grad += coeff * src  (allocates/zero-fills on first use)
void accumulate(TensorNode& node, const std::vector<double>& src, double coeff = 1.0);

struct Parameter {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

struct InitSpec {
  enum Kind { FanIn, Zero, Const } kind = FanIn;
  size_t fan_in = 1;
  double value = 0.0;

  static InitSpec fan_in_uniform(size_t fan_in) { return {FanIn, fan_in, 0.0}; }
  static InitSpec zeros() { return {Zero, 1, 0.0}; }
  static InitSpec constant(double v) { return {Const, 1, v}; }
};

// Named parameters in registration order. Initialization is seeded per
// parameter from a hash of (store seed, name), so layouts are reproducible
// regardless of creation order elsewhere.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

  Tensor create(const std::string& name, Shape shape, InitSpec init, bool frozen = false);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  std::vector<Parameter*> trainable() const;
  size_t total_size() const;
  uint64_t seed() const { return seed_; }
  void zero_grad();

 private:
  uint64_t seed_;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, size_t> index_;
};

}  // namespace savg::nn
