#include "savg/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "savg/rng.hpp"

namespace savg::nn {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

std::vector<double>& TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                     std::to_string(data.size()));
  }
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : Tensor(shape, std::vector<double>(shape_numel(shape), fill), requires_grad) {}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw InvalidInputError("tensor: gradient not populated");
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("tensor: item() on non-scalar " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

void accumulate(TensorNode& node, const std::vector<double>& src, double coeff) {
  auto& g = node.ensure_grad();
  if (coeff == 1.0) {
    for (size_t i = 0; i < src.size(); ++i) g[i] += src[i];
  } else {
    for (size_t i = 0; i < src.size(); ++i) g[i] += coeff * src[i];
  }
}

Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               std::vector<Tensor> parents, std::function<void(TensorNode&)> backward_fn) {
  if (shape_numel(shape) != value.size()) {
    throw ShapeError(std::string(op) + ": result shape " + shape_str(shape) +
                     " does not match value length " + std::to_string(value.size()));
  }
  for (double v : value) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(op) + ": non-finite value in result");
    }
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) {
      if (p.defined() && p.requires_grad()) {
        needs = true;
        break;
      }
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(node);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw InvalidInputError("backward: loss must be a defined scalar tensor");
  }
  if (!loss.requires_grad()) return;

  // iterative post-order DFS; reversed it yields a valid topological order
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    bool descended = false;
    while (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
        descended = true;
        break;
      }
    }
    if (!descended && f.next_parent >= f.node->parents.size()) {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Tensor ParamStore::create(const std::string& name, Shape shape, InitSpec init, bool frozen) {
  if (index_.count(name)) throw ConfigError("parameter name already registered: " + name);
  const size_t n = shape_numel(shape);
  std::vector<double> data(n, 0.0);
  switch (init.kind) {
    case InitSpec::FanIn: {
      Rng rng = Rng::derive(seed_, name);
      const double k = 1.0 / std::sqrt(static_cast<double>(init.fan_in == 0 ? 1 : init.fan_in));
      for (auto& v : data) v = rng.uniform(-k, k);
      break;
    }
    case InitSpec::Zero:
      break;
    case InitSpec::Const:
      for (auto& v : data) v = init.value;
      break;
  }
  Tensor t(std::move(shape), std::move(data), !frozen);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->tensor = t;
  p->frozen = frozen;
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return t;
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

std::vector<Parameter*> ParamStore::trainable() const {
  std::vector<Parameter*> out;
  for (const auto& p : params_) {
    if (!p->frozen) out.push_back(p.get());
  }
  return out;
}

size_t ParamStore::total_size() const {
  size_t n = 0;
  for (const auto& p : params_) n += p->tensor.size();
  return n;
}

void ParamStore::zero_grad() {
  for (const auto& p : params_) p->tensor.zero_grad();
}

}  // namespace savg::nn
