#include "savg/ops.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "savg/stft.hpp"

namespace savg::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

namespace {

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) throw ShapeError(std::string(op) + ": " + msg);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("elementwise_add", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto an = a.node(), bn = b.node();
  return make_op("elementwise_add", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& n) {
    if (an->requires_grad) accumulate(*an, n.grad);
    if (bn->requires_grad) accumulate(*bn, n.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto an = a.node(), bn = b.node();
  return make_op("sub", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& n) {
    if (an->requires_grad) accumulate(*an, n.grad);
    if (bn->requires_grad) accumulate(*bn, n.grad, -1.0);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto an = a.node(), bn = b.node();
  return make_op("mul", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& n) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = c * av[i];
  auto an = a.node();
  return make_op("scale", a.shape(), std::move(out), {a}, [an, c](TensorNode& n) {
    if (an->requires_grad) accumulate(*an, n.grad, c);
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  auto an = a.node();
  return make_op("relu", a.shape(), std::move(out), {a}, [an](TensorNode& n) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      if (an->value[i] > 0.0) g[i] += n.grad[i];
    }
  });
}

Tensor prelu(const Tensor& a, const Tensor& alpha) {
  require(alpha.size() == 1, "prelu", "alpha must be a single slope");
  const double al = alpha.value()[0];
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : al * av[i];
  auto an = a.node(), aln = alpha.node();
  return make_op("prelu", a.shape(), std::move(out), {a, alpha}, [an, aln, al](TensorNode& n) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) {
        g[i] += n.grad[i] * (an->value[i] > 0.0 ? 1.0 : al);
      }
    }
    if (aln->requires_grad) {
      double da = 0.0;
      for (size_t i = 0; i < n.grad.size(); ++i) {
        if (an->value[i] <= 0.0) da += n.grad[i] * an->value[i];
      }
      aln->ensure_grad()[0] += da;
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-av[i]));
  auto an = a.node();
  return make_op("sigmoid", a.shape(), std::move(out), {a}, [an](TensorNode& n) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.value[i];
      g[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor tanh_op(const Tensor& a) {
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(av[i]);
  auto an = a.node();
  return make_op("tanh", a.shape(), std::move(out), {a}, [an](TensorNode& n) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.value[i];
      g[i] += n.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  auto an = a.node();
  return make_op("sum", {1}, {s}, {a}, [an](TensorNode& n) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    const double d = n.grad[0];
    for (auto& gi : g) gi += d;
  });
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.size(), "reshape",
          "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto an = a.node();
  return make_op("reshape", std::move(shape), a.value(), {a}, [an](TensorNode& n) {
    if (an->requires_grad) accumulate(*an, n.grad);
  });
}

namespace {

std::vector<size_t> row_major_strides(const Shape& s) {
  std::vector<size_t> st(s.size(), 1);
  for (size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// index mapping for a permutation: out linear index -> in linear index
std::vector<size_t> permute_map(const Shape& in_shape, const std::vector<size_t>& perm) {
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  const auto in_st = row_major_strides(in_shape);
  const auto out_st = row_major_strides(out_shape);
  const size_t n = shape_numel(in_shape);
  std::vector<size_t> map(n);
  for (size_t o = 0; o < n; ++o) {
    size_t rest = o, idx = 0;
    for (size_t d = 0; d < perm.size(); ++d) {
      const size_t coord = rest / out_st[d];
      rest %= out_st[d];
      idx += coord * in_st[perm[d]];
    }
    map[o] = idx;
  }
  return map;
}

}  // namespace

Tensor transpose(const Tensor& a, const std::vector<size_t>& perm) {
  require(perm.size() == a.rank(), "transpose", "perm rank mismatch");
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.dim(perm[i]);
  auto map = std::make_shared<std::vector<size_t>>(permute_map(a.shape(), perm));
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t o = 0; o < out.size(); ++o) out[o] = av[(*map)[o]];
  auto an = a.node();
  return make_op("transpose", std::move(out_shape), std::move(out), {a}, [an, map](TensorNode& n) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (size_t o = 0; o < n.grad.size(); ++o) g[(*map)[o]] += n.grad[o];
  });
}

Tensor slice_axis(const Tensor& a, size_t axis, size_t start, size_t len) {
  require(axis < a.rank(), "slice", "axis out of range");
  require(start + len <= a.dim(axis), "slice",
          "slice [" + std::to_string(start) + "," + std::to_string(start + len) + ") exceeds axis " +
              std::to_string(axis) + " of " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const size_t in_axis = a.dim(axis);
  std::vector<double> out(outer * len * inner);
  const auto& av = a.value();
  for (size_t o = 0; o < outer; ++o) {
    const double* src = av.data() + (o * in_axis + start) * inner;
    double* dst = out.data() + o * len * inner;
    std::copy(src, src + len * inner, dst);
  }
  auto an = a.node();
  return make_op("slice", std::move(out_shape), std::move(out), {a},
                 [an, outer, inner, len, in_axis, start](TensorNode& n) {
                   if (!an->requires_grad) return;
                   auto& g = an->ensure_grad();
                   for (size_t o = 0; o < outer; ++o) {
                     const double* src = n.grad.data() + o * len * inner;
                     double* dst = g.data() + (o * in_axis + start) * inner;
                     for (size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
  require(!parts.empty(), "concat", "no inputs");
  const Shape& base = parts[0].shape();
  require(axis < base.size(), "concat", "axis out of range");
  size_t total_axis = 0;
  for (const auto& p : parts) {
    require(p.rank() == base.size(), "concat", "rank mismatch");
    for (size_t d = 0; d < base.size(); ++d) {
      require(d == axis || p.dim(d) == base[d], "concat",
              "shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(base));
    }
    total_axis += p.dim(axis);
  }
  Shape out_shape = base;
  out_shape[axis] = total_axis;
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= base[i];
  for (size_t i = axis + 1; i < base.size(); ++i) inner *= base[i];

  std::vector<double> out(shape_numel(out_shape));
  size_t offset = 0;
  for (const auto& p : parts) {
    const size_t pa = p.dim(axis);
    const auto& pv = p.value();
    for (size_t o = 0; o < outer; ++o) {
      std::copy(pv.data() + o * pa * inner, pv.data() + (o + 1) * pa * inner,
                out.data() + (o * total_axis + offset) * inner);
    }
    offset += pa;
  }
  std::vector<NodePtr> nodes;
  std::vector<size_t> axis_sizes;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    axis_sizes.push_back(p.dim(axis));
  }
  return make_op("concat", std::move(out_shape), std::move(out), parts,
                 [nodes, axis_sizes, outer, inner, total_axis](TensorNode& n) {
                   size_t offset = 0;
                   for (size_t pi = 0; pi < nodes.size(); ++pi) {
                     const size_t pa = axis_sizes[pi];
                     if (nodes[pi]->requires_grad) {
                       auto& g = nodes[pi]->ensure_grad();
                       for (size_t o = 0; o < outer; ++o) {
                         const double* src = n.grad.data() + (o * total_axis + offset) * inner;
                         double* dst = g.data() + o * pa * inner;
                         for (size_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
                       }
                     }
                     offset += pa;
                   }
                 });
}

Tensor repeat_middle(const Tensor& a, size_t f) {
  require(a.rank() == 2, "repeat_middle", "expects a rank-2 input, got " + shape_str(a.shape()));
  const size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(rows * f * cols);
  const auto& av = a.value();
  for (size_t r = 0; r < rows; ++r) {
    for (size_t j = 0; j < f; ++j) {
      std::copy(av.data() + r * cols, av.data() + (r + 1) * cols,
                out.data() + (r * f + j) * cols);
    }
  }
  auto an = a.node();
  return make_op("repeat_middle", {rows, f, cols}, std::move(out), {a},
                 [an, rows, f, cols](TensorNode& n) {
                   if (!an->requires_grad) return;
                   auto& g = an->ensure_grad();
                   for (size_t r = 0; r < rows; ++r) {
                     for (size_t j = 0; j < f; ++j) {
                       const double* src = n.grad.data() + (r * f + j) * cols;
                       double* dst = g.data() + r * cols;
                       for (size_t c = 0; c < cols; ++c) dst[c] += src[c];
                     }
                   }
                 });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul",
          "expects rank-2 inputs, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  require(a.dim(1) == b.dim(0), "matmul",
          "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m);
  {
    CMatMap A(a.value().data(), n, k);
    CMatMap B(b.value().data(), k, m);
    MatMap O(out.data(), n, m);
    O.noalias() = A * B;
  }
  auto an = a.node(), bn = b.node();
  return make_op("matmul", {n, m}, std::move(out), {a, b}, [an, bn, n, k, m](TensorNode& nd) {
    CMatMap G(nd.grad.data(), n, m);
    if (an->requires_grad) {
      CMatMap B(bn->value.data(), k, m);
      MatMap GA(an->ensure_grad().data(), n, k);
      GA.noalias() += G * B.transpose();
    }
    if (bn->requires_grad) {
      CMatMap A(an->value.data(), n, k);
      MatMap GB(bn->ensure_grad().data(), k, m);
      GB.noalias() += A.transpose() * G;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() >= 1 && w.rank() == 2, "linear", "weight must be rank-2 (In,Out)");
  const size_t in = w.dim(0), out_dim = w.dim(1);
  require(x.dim(x.rank() - 1) == in, "linear",
          "input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  if (b.defined()) {
    require(b.rank() == 1 && b.dim(0) == out_dim, "linear", "bias shape mismatch");
  }
  const size_t rows = x.size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;

  std::vector<double> out(rows * out_dim);
  {
    CMatMap X(x.value().data(), rows, in);
    CMatMap W(w.value().data(), in, out_dim);
    MatMap O(out.data(), rows, out_dim);
    O.noalias() = X * W;
    if (b.defined()) {
      CVecMap bias(b.value().data(), out_dim);
      O.rowwise() += bias.transpose();
    }
  }
  auto xn = x.node(), wn = w.node();
  auto bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op("linear", std::move(out_shape), std::move(out), parents,
                 [xn, wn, bn, rows, in, out_dim](TensorNode& nd) {
                   CMatMap G(nd.grad.data(), rows, out_dim);
                   if (xn->requires_grad) {
                     CMatMap W(wn->value.data(), in, out_dim);
                     MatMap GX(xn->ensure_grad().data(), rows, in);
                     GX.noalias() += G * W.transpose();
                   }
                   if (wn->requires_grad) {
                     CMatMap X(xn->value.data(), rows, in);
                     MatMap GW(wn->ensure_grad().data(), in, out_dim);
                     GW.noalias() += X.transpose() * G;
                   }
                   if (bn && bn->requires_grad) {
                     auto& g = bn->ensure_grad();
                     for (size_t r = 0; r < rows; ++r) {
                       for (size_t c = 0; c < out_dim; ++c) g[c] += nd.grad[r * out_dim + c];
                     }
                   }
                 });
}

Tensor softmax_lastdim(const Tensor& a) {
  require(a.rank() >= 1, "softmax", "input must have at least one axis");
  const size_t cols = a.dim(a.rank() - 1);
  const size_t rows = a.size() / cols;
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t r = 0; r < rows; ++r) {
    const double* src = av.data() + r * cols;
    double* dst = out.data() + r * cols;
    double mx = src[0];
    for (size_t c = 1; c < cols; ++c) mx = std::max(mx, src[c]);
    double sum = 0.0;
    for (size_t c = 0; c < cols; ++c) {
      dst[c] = std::exp(src[c] - mx);
      sum += dst[c];
    }
    for (size_t c = 0; c < cols; ++c) dst[c] /= sum;
  }
  auto an = a.node();
  return make_op("softmax", a.shape(), std::move(out), {a}, [an, rows, cols](TensorNode& n) {
    if (!an->requires_grad) return;
    auto& g = an->ensure_grad();
    for (size_t r = 0; r < rows; ++r) {
      const double* y = n.value.data() + r * cols;
      const double* dy = n.grad.data() + r * cols;
      double dot = 0.0;
      for (size_t c = 0; c < cols; ++c) dot += y[c] * dy[c];
      double* dst = g.data() + r * cols;
      for (size_t c = 0; c < cols; ++c) dst[c] += y[c] * (dy[c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(x.rank() >= 1, "layer_norm", "input must have at least one axis");
  const size_t cols = x.dim(x.rank() - 1);
  require(gain.rank() == 1 && gain.dim(0) == cols, "layer_norm",
          "gain shape " + shape_str(gain.shape()) + " must cover the last axis of " +
              shape_str(x.shape()));
  require(bias.rank() == 1 && bias.dim(0) == cols, "layer_norm", "bias shape mismatch");
  const size_t rows = x.size() / cols;

  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_sigma = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.size());
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * cols;
    double mu = 0.0;
    for (size_t c = 0; c < cols; ++c) mu += src[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (size_t c = 0; c < cols; ++c) {
      const double d = src[c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    double* xh = xhat->data() + r * cols;
    double* dst = out.data() + r * cols;
    for (size_t c = 0; c < cols; ++c) {
      xh[c] = (src[c] - mu) * is;
      dst[c] = xh[c] * gv[c] + bv[c];
    }
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return make_op(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, xhat, inv_sigma, rows, cols](TensorNode& n) {
        for (size_t r = 0; r < rows; ++r) {
          const double* dy = n.grad.data() + r * cols;
          const double* xh = xhat->data() + r * cols;
          if (gn->requires_grad) {
            auto& gg = gn->ensure_grad();
            for (size_t c = 0; c < cols; ++c) gg[c] += dy[c] * xh[c];
          }
          if (bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (size_t c = 0; c < cols; ++c) gb[c] += dy[c];
          }
          if (xn->requires_grad) {
            auto& gx = xn->ensure_grad();
            const auto& gv = gn->value;
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (size_t c = 0; c < cols; ++c) {
              const double dxh = dy[c] * gv[c];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[c];
            }
            mean_dxh /= static_cast<double>(cols);
            mean_dxh_xh /= static_cast<double>(cols);
            const double is = (*inv_sigma)[r];
            double* dst = gx.data() + r * cols;
            for (size_t c = 0; c < cols; ++c) {
              const double dxh = dy[c] * gv[c];
              dst[c] += is * (dxh - mean_dxh - xh[c] * mean_dxh_xh);
            }
          }
        }
      });
}

Tensor avg_pool1d(const Tensor& x, size_t kernel, size_t stride) {
  require(x.rank() == 2 || x.rank() == 3, "avg_pool1d",
          "expects (C,L) or (N,C,L), got " + shape_str(x.shape()));
  require(kernel > 0 && stride > 0, "avg_pool1d", "kernel and stride must be positive");
  const size_t L = x.dim(x.rank() - 1);
  require(L >= kernel, "avg_pool1d", "input length shorter than kernel");
  const size_t rows = x.size() / L;  // N*C
  const size_t lo = (L - kernel) / stride + 1;
  Shape out_shape = x.shape();
  out_shape.back() = lo;
  std::vector<double> out(rows * lo);
  const auto& xv = x.value();
  const double inv_k = 1.0 / static_cast<double>(kernel);
  for (size_t r = 0; r < rows; ++r) {
    for (size_t o = 0; o < lo; ++o) {
      double s = 0.0;
      for (size_t k = 0; k < kernel; ++k) s += xv[r * L + o * stride + k];
      out[r * lo + o] = s * inv_k;
    }
  }
  auto xn = x.node();
  return make_op("avg_pool1d", std::move(out_shape), std::move(out), {x},
                 [xn, rows, L, lo, kernel, stride, inv_k](TensorNode& n) {
                   if (!xn->requires_grad) return;
                   auto& g = xn->ensure_grad();
                   for (size_t r = 0; r < rows; ++r) {
                     for (size_t o = 0; o < lo; ++o) {
                       const double d = n.grad[r * lo + o] * inv_k;
                       for (size_t k = 0; k < kernel; ++k) g[r * L + o * stride + k] += d;
                     }
                   }
                 });
}

Tensor adaptive_avg_pool1d(const Tensor& x, size_t out_len) {
  require(x.rank() == 2 || x.rank() == 3, "adaptive_avg_pool1d",
          "expects (C,L) or (N,C,L), got " + shape_str(x.shape()));
  require(out_len > 0, "adaptive_avg_pool1d", "out_len must be positive");
  const size_t L = x.dim(x.rank() - 1);
  require(L >= 1, "adaptive_avg_pool1d", "empty input");
  const size_t rows = x.size() / L;
  Shape out_shape = x.shape();
  out_shape.back() = out_len;

  // bin o covers [floor(o*L/out), ceil((o+1)*L/out))
  auto bins = std::make_shared<std::vector<std::pair<size_t, size_t>>>(out_len);
  for (size_t o = 0; o < out_len; ++o) {
    const size_t lo = o * L / out_len;
    const size_t hi = ((o + 1) * L + out_len - 1) / out_len;
    (*bins)[o] = {lo, std::max(hi, lo + 1)};
  }
  std::vector<double> out(rows * out_len);
  const auto& xv = x.value();
  for (size_t r = 0; r < rows; ++r) {
    for (size_t o = 0; o < out_len; ++o) {
      const auto [lo, hi] = (*bins)[o];
      double s = 0.0;
      for (size_t i = lo; i < hi; ++i) s += xv[r * L + i];
      out[r * out_len + o] = s / static_cast<double>(hi - lo);
    }
  }
  auto xn = x.node();
  return make_op("adaptive_avg_pool1d", std::move(out_shape), std::move(out), {x},
                 [xn, bins, rows, L, out_len](TensorNode& n) {
                   if (!xn->requires_grad) return;
                   auto& g = xn->ensure_grad();
                   for (size_t r = 0; r < rows; ++r) {
                     for (size_t o = 0; o < out_len; ++o) {
                       const auto [lo, hi] = (*bins)[o];
                       const double d = n.grad[r * out_len + o] / static_cast<double>(hi - lo);
                       for (size_t i = lo; i < hi; ++i) g[r * L + i] += d;
                     }
                   }
                 });
}

Tensor interp_rows(const Tensor& v, size_t target_len) {
  require(v.rank() == 2, "interp_rows", "expects (L,D), got " + shape_str(v.shape()));
  require(target_len >= 1, "interp_rows", "target_len must be >= 1");
  const size_t l_in = v.dim(0), dim = v.dim(1);
  auto weights = std::make_shared<std::vector<InterpWeight>>(target_len);
  for (size_t j = 0; j < target_len; ++j) (*weights)[j] = interp_weight(l_in, target_len, j);

  std::vector<double> out(target_len * dim);
  const auto& vv = v.value();
  for (size_t j = 0; j < target_len; ++j) {
    const auto& w = (*weights)[j];
    for (size_t d = 0; d < dim; ++d) {
      out[j * dim + d] = w.w0 * vv[w.i0 * dim + d] + w.w1 * vv[w.i1 * dim + d];
    }
  }
  auto vn = v.node();
  return make_op("interp_rows", {target_len, dim}, std::move(out), {v},
                 [vn, weights, dim](TensorNode& n) {
                   if (!vn->requires_grad) return;
                   auto& g = vn->ensure_grad();
                   const size_t target_len = weights->size();
                   for (size_t j = 0; j < target_len; ++j) {
                     const auto& w = (*weights)[j];
                     for (size_t d = 0; d < dim; ++d) {
                       g[w.i0 * dim + d] += w.w0 * n.grad[j * dim + d];
                       g[w.i1 * dim + d] += w.w1 * n.grad[j * dim + d];
                     }
                   }
                 });
}

Tensor multi_head_self_attention(const Tensor& x, const AttentionWeights& w) {
  require(x.rank() == 2, "multi_head_self_attention",
          "expects (T,C), got " + shape_str(x.shape()));
  const size_t heads = w.wq.size();
  require(heads > 0 && w.wk.size() == heads && w.wv.size() == heads,
          "multi_head_self_attention", "per-head projection lists must have equal size");
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (size_t h = 0; h < heads; ++h) {
    Tensor q = matmul(x, w.wq[h]);
    Tensor k = matmul(x, w.wk[h]);
    Tensor v = matmul(x, w.wv[h]);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
    Tensor scores = scale(matmul(q, transpose(k, {1, 0})), inv_sqrt_dk);
    Tensor attn = softmax_lastdim(scores);
    head_outputs.push_back(matmul(attn, v));
  }
  Tensor cat = concat(head_outputs, 1);
  return linear(cat, w.wo, w.bo);
}

}  // namespace savg::nn
