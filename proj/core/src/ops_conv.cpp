#include <Eigen/Dense>
#include <cmath>

#include "savg/ops.hpp"

namespace savg::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

namespace {

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) throw ShapeError(std::string(op) + ": " + msg);
}

size_t conv_out_len(const char* op, size_t in, size_t kernel, size_t stride, size_t pad,
                    size_t dilation) {
  const size_t span = dilation * (kernel - 1) + 1;
  require(in + 2 * pad >= span, op, "kernel does not fit input of length " + std::to_string(in));
  return (in + 2 * pad - span) / stride + 1;
}

void check_bias(const char* op, const Tensor& b, size_t cout) {
  if (b.defined()) {
    require(b.rank() == 1 && b.dim(0) == cout, op, "bias must have one entry per output channel");
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv1dSpec& spec) {
  require(x.rank() == 2 || x.rank() == 3, "conv1d",
          "expects (C,L) or (N,C,L), got " + shape_str(x.shape()));
  require(w.rank() == 3, "conv1d", "weight must be (Cout, Cin/groups, K)");
  require(spec.stride > 0 && spec.dilation > 0 && spec.groups > 0, "conv1d",
          "stride, dilation and groups must be positive");
  const bool batched = x.rank() == 3;
  const size_t n = batched ? x.dim(0) : 1;
  const size_t cin = batched ? x.dim(1) : x.dim(0);
  const size_t len = batched ? x.dim(2) : x.dim(1);
  const size_t cout = w.dim(0), cin_g = w.dim(1), kernel = w.dim(2);
  require(cin % spec.groups == 0 && cout % spec.groups == 0, "conv1d",
          "groups must divide both channel counts");
  require(cin_g == cin / spec.groups, "conv1d",
          "weight " + shape_str(w.shape()) + " incompatible with " + std::to_string(cin) +
              " input channels in " + std::to_string(spec.groups) + " groups");
  check_bias("conv1d", b, cout);
  const size_t lo = conv_out_len("conv1d", len, kernel, spec.stride, spec.pad, spec.dilation);
  Shape out_shape = batched ? Shape{n, cout, lo} : Shape{cout, lo};

  const auto& xv = x.value();
  const auto& wv = w.value();
  std::vector<double> out(n * cout * lo, 0.0);

  auto xn = x.node(), wn = w.node();
  auto bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};

  if (spec.groups == 1) {
    // im2col + single GEMM
    auto col = std::make_shared<std::vector<double>>(n * lo * cin * kernel, 0.0);
    for (size_t ni = 0; ni < n; ++ni) {
      for (size_t o = 0; o < lo; ++o) {
        double* dst = col->data() + (ni * lo + o) * cin * kernel;
        for (size_t ci = 0; ci < cin; ++ci) {
          for (size_t k = 0; k < kernel; ++k) {
            const long i = static_cast<long>(o * spec.stride + k * spec.dilation) -
                           static_cast<long>(spec.pad);
            if (i >= 0 && i < static_cast<long>(len)) {
              dst[ci * kernel + k] = xv[(ni * cin + ci) * len + static_cast<size_t>(i)];
            }
          }
        }
      }
    }
    std::vector<double> out_mat(n * lo * cout);
    {
      CMatMap C(col->data(), n * lo, cin * kernel);
      CMatMap W(wv.data(), cout, cin * kernel);
      MatMap O(out_mat.data(), n * lo, cout);
      O.noalias() = C * W.transpose();
    }
    for (size_t ni = 0; ni < n; ++ni) {
      for (size_t o = 0; o < lo; ++o) {
        for (size_t co = 0; co < cout; ++co) {
          out[(ni * cout + co) * lo + o] =
              out_mat[(ni * lo + o) * cout + co] + (b.defined() ? b.value()[co] : 0.0);
        }
      }
    }
    const auto sp = spec;
    return make_op(
        "conv1d", std::move(out_shape), std::move(out), parents,
        [xn, wn, bn, col, sp, n, cin, len, cout, kernel, lo](TensorNode& nd) {
          // regroup grad as (N*Lo, Cout)
          std::vector<double> gmat(n * lo * cout);
          for (size_t ni = 0; ni < n; ++ni) {
            for (size_t o = 0; o < lo; ++o) {
              for (size_t co = 0; co < cout; ++co) {
                gmat[(ni * lo + o) * cout + co] = nd.grad[(ni * cout + co) * lo + o];
              }
            }
          }
          CMatMap G(gmat.data(), n * lo, cout);
          if (wn->requires_grad) {
            CMatMap C(col->data(), n * lo, cin * kernel);
            MatMap GW(wn->ensure_grad().data(), cout, cin * kernel);
            GW.noalias() += G.transpose() * C;
          }
          if (bn && bn->requires_grad) {
            auto& gb = bn->ensure_grad();
            for (size_t r = 0; r < n * lo; ++r) {
              for (size_t co = 0; co < cout; ++co) gb[co] += gmat[r * cout + co];
            }
          }
          if (xn->requires_grad) {
            std::vector<double> gcol(n * lo * cin * kernel);
            {
              CMatMap W(wn->value.data(), cout, cin * kernel);
              MatMap GC(gcol.data(), n * lo, cin * kernel);
              GC.noalias() = G * W;
            }
            auto& gx = xn->ensure_grad();
            for (size_t ni = 0; ni < n; ++ni) {
              for (size_t o = 0; o < lo; ++o) {
                const double* src = gcol.data() + (ni * lo + o) * cin * kernel;
                for (size_t ci = 0; ci < cin; ++ci) {
                  for (size_t k = 0; k < kernel; ++k) {
                    const long i = static_cast<long>(o * sp.stride + k * sp.dilation) -
                                   static_cast<long>(sp.pad);
                    if (i >= 0 && i < static_cast<long>(len)) {
                      gx[(ni * cin + ci) * len + static_cast<size_t>(i)] += src[ci * kernel + k];
                    }
                  }
                }
              }
            }
          }
        });
  }

  // grouped path (sizes here stay small: depthwise TCN convs), direct loops
  const size_t cout_g = cout / spec.groups;
  for (size_t ni = 0; ni < n; ++ni) {
    for (size_t co = 0; co < cout; ++co) {
      const size_t gi = co / cout_g;
      for (size_t o = 0; o < lo; ++o) {
        double acc = b.defined() ? b.value()[co] : 0.0;
        for (size_t cig = 0; cig < cin_g; ++cig) {
          const size_t ci = gi * cin_g + cig;
          for (size_t k = 0; k < kernel; ++k) {
            const long i =
                static_cast<long>(o * spec.stride + k * spec.dilation) - static_cast<long>(spec.pad);
            if (i >= 0 && i < static_cast<long>(len)) {
              acc += xv[(ni * cin + ci) * len + static_cast<size_t>(i)] *
                     wv[(co * cin_g + cig) * kernel + k];
            }
          }
        }
        out[(ni * cout + co) * lo + o] = acc;
      }
    }
  }
  const auto sp = spec;
  return make_op(
      "conv1d", std::move(out_shape), std::move(out), parents,
      [xn, wn, bn, sp, n, cin, len, cout, cin_g, cout_g, kernel, lo](TensorNode& nd) {
        for (size_t ni = 0; ni < n; ++ni) {
          for (size_t co = 0; co < cout; ++co) {
            const size_t gi = co / cout_g;
            for (size_t o = 0; o < lo; ++o) {
              const double d = nd.grad[(ni * cout + co) * lo + o];
              if (bn && bn->requires_grad) bn->ensure_grad()[co] += d;
              for (size_t cig = 0; cig < cin_g; ++cig) {
                const size_t ci = gi * cin_g + cig;
                for (size_t k = 0; k < kernel; ++k) {
                  const long i = static_cast<long>(o * sp.stride + k * sp.dilation) -
                                 static_cast<long>(sp.pad);
                  if (i < 0 || i >= static_cast<long>(len)) continue;
                  const size_t xi = (ni * cin + ci) * len + static_cast<size_t>(i);
                  if (xn->requires_grad) {
                    xn->ensure_grad()[xi] += d * wn->value[(co * cin_g + cig) * kernel + k];
                  }
                  if (wn->requires_grad) {
                    wn->ensure_grad()[(co * cin_g + cig) * kernel + k] += d * xn->value[xi];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride_h, size_t stride_w,
              size_t pad_h, size_t pad_w) {
  require(x.rank() == 3 || x.rank() == 4, "conv2d",
          "expects (C,H,W) or (N,C,H,W), got " + shape_str(x.shape()));
  require(w.rank() == 4, "conv2d", "weight must be (Cout, Cin, Kh, Kw)");
  require(stride_h > 0 && stride_w > 0, "conv2d", "strides must be positive");
  const bool batched = x.rank() == 4;
  const size_t n = batched ? x.dim(0) : 1;
  const size_t cin = x.dim(batched ? 1 : 0);
  const size_t h = x.dim(batched ? 2 : 1);
  const size_t wd = x.dim(batched ? 3 : 2);
  const size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == cin, "conv2d",
          "weight " + shape_str(w.shape()) + " expects " + std::to_string(w.dim(1)) +
              " input channels, input has " + std::to_string(cin));
  check_bias("conv2d", b, cout);
  const size_t ho = conv_out_len("conv2d", h, kh, stride_h, pad_h, 1);
  const size_t wo = conv_out_len("conv2d", wd, kw, stride_w, pad_w, 1);
  Shape out_shape = batched ? Shape{n, cout, ho, wo} : Shape{cout, ho, wo};

  const auto& xv = x.value();
  const size_t patch = cin * kh * kw;
  auto col = std::make_shared<std::vector<double>>(n * ho * wo * patch, 0.0);
  for (size_t ni = 0; ni < n; ++ni) {
    for (size_t oh = 0; oh < ho; ++oh) {
      for (size_t ow = 0; ow < wo; ++ow) {
        double* dst = col->data() + ((ni * ho + oh) * wo + ow) * patch;
        for (size_t ci = 0; ci < cin; ++ci) {
          for (size_t r = 0; r < kh; ++r) {
            const long ih = static_cast<long>(oh * stride_h + r) - static_cast<long>(pad_h);
            if (ih < 0 || ih >= static_cast<long>(h)) continue;
            for (size_t c = 0; c < kw; ++c) {
              const long iw = static_cast<long>(ow * stride_w + c) - static_cast<long>(pad_w);
              if (iw < 0 || iw >= static_cast<long>(wd)) continue;
              dst[(ci * kh + r) * kw + c] =
                  xv[((ni * cin + ci) * h + static_cast<size_t>(ih)) * wd + static_cast<size_t>(iw)];
            }
          }
        }
      }
    }
  }
  std::vector<double> out_mat(n * ho * wo * cout);
  {
    CMatMap C(col->data(), n * ho * wo, patch);
    CMatMap W(w.value().data(), cout, patch);
    MatMap O(out_mat.data(), n * ho * wo, cout);
    O.noalias() = C * W.transpose();
  }
  std::vector<double> out(n * cout * ho * wo);
  for (size_t ni = 0; ni < n; ++ni) {
    for (size_t pix = 0; pix < ho * wo; ++pix) {
      for (size_t co = 0; co < cout; ++co) {
        out[(ni * cout + co) * ho * wo + pix] =
            out_mat[(ni * ho * wo + pix) * cout + co] + (b.defined() ? b.value()[co] : 0.0);
      }
    }
  }
  auto xn = x.node(), wn = w.node();
  auto bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(
      "conv2d", std::move(out_shape), std::move(out), parents,
      [xn, wn, bn, col, n, cin, h, wd, cout, kh, kw, ho, wo, patch, stride_h, stride_w, pad_h,
       pad_w](TensorNode& nd) {
        std::vector<double> gmat(n * ho * wo * cout);
        for (size_t ni = 0; ni < n; ++ni) {
          for (size_t pix = 0; pix < ho * wo; ++pix) {
            for (size_t co = 0; co < cout; ++co) {
              gmat[(ni * ho * wo + pix) * cout + co] = nd.grad[(ni * cout + co) * ho * wo + pix];
            }
          }
        }
        CMatMap G(gmat.data(), n * ho * wo, cout);
        if (wn->requires_grad) {
          CMatMap C(col->data(), n * ho * wo, patch);
          MatMap GW(wn->ensure_grad().data(), cout, patch);
          GW.noalias() += G.transpose() * C;
        }
        if (bn && bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (size_t r = 0; r < n * ho * wo; ++r) {
            for (size_t co = 0; co < cout; ++co) gb[co] += gmat[r * cout + co];
          }
        }
        if (xn->requires_grad) {
          std::vector<double> gcol(n * ho * wo * patch);
          {
            CMatMap W(wn->value.data(), cout, patch);
            MatMap GC(gcol.data(), n * ho * wo, patch);
            GC.noalias() = G * W;
          }
          auto& gx = xn->ensure_grad();
          for (size_t ni = 0; ni < n; ++ni) {
            for (size_t oh = 0; oh < ho; ++oh) {
              for (size_t ow = 0; ow < wo; ++ow) {
                const double* src = gcol.data() + ((ni * ho + oh) * wo + ow) * patch;
                for (size_t ci = 0; ci < cin; ++ci) {
                  for (size_t r = 0; r < kh; ++r) {
                    const long ih = static_cast<long>(oh * stride_h + r) - static_cast<long>(pad_h);
                    if (ih < 0 || ih >= static_cast<long>(h)) continue;
                    for (size_t c = 0; c < kw; ++c) {
                      const long iw =
                          static_cast<long>(ow * stride_w + c) - static_cast<long>(pad_w);
                      if (iw < 0 || iw >= static_cast<long>(wd)) continue;
                      gx[((ni * cin + ci) * h + static_cast<size_t>(ih)) * wd +
                         static_cast<size_t>(iw)] += src[(ci * kh + r) * kw + c];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride_d, size_t stride_h,
              size_t stride_w, size_t pad_d, size_t pad_h, size_t pad_w) {
  require(x.rank() == 4, "conv3d", "expects (C,D,H,W), got " + shape_str(x.shape()));
  require(w.rank() == 5, "conv3d", "weight must be (Cout, Cin, Kd, Kh, Kw)");
  require(stride_d > 0 && stride_h > 0 && stride_w > 0, "conv3d", "strides must be positive");
  const size_t cin = x.dim(0), dep = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const size_t cout = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  require(w.dim(1) == cin, "conv3d", "input channel mismatch");
  check_bias("conv3d", b, cout);
  const size_t dout = conv_out_len("conv3d", dep, kd, stride_d, pad_d, 1);
  const size_t ho = conv_out_len("conv3d", h, kh, stride_h, pad_h, 1);
  const size_t wo = conv_out_len("conv3d", wd, kw, stride_w, pad_w, 1);

  const auto& xv = x.value();
  const auto& wv = w.value();
  std::vector<double> out(cout * dout * ho * wo);
  for (size_t co = 0; co < cout; ++co) {
    for (size_t od = 0; od < dout; ++od) {
      for (size_t oh = 0; oh < ho; ++oh) {
        for (size_t ow = 0; ow < wo; ++ow) {
          double acc = b.defined() ? b.value()[co] : 0.0;
          for (size_t ci = 0; ci < cin; ++ci) {
            for (size_t fd = 0; fd < kd; ++fd) {
              const long id = static_cast<long>(od * stride_d + fd) - static_cast<long>(pad_d);
              if (id < 0 || id >= static_cast<long>(dep)) continue;
              for (size_t r = 0; r < kh; ++r) {
                const long ih = static_cast<long>(oh * stride_h + r) - static_cast<long>(pad_h);
                if (ih < 0 || ih >= static_cast<long>(h)) continue;
                for (size_t c = 0; c < kw; ++c) {
                  const long iw = static_cast<long>(ow * stride_w + c) - static_cast<long>(pad_w);
                  if (iw < 0 || iw >= static_cast<long>(wd)) continue;
                  acc += xv[((ci * dep + static_cast<size_t>(id)) * h + static_cast<size_t>(ih)) *
                                wd +
                            static_cast<size_t>(iw)] *
                         wv[(((co * cin + ci) * kd + fd) * kh + r) * kw + c];
                }
              }
            }
          }
          out[((co * dout + od) * ho + oh) * wo + ow] = acc;
        }
      }
    }
  }
  auto xn = x.node(), wn = w.node();
  auto bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(
      "conv3d", {cout, dout, ho, wo}, std::move(out), parents,
      [xn, wn, bn, cin, dep, h, wd, cout, kd, kh, kw, dout, ho, wo, stride_d, stride_h, stride_w,
       pad_d, pad_h, pad_w](TensorNode& nd) {
        for (size_t co = 0; co < cout; ++co) {
          for (size_t od = 0; od < dout; ++od) {
            for (size_t oh = 0; oh < ho; ++oh) {
              for (size_t ow = 0; ow < wo; ++ow) {
                const double d = nd.grad[((co * dout + od) * ho + oh) * wo + ow];
                if (bn && bn->requires_grad) bn->ensure_grad()[co] += d;
                for (size_t ci = 0; ci < cin; ++ci) {
                  for (size_t fd = 0; fd < kd; ++fd) {
                    const long id =
                        static_cast<long>(od * stride_d + fd) - static_cast<long>(pad_d);
                    if (id < 0 || id >= static_cast<long>(dep)) continue;
                    for (size_t r = 0; r < kh; ++r) {
                      const long ih =
                          static_cast<long>(oh * stride_h + r) - static_cast<long>(pad_h);
                      if (ih < 0 || ih >= static_cast<long>(h)) continue;
                      for (size_t c = 0; c < kw; ++c) {
                        const long iw =
                            static_cast<long>(ow * stride_w + c) - static_cast<long>(pad_w);
                        if (iw < 0 || iw >= static_cast<long>(wd)) continue;
                        const size_t xi =
                            ((ci * dep + static_cast<size_t>(id)) * h + static_cast<size_t>(ih)) *
                                wd +
                            static_cast<size_t>(iw);
                        const size_t wi = (((co * cin + ci) * kd + fd) * kh + r) * kw + c;
                        if (xn->requires_grad) xn->ensure_grad()[xi] += d * wn->value[wi];
                        if (wn->requires_grad) wn->ensure_grad()[wi] += d * xn->value[xi];
                      }
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor transposed_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride) {
  require(x.rank() == 2 || x.rank() == 3, "transposed_conv1d",
          "expects (C,L) or (N,C,L), got " + shape_str(x.shape()));
  require(w.rank() == 3, "transposed_conv1d", "weight must be (Cin, Cout, K)");
  require(stride > 0, "transposed_conv1d", "stride must be positive");
  const bool batched = x.rank() == 3;
  const size_t n = batched ? x.dim(0) : 1;
  const size_t cin = x.dim(batched ? 1 : 0);
  const size_t len = x.dim(batched ? 2 : 1);
  const size_t cout = w.dim(1), kernel = w.dim(2);
  require(w.dim(0) == cin, "transposed_conv1d",
          "weight " + shape_str(w.shape()) + " expects " + std::to_string(w.dim(0)) +
              " input channels, input has " + std::to_string(cin));
  check_bias("transposed_conv1d", b, cout);
  const size_t lo = (len - 1) * stride + kernel;
  Shape out_shape = batched ? Shape{n, cout, lo} : Shape{cout, lo};

  // (N*L, Cin) view of x
  const auto& xv = x.value();
  auto xmat = std::make_shared<std::vector<double>>(n * len * cin);
  for (size_t ni = 0; ni < n; ++ni) {
    for (size_t ci = 0; ci < cin; ++ci) {
      for (size_t l = 0; l < len; ++l) {
        (*xmat)[(ni * len + l) * cin + ci] = xv[(ni * cin + ci) * len + l];
      }
    }
  }
  std::vector<double> out(n * cout * lo, 0.0);
  const auto& wv = w.value();
  std::vector<double> wk(cin * cout), pk(n * len * cout);
  for (size_t k = 0; k < kernel; ++k) {
    for (size_t ci = 0; ci < cin; ++ci) {
      for (size_t co = 0; co < cout; ++co) wk[ci * cout + co] = wv[(ci * cout + co) * kernel + k];
    }
    {
      CMatMap X(xmat->data(), n * len, cin);
      CMatMap W(wk.data(), cin, cout);
      MatMap P(pk.data(), n * len, cout);
      P.noalias() = X * W;
    }
    for (size_t ni = 0; ni < n; ++ni) {
      for (size_t l = 0; l < len; ++l) {
        for (size_t co = 0; co < cout; ++co) {
          out[(ni * cout + co) * lo + l * stride + k] += pk[(ni * len + l) * cout + co];
        }
      }
    }
  }
  if (b.defined()) {
    for (size_t ni = 0; ni < n; ++ni) {
      for (size_t co = 0; co < cout; ++co) {
        for (size_t o = 0; o < lo; ++o) out[(ni * cout + co) * lo + o] += b.value()[co];
      }
    }
  }
  auto xn = x.node(), wn = w.node();
  auto bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(
      "transposed_conv1d", std::move(out_shape), std::move(out), parents,
      [xn, wn, bn, xmat, n, cin, len, cout, kernel, lo, stride](TensorNode& nd) {
        std::vector<double> gk(n * len * cout), wk(cin * cout), gxmat;
        if (xn->requires_grad) gxmat.assign(n * len * cin, 0.0);
        for (size_t k = 0; k < kernel; ++k) {
          for (size_t ni = 0; ni < n; ++ni) {
            for (size_t l = 0; l < len; ++l) {
              for (size_t co = 0; co < cout; ++co) {
                gk[(ni * len + l) * cout + co] = nd.grad[(ni * cout + co) * lo + l * stride + k];
              }
            }
          }
          CMatMap G(gk.data(), n * len, cout);
          if (xn->requires_grad) {
            for (size_t ci = 0; ci < cin; ++ci) {
              for (size_t co = 0; co < cout; ++co) {
                wk[ci * cout + co] = wn->value[(ci * cout + co) * kernel + k];
              }
            }
            CMatMap W(wk.data(), cin, cout);
            MatMap GX(gxmat.data(), n * len, cin);
            GX.noalias() += G * W.transpose();
          }
          if (wn->requires_grad) {
            std::vector<double> gw(cin * cout);
            CMatMap X(xmat->data(), n * len, cin);
            MatMap GW(gw.data(), cin, cout);
            GW.noalias() = X.transpose() * G;
            auto& g = wn->ensure_grad();
            for (size_t ci = 0; ci < cin; ++ci) {
              for (size_t co = 0; co < cout; ++co) {
                g[(ci * cout + co) * kernel + k] += gw[ci * cout + co];
              }
            }
          }
        }
        if (xn->requires_grad) {
          auto& gx = xn->ensure_grad();
          for (size_t ni = 0; ni < n; ++ni) {
            for (size_t ci = 0; ci < cin; ++ci) {
              for (size_t l = 0; l < len; ++l) {
                gx[(ni * cin + ci) * len + l] += gxmat[(ni * len + l) * cin + ci];
              }
            }
          }
        }
        if (bn && bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (size_t ni = 0; ni < n; ++ni) {
            for (size_t co = 0; co < cout; ++co) {
              for (size_t o = 0; o < lo; ++o) gb[co] += nd.grad[(ni * cout + co) * lo + o];
            }
          }
        }
      });
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride_h,
                         size_t stride_w) {
  require(x.rank() == 3, "transposed_conv2d", "expects (C,H,W), got " + shape_str(x.shape()));
  require(w.rank() == 4, "transposed_conv2d", "weight must be (Cin, Cout, Kh, Kw)");
  require(stride_h > 0 && stride_w > 0, "transposed_conv2d", "strides must be positive");
  const size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const size_t cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(0) == cin, "transposed_conv2d", "input channel mismatch");
  check_bias("transposed_conv2d", b, cout);
  const size_t ho = (h - 1) * stride_h + kh;
  const size_t wo = (wd - 1) * stride_w + kw;

  const auto& xv = x.value();
  const auto& wv = w.value();
  std::vector<double> out(cout * ho * wo, 0.0);
  if (b.defined()) {
    for (size_t co = 0; co < cout; ++co) {
      std::fill(out.begin() + co * ho * wo, out.begin() + (co + 1) * ho * wo, b.value()[co]);
    }
  }
  for (size_t ci = 0; ci < cin; ++ci) {
    for (size_t ih = 0; ih < h; ++ih) {
      for (size_t iw = 0; iw < wd; ++iw) {
        const double xval = xv[(ci * h + ih) * wd + iw];
        if (xval == 0.0) continue;
        for (size_t co = 0; co < cout; ++co) {
          const double* wrow = wv.data() + ((ci * cout + co) * kh) * kw;
          double* orow = out.data() + co * ho * wo;
          for (size_t r = 0; r < kh; ++r) {
            const size_t oh = ih * stride_h + r;
            for (size_t c = 0; c < kw; ++c) {
              orow[oh * wo + iw * stride_w + c] += xval * wrow[r * kw + c];
            }
          }
        }
      }
    }
  }
  auto xn = x.node(), wn = w.node();
  auto bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b} : std::vector<Tensor>{x, w};
  return make_op(
      "transposed_conv2d", {cout, ho, wo}, std::move(out), parents,
      [xn, wn, bn, cin, h, wd, cout, kh, kw, ho, wo, stride_h, stride_w](TensorNode& nd) {
        if (bn && bn->requires_grad) {
          auto& gb = bn->ensure_grad();
          for (size_t co = 0; co < cout; ++co) {
            for (size_t pix = 0; pix < ho * wo; ++pix) gb[co] += nd.grad[co * ho * wo + pix];
          }
        }
        for (size_t ci = 0; ci < cin; ++ci) {
          for (size_t ih = 0; ih < h; ++ih) {
            for (size_t iw = 0; iw < wd; ++iw) {
              const size_t xi = (ci * h + ih) * wd + iw;
              for (size_t co = 0; co < cout; ++co) {
                const double* grow = nd.grad.data() + co * ho * wo;
                for (size_t r = 0; r < kh; ++r) {
                  const size_t oh = ih * stride_h + r;
                  for (size_t c = 0; c < kw; ++c) {
                    const double g = grow[oh * wo + iw * stride_w + c];
                    const size_t wi = ((ci * cout + co) * kh + r) * kw + c;
                    if (xn->requires_grad) xn->ensure_grad()[xi] += g * wn->value[wi];
                    if (wn->requires_grad) wn->ensure_grad()[wi] += g * xn->value[xi];
                  }
                }
              }
            }
          }
        }
      });
}

}  // namespace savg::nn
