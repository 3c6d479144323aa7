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

double sigmoid_d(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_weights(const char* op, const LstmWeights& w, size_t c, size_t& h_out) {
  require(w.w_ih.rank() == 2 && w.w_hh.rank() == 2 && w.b.rank() == 1, op,
          "weights must be w_ih (4H,C), w_hh (4H,H), b (4H)");
  const size_t four_h = w.w_ih.dim(0);
  require(four_h % 4 == 0, op, "w_ih first axis must be 4H");
  const size_t h = four_h / 4;
  require(w.w_ih.dim(1) == c, op,
          "w_ih " + shape_str(w.w_ih.shape()) + " incompatible with input width " +
              std::to_string(c));
  require(w.w_hh.dim(0) == four_h && w.w_hh.dim(1) == h, op, "w_hh must be (4H,H)");
  require(w.b.dim(0) == four_h, op, "bias must be (4H)");
  h_out = h;
}

// Saved forward state for one lstm_step; both output nodes backprop through it.
struct StepSaved {
  size_t n, c, h;
  std::vector<double> gates;   // (N,4H) post-activation, blocks i,f,g,o
  std::vector<double> tanh_c;  // (N,H) tanh of the new cell
  NodePtr xn, hn, cn, wih, whh, bias;
};

// Chain rule from (d new_cell, d o-gate) down to inputs and weights.
void step_backprop(const StepSaved& s, const std::vector<double>& dc,
                   const std::vector<double>& do_) {
  const size_t n = s.n, c = s.c, h = s.h;
  std::vector<double> dz(n * 4 * h);
  for (size_t ni = 0; ni < n; ++ni) {
    const double* g4 = s.gates.data() + ni * 4 * h;
    for (size_t j = 0; j < h; ++j) {
      const double gi = g4[j], gf = g4[h + j], gg = g4[2 * h + j], go = g4[3 * h + j];
      const double cprev = s.cn->value[ni * h + j];
      const double d = dc[ni * h + j];
      dz[ni * 4 * h + j] = d * gg * gi * (1.0 - gi);
      dz[ni * 4 * h + h + j] = d * cprev * gf * (1.0 - gf);
      dz[ni * 4 * h + 2 * h + j] = d * gi * (1.0 - gg * gg);
      dz[ni * 4 * h + 3 * h + j] = do_[ni * h + j] * go * (1.0 - go);
      if (s.cn->requires_grad) s.cn->ensure_grad()[ni * h + j] += d * gf;
    }
  }
  CMatMap Z(dz.data(), n, 4 * h);
  if (s.xn->requires_grad) {
    CMatMap W(s.wih->value.data(), 4 * h, c);
    MatMap GX(s.xn->ensure_grad().data(), n, c);
    GX.noalias() += Z * W;
  }
  if (s.hn->requires_grad) {
    CMatMap W(s.whh->value.data(), 4 * h, h);
    MatMap GH(s.hn->ensure_grad().data(), n, h);
    GH.noalias() += Z * W;
  }
  if (s.wih->requires_grad) {
    CMatMap X(s.xn->value.data(), n, c);
    MatMap GW(s.wih->ensure_grad().data(), 4 * h, c);
    GW.noalias() += Z.transpose() * X;
  }
  if (s.whh->requires_grad) {
    CMatMap H(s.hn->value.data(), n, h);
    MatMap GW(s.whh->ensure_grad().data(), 4 * h, h);
    GW.noalias() += Z.transpose() * H;
  }
  if (s.bias->requires_grad) {
    auto& gb = s.bias->ensure_grad();
    for (size_t ni = 0; ni < n; ++ni) {
      for (size_t j = 0; j < 4 * h; ++j) gb[j] += dz[ni * 4 * h + j];
    }
  }
}

}  // namespace

std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmWeights& w) {
  require(x.rank() == 2 && h.rank() == 2 && c.rank() == 2, "lstm_step",
          "x, h, c must be rank-2 batches");
  const size_t n = x.dim(0), cw = x.dim(1);
  size_t hidden = 0;
  check_weights("lstm_step", w, cw, hidden);
  require(h.dim(0) == n && h.dim(1) == hidden, "lstm_step", "h must be (N,H)");
  require(c.dim(0) == n && c.dim(1) == hidden, "lstm_step", "c must be (N,H)");

  std::vector<double> z(n * 4 * hidden);
  {
    CMatMap X(x.value().data(), n, cw);
    CMatMap Wih(w.w_ih.value().data(), 4 * hidden, cw);
    CMatMap H(h.value().data(), n, hidden);
    CMatMap Whh(w.w_hh.value().data(), 4 * hidden, hidden);
    MatMap Z(z.data(), n, 4 * hidden);
    Z.noalias() = X * Wih.transpose() + H * Whh.transpose();
  }
  auto saved = std::make_shared<StepSaved>();
  saved->n = n;
  saved->c = cw;
  saved->h = hidden;
  saved->gates.resize(n * 4 * hidden);
  saved->tanh_c.resize(n * hidden);
  saved->xn = x.node();
  saved->hn = h.node();
  saved->cn = c.node();
  saved->wih = w.w_ih.node();
  saved->whh = w.w_hh.node();
  saved->bias = w.b.node();

  std::vector<double> new_h(n * hidden), new_c(n * hidden);
  const auto& bv = w.b.value();
  const auto& cv = c.value();
  for (size_t ni = 0; ni < n; ++ni) {
    double* g4 = saved->gates.data() + ni * 4 * hidden;
    for (size_t j = 0; j < hidden; ++j) {
      const double gi = sigmoid_d(z[ni * 4 * hidden + j] + bv[j]);
      const double gf = sigmoid_d(z[ni * 4 * hidden + hidden + j] + bv[hidden + j]);
      const double gg = std::tanh(z[ni * 4 * hidden + 2 * hidden + j] + bv[2 * hidden + j]);
      const double go = sigmoid_d(z[ni * 4 * hidden + 3 * hidden + j] + bv[3 * hidden + j]);
      g4[j] = gi;
      g4[hidden + j] = gf;
      g4[2 * hidden + j] = gg;
      g4[3 * hidden + j] = go;
      const double nc = gf * cv[ni * hidden + j] + gi * gg;
      const double tc = std::tanh(nc);
      saved->tanh_c[ni * hidden + j] = tc;
      new_c[ni * hidden + j] = nc;
      new_h[ni * hidden + j] = go * tc;
    }
  }
  std::vector<Tensor> parents = {x, h, c, w.w_ih, w.w_hh, w.b};
  Tensor out_h = make_op("lstm_step_h", {n, hidden}, std::move(new_h), parents,
                         [saved](TensorNode& nd) {
                           const size_t n = saved->n, h = saved->h;
                           std::vector<double> dc(n * h), do_(n * h);
                           for (size_t ni = 0; ni < n; ++ni) {
                             for (size_t j = 0; j < h; ++j) {
                               const double dh = nd.grad[ni * h + j];
                               const double tc = saved->tanh_c[ni * h + j];
                               const double go = saved->gates[ni * 4 * h + 3 * h + j];
                               dc[ni * h + j] = dh * go * (1.0 - tc * tc);
                               do_[ni * h + j] = dh * tc;
                             }
                           }
                           step_backprop(*saved, dc, do_);
                         });
  Tensor out_c = make_op("lstm_step_c", {n, hidden}, std::move(new_c), parents,
                         [saved](TensorNode& nd) {
                           std::vector<double> do_(saved->n * saved->h, 0.0);
                           step_backprop(*saved, nd.grad, do_);
                         });
  return {out_h, out_c};
}

namespace {

// Saved state for one direction of a fused BLSTM; time-major (L*N, .) layout.
struct DirSaved {
  std::vector<double> gates;   // (L*N, 4H) post-activation i,f,g,o
  std::vector<double> cell;    // (L*N, H)
  std::vector<double> tanh_c;  // (L*N, H)
  std::vector<double> hidden;  // (L*N, H)
};

void run_direction(const std::vector<double>& xmat, size_t l, size_t n, size_t c, size_t h,
                   const double* wih, const double* whh, const double* bias, bool reverse,
                   DirSaved& sv) {
  sv.gates.resize(l * n * 4 * h);
  sv.cell.resize(l * n * h);
  sv.tanh_c.resize(l * n * h);
  sv.hidden.resize(l * n * h);

  std::vector<double> pre(l * n * 4 * h);
  {
    CMatMap X(xmat.data(), l * n, c);
    CMatMap W(wih, 4 * h, c);
    MatMap P(pre.data(), l * n, 4 * h);
    P.noalias() = X * W.transpose();
  }
  for (size_t r = 0; r < l * n; ++r) {
    double* row = pre.data() + r * 4 * h;
    for (size_t j = 0; j < 4 * h; ++j) row[j] += bias[j];
  }

  std::vector<double> z(n * 4 * h);
  const double* h_prev = nullptr;  // block of sv.hidden once a step has run
  const double* c_prev = nullptr;
  for (size_t step = 0; step < l; ++step) {
    const size_t t = reverse ? l - 1 - step : step;
    std::copy(pre.data() + t * n * 4 * h, pre.data() + (t + 1) * n * 4 * h, z.data());
    if (h_prev) {
      CMatMap H(h_prev, n, h);
      CMatMap Whh(whh, 4 * h, h);
      MatMap Z(z.data(), n, 4 * h);
      Z.noalias() += H * Whh.transpose();
    }
    double* g4 = sv.gates.data() + t * n * 4 * h;
    double* ct = sv.cell.data() + t * n * h;
    double* tt = sv.tanh_c.data() + t * n * h;
    double* ht = sv.hidden.data() + t * n * h;
    for (size_t ni = 0; ni < n; ++ni) {
      const double* zr = z.data() + ni * 4 * h;
      for (size_t j = 0; j < h; ++j) {
        const double gi = sigmoid_d(zr[j]);
        const double gf = sigmoid_d(zr[h + j]);
        const double gg = std::tanh(zr[2 * h + j]);
        const double go = sigmoid_d(zr[3 * h + j]);
        g4[ni * 4 * h + j] = gi;
        g4[ni * 4 * h + h + j] = gf;
        g4[ni * 4 * h + 2 * h + j] = gg;
        g4[ni * 4 * h + 3 * h + j] = go;
        const double cp = c_prev ? c_prev[ni * h + j] : 0.0;
        const double nc = gf * cp + gi * gg;
        const double tc = std::tanh(nc);
        ct[ni * h + j] = nc;
        tt[ni * h + j] = tc;
        ht[ni * h + j] = go * tc;
      }
    }
    h_prev = ht;
    c_prev = ct;
  }
}

// BPTT for one direction. dh_out is (L*N, H) gathered from the output grad;
// writes into dpre (L*N, 4H) and accumulates recurrent weight grads directly.
void backprop_direction(const DirSaved& sv, size_t l, size_t n, size_t h, const double* whh,
                        const std::vector<double>& dh_out, bool reverse,
                        std::vector<double>& dpre, double* gwhh) {
  std::vector<double> carry_dh(n * h, 0.0), carry_dc(n * h, 0.0), dz(n * 4 * h);
  for (size_t step = 0; step < l; ++step) {
    // unwind in the reverse of the processing order
    const size_t t = reverse ? step : l - 1 - step;
    const bool has_prev = reverse ? (t + 1 < l) : (t > 0);
    const size_t pt = reverse ? t + 1 : (t > 0 ? t - 1 : 0);
    const double* g4 = sv.gates.data() + t * n * 4 * h;
    const double* tt = sv.tanh_c.data() + t * n * h;
    const double* cprev = has_prev ? sv.cell.data() + pt * n * h : nullptr;
    for (size_t ni = 0; ni < n; ++ni) {
      for (size_t j = 0; j < h; ++j) {
        const double gi = g4[ni * 4 * h + j];
        const double gf = g4[ni * 4 * h + h + j];
        const double gg = g4[ni * 4 * h + 2 * h + j];
        const double go = g4[ni * 4 * h + 3 * h + j];
        const double tc = tt[ni * h + j];
        const double dh = dh_out[(t * n + ni) * h + j] + carry_dh[ni * h + j];
        const double dc = carry_dc[ni * h + j] + dh * go * (1.0 - tc * tc);
        const double do_ = dh * tc;
        const double cp = cprev ? cprev[ni * h + j] : 0.0;
        dz[ni * 4 * h + j] = dc * gg * gi * (1.0 - gi);
        dz[ni * 4 * h + h + j] = dc * cp * gf * (1.0 - gf);
        dz[ni * 4 * h + 2 * h + j] = dc * gi * (1.0 - gg * gg);
        dz[ni * 4 * h + 3 * h + j] = do_ * go * (1.0 - go);
        carry_dc[ni * h + j] = dc * gf;
      }
    }
    CMatMap Z(dz.data(), n, 4 * h);
    {
      CMatMap Whh(whh, 4 * h, h);
      MatMap CD(carry_dh.data(), n, h);
      CD.noalias() = Z * Whh;
    }
    if (gwhh && has_prev) {
      CMatMap HP(sv.hidden.data() + pt * n * h, n, h);
      MatMap GW(gwhh, 4 * h, h);
      GW.noalias() += Z.transpose() * HP;
    }
    std::copy(dz.begin(), dz.end(), dpre.begin() + t * n * 4 * h);
  }
}

}  // namespace

Tensor blstm_sequence(const Tensor& x, const LstmWeights& fwd, const LstmWeights& bwd) {
  require(x.rank() == 3, "blstm", "expects (N,L,C), got " + shape_str(x.shape()));
  const size_t n = x.dim(0), l = x.dim(1), c = x.dim(2);
  size_t h = 0, h2 = 0;
  check_weights("blstm", fwd, c, h);
  check_weights("blstm", bwd, c, h2);
  require(h == h2, "blstm", "both directions must share the hidden size");

  // time-major (L*N, C) copy so each step is a contiguous block
  auto xmat = std::make_shared<std::vector<double>>(l * n * c);
  const auto& xv = x.value();
  for (size_t ni = 0; ni < n; ++ni) {
    for (size_t t = 0; t < l; ++t) {
      std::copy(xv.data() + (ni * l + t) * c, xv.data() + (ni * l + t + 1) * c,
                xmat->data() + (t * n + ni) * c);
    }
  }
  auto sv_f = std::make_shared<DirSaved>();
  auto sv_b = std::make_shared<DirSaved>();
  run_direction(*xmat, l, n, c, h, fwd.w_ih.value().data(), fwd.w_hh.value().data(),
                fwd.b.value().data(), false, *sv_f);
  run_direction(*xmat, l, n, c, h, bwd.w_ih.value().data(), bwd.w_hh.value().data(),
                bwd.b.value().data(), true, *sv_b);

  std::vector<double> out(n * l * 2 * h);
  for (size_t ni = 0; ni < n; ++ni) {
    for (size_t t = 0; t < l; ++t) {
      double* dst = out.data() + (ni * l + t) * 2 * h;
      std::copy(sv_f->hidden.data() + (t * n + ni) * h, sv_f->hidden.data() + (t * n + ni + 1) * h,
                dst);
      std::copy(sv_b->hidden.data() + (t * n + ni) * h, sv_b->hidden.data() + (t * n + ni + 1) * h,
                dst + h);
    }
  }
  auto xn = x.node();
  NodePtr wf_ih = fwd.w_ih.node(), wf_hh = fwd.w_hh.node(), bf = fwd.b.node();
  NodePtr wb_ih = bwd.w_ih.node(), wb_hh = bwd.w_hh.node(), bb = bwd.b.node();
  std::vector<Tensor> parents = {x, fwd.w_ih, fwd.w_hh, fwd.b, bwd.w_ih, bwd.w_hh, bwd.b};
  return make_op(
      "blstm", {n, l, 2 * h}, std::move(out), parents,
      [xn, wf_ih, wf_hh, bf, wb_ih, wb_hh, bb, sv_f, sv_b, xmat, n, l, c, h](TensorNode& nd) {
        std::vector<double> dh_out(l * n * h);
        std::vector<double> dpre(l * n * 4 * h);
        std::vector<double> gx_mat;
        const bool want_x = xn->requires_grad;
        if (want_x) gx_mat.assign(l * n * c, 0.0);

        const struct {
          const DirSaved* sv;
          bool reverse;
          NodePtr wih, whh, bias;
          size_t half;  // offset into the 2H output axis
        } dirs[2] = {{sv_f.get(), false, wf_ih, wf_hh, bf, 0},
                     {sv_b.get(), true, wb_ih, wb_hh, bb, h}};
        for (const auto& d : dirs) {
          for (size_t ni = 0; ni < n; ++ni) {
            for (size_t t = 0; t < l; ++t) {
              const double* src = nd.grad.data() + (ni * l + t) * 2 * h + d.half;
              std::copy(src, src + h, dh_out.data() + (t * n + ni) * h);
            }
          }
          std::fill(dpre.begin(), dpre.end(), 0.0);
          double* gwhh = d.whh->requires_grad ? d.whh->ensure_grad().data() : nullptr;
          backprop_direction(*d.sv, l, n, h, d.whh->value.data(), dh_out, d.reverse, dpre, gwhh);
          CMatMap DP(dpre.data(), l * n, 4 * h);
          if (d.wih->requires_grad) {
            CMatMap X(xmat->data(), l * n, c);
            MatMap GW(d.wih->ensure_grad().data(), 4 * h, c);
            GW.noalias() += DP.transpose() * X;
          }
          if (d.bias->requires_grad) {
            auto& gb = d.bias->ensure_grad();
            for (size_t r = 0; r < l * n; ++r) {
              for (size_t j = 0; j < 4 * h; ++j) gb[j] += dpre[r * 4 * h + j];
            }
          }
          if (want_x) {
            CMatMap W(d.wih->value.data(), 4 * h, c);
            MatMap GX(gx_mat.data(), l * n, c);
            GX.noalias() += DP * W;
          }
        }
        if (want_x) {
          auto& gx = xn->ensure_grad();
          for (size_t ni = 0; ni < n; ++ni) {
            for (size_t t = 0; t < l; ++t) {
              const double* src = gx_mat.data() + (t * n + ni) * c;
              double* dst = gx.data() + (ni * l + t) * c;
              for (size_t j = 0; j < c; ++j) dst[j] += src[j];
            }
          }
        }
      });
}

}  // namespace savg::nn
