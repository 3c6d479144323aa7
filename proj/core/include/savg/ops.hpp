#pragma once

#include <utility>

#include "savg/tensor.hpp"

namespace savg::nn {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
// alpha is a 1-element learnable slope for the negative part
Tensor prelu(const Tensor& a, const Tensor& alpha);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);

// ---- reductions / shape ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a, const std::vector<size_t>& perm);
Tensor slice_axis(const Tensor& a, size_t axis, size_t start, size_t len);
Tensor concat(const std::vector<Tensor>& parts, size_t axis);
// (A, C) -> (A, f, C), each row repeated f times along the new middle axis
Tensor repeat_middle(const Tensor& a, size_t f);

// ---- dense ----
Tensor matmul(const Tensor& a, const Tensor& b);  // (n,k) x (k,m)
// x: (..., In), w: (In, Out), optional bias (Out)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});
Tensor softmax_lastdim(const Tensor& a);
// normalizes over the last axis; gain/bias have that axis's extent
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// ---- pooling ----
Tensor avg_pool1d(const Tensor& x, size_t kernel, size_t stride);  // (C,L) or (N,C,L)
Tensor adaptive_avg_pool1d(const Tensor& x, size_t out_len);

// ---- time interpolation (see interp_weight in stft.hpp) ----
Tensor interp_rows(const Tensor& v, size_t target_len);  // (L,D) -> (target_len,D)

// ---- attention ----
struct AttentionWeights {
  // one projection triple per head: wq/wk (C, dq), wv (C, dv); then the
  // concatenated heads (heads*dv) are projected back to C
  std::vector<Tensor> wq, wk, wv;
  Tensor wo;  // (heads*dv, C)
  Tensor bo;  // (C)
};
// x: (T, C); scaled dot-product over the T axis
Tensor multi_head_self_attention(const Tensor& x, const AttentionWeights& w);

// ---- convolutions (ops_conv.cpp) ----
struct Conv1dSpec {
  size_t stride = 1, pad = 0, dilation = 1, groups = 1;
};
// x: (C,L) or (N,C,L); w: (Cout, Cin/groups, K)
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, const Conv1dSpec& spec = {});
// x: (C,H,W) or (N,C,H,W); w: (Cout, Cin, Kh, Kw)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride_h = 1,
              size_t stride_w = 1, size_t pad_h = 0, size_t pad_w = 0);
// x: (C,D,H,W); w: (Cout, Cin, Kd, Kh, Kw)
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride_d, size_t stride_h,
              size_t stride_w, size_t pad_d, size_t pad_h, size_t pad_w);
// transposed convolutions produce the full (L-1)*stride + K output; callers
// crop the tail when a fixed length is required
// x: (C,L) or (N,C,L); w: (Cin, Cout, K)
Tensor transposed_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride = 1);
// x: (C,H,W); w: (Cin, Cout, Kh, Kw)
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, size_t stride_h = 1,
                         size_t stride_w = 1);

// ---- recurrent (ops_recurrent.cpp) ----
struct LstmWeights {
  Tensor w_ih;  // (4H, C)  gate order i,f,g,o
  Tensor w_hh;  // (4H, H)
  Tensor b;     // (4H)
};
// one step: x (N,C), h/c (N,H) -> {h', c'}
std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmWeights& w);
// x: (N,L,C) -> (N,L,2H); forward and backward passes concatenated
Tensor blstm_sequence(const Tensor& x, const LstmWeights& fwd, const LstmWeights& bwd);

}  // namespace savg::nn
