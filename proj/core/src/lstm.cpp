#include "attnctl/lstm.hpp"

#include <cmath>

namespace attnctl {

LstmStep lstm_forward(const LstmWeights& weights, const DenseArray& x, const DenseArray& h_prev,
                      const DenseArray& c_prev) {
  const std::size_t hidden = h_prev.size();
  if (weights.w.rows() != 4 * hidden || weights.w.cols() != hidden || weights.u.rows() != 4 * hidden ||
      weights.u.cols() != x.size() || weights.b.size() != 4 * hidden || c_prev.size() != hidden) {
    throw DimensionError("lstm_forward: weights " + shape_to_string(weights.w.shape()) + "/" +
                         shape_to_string(weights.u.shape()) + " do not fit x " + shape_to_string(x.shape()) +
                         ", h " + shape_to_string(h_prev.shape()));
  }
  DenseArray pre = matvec(weights.w, h_prev);
  axpy(1.0, matvec(weights.u, x), pre);
  axpy(1.0, weights.b, pre);

  LstmStep s;
  s.x = x;
  s.h_prev = h_prev;
  s.c_prev = c_prev;
  s.input_gate = DenseArray({hidden});
  s.forget_gate = DenseArray({hidden});
  s.output_gate = DenseArray({hidden});
  s.candidate = DenseArray({hidden});
  s.c = DenseArray({hidden});
  s.tanh_c = DenseArray({hidden});
  s.h = DenseArray({hidden});
  for (std::size_t k = 0; k < hidden; ++k) {
    s.input_gate[k] = sigmoid(pre[k]);
    s.forget_gate[k] = sigmoid(pre[hidden + k]);
    s.output_gate[k] = sigmoid(pre[2 * hidden + k]);
    s.candidate[k] = std::tanh(pre[3 * hidden + k]);
    s.c[k] = s.forget_gate[k] * c_prev[k] + s.input_gate[k] * s.candidate[k];
    s.tanh_c[k] = std::tanh(s.c[k]);
    s.h[k] = s.output_gate[k] * s.tanh_c[k];
  }
  return s;
}

LstmBackward lstm_backward(const LstmWeights& weights, const LstmStep& s, const DenseArray& dh,
                           const DenseArray& dc_in, LstmGradRefs grads) {
  const std::size_t hidden = s.h.size();
  DenseArray dpre({4 * hidden});
  LstmBackward out;
  out.dc_prev = DenseArray({hidden});
  for (std::size_t k = 0; k < hidden; ++k) {
    const double dc = dh[k] * s.output_gate[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_in[k];
    const double d_out = dh[k] * s.tanh_c[k];
    const double d_in = dc * s.candidate[k];
    const double d_forget = dc * s.c_prev[k];
    const double d_cand = dc * s.input_gate[k];
    out.dc_prev[k] = dc * s.forget_gate[k];
    dpre[k] = d_in * s.input_gate[k] * (1.0 - s.input_gate[k]);
    dpre[hidden + k] = d_forget * s.forget_gate[k] * (1.0 - s.forget_gate[k]);
    dpre[2 * hidden + k] = d_out * s.output_gate[k] * (1.0 - s.output_gate[k]);
    dpre[3 * hidden + k] = d_cand * (1.0 - s.candidate[k] * s.candidate[k]);
  }
  add_outer(grads.w, dpre.data(), s.h_prev.data());
  add_outer(grads.u, dpre.data(), s.x.data());
  axpy(1.0, dpre, grads.b);
  out.dh_prev = matvec_t(weights.w, dpre);
  out.dx = matvec_t(weights.u, dpre);
  return out;
}

}  // namespace attnctl
