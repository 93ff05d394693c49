#pragma once

#include "attnctl/tensor.hpp"

namespace attnctl {

/// Stacked LSTM weights, gate blocks ordered input, forget, output, candidate.
/// w: 4H x H (recurrent), u: 4H x X (input), b: 4H.
struct LstmWeights {
  const DenseArray& w;
  const DenseArray& u;
  const DenseArray& b;
};

struct LstmGradRefs {
  DenseArray& w;
  DenseArray& u;
  DenseArray& b;
};

/// Everything the backward pass needs from one step.
struct LstmStep {
  DenseArray x, h_prev, c_prev;
  DenseArray input_gate, forget_gate, output_gate, candidate;
  DenseArray c, tanh_c, h;
};

LstmStep lstm_forward(const LstmWeights& weights, const DenseArray& x, const DenseArray& h_prev,
                      const DenseArray& c_prev);

struct LstmBackward {
  DenseArray dx, dh_prev, dc_prev;
};

/// Accumulates weight gradients into `grads` and returns input/state gradients.
LstmBackward lstm_backward(const LstmWeights& weights, const LstmStep& step, const DenseArray& dh,
                           const DenseArray& dc, LstmGradRefs grads);

}  // namespace attnctl
