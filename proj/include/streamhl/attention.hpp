#pragma once

// Scaled dot-product multi-head attention plus the small building blocks
// shared by the perceiver and decoder stacks (layer norm, feed-forward,
// additive masks). Everything is expressed through Tape primitives so
// gradients come from the tape.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/tensor.hpp"

namespace streamhl {

inline constexpr double kLayerNormEps = 1e-5;

// Row-wise layer norm with learned gain/bias. Row means and variances are
// produced by multiplying with a constant J/n matrix so the whole op stays
// on the tape.
inline Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                         const Tensor& bias) {
  if (x.rank() != 2)
    throw std::invalid_argument("layer_norm: expected rank-2 input, got " +
                                shape_str(x.shape()));
  const std::size_t n = x.shape()[1];
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n})
    throw std::invalid_argument("layer_norm: gain/bias must have shape (" +
                                std::to_string(n) + ")");
  Tensor avg = Tensor::full({n, n}, 1.0 / static_cast<double>(n));
  Tensor mean_rows = tape.matmul(x, avg);
  Tensor centered = tape.sub(x, mean_rows);
  Tensor var_rows = tape.matmul(tape.mul(centered, centered), avg);
  Tensor inv_std = tape.pow_const(tape.add_const(var_rows, kLayerNormEps), -0.5);
  Tensor normed = tape.mul(centered, inv_std);
  return tape.add_rowvec(tape.mul_rowvec(normed, gain), bias);
}

inline Tensor feed_forward(Tape& tape, const Tensor& x, const Tensor& w1,
                           const Tensor& b1, const Tensor& w2,
                           const Tensor& b2) {
  Tensor h = tape.relu(tape.add_rowvec(tape.matmul(x, w1), b1));
  return tape.add_rowvec(tape.matmul(h, w2), b2);
}

// Additive causal mask: query i sees keys j <= i.
inline Tensor build_causal_mask(std::size_t n) {
  if (n < 1) throw std::invalid_argument("build_causal_mask: n must be >= 1");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> m(n * n, -inf);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m[i * n + j] = 0.0;
  return Tensor::from_data({n, n}, std::move(m));
}

// Mask for the perceiver's (n x 2n) cross attention when causal operation is
// requested: content tokens (first n keys) are visible causally, the n
// repeated ID tokens carry no temporal information and stay fully visible.
inline Tensor build_perceiver_causal_mask(std::size_t n) {
  if (n < 1)
    throw std::invalid_argument("build_perceiver_causal_mask: n must be >= 1");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> m(n * 2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * 2 * n + j] = -inf;
  return Tensor::from_data({n, 2 * n}, std::move(m));
}

struct AttentionParams {
  Tensor wq, wk, wv;  // (d, n_h*d_h)
  Tensor wo;          // (n_h*d_h, d)
};

// Per-head attention weight snapshots for inspection (detached copies).
struct AttentionTrace {
  std::vector<std::vector<double>> head_weights;  // row-major (n_q, n_k)
  std::size_t n_q = 0, n_k = 0;
};

inline Tensor multi_head_attention(Tape& tape, const Tensor& q_in,
                                   const Tensor& k_in, const Tensor& v_in,
                                   const AttentionParams& p, std::size_t n_h,
                                   std::size_t d_h,
                                   const std::optional<Tensor>& mask,
                                   AttentionTrace* trace = nullptr) {
  if (q_in.rank() != 2 || k_in.rank() != 2 || v_in.rank() != 2)
    throw std::invalid_argument("multi_head_attention: rank-2 inputs required");
  const std::size_t n_q = q_in.shape()[0];
  const std::size_t n_k = k_in.shape()[0];
  if (k_in.shape() != v_in.shape())
    throw std::invalid_argument("multi_head_attention: K shape " +
                                shape_str(k_in.shape()) + " != V shape " +
                                shape_str(v_in.shape()));
  const std::size_t width = n_h * d_h;
  if (p.wq.shape()[1] != width || p.wk.shape()[1] != width ||
      p.wv.shape()[1] != width || p.wo.shape()[0] != width)
    throw std::invalid_argument(
        "multi_head_attention: projections disagree with n_h*d_h = " +
        std::to_string(width));
  if (mask && mask->shape() != Shape{n_q, n_k})
    throw std::invalid_argument("multi_head_attention: mask shape " +
                                shape_str(mask->shape()) + " != scores shape " +
                                shape_str({n_q, n_k}));
  Tensor q = tape.matmul(q_in, p.wq);
  Tensor k = tape.matmul(k_in, p.wk);
  Tensor v = tape.matmul(v_in, p.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_h));
  if (trace) {
    trace->head_weights.clear();
    trace->n_q = n_q;
    trace->n_k = n_k;
  }
  std::vector<Tensor> heads;
  heads.reserve(n_h);
  for (std::size_t h = 0; h < n_h; ++h) {
    Tensor qh = tape.slice_cols(q, h * d_h, d_h);
    Tensor kh = tape.slice_cols(k, h * d_h, d_h);
    Tensor vh = tape.slice_cols(v, h * d_h, d_h);
    Tensor scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt);
    Tensor weights = tape.masked_softmax(scores, mask, 1);
    if (trace) trace->head_weights.push_back(weights.data());
    heads.push_back(tape.matmul(weights, vh));
  }
  Tensor merged = heads.size() == 1 ? heads[0] : tape.concat(heads, 1);
  return tape.matmul(merged, p.wo);
}

}  // namespace streamhl
