#pragma once

// Causal self-attention decoder over the perceiver output plus the scalar
// prediction head. Every attention layer uses the lower-triangular-visible
// mask (a position sees itself and its past), so s_i cannot depend on later
// rows of the input.

#include <optional>
#include <stdexcept>
#include <vector>

#include "streamhl/attention.hpp"
#include "streamhl/tensor.hpp"

namespace streamhl {

struct DecoderLayerParams {
  AttentionParams attn;
  Tensor ln1_g, ln1_b;
  Tensor ln2_g, ln2_b;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

struct DecoderParams {
  std::vector<DecoderLayerParams> layers;
  Tensor head_w;  // (d, 1)
  Tensor head_b;  // (1)
};

struct DecoderConfig {
  std::size_t d = 32;
  std::size_t n_h = 4;
  std::size_t d_h = 8;
  bool use_layer_norm = true;
};

// (n, d) -> predictions s in (0,1)^n.
inline Tensor decode(Tape& tape, const Tensor& el, const DecoderParams& params,
                     const DecoderConfig& cfg,
                     std::vector<AttentionTrace>* traces = nullptr) {
  if (el.rank() != 2 || el.shape()[1] != cfg.d)
    throw std::invalid_argument("decode: input must be (n, d), got " +
                                shape_str(el.shape()));
  if (params.layers.empty())
    throw std::invalid_argument("decode: at least one layer");
  const std::size_t n = el.shape()[0];
  std::optional<Tensor> mask = build_causal_mask(n);
  if (traces) traces->assign(params.layers.size(), {});
  Tensor x = el;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& p = params.layers[l];
    Tensor xn = cfg.use_layer_norm ? layer_norm(tape, x, p.ln1_g, p.ln1_b) : x;
    Tensor attn = multi_head_attention(tape, xn, xn, xn, p.attn, cfg.n_h,
                                       cfg.d_h, mask,
                                       traces ? &(*traces)[l] : nullptr);
    Tensor h = tape.add(x, attn);
    Tensor hn = cfg.use_layer_norm ? layer_norm(tape, h, p.ln2_g, p.ln2_b) : h;
    x = tape.add(h, feed_forward(tape, hn, p.ff_w1, p.ff_b1, p.ff_w2, p.ff_b2));
  }
  Tensor logits = tape.add_scalar_tensor(tape.matmul(x, params.head_w),
                                         params.head_b);
  return tape.reshape(tape.sigmoid(logits), {n});
}

}  // namespace streamhl
