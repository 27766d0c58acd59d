#pragma once

// Streamer-conditioned perceiver stack. The latent query starts as n copies
// of the streamer embedding u; every layer cross-attends from the evolving
// latent to the fixed 2n-token sequence [e ; n x u], followed by a
// feed-forward block. Residuals wrap both sublayers; layer norm is pre-norm
// and can be disabled.

#include <optional>
#include <stdexcept>
#include <vector>

#include "streamhl/attention.hpp"
#include "streamhl/tensor.hpp"

namespace streamhl {

struct PerceiverLayerParams {
  AttentionParams attn;
  Tensor ln_q_g, ln_q_b;    // latent side pre-norm
  Tensor ln_kv_g, ln_kv_b;  // key/value side pre-norm
  Tensor ln2_g, ln2_b;      // feed-forward pre-norm
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

struct PerceiverConfig {
  std::size_t d = 32;
  std::size_t n_h = 4;
  std::size_t d_h = 8;
  bool use_layer_norm = true;
  bool causal = false;
};

// latent_pos, when given, is added to the repeated-u latent queries (not to
// the keys/values). Without it every query row is the same vector, so every
// output row is the same mix and the block cannot represent temporal order.
inline Tensor perceiver_forward(Tape& tape, const Tensor& e, const Tensor& u,
                                const std::vector<PerceiverLayerParams>& layers,
                                const PerceiverConfig& cfg,
                                std::vector<AttentionTrace>* traces = nullptr,
                                const Tensor* latent_pos = nullptr) {
  if (e.rank() != 2 || e.shape()[1] != cfg.d)
    throw std::invalid_argument("perceiver_forward: tokens must be (n, d), got " +
                                shape_str(e.shape()));
  if (u.shape() != Shape{1, cfg.d})
    throw std::invalid_argument("perceiver_forward: u must be (1, d), got " +
                                shape_str(u.shape()));
  if (layers.empty())
    throw std::invalid_argument("perceiver_forward: at least one layer");
  const std::size_t n = e.shape()[0];
  Tensor latent = tape.repeat_rows(u, n);
  Tensor kv = tape.concat({e, latent}, 0);
  std::optional<Tensor> mask;
  if (cfg.causal) mask = build_perceiver_causal_mask(n);
  if (traces) traces->assign(layers.size(), {});
  Tensor x = latent;
  if (latent_pos) {
    if (latent_pos->shape() != latent.shape())
      throw std::invalid_argument("perceiver_forward: latent_pos must be (n, d), got " +
                                  shape_str(latent_pos->shape()));
    x = tape.add(latent, *latent_pos);
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    Tensor qn = cfg.use_layer_norm ? layer_norm(tape, x, p.ln_q_g, p.ln_q_b) : x;
    Tensor kvn =
        cfg.use_layer_norm ? layer_norm(tape, kv, p.ln_kv_g, p.ln_kv_b) : kv;
    Tensor attn = multi_head_attention(tape, qn, kvn, kvn, p.attn, cfg.n_h,
                                       cfg.d_h, mask,
                                       traces ? &(*traces)[l] : nullptr);
    Tensor h = tape.add(x, attn);
    Tensor hn = cfg.use_layer_norm ? layer_norm(tape, h, p.ln2_g, p.ln2_b) : h;
    x = tape.add(h, feed_forward(tape, hn, p.ff_w1, p.ff_b1, p.ff_w2, p.ff_b2));
  }
  return x;
}

}  // namespace streamhl
