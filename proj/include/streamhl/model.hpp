#pragma once

// Full model assembly: encoders -> perceiver stack -> causal decoder, plus
// deterministic parameter initialization and the frozen parameter naming
// used by checkpoints and the optimizer.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "streamhl/decoder.hpp"
#include "streamhl/encoders.hpp"
#include "streamhl/perceiver.hpp"
#include "streamhl/rng.hpp"
#include "streamhl/synth.hpp"
#include "streamhl/tensor.hpp"

namespace streamhl {

struct ModelConfig {
  std::size_t d = 32;   // even; tokens are [visual d/2 ; text d/2]
  std::size_t d_h = 8;
  std::size_t n_h = 4;
  std::size_t n_perceiver_layers = 3;
  std::size_t decoder_depth = 1;
  std::size_t n_segments = 20;
  std::size_t raw_visual_dim = 8;
  std::size_t raw_text_dim = 8;
  std::size_t n_streamers = 4;
  bool use_pos_emb = true;
  bool perceiver_causal = false;
  bool use_layer_norm = true;

  void validate() const {
    if (d == 0 || d % 2 != 0)
      throw std::invalid_argument("ModelConfig: d must be positive and even");
    if (d_h == 0 || n_h == 0)
      throw std::invalid_argument("ModelConfig: d_h and n_h must be positive");
    if (n_perceiver_layers == 0 || decoder_depth == 0)
      throw std::invalid_argument("ModelConfig: layer counts must be positive");
    if (n_segments < 2)
      throw std::invalid_argument("ModelConfig: n_segments must be >= 2");
    if (raw_visual_dim == 0 || raw_text_dim == 0 || n_streamers == 0)
      throw std::invalid_argument("ModelConfig: data dims must be positive");
  }

  PerceiverConfig perceiver_config() const {
    return {d, n_h, d_h, use_layer_norm, perceiver_causal};
  }
  DecoderConfig decoder_config() const { return {d, n_h, d_h, use_layer_norm}; }
};

struct ModelParams {
  EncoderParams enc;
  IdEmbeddingTable ids;
  PositionalEmbedding pos;
  std::vector<PerceiverLayerParams> perceiver;
  DecoderParams dec;
};

namespace detail {

inline Tensor init_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const double r = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> data(rows * cols);
  for (auto& x : data) x = rng.uniform(-r, r);
  return Tensor::from_data({rows, cols}, std::move(data), true);
}

inline Tensor init_vector(Rng& rng, std::size_t n, double scale) {
  std::vector<double> data(n);
  for (auto& x : data) x = scale == 0.0 ? 0.0 : rng.uniform(-scale, scale);
  return Tensor::from_data({n}, std::move(data), true);
}

inline Tensor ones_vector(std::size_t n) {
  return Tensor::from_data({n}, std::vector<double>(n, 1.0), true);
}

inline Tensor zeros_vector(std::size_t n) {
  return Tensor::from_data({n}, std::vector<double>(n, 0.0), true);
}

inline AttentionParams init_attention(Rng& rng, std::size_t d, std::size_t n_h,
                                      std::size_t d_h) {
  AttentionParams p;
  p.wq = init_matrix(rng, d, n_h * d_h);
  p.wk = init_matrix(rng, d, n_h * d_h);
  p.wv = init_matrix(rng, d, n_h * d_h);
  p.wo = init_matrix(rng, n_h * d_h, d);
  return p;
}

}  // namespace detail

inline ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));  // dedicated init stream
  ModelParams m;
  const std::size_t half = cfg.d / 2;
  // positive encoder biases keep relu rows alive at init; a fully dead row
  // would give the alignment loss a zero-norm embedding, which is an error
  m.enc.visual_w = detail::init_matrix(rng, cfg.raw_visual_dim, half);
  m.enc.visual_b = Tensor::full({half}, 0.1, true);
  m.enc.text_w = detail::init_matrix(rng, cfg.raw_text_dim, half);
  m.enc.text_b = Tensor::full({half}, 0.1, true);
  m.ids.table = detail::init_matrix(rng, cfg.n_streamers, cfg.d);
  m.pos.table = detail::init_matrix(rng, cfg.n_segments, cfg.d);
  const std::size_t ff = 4 * cfg.d;
  for (std::size_t l = 0; l < cfg.n_perceiver_layers; ++l) {
    PerceiverLayerParams p;
    p.attn = detail::init_attention(rng, cfg.d, cfg.n_h, cfg.d_h);
    p.ln_q_g = detail::ones_vector(cfg.d);
    p.ln_q_b = detail::zeros_vector(cfg.d);
    p.ln_kv_g = detail::ones_vector(cfg.d);
    p.ln_kv_b = detail::zeros_vector(cfg.d);
    p.ln2_g = detail::ones_vector(cfg.d);
    p.ln2_b = detail::zeros_vector(cfg.d);
    p.ff_w1 = detail::init_matrix(rng, cfg.d, ff);
    p.ff_b1 = detail::zeros_vector(ff);
    p.ff_w2 = detail::init_matrix(rng, ff, cfg.d);
    p.ff_b2 = detail::zeros_vector(cfg.d);
    m.perceiver.push_back(std::move(p));
  }
  for (std::size_t l = 0; l < cfg.decoder_depth; ++l) {
    DecoderLayerParams p;
    p.attn = detail::init_attention(rng, cfg.d, cfg.n_h, cfg.d_h);
    p.ln1_g = detail::ones_vector(cfg.d);
    p.ln1_b = detail::zeros_vector(cfg.d);
    p.ln2_g = detail::ones_vector(cfg.d);
    p.ln2_b = detail::zeros_vector(cfg.d);
    p.ff_w1 = detail::init_matrix(rng, cfg.d, ff);
    p.ff_b1 = detail::zeros_vector(ff);
    p.ff_w2 = detail::init_matrix(rng, ff, cfg.d);
    p.ff_b2 = detail::zeros_vector(cfg.d);
    m.dec.layers.push_back(std::move(p));
  }
  m.dec.head_w = detail::init_matrix(rng, cfg.d, 1);
  m.dec.head_b = detail::zeros_vector(1);
  return m;
}

// Stable name -> tensor listing; the order and names are the checkpoint and
// optimizer-state contract.
inline std::vector<std::pair<std::string, Tensor>> named_parameters(
    const ModelParams& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("enc.visual_w", m.enc.visual_w);
  out.emplace_back("enc.visual_b", m.enc.visual_b);
  out.emplace_back("enc.text_w", m.enc.text_w);
  out.emplace_back("enc.text_b", m.enc.text_b);
  out.emplace_back("ids.table", m.ids.table);
  out.emplace_back("pos.table", m.pos.table);
  for (std::size_t l = 0; l < m.perceiver.size(); ++l) {
    const auto& p = m.perceiver[l];
    const std::string base = "perceiver." + std::to_string(l) + ".";
    out.emplace_back(base + "attn.wq", p.attn.wq);
    out.emplace_back(base + "attn.wk", p.attn.wk);
    out.emplace_back(base + "attn.wv", p.attn.wv);
    out.emplace_back(base + "attn.wo", p.attn.wo);
    out.emplace_back(base + "ln_q_g", p.ln_q_g);
    out.emplace_back(base + "ln_q_b", p.ln_q_b);
    out.emplace_back(base + "ln_kv_g", p.ln_kv_g);
    out.emplace_back(base + "ln_kv_b", p.ln_kv_b);
    out.emplace_back(base + "ln2_g", p.ln2_g);
    out.emplace_back(base + "ln2_b", p.ln2_b);
    out.emplace_back(base + "ff_w1", p.ff_w1);
    out.emplace_back(base + "ff_b1", p.ff_b1);
    out.emplace_back(base + "ff_w2", p.ff_w2);
    out.emplace_back(base + "ff_b2", p.ff_b2);
  }
  for (std::size_t l = 0; l < m.dec.layers.size(); ++l) {
    const auto& p = m.dec.layers[l];
    const std::string base = "decoder." + std::to_string(l) + ".";
    out.emplace_back(base + "attn.wq", p.attn.wq);
    out.emplace_back(base + "attn.wk", p.attn.wk);
    out.emplace_back(base + "attn.wv", p.attn.wv);
    out.emplace_back(base + "attn.wo", p.attn.wo);
    out.emplace_back(base + "ln1_g", p.ln1_g);
    out.emplace_back(base + "ln1_b", p.ln1_b);
    out.emplace_back(base + "ln2_g", p.ln2_g);
    out.emplace_back(base + "ln2_b", p.ln2_b);
    out.emplace_back(base + "ff_w1", p.ff_w1);
    out.emplace_back(base + "ff_b1", p.ff_b1);
    out.emplace_back(base + "ff_w2", p.ff_w2);
    out.emplace_back(base + "ff_b2", p.ff_b2);
  }
  out.emplace_back("head.w", m.dec.head_w);
  out.emplace_back("head.b", m.dec.head_b);
  return out;
}

struct ForwardOutputs {
  Tensor s;  // (n) predictions in (0,1)
  Tensor v;  // (n, d/2) visual encodings
  Tensor z;  // (n, d/2) text encodings
};

// Forward pass from raw feature matrices (n, raw_dim). Exposed so tests can
// differentiate with respect to the inputs themselves.
inline ForwardOutputs forward_from_raw(Tape& tape, const Tensor& raw_v,
                                       const Tensor& raw_t,
                                       std::uint64_t streamer_id,
                                       const ModelParams& params,
                                       const ModelConfig& cfg) {
  ForwardOutputs out{Tensor{}, Tensor{}, Tensor{}};
  out.v = encode_visual(tape, raw_v, params.enc);
  out.z = encode_text(tape, raw_t, params.enc);
  Tensor e = tape.concat({out.v, out.z}, 1);
  if (cfg.use_pos_emb) {
    if (params.pos.table.shape() != e.shape())
      throw std::invalid_argument("forward_from_raw: positional table shape " +
                                  shape_str(params.pos.table.shape()) +
                                  " != token shape " + shape_str(e.shape()));
    e = tape.add(e, params.pos.table);
  }
  Tensor u = lookup_streamer(tape, params.ids, streamer_id);
  // the same table also offsets the latent queries; identical queries would
  // collapse the whole window to one prediction repeated n times
  const Tensor* latent_pos = cfg.use_pos_emb ? &params.pos.table : nullptr;
  Tensor el = perceiver_forward(tape, e, u, params.perceiver,
                                cfg.perceiver_config(), nullptr, latent_pos);
  out.s = decode(tape, el, params.dec, cfg.decoder_config());
  return out;
}

inline ForwardOutputs forward_window(Tape& tape, const SampleWindow& window,
                                     const ModelParams& params,
                                     const ModelConfig& cfg) {
  if (window.segments.size() != cfg.n_segments)
    throw std::invalid_argument(
        "forward_window: window has " + std::to_string(window.segments.size()) +
        " segments, model expects " + std::to_string(cfg.n_segments));
  return forward_from_raw(tape, window_visual_matrix(window),
                          window_text_matrix(window), window.streamer_id,
                          params, cfg);
}

}  // namespace streamhl
