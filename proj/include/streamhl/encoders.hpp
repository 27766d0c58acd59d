#pragma once

// Modality encoders (affine + relu per modality), the streamer ID embedding
// table, learned positional embeddings and token assembly
// e_i = [v_i ; z_i] + pos_i.

#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/synth.hpp"
#include "streamhl/tensor.hpp"

namespace streamhl {

struct EncoderParams {
  Tensor visual_w;  // (raw_visual_dim, d/2)
  Tensor visual_b;  // (d/2)
  Tensor text_w;    // (raw_text_dim, d/2)
  Tensor text_b;    // (d/2)
};

struct IdEmbeddingTable {
  Tensor table;  // (n_streamers, d)
};

struct PositionalEmbedding {
  Tensor table;  // (n, d)
};

// All segments of one window stacked into (n, dim) feature matrices.
inline Tensor window_visual_matrix(const SampleWindow& w) {
  const std::size_t n = w.segments.size();
  const std::size_t dim = w.segments.at(0).raw_visual.size();
  std::vector<double> data;
  data.reserve(n * dim);
  for (const auto& seg : w.segments) {
    if (seg.raw_visual.size() != dim)
      throw std::invalid_argument("window_visual_matrix: ragged features");
    data.insert(data.end(), seg.raw_visual.begin(), seg.raw_visual.end());
  }
  return Tensor::from_data({n, dim}, std::move(data));
}

inline Tensor window_text_matrix(const SampleWindow& w) {
  const std::size_t n = w.segments.size();
  const std::size_t dim = w.segments.at(0).raw_text.size();
  std::vector<double> data;
  data.reserve(n * dim);
  for (const auto& seg : w.segments) {
    if (seg.raw_text.size() != dim)
      throw std::invalid_argument("window_text_matrix: ragged features");
    data.insert(data.end(), seg.raw_text.begin(), seg.raw_text.end());
  }
  return Tensor::from_data({n, dim}, std::move(data));
}

// (m, raw_visual_dim) -> (m, d/2)
inline Tensor encode_visual(Tape& tape, const Tensor& raw,
                            const EncoderParams& p) {
  return tape.relu(tape.add_rowvec(tape.matmul(raw, p.visual_w), p.visual_b));
}

// (m, raw_text_dim) -> (m, d/2)
inline Tensor encode_text(Tape& tape, const Tensor& raw,
                          const EncoderParams& p) {
  return tape.relu(tape.add_rowvec(tape.matmul(raw, p.text_w), p.text_b));
}

// (1, d) row for one streamer.
inline Tensor lookup_streamer(Tape& tape, const IdEmbeddingTable& ids,
                              std::uint64_t id) {
  if (id >= ids.table.shape()[0])
    throw std::out_of_range("lookup_streamer: id " + std::to_string(id) +
                            " not in table of " +
                            std::to_string(ids.table.shape()[0]));
  return tape.select_row(ids.table, static_cast<std::size_t>(id));
}

struct TokenOutputs {
  Tensor e;  // (n, d)
  Tensor v;  // (n, d/2) visual encodings, consumed by the alignment loss
  Tensor z;  // (n, d/2) text encodings
};

inline TokenOutputs assemble_tokens(Tape& tape, const SampleWindow& window,
                                    const EncoderParams& enc,
                                    const PositionalEmbedding& pos,
                                    bool use_pos_emb) {
  Tensor raw_v = window_visual_matrix(window);
  Tensor raw_t = window_text_matrix(window);
  TokenOutputs out{Tensor{}, Tensor{}, Tensor{}};
  out.v = encode_visual(tape, raw_v, enc);
  out.z = encode_text(tape, raw_t, enc);
  out.e = tape.concat({out.v, out.z}, 1);
  if (use_pos_emb) {
    if (pos.table.shape() != out.e.shape())
      throw std::invalid_argument("assemble_tokens: positional table shape " +
                                  shape_str(pos.table.shape()) +
                                  " != token shape " +
                                  shape_str(out.e.shape()));
    out.e = tape.add(out.e, pos.table);
  }
  return out;
}

}  // namespace streamhl
