#pragma once

// Modality temporal alignment: cosine similarity matrices, DTW cumulative
// matching with gradients routed along the selected warping path, similarity
// guided swap augmentation, shuffle negatives, and the InfoNCE alignment
// loss. Sampling is data augmentation and stays outside the gradient; the
// split draw/apply API keeps draws frozen so the loss is a pure function of
// the embeddings given a draw.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "streamhl/rng.hpp"
#include "streamhl/tensor.hpp"

namespace streamhl {

enum class DtwMode { kMin, kMax };

inline std::string dtw_mode_name(DtwMode mode) {
  return mode == DtwMode::kMin ? "min" : "max";
}

inline DtwMode parse_dtw_mode(const std::string& name) {
  if (name == "min") return DtwMode::kMin;
  if (name == "max") return DtwMode::kMax;
  throw std::invalid_argument("unknown dtw mode '" + name +
                              "' (expected min or max)");
}

struct AlignConfig {
  double gamma = 1.0;       // temperature of the swap-pair distribution
  double tau_c = 0.1;       // contrastive temperature
  std::size_t n_negatives = 8;
  DtwMode mode = DtwMode::kMin;

  void validate() const {
    if (!(gamma > 0.0))
      throw std::invalid_argument("AlignConfig: gamma must be positive");
    if (!(tau_c > 0.0))
      throw std::invalid_argument("AlignConfig: tau_c must be positive");
    if (n_negatives < 1)
      throw std::invalid_argument("AlignConfig: need at least one negative");
  }
};

// D[i][j] = cosine(z_i, v_j). Zero-norm rows are an error: at this scale they
// indicate an upstream encoder bug and an epsilon guard would hide it.
inline Tensor similarity_matrix(Tape& tape, const Tensor& z, const Tensor& v) {
  if (z.rank() != 2 || v.rank() != 2)
    throw std::invalid_argument("similarity_matrix: expected rank-2 inputs");
  if (z.shape()[0] != v.shape()[0])
    throw std::invalid_argument("similarity_matrix: sequence lengths differ: " +
                                shape_str(z.shape()) + " vs " +
                                shape_str(v.shape()));
  if (z.shape()[1] != v.shape()[1])
    throw std::invalid_argument("similarity_matrix: embedding widths differ: " +
                                shape_str(z.shape()) + " vs " +
                                shape_str(v.shape()));
  const std::size_t n = z.shape()[0];
  auto sq_z = tape.reduce(tape.mul(z, z), Reduce::kSum, 1);
  auto sq_v = tape.reduce(tape.mul(v, v), Reduce::kSum, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sq_z.data()[i] > 0.0))
      throw std::domain_error("similarity_matrix: row " + std::to_string(i) +
                              " of z has zero norm");
    if (!(sq_v.data()[i] > 0.0))
      throw std::domain_error("similarity_matrix: row " + std::to_string(i) +
                              " of v has zero norm");
  }
  auto inv_z = tape.pow_const(sq_z, -0.5);
  auto inv_v = tape.pow_const(sq_v, -0.5);
  auto raw = tape.matmul(z, tape.transpose(v));
  // scale[i][j] = 1/(|z_i| |v_j|) as an outer product
  auto scale = tape.matmul(tape.reshape(inv_z, {n, 1}),
                           tape.reshape(inv_v, {1, n}));
  return tape.mul(raw, scale);
}

// Forward cumulative matrix and the backtracked warping path, exposed for
// post-hoc recurrence checks. Path cells are flat row-major indices from
// (0,0) to (n-1,n-1); backtracking ties prefer diagonal, then vertical.
struct DtwTrace {
  std::vector<double> h;
  std::vector<std::size_t> path;
};

namespace detail {

inline bool dtw_better(DtwMode mode, double a, double b) {
  return mode == DtwMode::kMin ? a < b : a > b;
}

inline void dtw_fill(const std::vector<double>& d, std::size_t n, DtwMode mode,
                     std::vector<double>& h) {
  const double worst = mode == DtwMode::kMin
                           ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
  h.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == 0 && j == 0) {
        h[0] = d[0];
        continue;
      }
      const double diag = (i > 0 && j > 0) ? h[(i - 1) * n + (j - 1)] : worst;
      const double vert = i > 0 ? h[(i - 1) * n + j] : worst;
      const double horz = j > 0 ? h[i * n + (j - 1)] : worst;
      double best = diag;
      if (dtw_better(mode, vert, best)) best = vert;
      if (dtw_better(mode, horz, best)) best = horz;
      h[i * n + j] = d[i * n + j] + best;
    }
}

inline std::vector<std::size_t> dtw_backtrack(const std::vector<double>& h,
                                              std::size_t n, DtwMode mode) {
  std::vector<std::size_t> path;
  std::size_t i = n - 1, j = n - 1;
  path.push_back(i * n + j);
  while (i > 0 || j > 0) {
    const double worst = mode == DtwMode::kMin
                             ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
    const double diag = (i > 0 && j > 0) ? h[(i - 1) * n + (j - 1)] : worst;
    const double vert = i > 0 ? h[(i - 1) * n + j] : worst;
    const double horz = j > 0 ? h[i * n + (j - 1)] : worst;
    if (!dtw_better(mode, vert, diag) && !dtw_better(mode, horz, diag)) {
      --i;
      --j;
    } else if (!dtw_better(mode, horz, vert)) {
      --i;
    } else {
      --j;
    }
    path.push_back(i * n + j);
  }
  return path;
}

}  // namespace detail

// Cumulative DTW score H[n-1][n-1] of a square score matrix. The min/max
// selection routes the gradient along the backtracked path only: each path
// cell of D receives the full upstream gradient, every other cell zero.
inline Tensor dtw_distance(Tape& tape, const Tensor& d, DtwMode mode,
                           DtwTrace* trace = nullptr) {
  if (d.rank() != 2 || d.shape()[0] != d.shape()[1])
    throw std::invalid_argument("dtw_distance: expected a square matrix, got " +
                                shape_str(d.shape()));
  const std::size_t n = d.shape()[0];
  if (n == 0) throw std::invalid_argument("dtw_distance: empty matrix");
  std::vector<double> h;
  detail::dtw_fill(d.data(), n, mode, h);
  auto path = detail::dtw_backtrack(h, n, mode);
  if (trace) {
    trace->h = h;
    trace->path = path;
  }
  Tensor out = tape.adopt({1}, {h[n * n - 1]}, {&d});
  if (d.needs_grad()) {
    tape.record([out, d, path] {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      Tensor dm = d;
      auto& dg = dm.mutable_grad();
      for (std::size_t cell : path) dg[cell] += g;
    });
  }
  return out;
}

// Exhaustive enumeration of every monotone warping path (moves down, right,
// diagonal), the independent oracle for dtw_distance. Exponential, so n is
// capped.
struct PathEnumeration {
  double best;
  std::uint64_t n_paths;
};

inline PathEnumeration enumerate_paths_oracle(const Tensor& d, DtwMode mode) {
  if (d.rank() != 2 || d.shape()[0] != d.shape()[1])
    throw std::invalid_argument(
        "enumerate_paths_oracle: expected a square matrix, got " +
        shape_str(d.shape()));
  const std::size_t n = d.shape()[0];
  if (n == 0) throw std::invalid_argument("enumerate_paths_oracle: empty matrix");
  if (n > 8)
    throw std::invalid_argument(
        "enumerate_paths_oracle: n = " + std::to_string(n) +
        " exceeds the enumeration cap of 8");
  const auto& dd = d.data();
  PathEnumeration result{mode == DtwMode::kMin
                             ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity(),
                         0};
  // iterative depth-first walk over (i, j, running sum)
  struct Frame {
    std::size_t i, j;
    double sum;
  };
  std::vector<Frame> stack;
  stack.push_back({0, 0, dd[0]});
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    if (f.i == n - 1 && f.j == n - 1) {
      ++result.n_paths;
      if (detail::dtw_better(mode, f.sum, result.best)) result.best = f.sum;
      continue;
    }
    if (f.i + 1 < n && f.j + 1 < n)
      stack.push_back(
          {f.i + 1, f.j + 1, f.sum + dd[(f.i + 1) * n + (f.j + 1)]});
    if (f.i + 1 < n)
      stack.push_back({f.i + 1, f.j, f.sum + dd[(f.i + 1) * n + f.j]});
    if (f.j + 1 < n)
      stack.push_back({f.i, f.j + 1, f.sum + dd[f.i * n + (f.j + 1)]});
  }
  return result;
}

// One ordered off-diagonal pair (i, j), i != j, drawn with probability
// proportional to exp(D[i][j] / gamma). The max is subtracted before
// exponentiating, which leaves the distribution unchanged.
inline std::pair<std::size_t, std::size_t> sample_swap_pair(Rng& rng,
                                                            const Tensor& d,
                                                            double gamma) {
  if (d.rank() != 2 || d.shape()[0] != d.shape()[1])
    throw std::invalid_argument("sample_swap_pair: expected a square matrix");
  const std::size_t n = d.shape()[0];
  if (n < 2)
    throw std::invalid_argument("sample_swap_pair: need at least two rows");
  if (!(gamma > 0.0))
    throw std::invalid_argument("sample_swap_pair: gamma must be positive");
  const auto& dd = d.data();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && dd[i * n + j] > hi) hi = dd[i * n + j];
  std::vector<double> weights;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  weights.reserve(n * (n - 1));
  pairs.reserve(n * (n - 1));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      weights.push_back(std::exp((dd[i * n + j] - hi) / gamma));
      pairs.push_back({i, j});
    }
  return pairs[rng.discrete(weights)];
}

// v with rows i and j exchanged, differentiable through permute_rows.
inline Tensor make_positive(Tape& tape, const Tensor& v,
                            std::pair<std::size_t, std::size_t> swap) {
  if (v.rank() != 2)
    throw std::invalid_argument("make_positive: expected a rank-2 input");
  const std::size_t n = v.shape()[0];
  if (swap.first >= n || swap.second >= n)
    throw std::invalid_argument("make_positive: swap index out of range");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::swap(perm[swap.first], perm[swap.second]);
  return tape.permute_rows(v, perm);
}

// Uniform random non-identity permutation of {0..n-1}; the identity is
// rejected and resampled since an unshuffled negative would duplicate the
// anchor.
inline std::vector<std::size_t> draw_negative_perm(Rng& rng, std::size_t n) {
  if (n < 2)
    throw std::invalid_argument(
        "draw_negative_perm: need at least two rows to shuffle");
  for (;;) {
    auto perm = rng.permutation(n);
    for (std::size_t i = 0; i < n; ++i)
      if (perm[i] != i) return perm;
  }
}

inline std::vector<Tensor> make_negatives(Tape& tape, const Tensor& v,
                                          std::size_t n_negatives, Rng& rng) {
  if (v.rank() != 2)
    throw std::invalid_argument("make_negatives: expected a rank-2 input");
  if (n_negatives < 1)
    throw std::invalid_argument("make_negatives: need at least one negative");
  std::vector<Tensor> out;
  out.reserve(n_negatives);
  for (std::size_t p = 0; p < n_negatives; ++p)
    out.push_back(tape.permute_rows(v, draw_negative_perm(rng, v.shape()[0])));
  return out;
}

// Frozen augmentation draw: the sampled swap pair plus the negative
// permutations. Given a draw, the alignment loss is a deterministic pure
// function of the embeddings, which is what finite-difference checks need.
struct AlignDraw {
  std::pair<std::size_t, std::size_t> swap;
  std::vector<std::vector<std::size_t>> negative_perms;
};

inline AlignDraw draw_alignment(Rng& rng, const Tensor& z, const Tensor& v,
                                const AlignConfig& cfg) {
  cfg.validate();
  // scratch tape: only the similarity values feed the draw, never gradients
  Tape scratch;
  auto d = similarity_matrix(scratch, z, v);
  AlignDraw draw;
  draw.swap = sample_swap_pair(rng, d, cfg.gamma);
  draw.negative_perms.reserve(cfg.n_negatives);
  for (std::size_t p = 0; p < cfg.n_negatives; ++p)
    draw.negative_perms.push_back(draw_negative_perm(rng, v.shape()[0]));
  return draw;
}

// InfoNCE over DTW scores, index 0 holding the positive:
//   L = -scores[0]/tau + logsumexp(scores/tau)
// assembled from tape primitives with max-subtracted logsumexp so large
// scores cannot overflow.
inline Tensor info_nce_from_scores(Tape& tape, const std::vector<Tensor>& scores,
                                   double tau) {
  if (scores.size() < 2)
    throw std::invalid_argument(
        "info_nce_from_scores: need a positive and at least one negative");
  if (!(tau > 0.0))
    throw std::invalid_argument("info_nce_from_scores: tau must be positive");
  auto all = tape.concat(scores, 0);
  auto scaled = tape.scale(all, 1.0 / tau);
  auto top = tape.reduce_all(scaled, Reduce::kMax);
  auto shifted = tape.add_scalar_tensor(scaled, tape.scale(top, -1.0));
  auto lse =
      tape.add(top, tape.log(tape.reduce_all(tape.exp(shifted), Reduce::kSum)));
  return tape.sub(lse, tape.gather(scaled, {0}));
}

// Alignment loss for a frozen draw: positive = swap augmentation of v,
// negatives = shuffled v, each scored by DTW over its similarity matrix
// against z.
inline Tensor align_loss_from_draw(Tape& tape, const Tensor& z, const Tensor& v,
                                   const AlignDraw& draw,
                                   const AlignConfig& cfg) {
  cfg.validate();
  if (draw.negative_perms.empty())
    throw std::invalid_argument("align_loss_from_draw: draw has no negatives");
  std::vector<Tensor> scores;
  scores.reserve(draw.negative_perms.size() + 1);
  auto v_pos = make_positive(tape, v, draw.swap);
  scores.push_back(dtw_distance(tape, similarity_matrix(tape, z, v_pos),
                                cfg.mode));
  for (const auto& perm : draw.negative_perms) {
    auto v_neg = tape.permute_rows(v, perm);
    scores.push_back(dtw_distance(tape, similarity_matrix(tape, z, v_neg),
                                  cfg.mode));
  }
  return info_nce_from_scores(tape, scores, cfg.tau_c);
}

struct AlignResult {
  Tensor loss;
  AlignDraw draw;
};

inline AlignResult align_loss(Tape& tape, Rng& rng, const Tensor& z,
                              const Tensor& v, const AlignConfig& cfg) {
  AlignDraw draw = draw_alignment(rng, z, v, cfg);
  Tensor loss = align_loss_from_draw(tape, z, v, draw, cfg);
  return {loss, std::move(draw)};
}

}  // namespace streamhl
