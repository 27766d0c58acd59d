#pragma once

// Training objectives: masked pointwise log loss, the four pairwise ranking
// variants with border-aware gating, the pair-region histogram, and the
// weighted combination. Region membership is decided on detached prediction
// values; only the per-pair softplus terms carry gradient.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/tensor.hpp"

namespace streamhl {

enum class PairVariant { kL0, kL1, kL2, kL3 };

inline std::string pair_variant_name(PairVariant v) {
  switch (v) {
    case PairVariant::kL0: return "l0";
    case PairVariant::kL1: return "l1";
    case PairVariant::kL2: return "l2";
    case PairVariant::kL3: return "l3";
  }
  return "l0";
}

inline PairVariant parse_pair_variant(const std::string& name) {
  if (name == "l0") return PairVariant::kL0;
  if (name == "l1") return PairVariant::kL1;
  if (name == "l2") return PairVariant::kL2;
  if (name == "l3") return PairVariant::kL3;
  throw std::invalid_argument("unknown pair variant '" + name +
                              "' (expected l0, l1, l2 or l3)");
}

enum class PairNorm { kMean, kSum };

struct LossConfig {
  double sigma = 10.0;
  double lambda1 = 0.65;
  double lambda2 = 0.15;
  double lambda3 = 0.20;
  PairVariant pair_variant = PairVariant::kL1;
  double pair_epsilon = 1e-6;

  void validate() const {
    if (!(sigma > 0.0))
      throw std::invalid_argument("LossConfig: sigma must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
      throw std::invalid_argument("LossConfig: lambdas must be nonnegative");
    if (pair_epsilon < 0.0)
      throw std::invalid_argument("LossConfig: pair_epsilon must be >= 0");
  }
};

// -(1/m) sum over unmasked i of [y_i log s_i + (1-y_i) log(1-s_i)].
inline Tensor pointwise_loss(Tape& tape, const Tensor& s,
                             const std::vector<double>& y,
                             const std::vector<bool>& mask) {
  if (s.rank() != 1)
    throw std::invalid_argument("pointwise_loss: predictions must be rank 1");
  const std::size_t n = s.size();
  if (y.size() != n || mask.size() != n)
    throw std::invalid_argument(
        "pointwise_loss: prediction/label/mask lengths differ");
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(s.data()[i] > 0.0 && s.data()[i] < 1.0))
      throw std::domain_error("pointwise_loss: prediction " +
                              std::to_string(i) + " outside (0,1)");
    if (!(y[i] >= 0.0 && y[i] <= 1.0))
      throw std::domain_error("pointwise_loss: label " + std::to_string(i) +
                              " outside [0,1]");
    if (mask[i]) ++m;
  }
  if (m == 0)
    throw std::invalid_argument("pointwise_loss: every position is masked out");
  std::vector<double> wy(n, 0.0), w1my(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    wy[i] = y[i];
    w1my[i] = 1.0 - y[i];
  }
  auto a = Tensor::from_data({n}, std::move(wy));
  auto b = Tensor::from_data({n}, std::move(w1my));
  auto log_s = tape.log(s);
  auto log_1ms = tape.log(tape.sub(Tensor::full({n}, 1.0), s));
  auto acc = tape.add(tape.mul(a, log_s), tape.mul(b, log_1ms));
  return tape.scale(tape.reduce_all(acc, Reduce::kSum),
                    -1.0 / static_cast<double>(m));
}

enum class PairRegion { kPart1 = 1, kPart2 = 2, kPart3 = 3 };

struct EligiblePair {
  std::size_t i, j;        // oriented so y_i > y_j + epsilon
  PairRegion region;       // from detached predictions
  double ds, dy;
};

// All intra-window pairs with y_i > y_j + epsilon among unmasked positions,
// with region labels: Part1 if ds <= 0, Part3 if ds >= dy, else Part2.
inline std::vector<EligiblePair> eligible_pairs(const std::vector<double>& s,
                                                const std::vector<double>& y,
                                                const std::vector<bool>& mask,
                                                double pair_epsilon) {
  const std::size_t n = y.size();
  if (s.size() != n || mask.size() != n)
    throw std::invalid_argument(
        "eligible_pairs: prediction/label/mask lengths differ");
  std::vector<EligiblePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !mask[j]) continue;
      if (!(y[i] > y[j] + pair_epsilon)) continue;
      const double ds = s[i] - s[j];
      const double dy = y[i] - y[j];
      PairRegion region = ds <= 0.0 ? PairRegion::kPart1
                          : ds >= dy ? PairRegion::kPart3
                                     : PairRegion::kPart2;
      pairs.push_back({i, j, region, ds, dy});
    }
  }
  return pairs;
}

struct RegionCounts {
  std::size_t part1 = 0;
  std::size_t part2 = 0;
  std::size_t part3 = 0;
  std::size_t total() const { return part1 + part2 + part3; }
};

inline RegionCounts region_histogram(const std::vector<double>& s,
                                     const std::vector<double>& y,
                                     const std::vector<bool>& mask,
                                     double pair_epsilon) {
  RegionCounts counts;
  for (const auto& p : eligible_pairs(s, y, mask, pair_epsilon)) {
    switch (p.region) {
      case PairRegion::kPart1: ++counts.part1; break;
      case PairRegion::kPart2: ++counts.part2; break;
      case PairRegion::kPart3: ++counts.part3; break;
    }
  }
  return counts;
}

namespace detail {

// Variant gates follow the constraint inequalities literally; L1's boundary
// ds == dy is included even though the histogram assigns it to Part3.
inline bool pair_included(PairVariant variant, double ds, double dy) {
  switch (variant) {
    case PairVariant::kL0: return true;
    case PairVariant::kL1: return dy - ds >= 0.0;
    case PairVariant::kL2: return ds <= 0.0;
    case PairVariant::kL3: return ds > 0.0 && ds < dy;
  }
  return false;
}

}  // namespace detail

struct PairwiseResult {
  Tensor loss;            // scalar; fresh zero with no gradient if no pairs
  std::size_t n_eligible = 0;
  std::size_t n_included = 0;
};

// Mean (or sum) over included pairs of log(1 + exp(-sigma * (s_i - s_j))).
inline PairwiseResult pairwise_loss(Tape& tape, const Tensor& s,
                                    const std::vector<double>& y,
                                    const std::vector<bool>& mask,
                                    const LossConfig& cfg,
                                    PairNorm norm = PairNorm::kMean) {
  cfg.validate();
  if (s.rank() != 1)
    throw std::invalid_argument("pairwise_loss: predictions must be rank 1");
  auto pairs = eligible_pairs(s.data(), y, mask, cfg.pair_epsilon);
  std::vector<std::size_t> idx_i, idx_j;
  for (const auto& p : pairs) {
    if (!detail::pair_included(cfg.pair_variant, p.ds, p.dy)) continue;
    idx_i.push_back(p.i);
    idx_j.push_back(p.j);
  }
  PairwiseResult result;
  result.n_eligible = pairs.size();
  result.n_included = idx_i.size();
  if (idx_i.empty()) {
    result.loss = Tensor::scalar(0.0);
    return result;
  }
  auto delta = tape.sub(tape.gather(s, idx_i), tape.gather(s, idx_j));
  auto terms = tape.softplus(tape.scale(delta, -cfg.sigma));
  result.loss = tape.reduce_all(
      terms, norm == PairNorm::kMean ? Reduce::kMean : Reduce::kSum);
  return result;
}

struct CombinedLoss {
  Tensor total;
  double pointwise = 0.0;  // detached component values for logging
  double align = 0.0;
  double pairwise = 0.0;
};

// total = lambda1 * pointwise + lambda2 * align + lambda3 * pairwise.
// Components with zero weight may be omitted entirely (callers skip the
// computation); a missing component with nonzero weight is an error.
inline CombinedLoss combined_loss(Tape& tape,
                                  const std::optional<Tensor>& pointwise,
                                  const std::optional<Tensor>& align,
                                  const std::optional<Tensor>& pairwise,
                                  const LossConfig& cfg) {
  cfg.validate();
  struct Part {
    const char* name;
    double weight;
    const std::optional<Tensor>* value;
  };
  const Part parts[] = {{"pointwise", cfg.lambda1, &pointwise},
                        {"align", cfg.lambda2, &align},
                        {"pairwise", cfg.lambda3, &pairwise}};
  CombinedLoss out;
  std::optional<Tensor> total;
  double* slots[] = {&out.pointwise, &out.align, &out.pairwise};
  for (std::size_t k = 0; k < 3; ++k) {
    const Part& part = parts[k];
    if (part.weight == 0.0) continue;
    if (!part.value->has_value())
      throw std::invalid_argument(std::string("combined_loss: ") + part.name +
                                  " component required by nonzero weight");
    const Tensor& comp = part.value->value();
    *slots[k] = comp.value();
    auto weighted = tape.scale(comp, part.weight);
    total = total ? tape.add(*total, weighted) : weighted;
  }
  out.total = total ? *total : Tensor::scalar(0.0);
  return out;
}

}  // namespace streamhl
