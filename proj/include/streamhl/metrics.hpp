#pragma once

// Ranking metrics: Kendall's tau with ground-truth-threshold filtering and
// mean Average Precision over binary labels, plus the CSV row format the
// trainer emits. Tau uses integer pair counts (Knight's O(n log n) counting)
// fed into one shared float formula, so an O(n^2) counting oracle computing
// the same integers reproduces results bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamhl/numfmt.hpp"

namespace streamhl {

enum class TauVariant { kTauB, kTauA };

struct TauPairCounts {
  std::uint64_t n0 = 0;       // all pairs among retained positions
  std::uint64_t concordant = 0;
  std::uint64_t discordant = 0;
  std::uint64_t ties_s = 0;   // pairs tied in s (including both-tied)
  std::uint64_t ties_y = 0;   // pairs tied in y (including both-tied)
};

// The one formula both the implementation and any oracle must apply to the
// integer counts, so equal counts give bitwise-equal tau.
inline double tau_from_counts(const TauPairCounts& c, TauVariant variant) {
  const double num =
      static_cast<double>(c.concordant) - static_cast<double>(c.discordant);
  if (variant == TauVariant::kTauA)
    return num / static_cast<double>(c.n0);
  return num / std::sqrt(static_cast<double>(c.n0 - c.ties_s) *
                         static_cast<double>(c.n0 - c.ties_y));
}

namespace detail {

// Merge-sort inversion count: pairs (a, b), a < b, with values[a] > values[b].
inline std::uint64_t count_inversions(std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<double> buffer(n);
  std::uint64_t inversions = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo + width < n; lo += 2 * width) {
      const std::size_t mid = lo + width;
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t a = lo, b = mid, out = lo;
      while (a < mid && b < hi) {
        if (values[a] <= values[b]) {
          buffer[out++] = values[a++];
        } else {
          inversions += mid - a;
          buffer[out++] = values[b++];
        }
      }
      while (a < mid) buffer[out++] = values[a++];
      while (b < hi) buffer[out++] = values[b++];
      std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(lo),
                buffer.begin() + static_cast<std::ptrdiff_t>(hi),
                values.begin() + static_cast<std::ptrdiff_t>(lo));
    }
  }
  return inversions;
}

inline std::uint64_t pairs_in_group(std::uint64_t g) { return g * (g - 1) / 2; }

}  // namespace detail

// Knight's counting: sort by (s, y), tally s-tie and joint-tie groups, count
// discordant pairs as inversions of the y sequence, tally y ties separately.
inline TauPairCounts tau_pair_counts(const std::vector<double>& s,
                                     const std::vector<double>& y) {
  if (s.size() != y.size())
    throw std::invalid_argument("tau_pair_counts: length mismatch");
  const std::size_t n = s.size();
  TauPairCounts c;
  c.n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] < s[b];
    return y[a] < y[b];
  });
  std::uint64_t joint = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s[idx[j]] == s[idx[i]]) ++j;
    c.ties_s += detail::pairs_in_group(j - i);
    for (std::size_t a = i; a < j;) {
      std::size_t b = a;
      while (b < j && y[idx[b]] == y[idx[a]]) ++b;
      joint += detail::pairs_in_group(b - a);
      a = b;
    }
    i = j;
  }
  std::vector<double> y_sorted_by_s(n);
  for (std::size_t i = 0; i < n; ++i) y_sorted_by_s[i] = y[idx[i]];
  c.discordant = detail::count_inversions(y_sorted_by_s);
  std::vector<double> ys(y);
  std::sort(ys.begin(), ys.end());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && ys[j] == ys[i]) ++j;
    c.ties_y += detail::pairs_in_group(j - i);
    i = j;
  }
  c.concordant = c.n0 - c.ties_s - c.ties_y + joint - c.discordant;
  return c;
}

struct TauResult {
  double tau = 0.0;
  bool skipped = false;
  std::size_t n_retained = 0;
};

// Tau over positions with y > delta (strict). Windows with fewer than two
// retained positions, or all-tied y or s among them, are skipped.
inline TauResult kendall_tau(const std::vector<double>& s,
                             const std::vector<double>& y, double delta,
                             TauVariant variant = TauVariant::kTauB) {
  if (s.size() != y.size())
    throw std::invalid_argument("kendall_tau: length mismatch");
  std::vector<double> rs, ry;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > delta) {
      rs.push_back(s[i]);
      ry.push_back(y[i]);
    }
  }
  TauResult result;
  result.n_retained = rs.size();
  if (rs.size() < 2) {
    result.skipped = true;
    return result;
  }
  auto counts = tau_pair_counts(rs, ry);
  if (counts.ties_s == counts.n0 || counts.ties_y == counts.n0) {
    result.skipped = true;
    return result;
  }
  result.tau = tau_from_counts(counts, variant);
  return result;
}

struct TauSummary {
  double delta = 0.0;
  double mean_tau = 0.0;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
  std::vector<double> per_window;  // evaluated windows only, in input order
};

inline TauSummary summarize_tau(const std::vector<std::vector<double>>& s,
                                const std::vector<std::vector<double>>& y,
                                double delta,
                                TauVariant variant = TauVariant::kTauB) {
  if (s.size() != y.size())
    throw std::invalid_argument("summarize_tau: window count mismatch");
  TauSummary summary;
  summary.delta = delta;
  double acc = 0.0;
  for (std::size_t w = 0; w < s.size(); ++w) {
    auto r = kendall_tau(s[w], y[w], delta, variant);
    if (r.skipped) {
      ++summary.n_skipped;
      continue;
    }
    ++summary.n_evaluated;
    summary.per_window.push_back(r.tau);
    acc += r.tau;
  }
  summary.mean_tau =
      summary.n_evaluated ? acc / static_cast<double>(summary.n_evaluated) : 0.0;
  return summary;
}

struct ApResult {
  double ap = 0.0;
  bool skipped = false;  // no positive labels
};

// Rank by score descending, ties broken by original index ascending;
// AP = mean over positives of (positives at rank <= k) / k.
inline ApResult average_precision(const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("average_precision: length mismatch");
  for (int v : labels)
    if (v != 0 && v != 1)
      throw std::invalid_argument("average_precision: labels must be 0 or 1");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[idx[k]] == 1) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  ApResult result;
  if (hits == 0) {
    result.skipped = true;
    return result;
  }
  result.ap = acc / static_cast<double>(hits);
  return result;
}

struct MapSummary {
  double mean_ap = 0.0;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
};

inline MapSummary summarize_map(const std::vector<std::vector<double>>& scores,
                                const std::vector<std::vector<int>>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("summarize_map: window count mismatch");
  MapSummary summary;
  double acc = 0.0;
  for (std::size_t w = 0; w < scores.size(); ++w) {
    auto r = average_precision(scores[w], labels[w]);
    if (r.skipped) {
      ++summary.n_skipped;
      continue;
    }
    ++summary.n_evaluated;
    acc += r.ap;
  }
  summary.mean_ap =
      summary.n_evaluated ? acc / static_cast<double>(summary.n_evaluated) : 0.0;
  return summary;
}

// ---- CSV emission ----

struct MetricsRow {
  std::uint64_t epoch = 0;
  std::string split;
  double delta = 0.0;
  double mean_tau = 0.0;
  std::size_t n_windows = 0;
  std::size_t n_skipped = 0;
  double map = 0.0;
  double loss_point = 0.0;
  double loss_align = 0.0;
  double loss_pair = 0.0;
  double loss_total = 0.0;
};

inline std::string metrics_csv_header() {
  return "epoch,split,delta,mean_tau,n_windows,n_skipped,map,loss_point,"
         "loss_align,loss_pair,loss_total";
}

inline std::string metrics_csv_row(const MetricsRow& row) {
  std::string out = std::to_string(row.epoch);
  out += ',';
  out += row.split;
  out += ',';
  out += fmt9(row.delta);
  out += ',';
  out += fmt9(row.mean_tau);
  out += ',';
  out += std::to_string(row.n_windows);
  out += ',';
  out += std::to_string(row.n_skipped);
  out += ',';
  out += fmt9(row.map);
  out += ',';
  out += fmt9(row.loss_point);
  out += ',';
  out += fmt9(row.loss_align);
  out += ',';
  out += fmt9(row.loss_pair);
  out += ',';
  out += fmt9(row.loss_total);
  return out;
}

}  // namespace streamhl
