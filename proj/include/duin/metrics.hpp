#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "duin/errors.hpp"

namespace duin {

/// Rank-sum AUC; tied scores share their average rank (0.5 credit per tied pair).
inline double auc(std::span<const double> scores, std::span<const float> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (auto y : labels) {
    if (y != 0.0f && y != 1.0f) throw ContractError("auc: labels must be 0 or 1");
    n_pos += y == 1.0f;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("auc needs at least one positive and one negative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1.0f) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

inline double relaimpr(double auc_model, double auc_base) {
  if (auc_base == 0.5) throw UndefinedMetricError("relaimpr: base AUC is 0.5");
  return ((auc_model - 0.5) / (auc_base - 0.5) - 1.0) * 100.0;
}

struct SegmentAuc {
  double overall = 0;
  double same_attribute = NAN;   // positives and negatives both same-attribute targets
  double cross_attribute = NAN;  // both cross-attribute
  std::size_t same_pairs = 0;
  std::size_t cross_pairs = 0;
  std::size_t mixed_pairs = 0;  // one of each; counted only in the overall AUC
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

/// Each (positive, negative) pair falls into exactly one of same/cross/mixed.
inline SegmentAuc segment_auc(std::span<const double> scores, std::span<const float> labels,
                              std::span<const std::uint8_t> same_attribute) {
  if (same_attribute.size() != scores.size()) throw DimensionError("segment flags differ in length");
  SegmentAuc r;
  r.overall = auc(scores, labels);
  std::size_t pos_same = 0, neg_same = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pos = labels[i] == 1.0f;
    (pos ? r.n_pos : r.n_neg)++;
    if (same_attribute[i]) (pos ? pos_same : neg_same)++;
  }
  r.same_pairs = pos_same * neg_same;
  r.cross_pairs = (r.n_pos - pos_same) * (r.n_neg - neg_same);
  r.mixed_pairs = r.n_pos * r.n_neg - r.same_pairs - r.cross_pairs;
  auto subset = [&](bool flag) {
    std::vector<double> s;
    std::vector<float> y;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (static_cast<bool>(same_attribute[i]) == flag) {
        s.push_back(scores[i]);
        y.push_back(labels[i]);
      }
    }
    return std::pair{s, y};
  };
  if (r.same_pairs > 0) {
    auto [s, y] = subset(true);
    r.same_attribute = auc(s, y);
  }
  if (r.cross_pairs > 0) {
    auto [s, y] = subset(false);
    r.cross_attribute = auc(s, y);
  }
  return r;
}

/// Exact one-sided Wilcoxon rank-sum p-value P(W_x >= observed) under H0, by
/// enumerating every assignment of ranks to the first sample. Ties get mid-ranks.
inline double wilcoxon_rank_sum_greater(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size(), m = y.size();
  if (n == 0 || m == 0) throw UndefinedMetricError("wilcoxon needs two non-empty samples");
  if (n + m > 20) throw ContractError("exact enumeration limited to 20 observations");
  std::vector<double> all(x.begin(), x.end());
  all.insert(all.end(), y.begin(), y.end());
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return all[a] < all[b]; });
  std::vector<double> rank(all.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && all[order[j]] == all[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    i = j;
  }
  double observed = 0;
  for (std::size_t i = 0; i < n; ++i) observed += rank[i];

  std::size_t total = 0, extreme = 0;
  const std::size_t count = all.size();
  for (std::uint32_t subset = 0; subset < (1u << count); ++subset) {
    if (static_cast<std::size_t>(std::popcount(subset)) != n) continue;
    double w = 0;
    for (std::size_t k = 0; k < count; ++k) {
      if (subset & (1u << k)) w += rank[k];
    }
    ++total;
    if (w >= observed - 1e-9) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

struct MeanStd {
  double mean = 0;
  double std = NAN;  // sample std; undefined for a single value
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd r;
  if (v.empty()) return {NAN, NAN};
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (auto x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

}  // namespace duin
