// Copyright (C) 2026 The introspect authors
// SPDX-License-Identifier: Apache-2.0
//

// Slow, independent reference implementations used only by the tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "introspect/frame.hpp"

namespace oracle {

// Number of elements with rank below p * n, counted up from zero.
inline std::size_t zero_count(double p, std::size_t n) {
  std::size_t m = 0;
  while (static_cast<double>(m + 1) <= p * static_cast<double>(n)) ++m;
  return m;
}

// Full sort by (value, flat index), then zero the first m.
inline std::vector<float> sort_and_zero(std::span<const float> x, double p) {
  std::vector<std::pair<float, std::size_t>> ranked;
  for (std::size_t i = 0; i < x.size(); ++i) ranked.emplace_back(x[i], i);
  std::sort(ranked.begin(), ranked.end());
  std::vector<float> out(x.begin(), x.end());
  const std::size_t m = zero_count(p, x.size());
  for (std::size_t r = 0; r < m; ++r) out[ranked[r].second] = 0.0f;
  return out;
}

inline double box_iou(const introspect::Box& a, const introspect::Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return inter / uni;
}

// Enumerates every injective partial assignment of detections (taken in
// descending confidence, stable) to ground truth boxes with IoU >= thr and keeps
// the lexicographically best one, where each detection contributes
// (matched IoU or -1, lower box index preferred). Returns TP flags in that
// visiting order.
inline std::vector<bool> brute_force_greedy(const std::vector<introspect::Detection>& dets,
                                            const std::vector<introspect::GroundTruth>& gts, double thr,
                                            std::vector<std::size_t>* order_out = nullptr) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  if (order_out) *order_out = order;

  using Key = std::vector<std::pair<double, long>>;
  Key best;
  std::vector<long> best_assign;
  std::vector<long> assign(dets.size(), -1);
  std::vector<bool> used(gts.size(), false);
  Key key;

  std::function<void(std::size_t)> recurse = [&](std::size_t k) {
    if (k == order.size()) {
      if (best.empty() || key > best) {
        best = key;
        best_assign = assign;
      }
      return;
    }
    const auto& d = dets[order[k]];
    key.emplace_back(-1.0, 0);
    assign[k] = -1;
    recurse(k + 1);
    key.pop_back();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double v = box_iou(d.box, gts[g].box);
      if (v < thr) continue;
      used[g] = true;
      assign[k] = static_cast<long>(g);
      key.emplace_back(v, -static_cast<long>(g));
      recurse(k + 1);
      key.pop_back();
      used[g] = false;
      assign[k] = -1;
    }
  };
  recurse(0);
  std::vector<bool> tp(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) tp[k] = best_assign[k] >= 0;
  return tp;
}

// AP from TP flags in ranked order: (1/G) * sum over TP ranks of the maximum
// precision at that rank or deeper, found by direct search.
inline double ranked_ap(const std::vector<bool>& tp, std::size_t gt_count) {
  const std::size_t n = tp.size();
  std::vector<double> precision(n);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    hits += tp[k] ? 1 : 0;
    precision[k] = static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!tp[k]) continue;
    double best = 0.0;
    for (std::size_t j = k; j < n; ++j) best = std::max(best, precision[j]);
    sum += best;
  }
  return sum / static_cast<double>(gt_count);
}

inline double frame_map(const introspect::FrameRecord& r, double thr) {
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < introspect::kObjectClassCount; ++c) {
    std::vector<introspect::Detection> dets;
    std::vector<introspect::GroundTruth> gts;
    for (const auto& d : r.detections) {
      if (static_cast<int>(d.cls) == c) dets.push_back(d);
    }
    for (const auto& g : r.ground_truth) {
      if (static_cast<int>(g.cls) == c) gts.push_back(g);
    }
    if (dets.empty() && gts.empty()) continue;
    ++present;
    if (gts.empty()) continue;  // contributes 0
    total += ranked_ap(brute_force_greedy(dets, gts, thr), gts.size());
  }
  return present == 0 ? 1.0 : total / present;
}

// Mann-Whitney by explicit pair counting; labels 1 = positive.
inline double pair_auroc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(std::span<const double>)>& f,
                                 std::vector<double> x, std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double plus = f(x);
  x[i] = x0 - h;
  const double minus = f(x);
  return (plus - minus) / (2.0 * h);
}

}  // namespace oracle
