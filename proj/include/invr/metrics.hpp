// Copyright 2026 The InvRLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "invr/common.hpp"
#include "invr/pipeline.hpp"

namespace invr {

// Distributional inequality metrics over per-item exposure counts, plus the
// per-cohort performance metrics used to compare variants.

using ExposureDistribution = std::vector<std::pair<ItemId, std::int64_t>>;

namespace detail {

// Exposure counts ascending (item id ascending on ties) and their total.
inline std::pair<std::vector<std::int64_t>, double> sorted_counts(
    const ExposureDistribution& dist) {
  ExposureDistribution sorted(dist);
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  std::vector<std::int64_t> counts;
  counts.reserve(sorted.size());
  double total = 0.0;
  for (const auto& [id, c] : sorted) {
    if (c < 0) throw InvalidConfig("exposure counts must be nonnegative");
    counts.push_back(c);
    total += static_cast<double>(c);
  }
  if (sorted.empty() || total <= 0.0) {
    throw ZeroTotalExposure("exposure distribution has zero total");
  }
  return {std::move(counts), total};
}

}  // namespace detail

// Curve points (k/n, cumulative exposure share of the k least-exposed items)
// for k = 0..n. Non-decreasing and convex, anchored at (0,0) and (1,1).
inline std::vector<std::pair<double, double>> lorenz_curve(const ExposureDistribution& dist) {
  auto [counts, total] = detail::sorted_counts(dist);
  const std::size_t n = counts.size();
  std::vector<std::pair<double, double>> points;
  points.reserve(n + 1);
  points.emplace_back(0.0, 0.0);
  double cum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += static_cast<double>(counts[k]);
    points.emplace_back(static_cast<double>(k + 1) / static_cast<double>(n), cum / total);
  }
  return points;
}

// Lorenz-curve value at population fraction p, linearly interpolated.
inline double bottom_share(const ExposureDistribution& dist, double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidConfig("share fraction must be in (0,1)");
  auto [counts, total] = detail::sorted_counts(dist);
  const double n = static_cast<double>(counts.size());
  double scaled = p * n;
  std::size_t whole = static_cast<std::size_t>(scaled);
  if (whole >= counts.size()) whole = counts.size() - 1;  // guard p*n == n rounding
  double frac = scaled - static_cast<double>(whole);
  double cum = 0.0;
  for (std::size_t k = 0; k < whole; ++k) cum += static_cast<double>(counts[k]);
  cum += frac * static_cast<double>(counts[whole]);
  return cum / total;
}

// Exposure share of the top p fraction of the item population.
inline double top_share(const ExposureDistribution& dist, double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidConfig("share fraction must be in (0,1)");
  return 1.0 - bottom_share(dist, 1.0 - p);
}

// Fraction of treated items whose visible impressions reached min exposure.
inline double psei(const std::vector<ItemId>& treated_items, const ExposureLedger& ledger) {
  if (treated_items.empty()) throw EmptyTreatedSet("psei over empty treated set");
  std::size_t ok = 0;
  for (ItemId id : treated_items) {
    if (ledger.at(id).visible >= ledger.e_min()) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(treated_items.size());
}

// 1 - 2 * (area under the Lorenz curve), trapezoid rule.
inline double gini(const ExposureDistribution& dist) {
  auto points = lorenz_curve(dist);
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].first - points[i - 1].first) * (points[i].second + points[i - 1].second) / 2.0;
  }
  return 1.0 - 2.0 * area;
}

struct CohortStats {
  double ctr = 0.0;              // macro-averaged per user over visible impressions
  double clicks_per_user = 0.0;  // total clicks / users with >= 1 visible impression
  bool empty = true;             // no record survived the filter
};

// CTR and clicks per user over records matching the optional source filter
// and optional user universe. The CTR is the mean over users of their own
// clicks/impressions ratio; users without filtered impressions are excluded.
inline CohortStats cohort_ctr_clicks(const std::vector<InteractionRecord>& log,
                                     std::optional<Source> source_filter,
                                     const std::unordered_set<UserId>* users = nullptr) {
  std::unordered_map<UserId, std::pair<std::int64_t, std::int64_t>> per_user;  // visible, clicks
  for (const auto& rec : log) {
    if (!rec.visible) continue;
    if (source_filter && rec.source != *source_filter) continue;
    if (users && users->count(rec.user) == 0) continue;
    auto& uc = per_user[rec.user];
    uc.first += 1;
    if (rec.clicked) uc.second += 1;
  }
  CohortStats out;
  if (per_user.empty()) return out;
  double ctr_sum = 0.0;
  double clicks_total = 0.0;
  for (const auto& [user, uc] : per_user) {
    ctr_sum += static_cast<double>(uc.second) / static_cast<double>(uc.first);
    clicks_total += static_cast<double>(uc.second);
  }
  out.ctr = ctr_sum / static_cast<double>(per_user.size());
  out.clicks_per_user = clicks_total / static_cast<double>(per_user.size());
  out.empty = false;
  return out;
}

// s_0 = x_0; s_t = alpha * x_t + (1 - alpha) * s_{t-1}.
inline std::vector<double> ewma(const std::vector<double>& series, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidAlpha("ewma alpha must be in (0,1]");
  if (series.empty()) throw InvalidConfig("ewma over empty series");
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (std::size_t t = 1; t < series.size(); ++t) {
    out[t] = alpha * series[t] + (1.0 - alpha) * out[t - 1];
  }
  return out;
}

// Signed percentage change of variant relative to baseline.
inline double relative_change(double variant_value, double baseline_value) {
  if (baseline_value == 0.0) throw ZeroBaseline("relative change against zero baseline");
  return 100.0 * (variant_value - baseline_value) / baseline_value;
}

// Metric row for one variant run.
struct MetricReport {
  std::string variant;
  double b50ps = 0.0;
  double t1ps = 0.0;
  double psei = 0.0;
  double gini = 0.0;
  double ctr_invr = 0.0;
  double clicks_invr = 0.0;
  double ctr_overall = 0.0;
  double clicks_overall = 0.0;
  bool invr_empty = true;  // no InvR-sourced impressions in the run
  // Mean over shut-off items of the InvR share of their exposure at the
  // moment min exposure was reached.
  double invr_min_exposure_share = 0.0;
};

}  // namespace invr
