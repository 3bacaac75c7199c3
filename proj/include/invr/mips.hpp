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
#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <utility>
#include <vector>

#include "invr/common.hpp"

namespace invr {

struct ScoredId {
  std::int64_t id = 0;
  double score = 0.0;
};

// Scores are ordered descending with ascending id as the tie-break, so every
// query has one total order and rank_of is consistent with top_n.
inline bool scored_before(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

// Immutable inner-product index over id'd vectors. Queries are exact full
// scans; top_n_approx probes an inverted-file clustering built lazily on
// first use and scores only the probed subset.
class MipsIndex {
 public:
  static MipsIndex build(std::vector<std::pair<std::int64_t, std::vector<double>>> entries) {
    if (entries.empty()) throw EmptyIndex("cannot build index from zero vectors");
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    MipsIndex index;
    index.dim_ = static_cast<int>(entries.front().second.size());
    if (index.dim_ < 1) throw DimensionMismatch("vectors must have dim >= 1");
    index.ids_.reserve(entries.size());
    index.data_.reserve(entries.size() * static_cast<std::size_t>(index.dim_));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& [id, vec] = entries[i];
      if (i > 0 && id == entries[i - 1].first) {
        throw DuplicateId("duplicate id in index: " + std::to_string(id));
      }
      if (static_cast<int>(vec.size()) != index.dim_) {
        throw DimensionMismatch("mixed vector dimensionalities in index build");
      }
      index.ids_.push_back(id);
      index.data_.insert(index.data_.end(), vec.begin(), vec.end());
      index.pos_.emplace(id, i);
    }
    index.approx_ = std::make_unique<ApproxState>();
    return index;
  }

  static MipsIndex build(const std::unordered_map<std::int64_t, std::vector<double>>& entries) {
    std::vector<std::pair<std::int64_t, std::vector<double>>> flat(entries.begin(), entries.end());
    return build(std::move(flat));
  }

  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::int64_t>& ids() const { return ids_; }
  bool contains(std::int64_t id) const { return pos_.count(id) > 0; }

  const double* vector_at(std::size_t i) const {
    return data_.data() + i * static_cast<std::size_t>(dim_);
  }

  std::vector<ScoredId> top_n(const std::vector<double>& query, std::size_t n) const {
    check_query(query);
    if (n == 0) return {};
    std::vector<ScoredId> scored = score_all(query);
    return take_top(std::move(scored), n);
  }

  // 1-based position of target_id in the full top_n ordering.
  std::size_t rank_of(const std::vector<double>& query, std::int64_t target_id) const {
    check_query(query);
    auto it = pos_.find(target_id);
    if (it == pos_.end()) throw UnknownId("id not in index: " + std::to_string(target_id));
    double target_score = score_of(query, it->second);
    std::size_t better = 0;
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      double s = score_of(query, i);
      if (s > target_score || (s == target_score && ids_[i] < target_id)) ++better;
    }
    return better + 1;
  }

  // Scores the distinct vectors of the best-aligned clusters until at least
  // `probe_budget` of them have been seen. probe_budget >= size degenerates
  // to the exact search.
  std::vector<ScoredId> top_n_approx(const std::vector<double>& query, std::size_t n,
                                     std::size_t probe_budget) const {
    check_query(query);
    if (n == 0) return {};
    if (probe_budget >= size()) return top_n(query, n);
    ensure_clusters();

    std::vector<ScoredId> order(approx_->centroids.size());
    for (std::size_t c = 0; c < approx_->centroids.size(); ++c) {
      order[c].id = static_cast<std::int64_t>(c);
      order[c].score = dot(query, approx_->centroids[c]);
    }
    std::sort(order.begin(), order.end(), scored_before);

    // Vectors are soft-assigned to multiple clusters; score each one once.
    std::vector<char> visited(size(), 0);
    std::vector<ScoredId> scored;
    scored.reserve(probe_budget + 64);
    for (const auto& c : order) {
      if (scored.size() >= probe_budget) break;
      for (std::size_t i : approx_->members[static_cast<std::size_t>(c.id)]) {
        if (visited[i]) continue;
        visited[i] = 1;
        scored.push_back({ids_[i], score_of(query, i)});
      }
    }
    return take_top(std::move(scored), n);
  }

  std::vector<ScoredId> top_n_approx(const std::vector<double>& query, std::size_t n) const {
    return top_n_approx(query, n, default_probe_budget());
  }

  std::size_t default_probe_budget() const { return std::max<std::size_t>(3 * size() / 10, 1); }

 private:
  struct ApproxState {
    std::once_flag once;
    std::vector<std::vector<double>> centroids;
    std::vector<std::vector<std::size_t>> members;
  };

  void check_query(const std::vector<double>& query) const {
    if (static_cast<int>(query.size()) != dim_) {
      throw DimensionMismatch("query dim does not match index dim");
    }
  }

  double score_of(const std::vector<double>& query, std::size_t i) const {
    const double* v = vector_at(i);
    double s = 0.0;
    for (int k = 0; k < dim_; ++k) s += query[static_cast<std::size_t>(k)] * v[k];
    return s;
  }

  std::vector<ScoredId> score_all(const std::vector<double>& query) const {
    std::vector<ScoredId> scored(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      scored[i].id = ids_[i];
      scored[i].score = score_of(query, i);
    }
    return scored;
  }

  static std::vector<ScoredId> take_top(std::vector<ScoredId> scored, std::size_t n) {
    if (n >= scored.size()) {
      std::sort(scored.begin(), scored.end(), scored_before);
      return scored;
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n),
                      scored.end(), scored_before);
    scored.resize(n);
    return scored;
  }

  // k-means over the stored vectors with k ~ 2*sqrt(size), seeded k-means++
  // initialization, and soft assignment of every vector to its two nearest
  // clusters (the overlap is what keeps boundary vectors findable). Runs
  // once per index.
  void ensure_clusters() const {
    std::call_once(approx_->once, [this] {
      const std::size_t n = size();
      const std::size_t k = std::min<std::size_t>(
          n, std::max<std::size_t>(
                 1, static_cast<std::size_t>(std::ceil(2.0 * std::sqrt(static_cast<double>(n))))));
      const std::size_t d = static_cast<std::size_t>(dim_);
      Rng rng(0x5ca99u);

      std::vector<std::vector<double>> centroids;
      centroids.reserve(k);
      std::vector<double> dist(n, 1.0);
      centroids.emplace_back(vector_at(0), vector_at(0) + d);
      while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double best = dist[i];
          double dd = sq_dist(vector_at(i), centroids.back());
          if (centroids.size() == 1 || dd < best) dist[i] = dd;
          total += dist[i];
        }
        double target = rng.uniform() * total;
        std::size_t pick = n - 1;
        double run = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          run += dist[i];
          if (run >= target) {
            pick = i;
            break;
          }
        }
        centroids.emplace_back(vector_at(pick), vector_at(pick) + d);
      }

      std::vector<std::size_t> assign(n, 0);
      for (int iter = 0; iter < 8; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
          double best = sq_dist(vector_at(i), centroids[0]);
          std::size_t arg = 0;
          for (std::size_t c = 1; c < centroids.size(); ++c) {
            double dd = sq_dist(vector_at(i), centroids[c]);
            if (dd < best) {
              best = dd;
              arg = c;
            }
          }
          assign[i] = arg;
        }
        for (auto& c : centroids) std::fill(c.begin(), c.end(), 0.0);
        std::vector<std::size_t> counts(centroids.size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
          const double* v = vector_at(i);
          auto& c = centroids[assign[i]];
          for (std::size_t j = 0; j < d; ++j) c[j] += v[j];
          ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < centroids.size(); ++c) {
          if (counts[c] == 0) continue;
          double inv = 1.0 / static_cast<double>(counts[c]);
          for (auto& x : centroids[c]) x *= inv;
        }
      }

      approx_->members.assign(centroids.size(), {});
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        std::size_t second = 0;
        double best_d = sq_dist(vector_at(i), centroids[0]);
        double second_d = best_d;
        bool have_second = false;
        for (std::size_t c = 1; c < centroids.size(); ++c) {
          double dd = sq_dist(vector_at(i), centroids[c]);
          if (dd < best_d) {
            second = best;
            second_d = best_d;
            have_second = true;
            best = c;
            best_d = dd;
          } else if (!have_second || dd < second_d) {
            second = c;
            second_d = dd;
            have_second = true;
          }
        }
        approx_->members[best].push_back(i);
        if (have_second && second != best) approx_->members[second].push_back(i);
      }
      approx_->centroids = std::move(centroids);
    });
  }

  static double sq_dist(const double* a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      double diff = a[i] - b[i];
      s += diff * diff;
    }
    return s;
  }

  int dim_ = 0;
  std::vector<std::int64_t> ids_;
  std::vector<double> data_;
  std::unordered_map<std::int64_t, std::size_t> pos_;
  std::unique_ptr<ApproxState> approx_;
};

}  // namespace invr
