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
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "invr/common.hpp"
#include "invr/mips.hpp"

namespace invr {

// Inverse retrieval: for every under-exposed item, find the best users, then
// transpose the item->users candidates into capped per-user item lists.

enum class OrderingMode : std::uint8_t {
  kRandomUsers = 0,  // ablation: users drawn uniformly, presentation shuffled
  kInvrRandom = 1,   // model-retrieved users, presentation shuffled
  kInvrScore = 2,    // presentation by inner-product score
  kInvrUserRank = 3, // presentation by the user's rank for the item
};

inline const char* to_string(OrderingMode m) {
  switch (m) {
    case OrderingMode::kRandomUsers:
      return "RANDOM_USERS";
    case OrderingMode::kInvrRandom:
      return "INVR_RANDOM";
    case OrderingMode::kInvrScore:
      return "INVR_SCORE";
    case OrderingMode::kInvrUserRank:
      return "INVR_USER_RANK";
  }
  return "INVR_USER_RANK";
}

inline OrderingMode ordering_mode_from_string(const std::string& s) {
  if (s == "RANDOM_USERS") return OrderingMode::kRandomUsers;
  if (s == "INVR_RANDOM") return OrderingMode::kInvrRandom;
  if (s == "INVR_SCORE") return OrderingMode::kInvrScore;
  if (s == "INVR_USER_RANK") return OrderingMode::kInvrUserRank;
  throw ConfigParse("unknown ordering mode: " + s);
}

struct InvrConfig {
  int users_per_item = 25;            // K: quota of users per treated item
  int items_per_user_cap = 8;         // C: max items a user may be assigned
  double overfetch_factor = 4.0;      // retrieve ceil(K * overfetch) candidates
  OrderingMode ordering_mode = OrderingMode::kInvrUserRank;
  std::int64_t min_exposure = 100;    // E_min: visible impressions target
  int max_impressions_per_user_item = 2;
  int recompute_period = 1;           // ticks between batch recomputations
  bool second_round = false;          // retry shortfalls with widened overfetch
  std::uint64_t seed = 0;

  void validate() const {
    if (users_per_item < 1) throw InvalidConfig("invr.users_per_item must be >= 1");
    if (items_per_user_cap < 1) throw InvalidConfig("invr.items_per_user_cap must be >= 1");
    if (!(overfetch_factor >= 1.0)) throw InvalidConfig("invr.overfetch_factor must be >= 1");
    if (min_exposure < 1) throw InvalidConfig("invr.min_exposure must be >= 1");
    if (max_impressions_per_user_item < 1) {
      throw InvalidConfig("invr.max_impressions_per_user_item must be >= 1");
    }
    if (recompute_period < 1) throw InvalidConfig("invr.recompute_period must be >= 1");
  }
};

// One retrieved (item, user) candidate. user_rank is the user's 1-based
// position in the item's retrieved list.
struct CandidatePair {
  ItemId item = 0;
  UserId user = 0;
  double score = 0.0;
  int user_rank = 0;
};

// Result of the transpose-and-allocate pass.
struct Assignment {
  // Per-user assigned pairs in presentation order (after the variant's item
  // ordering has been applied by the pipeline tick).
  std::unordered_map<UserId, std::vector<CandidatePair>> per_user;
  std::unordered_map<ItemId, std::vector<UserId>> per_item;
  std::unordered_map<ItemId, int> shortfalls;

  std::vector<ItemId> items_for(UserId user) const {
    std::vector<ItemId> out;
    auto it = per_user.find(user);
    if (it == per_user.end()) return out;
    out.reserve(it->second.size());
    for (const auto& p : it->second) out.push_back(p.item);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Exposure ledger
// ---------------------------------------------------------------------------

struct ExposureCounts {
  std::int64_t visible = 0;
  std::int64_t invr_visible = 0;
  std::int64_t clicks = 0;
  bool active = true;  // still below min exposure, hence still InvR-supported
  // Snapshot taken when the item first crossed min exposure.
  std::int64_t visible_at_shutoff = 0;
  std::int64_t invr_at_shutoff = 0;
  bool shutoff_recorded = false;
};

class ExposureLedger {
 public:
  ExposureLedger() = default;
  ExposureLedger(const std::vector<ItemId>& items, std::int64_t e_min) : e_min_(e_min) {
    if (e_min < 1) throw InvalidConfig("ledger min_exposure must be >= 1");
    for (ItemId id : items) entries_.emplace(id, ExposureCounts{});
  }

  std::int64_t e_min() const { return e_min_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(ItemId id) const { return entries_.count(id) > 0; }

  const ExposureCounts& at(ItemId id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw UnknownItem("item not in ledger: " + std::to_string(id));
    return it->second;
  }

  // Applies a batch of events: visible impressions and clicks increment
  // counters, InvR-sourced visible impressions also increment the InvR
  // split, and the active flag is recomputed against min exposure.
  void record_impressions(const std::vector<InteractionRecord>& events) {
    for (const auto& ev : events) {
      auto it = entries_.find(ev.item);
      if (it == entries_.end()) {
        throw UnknownItem("impression for item not in ledger: " + std::to_string(ev.item));
      }
      if (!ev.visible) continue;
      ExposureCounts& c = it->second;
      c.visible += 1;
      if (ev.source == Source::kInvr) c.invr_visible += 1;
      if (ev.clicked) c.clicks += 1;
      if (c.visible >= e_min_) {
        c.active = false;
        if (!c.shutoff_recorded) {
          c.shutoff_recorded = true;
          c.visible_at_shutoff = c.visible;
          c.invr_at_shutoff = c.invr_visible;
        }
      }
    }
  }

  std::vector<ItemId> ids_sorted() const {
    std::vector<ItemId> ids;
    ids.reserve(entries_.size());
    for (const auto& [id, c] : entries_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

 private:
  std::int64_t e_min_ = 1;
  std::unordered_map<ItemId, ExposureCounts> entries_;
};

inline void record_impressions(ExposureLedger& ledger,
                               const std::vector<InteractionRecord>& events) {
  ledger.record_impressions(events);
}

// ---------------------------------------------------------------------------
// Pipeline operations
// ---------------------------------------------------------------------------

struct TreatedCandidate {
  ItemId item = 0;
  PublisherId publisher = 0;
  bool expired = false;
};

// Items of selected publishers that are still below min exposure and not
// expired, ascending by id.
inline std::vector<ItemId> select_treated_items(
    const ExposureLedger& ledger, const std::vector<TreatedCandidate>& catalog,
    const std::unordered_set<PublisherId>& selected_publishers) {
  std::vector<ItemId> out;
  for (const auto& c : catalog) {
    if (c.expired) continue;
    if (selected_publishers.count(c.publisher) == 0) continue;
    if (ledger.at(c.item).visible < ledger.e_min()) out.push_back(c.item);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Exact top-ceil(K * overfetch) users for one item, ranks assigned in
// retrieval order. The fetch size is clamped to the index size.
inline std::vector<CandidatePair> retrieve_candidates(ItemId item,
                                                      const std::vector<double>& item_embedding,
                                                      const MipsIndex& user_index, int users_per_item,
                                                      double overfetch_factor) {
  std::size_t want = static_cast<std::size_t>(
      std::ceil(static_cast<double>(users_per_item) * overfetch_factor));
  want = std::min(want, user_index.size());
  std::vector<ScoredId> top = user_index.top_n(item_embedding, want);
  std::vector<CandidatePair> out;
  out.reserve(top.size());
  for (std::size_t i = 0; i < top.size(); ++i) {
    out.push_back({item, top[i].id, top[i].score, static_cast<int>(i + 1)});
  }
  return out;
}

namespace detail {

// Allocation key under score-based modes: score desc, then item and user id
// ascending for a total order.
inline bool score_key_before(const CandidatePair& a, const CandidatePair& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.item != b.item) return a.item < b.item;
  return a.user < b.user;
}

// Allocation key under the user-rank mode: rank asc, then score desc, ids.
inline bool rank_key_before(const CandidatePair& a, const CandidatePair& b) {
  if (a.user_rank != b.user_rank) return a.user_rank < b.user_rank;
  if (a.score != b.score) return a.score > b.score;
  if (a.item != b.item) return a.item < b.item;
  return a.user < b.user;
}

inline Assignment allocate_random_users(const std::vector<ItemId>& items,
                                        const std::vector<UserId>& user_pool,
                                        const InvrConfig& config) {
  Assignment asg;
  std::vector<UserId> avail(user_pool);
  std::sort(avail.begin(), avail.end());
  Rng rng(config.seed);
  std::unordered_set<UserId> chosen;
  std::vector<ItemId> order(items);
  std::sort(order.begin(), order.end());
  for (ItemId item : order) {
    chosen.clear();
    int assigned = 0;
    for (int k = 0; k < config.users_per_item && !avail.empty(); ++k) {
      if (chosen.size() >= avail.size()) break;  // no unused user left
      std::size_t idx = 0;
      bool found = false;
      for (int attempt = 0; attempt < 64; ++attempt) {
        idx = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(avail.size())));
        if (chosen.count(avail[idx]) == 0) {
          found = true;
          break;
        }
      }
      if (!found) {  // degenerate density of already-chosen users: scan forward
        for (std::size_t step = 0; step < avail.size(); ++step) {
          std::size_t j = (idx + step) % avail.size();
          if (chosen.count(avail[j]) == 0) {
            idx = j;
            found = true;
            break;
          }
        }
      }
      if (!found) break;
      UserId user = avail[idx];
      chosen.insert(user);
      ++assigned;
      CandidatePair pair{item, user, 0.0, assigned};
      asg.per_user[user].push_back(pair);
      asg.per_item[item].push_back(user);
      if (static_cast<int>(asg.per_user[user].size()) >= config.items_per_user_cap) {
        avail[idx] = avail.back();
        avail.pop_back();
      }
    }
    asg.shortfalls[item] = config.users_per_item - assigned;
  }
  return asg;
}

}  // namespace detail

// Sorts all candidate pairs by the variant's allocation key and assigns them
// in one greedy pass: a pair (item, user) is taken iff the item is below its
// user quota and the user below the per-user cap. Deficits are recorded, not
// back-filled. RANDOM_USERS ignores the candidate lists' retrieval keys and
// samples users uniformly from `user_pool` instead.
inline Assignment transpose_and_allocate(const std::vector<std::vector<CandidatePair>>& candidates,
                                         const InvrConfig& config,
                                         const std::vector<UserId>& user_pool = {}) {
  config.validate();
  if (config.ordering_mode == OrderingMode::kRandomUsers) {
    std::vector<ItemId> items;
    items.reserve(candidates.size());
    for (const auto& list : candidates) {
      if (!list.empty()) items.push_back(list.front().item);
    }
    return detail::allocate_random_users(items, user_pool, config);
  }

  std::vector<CandidatePair> pairs;
  std::size_t total = 0;
  for (const auto& list : candidates) total += list.size();
  pairs.reserve(total);
  for (const auto& list : candidates) pairs.insert(pairs.end(), list.begin(), list.end());

  if (config.ordering_mode == OrderingMode::kInvrUserRank) {
    std::sort(pairs.begin(), pairs.end(), detail::rank_key_before);
  } else {
    std::sort(pairs.begin(), pairs.end(), detail::score_key_before);
  }

  Assignment asg;
  std::unordered_map<ItemId, int> item_count;
  for (const auto& list : candidates) {
    if (!list.empty()) item_count.emplace(list.front().item, 0);
  }
  for (const auto& p : pairs) {
    auto ic = item_count.find(p.item);
    if (ic->second >= config.users_per_item) continue;
    auto& mine = asg.per_user[p.user];
    if (static_cast<int>(mine.size()) >= config.items_per_user_cap) continue;
    mine.push_back(p);
    asg.per_item[p.item].push_back(p.user);
    ic->second += 1;
  }
  for (const auto& [item, count] : item_count) {
    asg.shortfalls[item] = config.users_per_item - count;
  }
  return asg;
}

// Presentation order of one user's assigned items. Random modes shuffle with
// the given seed; deterministic modes tie-break by item id ascending.
inline std::vector<ItemId> order_items_for_user(UserId user,
                                                const std::vector<CandidatePair>& assigned,
                                                OrderingMode mode, std::uint64_t seed) {
  std::vector<CandidatePair> pairs(assigned);
  switch (mode) {
    case OrderingMode::kInvrScore:
      std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item < b.item;
      });
      break;
    case OrderingMode::kInvrUserRank:
      std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
        if (a.user_rank != b.user_rank) return a.user_rank < b.user_rank;
        return a.item < b.item;
      });
      break;
    case OrderingMode::kInvrRandom:
    case OrderingMode::kRandomUsers: {
      std::sort(pairs.begin(), pairs.end(),
                [](const auto& a, const auto& b) { return a.item < b.item; });
      Rng rng(mix_key({seed, static_cast<std::uint64_t>(user)}));
      rng.shuffle(pairs);
      break;
    }
  }
  std::vector<ItemId> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.item);
  return out;
}

// Drops items the user has already visibly seen max_impressions times.
inline std::vector<ItemId> dedup_filter(const std::unordered_map<ItemId, int>& seen_visible,
                                        const std::vector<ItemId>& items,
                                        int max_impressions_per_user_item) {
  std::vector<ItemId> out;
  out.reserve(items.size());
  for (ItemId id : items) {
    auto it = seen_visible.find(id);
    if (it != seen_visible.end() && it->second >= max_impressions_per_user_item) continue;
    out.push_back(id);
  }
  return out;
}

struct ColdStartStat {
  ItemId item = 0;
  Tick created = 0;
  std::int64_t interactions = 0;
};

// Items still young and short on interactions; candidates for random slate
// insertion until their embeddings have something to train on.
inline std::vector<ItemId> cold_start_pool(const std::vector<ColdStartStat>& stats,
                                           std::int64_t min_interactions, Tick age_limit,
                                           Tick now) {
  std::vector<ItemId> out;
  for (const auto& s : stats) {
    if (now - s.created >= age_limit) continue;
    if (s.interactions >= min_interactions) continue;
    out.push_back(s.item);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace invr
