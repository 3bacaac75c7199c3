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

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "invr/pipeline.hpp"

using namespace invr;

namespace {

ExposureLedger ledger_with(const std::vector<std::pair<ItemId, std::int64_t>>& counts,
                           std::int64_t e_min) {
  std::vector<ItemId> ids;
  for (const auto& [id, c] : counts) ids.push_back(id);
  ExposureLedger ledger(ids, e_min);
  std::vector<InteractionRecord> events;
  for (const auto& [id, c] : counts) {
    for (std::int64_t i = 0; i < c; ++i) {
      InteractionRecord r;
      r.item = id;
      r.visible = true;
      events.push_back(r);
    }
  }
  ledger.record_impressions(events);
  return ledger;
}

InvrConfig config_kc(int k, int c, OrderingMode mode = OrderingMode::kInvrScore) {
  InvrConfig cfg;
  cfg.users_per_item = k;
  cfg.items_per_user_cap = c;
  cfg.ordering_mode = mode;
  return cfg;
}

// Random allocation instance; candidate lists are per-item rank-ordered.
std::vector<std::vector<CandidatePair>> random_candidates(Rng& rng, int n_items, int n_users,
                                                          int per_item) {
  std::vector<std::vector<CandidatePair>> out;
  for (ItemId item = 0; item < n_items; ++item) {
    std::vector<UserId> users(static_cast<std::size_t>(n_users));
    for (int u = 0; u < n_users; ++u) users[static_cast<std::size_t>(u)] = u;
    rng.shuffle(users);
    users.resize(static_cast<std::size_t>(std::min(per_item, n_users)));
    std::vector<CandidatePair> list;
    double score = 10.0 + rng.uniform();
    int rank = 1;
    for (UserId u : users) {
      score -= rng.uniform();  // strictly decreasing within the list
      list.push_back({item, u, score, rank++});
    }
    out.push_back(std::move(list));
  }
  return out;
}

void check_assignment_invariants(const Assignment& asg,
                                 const std::vector<std::vector<CandidatePair>>& candidates,
                                 const InvrConfig& cfg) {
  for (const auto& [user, pairs] : asg.per_user) {
    REQUIRE(static_cast<int>(pairs.size()) <= cfg.items_per_user_cap);
    std::set<ItemId> distinct;
    for (const auto& p : pairs) distinct.insert(p.item);
    REQUIRE(distinct.size() == pairs.size());
  }
  for (const auto& list : candidates) {
    if (list.empty()) continue;
    ItemId item = list.front().item;
    auto users_it = asg.per_item.find(item);
    int assigned = users_it == asg.per_item.end() ? 0
                                                  : static_cast<int>(users_it->second.size());
    REQUIRE(asg.shortfalls.count(item) == 1);
    REQUIRE(assigned + asg.shortfalls.at(item) == cfg.users_per_item);
    if (assigned > 0) {
      std::set<UserId> distinct(users_it->second.begin(), users_it->second.end());
      REQUIRE(distinct.size() == users_it->second.size());
    }
  }
  // Cross-consistency: per_item and per_user describe the same pairs.
  std::size_t from_items = 0;
  for (const auto& [item, users] : asg.per_item) from_items += users.size();
  std::size_t from_users = 0;
  for (const auto& [user, pairs] : asg.per_user) from_users += pairs.size();
  REQUIRE(from_items == from_users);
}

}  // namespace

TEST_CASE("select_treated_items returns nothing at full exposure") {
  ExposureLedger ledger = ledger_with({{1, 12}, {2, 15}}, 10);
  std::vector<TreatedCandidate> catalog{{1, 0, false}, {2, 0, false}};
  CHECK(select_treated_items(ledger, catalog, {0}).empty());
}

TEST_CASE("select_treated_items uses a strict threshold") {
  ExposureLedger ledger = ledger_with({{1, 5}, {2, 10}, {3, 20}}, 10);
  std::vector<TreatedCandidate> catalog{{1, 0, false}, {2, 0, false}, {3, 0, false}};
  CHECK(select_treated_items(ledger, catalog, {0}) == std::vector<ItemId>{1});
}

TEST_CASE("select_treated_items filters by publisher and expiry") {
  ExposureLedger ledger = ledger_with({{1, 0}, {2, 0}}, 10);
  std::vector<TreatedCandidate> catalog{{1, 0, false}, {2, 1, false}};
  CHECK(select_treated_items(ledger, catalog, {1}) == std::vector<ItemId>{2});
  std::vector<TreatedCandidate> expired{{1, 0, true}};
  CHECK(select_treated_items(ledger, expired, {0}).empty());
}

TEST_CASE("retrieve_candidates clamps to the index size and ranks in order") {
  MipsIndex index = MipsIndex::build(
      std::vector<std::pair<std::int64_t, std::vector<double>>>{{1, {1.0, 0.0}},
                                                                {2, {0.5, 0.5}},
                                                                {3, {0.0, 1.0}}});
  auto pairs = retrieve_candidates(7, {1.0, 0.0}, index, 2, 2.0);
  REQUIRE(pairs.size() == 3);  // ceil(2*2) clamped to 3
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].item == 7);
    CHECK(pairs[i].user_rank == static_cast<int>(i) + 1);
  }
  CHECK(pairs[0].user == 1);
}

TEST_CASE("an item embedding equal to a user's embedding retrieves that user first") {
  MipsIndex index = MipsIndex::build(
      std::vector<std::pair<std::int64_t, std::vector<double>>>{{10, {1.0, 0.0, 0.0}},
                                                                {11, {0.0, 1.0, 0.0}},
                                                                {12, {0.0, 0.0, 1.0}}});
  auto pairs = retrieve_candidates(5, {0.0, 1.0, 0.0}, index, 1, 1.0);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].user == 11);
  CHECK(pairs[0].score == 1.0);
}

TEST_CASE("transpose_and_allocate reproduces the two-item greedy example") {
  std::vector<std::vector<CandidatePair>> candidates{
      {{100, 1, 0.9, 1}, {100, 2, 0.8, 2}, {100, 3, 0.7, 3}},
      {{200, 1, 0.85, 1}, {200, 3, 0.6, 2}, {200, 4, 0.5, 3}}};
  Assignment asg = transpose_and_allocate(candidates, config_kc(2, 1));
  REQUIRE(asg.per_item.at(100) == std::vector<UserId>{1, 2});
  REQUIRE(asg.per_item.at(200) == std::vector<UserId>{3, 4});
  CHECK(asg.shortfalls.at(100) == 0);
  CHECK(asg.shortfalls.at(200) == 0);
}

TEST_CASE("deficits are recorded when candidates run out") {
  std::vector<std::vector<CandidatePair>> candidates{{{1, 10, 0.9, 1}, {1, 11, 0.8, 2}}};
  Assignment asg = transpose_and_allocate(candidates, config_kc(3, 1));
  CHECK(asg.shortfalls.at(1) == 1);
  CHECK(asg.per_item.at(1).size() == 2);
}

TEST_CASE("with a non-binding cap the allocation is the per-item top-K truncation") {
  Rng rng(61);
  auto candidates = random_candidates(rng, 6, 30, 12);
  InvrConfig cfg = config_kc(4, 100);  // cap never binds
  Assignment asg = transpose_and_allocate(candidates, cfg);
  for (const auto& list : candidates) {
    std::vector<UserId> expect;
    for (int i = 0; i < 4; ++i) expect.push_back(list[static_cast<std::size_t>(i)].user);
    std::vector<UserId> got = asg.per_item.at(list.front().item);
    std::sort(expect.begin(), expect.end());
    std::sort(got.begin(), got.end());
    CHECK(got == expect);
  }
}

TEST_CASE("allocation invariants hold over random instances") {
  Rng rng(500);
  for (int inst = 0; inst < 100; ++inst) {
    int n_items = 1 + static_cast<int>(rng.uniform_int(8));
    int n_users = 4 + static_cast<int>(rng.uniform_int(40));
    int per_item = 1 + static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(n_users)));
    auto candidates = random_candidates(rng, n_items, n_users, per_item);
    InvrConfig cfg = config_kc(1 + static_cast<int>(rng.uniform_int(6)),
                               1 + static_cast<int>(rng.uniform_int(5)),
                               rng.uniform() < 0.5 ? OrderingMode::kInvrScore
                                                   : OrderingMode::kInvrUserRank);
    Assignment asg = transpose_and_allocate(candidates, cfg);
    check_assignment_invariants(asg, candidates, cfg);
  }
}

TEST_CASE("exhaustive candidates with capacity slack leave no shortfall") {
  Rng rng(321);
  for (int inst = 0; inst < 50; ++inst) {
    int n_items = 1 + static_cast<int>(rng.uniform_int(6));
    int k = 1 + static_cast<int>(rng.uniform_int(4));
    int c = 1 + static_cast<int>(rng.uniform_int(3));
    // Slack >= K*C guarantees the single greedy pass cannot strand an item.
    int n_users = (n_items * k + k * c + c - 1) / c + 1;
    auto candidates = random_candidates(rng, n_items, n_users, n_users);  // exhaustive
    InvrConfig cfg = config_kc(k, c);
    Assignment asg = transpose_and_allocate(candidates, cfg);
    for (const auto& [item, deficit] : asg.shortfalls) CHECK(deficit == 0);
  }
}

TEST_CASE("allocation is deterministic") {
  Rng rng(88);
  auto candidates = random_candidates(rng, 5, 25, 10);
  InvrConfig cfg = config_kc(3, 2);
  Assignment a = transpose_and_allocate(candidates, cfg);
  Assignment b = transpose_and_allocate(candidates, cfg);
  REQUIRE(a.per_user.size() == b.per_user.size());
  for (const auto& [user, pairs] : a.per_user) {
    const auto& other = b.per_user.at(user);
    REQUIRE(pairs.size() == other.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].item == other[i].item);
      CHECK(pairs[i].score == other[i].score);
    }
  }
}

TEST_CASE("a unit cap with exhaustive candidates spreads items over distinct users") {
  Rng rng(17);
  int n_items = 5;
  int n_users = 40;
  int k = 4;
  auto candidates = random_candidates(rng, n_items, n_users, n_users);
  Assignment asg = transpose_and_allocate(candidates, config_kc(k, 1));
  std::set<UserId> users;
  std::size_t assigned = 0;
  for (const auto& [item, list] : asg.per_item) {
    for (UserId u : list) users.insert(u);
    assigned += list.size();
  }
  CHECK(assigned == static_cast<std::size_t>(n_items * k));
  CHECK(users.size() == assigned);  // no reuse under C=1
}

TEST_CASE("random-users mode draws K distinct users per item under the cap") {
  std::vector<UserId> pool;
  for (UserId u = 0; u < 30; ++u) pool.push_back(u);
  std::vector<std::vector<CandidatePair>> items;
  for (ItemId item = 0; item < 10; ++item) items.push_back({{item, 0, 0.0, 1}});
  InvrConfig cfg = config_kc(6, 3, OrderingMode::kRandomUsers);
  cfg.seed = 42;
  Assignment asg = transpose_and_allocate(items, cfg, pool);
  check_assignment_invariants(asg, items, cfg);
  for (const auto& [item, users] : asg.per_item) {
    CHECK(users.size() == 6);
  }
  Assignment again = transpose_and_allocate(items, cfg, pool);
  for (const auto& [item, users] : asg.per_item) {
    CHECK(again.per_item.at(item) == users);
  }
  cfg.seed = 43;
  Assignment other = transpose_and_allocate(items, cfg, pool);
  bool any_diff = false;
  for (const auto& [item, users] : asg.per_item) {
    if (other.per_item.at(item) != users) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("random-users mode reports shortfall when the pool is too small") {
  std::vector<UserId> pool{1, 2};
  std::vector<std::vector<CandidatePair>> items{{{9, 0, 0.0, 1}}};
  InvrConfig cfg = config_kc(5, 10, OrderingMode::kRandomUsers);
  Assignment asg = transpose_and_allocate(items, cfg, pool);
  CHECK(asg.per_item.at(9).size() == 2);
  CHECK(asg.shortfalls.at(9) == 3);
}

TEST_CASE("ordering modes invert as score and rank disagree") {
  std::vector<CandidatePair> pairs{{1, 7, 0.9, 40}, {2, 7, 0.7, 2}};
  CHECK(order_items_for_user(7, pairs, OrderingMode::kInvrScore, 0) ==
        std::vector<ItemId>{1, 2});
  CHECK(order_items_for_user(7, pairs, OrderingMode::kInvrUserRank, 0) ==
        std::vector<ItemId>{2, 1});
}

TEST_CASE("a single item keeps its place under every mode") {
  std::vector<CandidatePair> pairs{{5, 7, 0.4, 3}};
  for (OrderingMode mode : {OrderingMode::kRandomUsers, OrderingMode::kInvrRandom,
                            OrderingMode::kInvrScore, OrderingMode::kInvrUserRank}) {
    CHECK(order_items_for_user(7, pairs, mode, 123) == std::vector<ItemId>{5});
  }
}

TEST_CASE("equal keys fall back to ascending item id") {
  std::vector<CandidatePair> pairs{{9, 7, 0.5, 2}, {3, 7, 0.5, 2}, {6, 7, 0.5, 2}};
  CHECK(order_items_for_user(7, pairs, OrderingMode::kInvrScore, 0) ==
        std::vector<ItemId>{3, 6, 9});
  CHECK(order_items_for_user(7, pairs, OrderingMode::kInvrUserRank, 0) ==
        std::vector<ItemId>{3, 6, 9});
}

TEST_CASE("random presentation is a seeded deterministic shuffle") {
  std::vector<CandidatePair> pairs{{1, 7, 0.9, 1}, {2, 7, 0.8, 2}, {3, 7, 0.7, 3},
                                   {4, 7, 0.6, 4}, {5, 7, 0.5, 5}};
  auto a = order_items_for_user(7, pairs, OrderingMode::kInvrRandom, 99);
  auto b = order_items_for_user(7, pairs, OrderingMode::kInvrRandom, 99);
  CHECK(a == b);
  auto c = order_items_for_user(8, pairs, OrderingMode::kInvrRandom, 99);
  std::vector<ItemId> sorted_a(a);
  std::sort(sorted_a.begin(), sorted_a.end());
  CHECK(sorted_a == std::vector<ItemId>{1, 2, 3, 4, 5});
  CHECK((a != c || a != order_items_for_user(7, pairs, OrderingMode::kInvrRandom, 100)));
}

TEST_CASE("record_impressions crosses the threshold and flips active") {
  ExposureLedger ledger = ledger_with({{1, 9}}, 10);
  CHECK(ledger.at(1).active);
  InteractionRecord r;
  r.item = 1;
  r.visible = true;
  r.source = Source::kInvr;
  ledger.record_impressions({r});
  CHECK_FALSE(ledger.at(1).active);
  CHECK(ledger.at(1).visible == 10);
  CHECK(ledger.at(1).visible_at_shutoff == 10);
}

TEST_CASE("non-visible events leave counters unchanged") {
  ExposureLedger ledger = ledger_with({{1, 3}}, 10);
  InteractionRecord r;
  r.item = 1;
  r.visible = false;
  ledger.record_impressions({r});
  CHECK(ledger.at(1).visible == 3);
  CHECK(ledger.at(1).invr_visible == 0);
}

TEST_CASE("source tags split the visible count") {
  ExposureLedger ledger = ledger_with({{1, 0}}, 10);
  std::vector<InteractionRecord> events;
  for (int i = 0; i < 3; ++i) {
    InteractionRecord r;
    r.item = 1;
    r.visible = true;
    r.source = i < 2 ? Source::kInvr : Source::kOrganic;
    r.clicked = i == 0;
    events.push_back(r);
  }
  ledger.record_impressions(events);
  CHECK(ledger.at(1).visible == 3);
  CHECK(ledger.at(1).invr_visible == 2);
  CHECK(ledger.at(1).clicks == 1);
}

TEST_CASE("record_impressions rejects unknown items") {
  ExposureLedger ledger = ledger_with({{1, 0}}, 10);
  InteractionRecord r;
  r.item = 99;
  r.visible = true;
  REQUIRE_THROWS_AS(ledger.record_impressions({r}), UnknownItem);
}

TEST_CASE("shutoff removes items from subsequent treatment selection") {
  ExposureLedger ledger = ledger_with({{1, 0}, {2, 0}}, 3);
  std::vector<TreatedCandidate> catalog{{1, 0, false}, {2, 0, false}};
  REQUIRE(select_treated_items(ledger, catalog, {0}).size() == 2);
  std::vector<InteractionRecord> events;
  for (int i = 0; i < 3; ++i) {
    InteractionRecord r;
    r.item = 1;
    r.visible = true;
    events.push_back(r);
  }
  ledger.record_impressions(events);
  CHECK(select_treated_items(ledger, catalog, {0}) == std::vector<ItemId>{2});
  // Counters keep rising; the item never reappears.
  ledger.record_impressions(events);
  CHECK(select_treated_items(ledger, catalog, {0}) == std::vector<ItemId>{2});
}

TEST_CASE("dedup filter removes items at the impression cap") {
  std::unordered_map<ItemId, int> seen{{1, 2}, {2, 1}};
  CHECK(dedup_filter(seen, {1, 2, 3}, 2) == std::vector<ItemId>{2, 3});
  CHECK(dedup_filter({}, {1, 2}, 2) == std::vector<ItemId>{1, 2});
}

TEST_CASE("cold start pool is young items short on interactions") {
  std::vector<ColdStartStat> stats{
      {1, 0, 0},    // brand new, nothing yet
      {2, 0, 50},   // old in interactions
      {3, 0, 9},    // just below the bar
  };
  CHECK(cold_start_pool(stats, 10, 5, 2) == std::vector<ItemId>{1, 3});
  // Crossing the interaction bar removes it at the next tick.
  stats[2].interactions = 10;
  CHECK(cold_start_pool(stats, 10, 5, 3) == std::vector<ItemId>{1});
  // Aging out removes it too.
  CHECK(cold_start_pool(stats, 10, 5, 5).empty());
}

TEST_CASE("invr config validation") {
  InvrConfig bad;
  bad.users_per_item = 0;
  REQUIRE_THROWS_AS(bad.validate(), InvalidConfig);
  InvrConfig bad2;
  bad2.overfetch_factor = 0.5;
  REQUIRE_THROWS_AS(bad2.validate(), InvalidConfig);
}
