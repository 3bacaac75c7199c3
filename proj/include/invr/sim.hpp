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
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "invr/common.hpp"
#include "invr/embedding.hpp"
#include "invr/metrics.hpp"
#include "invr/mips.hpp"
#include "invr/pipeline.hpp"
#include "invr/world.hpp"

namespace invr {

// A/B simulation over the synthetic platform. All stochastic decisions are
// counter-based draws keyed on (sim seed, stream, tick, user, ...), so every
// variant of one seed shares the visit, scroll-depth and click randomness and
// differs only in slate composition.

namespace stream {
constexpr std::uint64_t kVisit = 1;
constexpr std::uint64_t kDepth = 2;
constexpr std::uint64_t kClick = 3;
constexpr std::uint64_t kColdStart = 4;
constexpr std::uint64_t kBackfill = 5;
constexpr std::uint64_t kAlloc = 6;
constexpr std::uint64_t kPresent = 7;
constexpr std::uint64_t kNegSample = 8;
}  // namespace stream

struct SlateConfig {
  int slate_size = 20;
  int invr_slots_max = 3;
  int invr_position_lo = 5;   // inclusive, 1-based
  int invr_position_hi = 12;  // inclusive

  void validate() const {
    if (slate_size < 1) throw InvalidConfig("slate.slate_size must be >= 1");
    if (invr_slots_max < 0) throw InvalidConfig("slate.invr_slots_max must be >= 0");
    if (invr_position_lo < 1 || invr_position_hi > slate_size ||
        invr_position_lo > invr_position_hi) {
      throw InvalidConfig("slate.invr_position range must fit inside the slate");
    }
    if (invr_slots_max > invr_position_hi - invr_position_lo + 1) {
      throw InvalidConfig("slate.invr_slots_max exceeds the insertion range width");
    }
  }
};

enum class VariantName : std::uint8_t {
  kBaseline = 0,
  kRandom = 1,
  kInvrRandom = 2,
  kInvrScore = 3,
  kInvrUserRank = 4,
};

inline const char* to_string(VariantName v) {
  switch (v) {
    case VariantName::kBaseline:
      return "BASELINE";
    case VariantName::kRandom:
      return "RANDOM";
    case VariantName::kInvrRandom:
      return "INVR_RANDOM";
    case VariantName::kInvrScore:
      return "INVR_SCORE";
    case VariantName::kInvrUserRank:
      return "INVR_USER_RANK";
  }
  return "BASELINE";
}

inline VariantName variant_from_string(const std::string& s) {
  if (s == "BASELINE") return VariantName::kBaseline;
  if (s == "RANDOM") return VariantName::kRandom;
  if (s == "INVR_RANDOM") return VariantName::kInvrRandom;
  if (s == "INVR_SCORE") return VariantName::kInvrScore;
  if (s == "INVR_USER_RANK") return VariantName::kInvrUserRank;
  throw UnknownVariant("unknown variant: " + s);
}

inline OrderingMode ordering_mode_for(VariantName v) {
  switch (v) {
    case VariantName::kRandom:
      return OrderingMode::kRandomUsers;
    case VariantName::kInvrRandom:
      return OrderingMode::kInvrRandom;
    case VariantName::kInvrScore:
      return OrderingMode::kInvrScore;
    default:
      return OrderingMode::kInvrUserRank;
  }
}

struct VariantSpec {
  VariantName name = VariantName::kBaseline;
  std::optional<InvrConfig> invr;  // overrides the experiment-level InvR config
};

struct ColdStartConfig {
  Tick age_limit = 100;                // ticks an item stays eligible
  std::int64_t min_interactions = 150; // visible impressions that end cold start
  double insert_rate = 2.5;            // expected insertions per slate (may exceed 1)

  void validate() const {
    if (age_limit < 0) throw InvalidConfig("cold_start.age_limit must be >= 0");
    if (min_interactions < 0) throw InvalidConfig("cold_start.min_interactions must be >= 0");
    if (!(insert_rate >= 0.0 && insert_rate <= 5.0)) {
      throw InvalidConfig("cold_start.insert_rate must be in [0,5]");
    }
  }
};

// Conjunctive ceilings over a trailing window of publisher stats.
struct PublisherThresholds {
  double max_total_revenue = 4000.0;
  double max_avg_impressions_per_item = 200.0;
  double max_total_clicks = 2500.0;
  double max_avg_revenue_per_item = 40.0;
};

struct UserSelectionConfig {
  int min_history_len = 3;
  int min_recent_visits = 1;
  int recent_window = 10;  // ticks

  void validate() const {
    if (min_history_len < 1) throw InvalidConfig("user_selection.min_history_len must be >= 1");
    if (min_recent_visits < 0) throw InvalidConfig("user_selection.min_recent_visits must be >= 0");
    if (recent_window < 1) throw InvalidConfig("user_selection.recent_window must be >= 1");
  }
};

struct ExperimentConfig {
  WorldConfig world;
  TrainConfig train;
  InvrConfig invr;
  SlateConfig slate;
  ColdStartConfig cold_start;
  PublisherThresholds publisher_thresholds;
  UserSelectionConfig user_selection;
  std::vector<VariantSpec> variants;
  int history_max_len = 50;
  int warmup_ticks = 40;
  // Keep probability for visible-not-clicked training examples; clicks are
  // always kept. Rebalances the heavy natural negative:positive ratio.
  double negative_keep_prob = 0.05;
  bool feedback_retrain = true;
  int feedback_period = 25;  // main-phase ticks between feedback retrains
  std::string out_dir = "out";
  std::vector<std::uint64_t> sim_seeds = {101, 202, 303};

  void validate() const {
    world.validate();
    train.validate();
    invr.validate();
    slate.validate();
    cold_start.validate();
    user_selection.validate();
    if (history_max_len < 1) throw InvalidConfig("history_max_len must be >= 1");
    if (warmup_ticks < 1) throw InvalidConfig("warmup_ticks must be >= 1");
    if (!(negative_keep_prob > 0.0 && negative_keep_prob <= 1.0)) {
      throw InvalidConfig("negative_keep_prob must be in (0,1]");
    }
    if (feedback_period < 1) throw InvalidConfig("feedback_period must be >= 1");
    if (sim_seeds.empty()) throw InvalidConfig("sim_seeds must be non-empty");
  }
};

inline ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.train.dim = 16;   // desk-scale override of the production-sized default
  cfg.train.epochs = 22;
  cfg.train.learning_rate = 0.1;
  cfg.train.seed = 7;
  cfg.invr.seed = 13;
  cfg.variants = {{VariantName::kBaseline, std::nullopt},
                  {VariantName::kRandom, std::nullopt},
                  {VariantName::kInvrRandom, std::nullopt},
                  {VariantName::kInvrScore, std::nullopt},
                  {VariantName::kInvrUserRank, std::nullopt}};
  return cfg;
}

// ---------------------------------------------------------------------------
// Selection filters
// ---------------------------------------------------------------------------

struct PublisherStats {
  PublisherId publisher = 0;
  bool niche = false;
  std::int64_t n_items = 0;
  std::int64_t clicks = 0;
  std::int64_t visible = 0;
  double revenue = 0.0;
};

// Niche publishers below all four ceilings.
inline std::unordered_set<PublisherId> select_publishers(const std::vector<PublisherStats>& stats,
                                                         const PublisherThresholds& thresholds) {
  std::unordered_set<PublisherId> out;
  for (const auto& s : stats) {
    if (!s.niche) continue;
    double items = static_cast<double>(std::max<std::int64_t>(s.n_items, 1));
    if (s.revenue >= thresholds.max_total_revenue) continue;
    if (static_cast<double>(s.visible) / items >= thresholds.max_avg_impressions_per_item) continue;
    if (static_cast<double>(s.clicks) >= thresholds.max_total_clicks) continue;
    if (s.revenue / items >= thresholds.max_avg_revenue_per_item) continue;
    out.insert(s.publisher);
  }
  return out;
}

struct UserStats {
  UserId user = 0;
  int history_len = 0;
  int recent_visits = 0;
  bool consent = true;
};

// Users with stable identity who keep coming back.
inline std::vector<UserId> select_users(const std::vector<UserStats>& stats,
                                        const UserSelectionConfig& config) {
  config.validate();
  std::vector<UserId> out;
  for (const auto& s : stats) {
    if (!s.consent) continue;
    if (s.history_len < config.min_history_len) continue;
    if (s.recent_visits < config.min_recent_visits) continue;
    out.push_back(s.user);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Click model
// ---------------------------------------------------------------------------

// Number of slate positions the user actually sees this visit: geometric in
// the continuation probability, one draw per (tick, user).
inline int scroll_depth(const WorldConfig& config, std::uint64_t sim_seed, Tick tick, UserId user,
                        int slate_size) {
  double gamma = config.scroll_continuation;
  if (gamma >= 1.0) return slate_size;
  double u = keyed_uniform({sim_seed, stream::kDepth, static_cast<std::uint64_t>(tick),
                            static_cast<std::uint64_t>(user)});
  // P(depth >= k) = gamma^(k-1); inverse CDF of the shifted geometric.
  int depth = 1 + static_cast<int>(std::floor(std::log(1.0 - u) / std::log(gamma)));
  return std::clamp(depth, 1, slate_size);
}

inline double click_probability(const World& world, UserId user, ItemId item) {
  const auto& u = world.users[static_cast<std::size_t>(user)].latent;
  const auto& v = world.items[static_cast<std::size_t>(item)].latent;
  return sigmoid(world.config.click_beta * dot(u, v) + world.config.click_bias);
}

struct ClickOutcome {
  bool visible = false;
  bool clicked = false;
};

// Visibility is a prefix of the slate (position <= sampled scroll depth);
// clicks are Bernoulli in the ground-truth relevance, drawn per position.
inline ClickOutcome click_model(const World& world, std::uint64_t sim_seed, Tick tick, UserId user,
                                ItemId item, int position, int slate_size) {
  ClickOutcome out;
  out.visible = position <= scroll_depth(world.config, sim_seed, tick, user, slate_size);
  if (!out.visible) return out;
  double u = keyed_uniform({sim_seed, stream::kClick, static_cast<std::uint64_t>(tick),
                            static_cast<std::uint64_t>(user), static_cast<std::uint64_t>(position)});
  out.clicked = u < click_probability(world, user, item);
  return out;
}

// ---------------------------------------------------------------------------
// Slates
// ---------------------------------------------------------------------------

struct SlateEntry {
  ItemId item = 0;
  Source source = Source::kOrganic;
};

// Learned item vectors in dense row-major form for the scoring loop.
struct DenseEmbeddings {
  int dim = 0;
  std::vector<double> data;

  static DenseEmbeddings from_table(const ItemEmbeddingTable& table, int n_items) {
    DenseEmbeddings out;
    out.dim = table.dim();
    out.data.assign(static_cast<std::size_t>(n_items) * static_cast<std::size_t>(out.dim), 0.0);
    for (ItemId id = 0; id < n_items; ++id) {
      if (!table.contains(id)) continue;
      const auto& v = table.vec(id);
      std::copy(v.begin(), v.end(),
                out.data.begin() + static_cast<std::size_t>(id) * static_cast<std::size_t>(out.dim));
    }
    return out;
  }

  const double* row(ItemId id) const {
    return data.data() + static_cast<std::size_t>(id) * static_cast<std::size_t>(dim);
  }
};

struct SimState {
  std::vector<std::vector<ItemId>> history;                  // clicked items, truncated
  std::vector<std::unordered_map<ItemId, int>> seen_visible; // per-user visible counts
  std::vector<int> seen_capped;                              // items at >= dedup cap, per user
  std::vector<std::int64_t> item_clicks;                     // cumulative, incl. pre-existing
  std::vector<std::int64_t> item_interactions;               // lifetime visible impressions
  std::vector<std::vector<Tick>> visit_ticks;
  std::vector<std::vector<ItemId>> pending;                  // per-user InvR queue
  ExposureLedger ledger;                                     // main-phase exposure window

  static SimState init(const World& world) {
    SimState s;
    std::size_t nu = world.users.size();
    std::size_t ni = world.items.size();
    s.history.resize(nu);
    s.seen_visible.resize(nu);
    s.seen_capped.assign(nu, 0);
    s.item_clicks.resize(ni);
    for (std::size_t i = 0; i < ni; ++i) s.item_clicks[i] = world.items[i].initial_clicks;
    s.item_interactions.assign(ni, 0);
    s.visit_ticks.resize(nu);
    s.pending.resize(nu);
    return s;
  }
};

// Top slate_size items by dot(user embedding, item embedding) +
// pop_weight * log1p(clicks), skipping items the user has visibly seen up to
// the dedup cap. Falls back to popularity-only when the user has no usable
// embedding, and backfills from the cold-start pool then random eligible
// items if the catalog is nearly exhausted for this user.
inline std::vector<SlateEntry> baseline_recommender(
    const World& world, const DenseEmbeddings* emb, const SimState& state, UserId user,
    const SlateConfig& slate_config, int dedup_cap, const std::vector<double>& pop_term,
    const std::vector<ItemId>& cold_pool, std::uint64_t sim_seed, Tick tick) {
  const int n_items = static_cast<int>(world.items.size());
  const std::size_t uidx = static_cast<std::size_t>(user);

  std::vector<double> user_vec;
  if (emb != nullptr && !state.history[uidx].empty()) {
    user_vec.assign(static_cast<std::size_t>(emb->dim), 0.0);
    for (ItemId id : state.history[uidx]) {
      const double* v = emb->row(id);
      for (int k = 0; k < emb->dim; ++k) user_vec[static_cast<std::size_t>(k)] += v[k];
    }
    double inv = 1.0 / static_cast<double>(state.history[uidx].size());
    for (auto& x : user_vec) x *= inv;
  }

  std::vector<ScoredId> scored(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    double s = pop_term[static_cast<std::size_t>(i)];
    if (!user_vec.empty()) {
      const double* v = emb->row(i);
      double d = 0.0;
      for (int k = 0; k < emb->dim; ++k) d += user_vec[static_cast<std::size_t>(k)] * v[k];
      s += d;
    }
    scored[static_cast<std::size_t>(i)] = {i, s};
  }

  std::size_t want = std::min<std::size_t>(
      static_cast<std::size_t>(slate_config.slate_size) +
          static_cast<std::size_t>(state.seen_capped[uidx]),
      scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(want),
                    scored.end(), scored_before);

  std::vector<SlateEntry> out;
  out.reserve(static_cast<std::size_t>(slate_config.slate_size));
  const auto& seen = state.seen_visible[uidx];
  for (std::size_t i = 0; i < want && static_cast<int>(out.size()) < slate_config.slate_size; ++i) {
    ItemId id = scored[i].id;
    auto it = seen.find(id);
    if (it != seen.end() && it->second >= dedup_cap) continue;
    out.push_back({id, Source::kOrganic});
  }

  if (static_cast<int>(out.size()) < slate_config.slate_size) {
    std::unordered_set<ItemId> in_slate;
    for (const auto& e : out) in_slate.insert(e.item);
    auto eligible = [&](ItemId id) {
      if (in_slate.count(id)) return false;
      auto it = seen.find(id);
      return it == seen.end() || it->second < dedup_cap;
    };
    for (ItemId id : cold_pool) {
      if (static_cast<int>(out.size()) >= slate_config.slate_size) break;
      if (!eligible(id)) continue;
      out.push_back({id, Source::kColdStart});
      in_slate.insert(id);
    }
    if (static_cast<int>(out.size()) < slate_config.slate_size) {
      std::vector<ItemId> rest;
      for (ItemId id = 0; id < n_items; ++id) {
        if (eligible(id)) rest.push_back(id);
      }
      Rng rng(mix_key({sim_seed, stream::kBackfill, static_cast<std::uint64_t>(tick),
                       static_cast<std::uint64_t>(user)}));
      rng.shuffle(rest);
      for (ItemId id : rest) {
        if (static_cast<int>(out.size()) >= slate_config.slate_size) break;
        out.push_back({id, Source::kOrganic});
      }
    }
  }
  return out;
}

// Inserts the already-ordered InvR items at the first free positions inside
// the configured range, displacing base items downward; duplicates between
// base and InvR collapse onto the InvR placement.
inline std::vector<SlateEntry> assemble_slate(const std::vector<SlateEntry>& base,
                                              const std::vector<ItemId>& invr_items,
                                              const SlateConfig& slate_config) {
  std::unordered_set<ItemId> invr_set(invr_items.begin(), invr_items.end());
  std::vector<SlateEntry> filtered;
  filtered.reserve(base.size());
  for (const auto& e : base) {
    if (invr_set.count(e.item)) continue;
    filtered.push_back(e);
  }
  std::vector<SlateEntry> out;
  out.reserve(static_cast<std::size_t>(slate_config.slate_size));
  std::size_t bi = 0;
  std::size_t ii = 0;
  for (int pos = 1; pos <= slate_config.slate_size; ++pos) {
    bool in_range = pos >= slate_config.invr_position_lo && pos <= slate_config.invr_position_hi;
    if (in_range && ii < invr_items.size()) {
      out.push_back({invr_items[ii++], Source::kInvr});
    } else if (bi < filtered.size()) {
      out.push_back(filtered[bi++]);
    } else if (ii < invr_items.size()) {
      out.push_back({invr_items[ii++], Source::kInvr});
    } else {
      break;  // degenerate: fewer distinct items than slate positions
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tick loop
// ---------------------------------------------------------------------------

struct EpochContext {
  const World* world = nullptr;
  const ExperimentConfig* cfg = nullptr;
  const DenseEmbeddings* emb = nullptr;  // null during warmup
  std::uint64_t sim_seed = 0;
  bool invr_enabled = false;
  bool collect_snapshots = false;  // attach history snapshots to records
};

// One simulated tick: every sampled visitor gets a slate (baseline items,
// optional cold-start insertion, pending InvR items), the click model runs
// per position, and histories/dedup/popularity state advance.
inline std::vector<InteractionRecord> run_epoch(const EpochContext& ctx, SimState& state,
                                                Tick tick) {
  const World& world = *ctx.world;
  const ExperimentConfig& cfg = *ctx.cfg;
  const int n_items = static_cast<int>(world.items.size());
  const int dedup_cap = cfg.invr.max_impressions_per_user_item;

  std::vector<double> pop_term(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    pop_term[static_cast<std::size_t>(i)] =
        world.config.pop_weight * std::log1p(static_cast<double>(state.item_clicks[static_cast<std::size_t>(i)]));
  }

  std::vector<ColdStartStat> cold_stats;
  cold_stats.reserve(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    cold_stats.push_back({i, world.items[static_cast<std::size_t>(i)].created,
                          state.item_interactions[static_cast<std::size_t>(i)]});
  }
  std::vector<ItemId> cold_pool =
      cold_start_pool(cold_stats, cfg.cold_start.min_interactions, cfg.cold_start.age_limit, tick);

  std::vector<InteractionRecord> records;
  std::vector<ItemId> clicked_items;
  for (UserId user = 0; user < static_cast<UserId>(world.users.size()); ++user) {
    const std::size_t uidx = static_cast<std::size_t>(user);
    double visit_u = keyed_uniform({ctx.sim_seed, stream::kVisit, static_cast<std::uint64_t>(tick),
                                    static_cast<std::uint64_t>(user)});
    if (visit_u >= world.users[uidx].visit_prob) continue;
    state.visit_ticks[uidx].push_back(tick);

    std::vector<SlateEntry> base =
        baseline_recommender(world, ctx.emb, state, user, cfg.slate, dedup_cap, pop_term,
                             cold_pool, ctx.sim_seed, tick);

    // Cold-start randomization: replace random base positions with pool items.
    if (!cold_pool.empty() && cfg.cold_start.insert_rate > 0.0) {
      std::uint64_t key = mix_key({ctx.sim_seed, stream::kColdStart,
                                   static_cast<std::uint64_t>(tick), static_cast<std::uint64_t>(user)});
      Rng rng(key);
      int draws = static_cast<int>(std::floor(cfg.cold_start.insert_rate));
      double frac = cfg.cold_start.insert_rate - static_cast<double>(draws);
      if (rng.uniform() < frac) ++draws;
      for (int d = 0; d < draws && !base.empty(); ++d) {
        ItemId pick = cold_pool[static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(cold_pool.size())))];
        auto it = state.seen_visible[uidx].find(pick);
        bool capped = it != state.seen_visible[uidx].end() && it->second >= dedup_cap;
        bool already = false;
        for (const auto& e : base) {
          if (e.item == pick) {
            already = true;
            break;
          }
        }
        if (capped || already) continue;
        std::size_t pos = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(base.size())));
        base[pos] = {pick, Source::kColdStart};
      }
    }

    std::vector<ItemId> shown_invr;
    if (ctx.invr_enabled && !state.pending[uidx].empty()) {
      std::vector<ItemId> allowed =
          dedup_filter(state.seen_visible[uidx], state.pending[uidx], dedup_cap);
      if (static_cast<int>(allowed.size()) > cfg.slate.invr_slots_max) {
        allowed.resize(static_cast<std::size_t>(cfg.slate.invr_slots_max));
      }
      shown_invr = std::move(allowed);
    }

    std::vector<SlateEntry> slate = assemble_slate(base, shown_invr, cfg.slate);

    std::shared_ptr<const std::vector<ItemId>> snapshot;
    if (ctx.collect_snapshots && !state.history[uidx].empty()) {
      snapshot = std::make_shared<const std::vector<ItemId>>(state.history[uidx]);
    }

    int depth = scroll_depth(world.config, ctx.sim_seed, tick, user, cfg.slate.slate_size);
    clicked_items.clear();
    for (std::size_t p = 0; p < slate.size(); ++p) {
      int position = static_cast<int>(p) + 1;
      ItemId item = slate[p].item;
      bool visible = position <= depth;
      bool clicked = false;
      if (visible) {
        double u = keyed_uniform({ctx.sim_seed, stream::kClick, static_cast<std::uint64_t>(tick),
                                  static_cast<std::uint64_t>(user),
                                  static_cast<std::uint64_t>(position)});
        clicked = u < click_probability(world, user, item);
      }
      InteractionRecord rec;
      rec.tick = tick;
      rec.user = user;
      rec.item = item;
      rec.position = position;
      rec.visible = visible;
      rec.clicked = clicked;
      rec.source = slate[p].source;
      rec.history = snapshot;
      records.push_back(std::move(rec));

      if (visible) {
        int& count = state.seen_visible[uidx][item];
        count += 1;
        if (count == dedup_cap) state.seen_capped[uidx] += 1;
        state.item_interactions[static_cast<std::size_t>(item)] += 1;
      }
      if (clicked) {
        clicked_items.push_back(item);
        state.item_clicks[static_cast<std::size_t>(item)] += 1;
      }
    }

    if (!shown_invr.empty()) {
      auto& queue = state.pending[uidx];
      for (ItemId shown : shown_invr) {
        auto it = std::find(queue.begin(), queue.end(), shown);
        if (it != queue.end()) queue.erase(it);
      }
    }
    for (ItemId item : clicked_items) {
      auto& h = state.history[uidx];
      h.push_back(item);
      if (static_cast<int>(h.size()) > cfg.history_max_len) {
        h.erase(h.begin(), h.end() - cfg.history_max_len);
      }
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// InvR batch tick
// ---------------------------------------------------------------------------

struct AssignmentRow {
  Tick tick = 0;
  UserId user = 0;
  int slot = 0;  // 1-based position in the user's ordered list
  ItemId item = 0;
  double score = 0.0;
  int user_rank = 0;
  OrderingMode mode = OrderingMode::kInvrUserRank;
};

namespace detail {

inline std::vector<UserId> eligible_users(const World& world, const SimState& state,
                                          const UserSelectionConfig& selection, Tick tick) {
  std::vector<UserStats> stats;
  stats.reserve(world.users.size());
  for (const auto& user : world.users) {
    const std::size_t uidx = static_cast<std::size_t>(user.id);
    const auto& visits = state.visit_ticks[uidx];
    Tick lo = tick - selection.recent_window;
    int recent = 0;
    for (auto it = visits.rbegin(); it != visits.rend() && *it >= lo; ++it) {
      if (*it < tick) ++recent;
    }
    stats.push_back({user.id, static_cast<int>(state.history[uidx].size()), recent, user.consent});
  }
  return select_users(stats, selection);
}

// Second allocation round for shortfall items with a widened overfetch,
// honoring caps already consumed by the first pass.
inline void second_round_fill(Assignment& asg, const std::vector<ItemId>& short_items,
                              const ItemEmbeddingTable& table, const MipsIndex& user_index,
                              const InvrConfig& config) {
  std::vector<std::vector<CandidatePair>> lists;
  for (ItemId item : short_items) {
    lists.push_back(retrieve_candidates(item, table.vec(item), user_index, config.users_per_item,
                                        config.overfetch_factor * 2.0));
  }
  std::vector<CandidatePair> pairs;
  for (const auto& list : lists) pairs.insert(pairs.end(), list.begin(), list.end());
  if (config.ordering_mode == OrderingMode::kInvrUserRank) {
    std::sort(pairs.begin(), pairs.end(), rank_key_before);
  } else {
    std::sort(pairs.begin(), pairs.end(), score_key_before);
  }
  std::unordered_map<ItemId, std::unordered_set<UserId>> have;
  for (ItemId item : short_items) {
    auto it = asg.per_item.find(item);
    if (it != asg.per_item.end()) have[item].insert(it->second.begin(), it->second.end());
    else have[item];
  }
  for (const auto& p : pairs) {
    auto& users = have[p.item];
    if (static_cast<int>(users.size()) >= config.users_per_item) continue;
    if (users.count(p.user)) continue;
    auto& mine = asg.per_user[p.user];
    if (static_cast<int>(mine.size()) >= config.items_per_user_cap) continue;
    mine.push_back(p);
    asg.per_item[p.item].push_back(p.user);
    users.insert(p.user);
  }
  for (ItemId item : short_items) {
    asg.shortfalls[item] = config.users_per_item - static_cast<int>(have[item].size());
  }
}

}  // namespace detail

struct InvrTickResult {
  Assignment assignment;
  std::vector<ItemId> treated;
  std::vector<AssignmentRow> rows;
};

// One batch recomputation: select under-exposed items, retrieve candidate
// users per item from a fresh user index, allocate under caps, order each
// user's list by the variant, and replace the pending queues.
inline InvrTickResult run_invr_tick(const World& world, const ExperimentConfig& cfg,
                                    const InvrConfig& invr_cfg, const ItemEmbeddingTable& table,
                                    const std::unordered_set<PublisherId>& selected_publishers,
                                    SimState& state, Tick tick, std::uint64_t sim_seed) {
  InvrTickResult result;
  std::vector<TreatedCandidate> catalog;
  catalog.reserve(world.items.size());
  for (const auto& item : world.items) {
    catalog.push_back({item.id, item.publisher, false});
  }
  result.treated = select_treated_items(state.ledger, catalog, selected_publishers);

  for (auto& queue : state.pending) queue.clear();
  if (result.treated.empty()) return result;

  std::vector<UserId> eligible = detail::eligible_users(world, state, cfg.user_selection, tick);
  if (eligible.empty()) return result;

  InvrConfig resolved = invr_cfg;
  resolved.seed = mix_key({invr_cfg.seed, sim_seed, stream::kAlloc, static_cast<std::uint64_t>(tick)});

  std::vector<std::vector<CandidatePair>> candidates;
  candidates.reserve(result.treated.size());
  if (resolved.ordering_mode == OrderingMode::kRandomUsers) {
    for (ItemId item : result.treated) {
      candidates.push_back({CandidatePair{item, 0, 0.0, 1}});
    }
    result.assignment = transpose_and_allocate(candidates, resolved, eligible);
  } else {
    std::vector<UserHistory> histories;
    histories.reserve(eligible.size());
    for (UserId u : eligible) {
      histories.push_back({u, state.history[static_cast<std::size_t>(u)], cfg.history_max_len});
    }
    UserEmbeddingSet embs = build_user_embeddings(histories, table);
    if (embs.embeddings.empty()) return result;
    MipsIndex user_index = MipsIndex::build(embs.embeddings);
    for (ItemId item : result.treated) {
      std::vector<CandidatePair> pairs = retrieve_candidates(
          item, table.vec(item), user_index, resolved.users_per_item, resolved.overfetch_factor);
      // Pairs the user has already visibly seen to the cap can never be
      // served again; spending quota on them would silently stall the item.
      std::vector<CandidatePair> usable;
      usable.reserve(pairs.size());
      for (const auto& p : pairs) {
        const auto& seen = state.seen_visible[static_cast<std::size_t>(p.user)];
        auto it = seen.find(item);
        if (it != seen.end() && it->second >= resolved.max_impressions_per_user_item) continue;
        usable.push_back(p);
      }
      candidates.push_back(std::move(usable));
    }
    result.assignment = transpose_and_allocate(candidates, resolved);
    if (resolved.second_round) {
      std::vector<ItemId> short_items;
      for (const auto& [item, deficit] : result.assignment.shortfalls) {
        if (deficit > 0) short_items.push_back(item);
      }
      std::sort(short_items.begin(), short_items.end());
      if (!short_items.empty()) {
        detail::second_round_fill(result.assignment, short_items, table, user_index, resolved);
      }
    }
  }

  std::uint64_t present_seed =
      mix_key({invr_cfg.seed, sim_seed, stream::kPresent, static_cast<std::uint64_t>(tick)});
  std::vector<UserId> assigned_users;
  assigned_users.reserve(result.assignment.per_user.size());
  for (const auto& [user, pairs] : result.assignment.per_user) assigned_users.push_back(user);
  std::sort(assigned_users.begin(), assigned_users.end());
  for (UserId user : assigned_users) {
    const auto& pairs = result.assignment.per_user.at(user);
    std::vector<ItemId> ordered =
        order_items_for_user(user, pairs, resolved.ordering_mode, present_seed);
    std::unordered_map<ItemId, const CandidatePair*> by_item;
    for (const auto& p : pairs) by_item.emplace(p.item, &p);
    int slot = 1;
    for (ItemId item : ordered) {
      const CandidatePair* p = by_item.at(item);
      result.rows.push_back({tick, user, slot++, item, p->score, p->user_rank, resolved.ordering_mode});
    }
    state.pending[static_cast<std::size_t>(user)] = std::move(ordered);
  }
  return result;
}

}  // namespace invr
