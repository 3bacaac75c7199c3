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
#include <vector>

#include "invr/common.hpp"
#include "invr/embedding.hpp"
#include "invr/metrics.hpp"
#include "invr/pipeline.hpp"
#include "invr/sim.hpp"
#include "invr/world.hpp"

namespace invr {

// End-to-end experiment runs. A run has two phases: a variant-independent
// warmup that bootstraps interaction data and trains the retrieval model,
// then the main phase where variants diverge. Warmup shares the main phase's
// random streams, so every variant of one sim seed sees identical warmup
// state by construction.

// Seeded uniform init over the full catalog, ascending id order. Gives every
// item an embedding before any interaction exists (cold items keep their
// near-random vectors until training moves them).
inline ItemEmbeddingTable make_initial_table(int n_items, const TrainConfig& config) {
  ItemEmbeddingTable table(config.dim);
  Rng rng(config.seed);
  for (ItemId id = 0; id < n_items; ++id) {
    std::vector<double> v(static_cast<std::size_t>(config.dim));
    for (auto& x : v) x = rng.uniform_in(-config.init_scale, config.init_scale);
    table.insert(id, std::move(v));
  }
  return table;
}

// Turns visible log records into training examples, in log order. Records
// without a usable history snapshot are skipped. Clicked records are always
// kept; visible-not-clicked records survive with negative_keep_prob, drawn
// from a keyed stream so the same log always yields the same example set.
inline void collect_examples(const std::vector<InteractionRecord>& records,
                             std::uint64_t train_seed, double negative_keep_prob,
                             std::vector<TrainingExample>& out) {
  for (const auto& rec : records) {
    if (!rec.visible) continue;
    if (!rec.history || rec.history->empty()) continue;
    if (!rec.clicked && negative_keep_prob < 1.0) {
      double u = keyed_uniform({train_seed, stream::kNegSample,
                                static_cast<std::uint64_t>(rec.tick),
                                static_cast<std::uint64_t>(rec.user),
                                static_cast<std::uint64_t>(rec.position)});
      if (u >= negative_keep_prob) continue;
    }
    out.push_back({rec.history, rec.item, rec.clicked ? 1.0 : 0.0});
  }
}

// Retrains the retrieval model from scratch on everything logged so far,
// starting from the same seeded initial table as the first training pass.
inline ItemEmbeddingTable retrain_with_feedback(const std::vector<TrainingExample>& all_examples,
                                                const TrainConfig& config,
                                                const ItemEmbeddingTable& initial) {
  return train(all_examples, config, &initial);
}

struct Prepared {
  SimState state;  // post-warmup, pre-treatment
  ItemEmbeddingTable initial_table;
  ItemEmbeddingTable table;
  std::vector<TrainingExample> examples;  // warmup training data
  std::vector<PublisherStats> publisher_stats;
  std::unordered_set<PublisherId> selected_publishers;
  std::vector<ItemId> treated_cohort;  // all items of selected publishers
  std::vector<InteractionRecord> warmup_log;  // only when keep_logs
};

inline Prepared prepare_run(const World& world, const ExperimentConfig& cfg,
                            std::uint64_t sim_seed, bool keep_logs) {
  cfg.validate();
  Prepared prep;
  prep.state = SimState::init(world);

  std::vector<PublisherStats> stats(world.publishers.size());
  for (std::size_t p = 0; p < world.publishers.size(); ++p) {
    stats[p].publisher = world.publishers[p].id;
    stats[p].niche = world.publishers[p].niche;
  }
  for (const auto& item : world.items) {
    stats[static_cast<std::size_t>(item.publisher)].n_items += 1;
  }

  EpochContext ctx;
  ctx.world = &world;
  ctx.cfg = &cfg;
  ctx.emb = nullptr;
  ctx.sim_seed = sim_seed;
  ctx.invr_enabled = false;
  ctx.collect_snapshots = true;

  for (Tick tick = 0; tick < cfg.warmup_ticks; ++tick) {
    std::vector<InteractionRecord> records = run_epoch(ctx, prep.state, tick);
    collect_examples(records, cfg.train.seed, cfg.negative_keep_prob, prep.examples);
    for (const auto& rec : records) {
      if (!rec.visible) continue;
      auto& s = stats[static_cast<std::size_t>(world.items[static_cast<std::size_t>(rec.item)].publisher)];
      s.visible += 1;
      if (rec.clicked) s.clicks += 1;
    }
    if (keep_logs) {
      prep.warmup_log.insert(prep.warmup_log.end(), records.begin(), records.end());
    }
  }
  for (std::size_t p = 0; p < stats.size(); ++p) {
    stats[p].revenue =
        static_cast<double>(stats[p].clicks) * world.publishers[p].revenue_per_click;
  }
  prep.publisher_stats = std::move(stats);

  prep.initial_table = make_initial_table(static_cast<int>(world.items.size()), cfg.train);
  prep.table = train(prep.examples, cfg.train, &prep.initial_table);

  prep.selected_publishers = select_publishers(prep.publisher_stats, cfg.publisher_thresholds);
  for (const auto& item : world.items) {
    if (prep.selected_publishers.count(item.publisher)) prep.treated_cohort.push_back(item.id);
  }
  std::sort(prep.treated_cohort.begin(), prep.treated_cohort.end());
  return prep;
}

struct RunResult {
  std::string variant;
  std::uint64_t sim_seed = 0;
  MetricReport metrics;
  std::vector<double> psei_series;  // one point per main tick
  ExposureLedger ledger;
  std::vector<ItemId> treated_cohort;
  std::vector<InteractionRecord> log;          // warmup + main, when keep_logs
  std::vector<AssignmentRow> assignment_rows;  // when keep_logs
};

namespace detail {

struct CtrAccumulator {
  std::unordered_map<UserId, std::pair<std::int64_t, std::int64_t>> per_user;

  void add(const InteractionRecord& rec) {
    if (!rec.visible) return;
    auto& uc = per_user[rec.user];
    uc.first += 1;
    if (rec.clicked) uc.second += 1;
  }

  CohortStats stats() const {
    CohortStats out;
    if (per_user.empty()) return out;
    double ctr_sum = 0.0;
    double clicks = 0.0;
    for (const auto& [user, uc] : per_user) {
      ctr_sum += static_cast<double>(uc.second) / static_cast<double>(uc.first);
      clicks += static_cast<double>(uc.second);
    }
    out.ctr = ctr_sum / static_cast<double>(per_user.size());
    out.clicks_per_user = clicks / static_cast<double>(per_user.size());
    out.empty = false;
    return out;
  }
};

}  // namespace detail

// Runs one variant's main phase from the shared prepared state.
inline RunResult run_main_phase(const World& world, const ExperimentConfig& cfg,
                                const VariantSpec& variant, const Prepared& prep,
                                std::uint64_t sim_seed, bool keep_logs) {
  InvrConfig invr_cfg = variant.invr ? *variant.invr : cfg.invr;
  invr_cfg.ordering_mode = ordering_mode_for(variant.name);
  invr_cfg.validate();
  const bool treated_variant = variant.name != VariantName::kBaseline;

  RunResult result;
  result.variant = to_string(variant.name);
  result.sim_seed = sim_seed;
  result.treated_cohort = prep.treated_cohort;

  SimState state = prep.state;
  std::vector<ItemId> all_items;
  all_items.reserve(world.items.size());
  for (const auto& item : world.items) all_items.push_back(item.id);
  state.ledger = ExposureLedger(all_items, invr_cfg.min_exposure);

  ItemEmbeddingTable table = prep.table;
  DenseEmbeddings dense = DenseEmbeddings::from_table(table, static_cast<int>(world.items.size()));
  std::vector<TrainingExample> examples;
  if (cfg.feedback_retrain) examples = prep.examples;

  EpochContext ctx;
  ctx.world = &world;
  ctx.cfg = &cfg;
  ctx.emb = &dense;
  ctx.sim_seed = sim_seed;
  ctx.invr_enabled = treated_variant;
  ctx.collect_snapshots = cfg.feedback_retrain;

  if (keep_logs) result.log = prep.warmup_log;

  detail::CtrAccumulator overall;
  detail::CtrAccumulator invr_only;

  const Tick main_start = cfg.warmup_ticks;
  const Tick main_end = cfg.warmup_ticks + world.config.ticks;
  for (Tick tick = main_start; tick < main_end; ++tick) {
    if (treated_variant && (tick - main_start) % invr_cfg.recompute_period == 0) {
      InvrTickResult invr_tick = run_invr_tick(world, cfg, invr_cfg, table,
                                               prep.selected_publishers, state, tick, sim_seed);
      if (keep_logs) {
        result.assignment_rows.insert(result.assignment_rows.end(), invr_tick.rows.begin(),
                                      invr_tick.rows.end());
      }
    }

    std::vector<InteractionRecord> records = run_epoch(ctx, state, tick);
    state.ledger.record_impressions(records);
    for (const auto& rec : records) {
      overall.add(rec);
      if (rec.source == Source::kInvr) invr_only.add(rec);
    }
    if (cfg.feedback_retrain) {
      collect_examples(records, cfg.train.seed, cfg.negative_keep_prob, examples);
      if ((tick - main_start + 1) % cfg.feedback_period == 0) {
        table = retrain_with_feedback(examples, cfg.train, prep.initial_table);
        dense = DenseEmbeddings::from_table(table, static_cast<int>(world.items.size()));
      }
    }
    if (!prep.treated_cohort.empty()) {
      result.psei_series.push_back(psei(prep.treated_cohort, state.ledger));
    } else {
      result.psei_series.push_back(0.0);
    }
    if (keep_logs) {
      result.log.insert(result.log.end(), records.begin(), records.end());
    }
  }

  MetricReport& m = result.metrics;
  m.variant = result.variant;
  ExposureDistribution dist;
  dist.reserve(world.items.size());
  for (const auto& item : world.items) {
    dist.emplace_back(item.id, state.ledger.at(item.id).visible);
  }
  m.b50ps = bottom_share(dist, 0.5);
  m.t1ps = top_share(dist, 0.01);
  m.gini = gini(dist);
  m.psei = result.psei_series.empty() ? 0.0 : result.psei_series.back();
  CohortStats inv = invr_only.stats();
  CohortStats all = overall.stats();
  m.ctr_invr = inv.ctr;
  m.clicks_invr = inv.clicks_per_user;
  m.invr_empty = inv.empty;
  m.ctr_overall = all.ctr;
  m.clicks_overall = all.clicks_per_user;

  double share_sum = 0.0;
  std::int64_t share_n = 0;
  for (ItemId id : prep.treated_cohort) {
    const auto& c = state.ledger.at(id);
    if (c.shutoff_recorded && c.visible_at_shutoff > 0) {
      share_sum += static_cast<double>(c.invr_at_shutoff) / static_cast<double>(c.visible_at_shutoff);
      share_n += 1;
    }
  }
  m.invr_min_exposure_share = share_n > 0 ? share_sum / static_cast<double>(share_n) : 0.0;

  result.ledger = std::move(state.ledger);
  return result;
}

// Full single-variant run: warmup, training, main phase.
inline RunResult run_variant(const World& world, const ExperimentConfig& cfg,
                             const VariantSpec& variant, std::uint64_t sim_seed, bool keep_logs) {
  Prepared prep = prepare_run(world, cfg, sim_seed, keep_logs);
  return run_main_phase(world, cfg, variant, prep, sim_seed, keep_logs);
}

// Multi-variant A/B run on one world and one sim seed. Warmup and training
// happen once; variants branch from the identical prepared state (common
// random numbers make their visit/scroll/click draws coincide).
inline std::vector<RunResult> run_ab(const World& world, const ExperimentConfig& cfg,
                                     const std::vector<VariantSpec>& variants,
                                     std::uint64_t sim_seed, bool keep_logs = false) {
  bool has_baseline = false;
  for (const auto& v : variants) {
    if (v.name == VariantName::kBaseline) has_baseline = true;
  }
  if (!has_baseline) throw InvalidConfig("run_ab requires a BASELINE variant");

  Prepared prep = prepare_run(world, cfg, sim_seed, keep_logs);
  std::vector<RunResult> results;
  results.reserve(variants.size());
  for (const auto& v : variants) {
    results.push_back(run_main_phase(world, cfg, v, prep, sim_seed, keep_logs));
  }
  return results;
}

}  // namespace invr
