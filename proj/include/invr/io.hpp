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

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "invr/common.hpp"
#include "invr/metrics.hpp"
#include "invr/runner.hpp"
#include "invr/sim.hpp"
#include "invr/world.hpp"

namespace invr {

// CSV artifacts. Numbers use shortest round-trip formatting, so identical
// runs produce byte-identical files.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open for reading: " + path);
  return in;
}

}  // namespace detail

// --- interaction log -------------------------------------------------------

inline void write_interaction_log(const std::vector<InteractionRecord>& log,
                                  const std::string& path) {
  auto out = detail::open_out(path);
  out << "tick,user_id,item_id,position,visible,clicked,source\n";
  for (const auto& r : log) {
    out << r.tick << ',' << r.user << ',' << r.item << ',' << r.position << ','
        << (r.visible ? 1 : 0) << ',' << (r.clicked ? 1 : 0) << ',' << to_string(r.source) << "\n";
  }
  if (!out) throw IoFailure("failed writing " + path);
}

inline std::vector<InteractionRecord> read_interaction_log(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "tick,user_id,item_id,position,visible,clicked,source") {
    throw IoFailure("bad interaction log header in " + path);
  }
  std::vector<InteractionRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 7) throw IoFailure("bad interaction log row in " + path);
    InteractionRecord r;
    r.tick = static_cast<Tick>(parse_int(f[0]));
    r.user = parse_int(f[1]);
    r.item = parse_int(f[2]);
    r.position = static_cast<int>(parse_int(f[3]));
    r.visible = parse_int(f[4]) != 0;
    r.clicked = parse_int(f[5]) != 0;
    r.source = source_from_string(f[6]);
    out.push_back(std::move(r));
  }
  return out;
}

// Reconstructs training examples by replaying a log: within a visit the
// slate is served against the user's pre-visit history, and clicked items
// join the history once the visit ends. Negative subsampling uses the same
// keyed stream as the live simulation, so a replay reproduces its examples.
inline std::vector<TrainingExample> examples_from_log(const std::vector<InteractionRecord>& log,
                                                      int history_max_len,
                                                      std::uint64_t train_seed = 0,
                                                      double negative_keep_prob = 1.0) {
  std::unordered_map<UserId, std::vector<ItemId>> history;
  std::vector<TrainingExample> out;
  std::size_t i = 0;
  while (i < log.size()) {
    std::size_t j = i;
    while (j < log.size() && log[j].tick == log[i].tick && log[j].user == log[i].user) ++j;
    auto& h = history[log[i].user];
    std::shared_ptr<const std::vector<ItemId>> snapshot;
    if (!h.empty()) snapshot = std::make_shared<const std::vector<ItemId>>(h);
    for (std::size_t k = i; k < j; ++k) {
      const auto& rec = log[k];
      if (!rec.visible || !snapshot) continue;
      if (!rec.clicked && negative_keep_prob < 1.0) {
        double u = keyed_uniform({train_seed, stream::kNegSample,
                                  static_cast<std::uint64_t>(rec.tick),
                                  static_cast<std::uint64_t>(rec.user),
                                  static_cast<std::uint64_t>(rec.position)});
        if (u >= negative_keep_prob) continue;
      }
      out.push_back({snapshot, rec.item, rec.clicked ? 1.0 : 0.0});
    }
    for (std::size_t k = i; k < j; ++k) {
      if (!log[k].clicked) continue;
      h.push_back(log[k].item);
      if (static_cast<int>(h.size()) > history_max_len) {
        h.erase(h.begin(), h.end() - history_max_len);
      }
    }
    i = j;
  }
  return out;
}

// --- ledger ----------------------------------------------------------------

inline void write_ledger(const ExposureLedger& ledger, const std::string& path) {
  auto out = detail::open_out(path);
  out << "item_id,visible,invr_visible,clicks,active\n";
  for (ItemId id : ledger.ids_sorted()) {
    const auto& c = ledger.at(id);
    out << id << ',' << c.visible << ',' << c.invr_visible << ',' << c.clicks << ','
        << (c.active ? 1 : 0) << "\n";
  }
  if (!out) throw IoFailure("failed writing " + path);
}

// --- assignments -----------------------------------------------------------

inline void write_assignments(const std::vector<AssignmentRow>& rows, const std::string& path) {
  auto out = detail::open_out(path);
  out << "tick,user_id,slot,item_id,score,user_rank,mode\n";
  for (const auto& r : rows) {
    out << r.tick << ',' << r.user << ',' << r.slot << ',' << r.item << ','
        << format_double(r.score) << ',' << r.user_rank << ',' << to_string(r.mode) << "\n";
  }
  if (!out) throw IoFailure("failed writing " + path);
}

// --- world snapshot --------------------------------------------------------

inline void write_world_snapshot(const World& world, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir + "/publishers.csv");
    out << "publisher_id,niche,revenue_per_click";
    for (int k = 0; k < world.config.latent_dim; ++k) out << ",c" << k;
    out << "\n";
    for (const auto& p : world.publishers) {
      out << p.id << ',' << (p.niche ? 1 : 0) << ',' << format_double(p.revenue_per_click);
      for (double x : p.centroid) out << ',' << format_double(x);
      out << "\n";
    }
  }
  {
    auto out = detail::open_out(dir + "/items.csv");
    out << "item_id,publisher_id,created_tick,popularity_rank,initial_clicks";
    for (int k = 0; k < world.config.latent_dim; ++k) out << ",v" << k;
    out << "\n";
    for (const auto& item : world.items) {
      out << item.id << ',' << item.publisher << ',' << item.created << ',' << item.popularity_rank
          << ',' << item.initial_clicks;
      for (double x : item.latent) out << ',' << format_double(x);
      out << "\n";
    }
  }
  {
    auto out = detail::open_out(dir + "/users.csv");
    out << "user_id,visit_prob,consent";
    for (int k = 0; k < world.config.latent_dim; ++k) out << ",v" << k;
    out << "\n";
    for (const auto& u : world.users) {
      out << u.id << ',' << format_double(u.visit_prob) << ',' << (u.consent ? 1 : 0);
      for (double x : u.latent) out << ',' << format_double(x);
      out << "\n";
    }
  }
}

// --- run summaries and reports ---------------------------------------------

struct RunMeta {
  std::string variant;
  std::uint64_t world_seed = 0;
  std::uint64_t sim_seed = 0;
  int warmup_ticks = 0;
  int ticks = 0;
  int n_users = 0;
  int n_items = 0;
};

inline void write_runmeta(const RunMeta& meta, const std::string& path) {
  nlohmann::json j{{"variant", meta.variant},     {"world_seed", meta.world_seed},
                   {"sim_seed", meta.sim_seed},   {"warmup_ticks", meta.warmup_ticks},
                   {"ticks", meta.ticks},         {"n_users", meta.n_users},
                   {"n_items", meta.n_items}};
  auto out = detail::open_out(path);
  out << j.dump(2) << "\n";
}

inline RunMeta read_runmeta(const std::string& path) {
  auto in = detail::open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoFailure("bad runmeta in " + path + ": " + e.what());
  }
  RunMeta meta;
  meta.variant = j.at("variant").get<std::string>();
  meta.world_seed = j.at("world_seed").get<std::uint64_t>();
  meta.sim_seed = j.at("sim_seed").get<std::uint64_t>();
  meta.warmup_ticks = j.at("warmup_ticks").get<int>();
  meta.ticks = j.at("ticks").get<int>();
  meta.n_users = j.at("n_users").get<int>();
  meta.n_items = j.at("n_items").get<int>();
  return meta;
}

inline const char* kSummaryHeader =
    "variant,b50ps,psei,t1ps,gini,ctr_invr,clicks_invr,ctr_overall,clicks_overall,"
    "invr_empty,invr_min_exposure_share";

inline void write_summary(const MetricReport& m, const std::string& path) {
  auto out = detail::open_out(path);
  out << kSummaryHeader << "\n";
  out << m.variant << ',' << format_double(m.b50ps) << ',' << format_double(m.psei) << ','
      << format_double(m.t1ps) << ',' << format_double(m.gini) << ',' << format_double(m.ctr_invr)
      << ',' << format_double(m.clicks_invr) << ',' << format_double(m.ctr_overall) << ','
      << format_double(m.clicks_overall) << ',' << (m.invr_empty ? 1 : 0) << ','
      << format_double(m.invr_min_exposure_share) << "\n";
}

inline MetricReport read_summary(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != kSummaryHeader) {
    throw IoFailure("bad summary header in " + path);
  }
  if (!std::getline(in, line)) throw IoFailure("summary row missing in " + path);
  auto f = detail::split_csv_line(line);
  if (f.size() != 11) throw IoFailure("bad summary row in " + path);
  MetricReport m;
  m.variant = f[0];
  m.b50ps = parse_double(f[1]);
  m.psei = parse_double(f[2]);
  m.t1ps = parse_double(f[3]);
  m.gini = parse_double(f[4]);
  m.ctr_invr = parse_double(f[5]);
  m.clicks_invr = parse_double(f[6]);
  m.ctr_overall = parse_double(f[7]);
  m.clicks_overall = parse_double(f[8]);
  m.invr_empty = parse_int(f[9]) != 0;
  m.invr_min_exposure_share = parse_double(f[10]);
  return m;
}

inline void write_psei_series(const std::string& variant, const std::vector<double>& series,
                              const std::string& path) {
  auto out = detail::open_out(path);
  out << "variant,tick,psei\n";
  for (std::size_t t = 0; t < series.size(); ++t) {
    out << variant << ',' << t << ',' << format_double(series[t]) << "\n";
  }
}

inline std::vector<double> read_psei_series(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "variant,tick,psei") {
    throw IoFailure("bad psei series header in " + path);
  }
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw IoFailure("bad psei series row in " + path);
    out.push_back(parse_double(f[2]));
  }
  return out;
}

// Relative-change cell: empty when the baseline is zero and the values
// differ (no finite percentage exists).
inline std::string relative_cell(double variant_value, double baseline_value) {
  if (variant_value == baseline_value) return format_double(0.0);
  if (baseline_value == 0.0) return "";
  return format_double(relative_change(variant_value, baseline_value));
}

// Table-1-shaped report: absolute metrics plus relative changes against the
// designated baseline variant.
inline void write_report(const std::vector<MetricReport>& metrics, const std::string& baseline,
                         const std::string& path) {
  const MetricReport* base = nullptr;
  for (const auto& m : metrics) {
    if (m.variant == baseline) base = &m;
  }
  if (base == nullptr) throw MismatchedRuns("baseline variant not among runs: " + baseline);
  auto out = detail::open_out(path);
  out << kSummaryHeader
      << ",rel_b50ps_pct,rel_psei_pct,rel_t1ps_pct,rel_ctr_invr_pct,rel_clicks_invr_pct,"
         "rel_ctr_overall_pct,rel_clicks_overall_pct\n";
  for (const auto& m : metrics) {
    out << m.variant << ',' << format_double(m.b50ps) << ',' << format_double(m.psei) << ','
        << format_double(m.t1ps) << ',' << format_double(m.gini) << ',' << format_double(m.ctr_invr)
        << ',' << format_double(m.clicks_invr) << ',' << format_double(m.ctr_overall) << ','
        << format_double(m.clicks_overall) << ',' << (m.invr_empty ? 1 : 0) << ','
        << format_double(m.invr_min_exposure_share) << ',' << relative_cell(m.b50ps, base->b50ps)
        << ',' << relative_cell(m.psei, base->psei) << ',' << relative_cell(m.t1ps, base->t1ps)
        << ',' << relative_cell(m.ctr_invr, base->ctr_invr) << ','
        << relative_cell(m.clicks_invr, base->clicks_invr) << ','
        << relative_cell(m.ctr_overall, base->ctr_overall) << ','
        << relative_cell(m.clicks_overall, base->clicks_overall) << "\n";
  }
}

// PSEI-over-time report with the smoothed overlay column.
inline void write_psei_report(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                              double alpha, const std::string& path) {
  auto out = detail::open_out(path);
  out << "variant,tick,psei,ewma\n";
  for (const auto& [variant, values] : series) {
    if (values.empty()) continue;
    std::vector<double> smooth = ewma(values, alpha);
    for (std::size_t t = 0; t < values.size(); ++t) {
      out << variant << ',' << t << ',' << format_double(values[t]) << ','
          << format_double(smooth[t]) << "\n";
    }
  }
}

// Writes the full artifact set for one finished run.
inline void write_run_artifacts(const RunResult& result, const World& world,
                                const ExperimentConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_interaction_log(result.log, dir + "/interactions.csv");
  write_ledger(result.ledger, dir + "/ledger.csv");
  write_assignments(result.assignment_rows, dir + "/assignments.csv");
  write_summary(result.metrics, dir + "/summary.csv");
  write_psei_series(result.variant, result.psei_series, dir + "/psei_series.csv");
  RunMeta meta;
  meta.variant = result.variant;
  meta.world_seed = world.config.seed;
  meta.sim_seed = result.sim_seed;
  meta.warmup_ticks = cfg.warmup_ticks;
  meta.ticks = world.config.ticks;
  meta.n_users = world.config.n_users;
  meta.n_items = world.config.n_items;
  write_runmeta(meta, dir + "/runmeta.json");
}

}  // namespace invr
