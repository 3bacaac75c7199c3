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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "invr/config.hpp"
#include "invr/io.hpp"
#include "invr/runner.hpp"

namespace {

constexpr double kEwmaAlpha = 0.125;

invr::ExperimentConfig load_or_default(const std::string& config_path,
                                       std::optional<std::uint64_t> seed_override) {
  invr::ExperimentConfig cfg =
      config_path.empty() ? invr::default_experiment_config() : invr::load_config(config_path);
  if (seed_override) cfg.sim_seeds = {*seed_override};
  return cfg;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir) {
  invr::ExperimentConfig cfg = load_or_default(config_path, std::nullopt);
  invr::World world = invr::generate_world(cfg.world);
  std::string dir = out_dir.empty() ? cfg.out_dir + "/world" : out_dir;
  invr::write_world_snapshot(world, dir);
  std::cout << "world written to " << dir << " (" << world.users.size() << " users, "
            << world.items.size() << " items, " << world.publishers.size() << " publishers)\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& log_path, std::optional<std::uint64_t> seed_override) {
  invr::ExperimentConfig cfg = load_or_default(config_path, seed_override);
  std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
  std::filesystem::create_directories(dir);

  invr::ItemEmbeddingTable table;
  if (!log_path.empty()) {
    std::vector<invr::InteractionRecord> log = invr::read_interaction_log(log_path);
    std::vector<invr::TrainingExample> examples = invr::examples_from_log(
        log, cfg.history_max_len, cfg.train.seed, cfg.negative_keep_prob);
    table = invr::train(examples, cfg.train);
    std::cout << "trained on " << examples.size() << " examples from " << log_path << "\n";
  } else {
    invr::World world = invr::generate_world(cfg.world);
    invr::Prepared prep = invr::prepare_run(world, cfg, cfg.sim_seeds.front(), /*keep_logs=*/true);
    table = prep.table;
    invr::write_interaction_log(prep.warmup_log, dir + "/warmup_interactions.csv");
    std::cout << "trained on " << prep.examples.size() << " examples from a " << cfg.warmup_ticks
              << "-tick warmup\n";
  }
  std::ofstream out(dir + "/embeddings.csv", std::ios::binary);
  if (!out) throw invr::IoFailure("cannot open for writing: " + dir + "/embeddings.csv");
  invr::save_table(table, out);
  std::cout << "embedding table written to " << dir << "/embeddings.csv\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& variant_name,
            const std::string& out_dir, std::optional<std::uint64_t> seed_override) {
  invr::ExperimentConfig cfg = load_or_default(config_path, seed_override);
  invr::VariantName name = invr::variant_from_string(variant_name);
  invr::VariantSpec spec;
  spec.name = name;
  for (const auto& v : cfg.variants) {
    if (v.name == name) spec = v;
  }
  invr::World world = invr::generate_world(cfg.world);
  std::uint64_t sim_seed = cfg.sim_seeds.front();
  invr::RunResult result = invr::run_variant(world, cfg, spec, sim_seed, /*keep_logs=*/true);

  std::string dir = out_dir.empty() ? cfg.out_dir + "/" + result.variant : out_dir;
  invr::write_run_artifacts(result, world, cfg, dir);
  std::cout << result.variant << " run complete: " << result.log.size() << " records, "
            << "psei " << invr::format_double(result.metrics.psei) << ", b50ps "
            << invr::format_double(result.metrics.b50ps) << ", artifacts in " << dir << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& baseline,
               const std::string& out_dir) {
  if (run_dirs.empty()) throw invr::MismatchedRuns("report needs at least one run directory");
  std::vector<invr::MetricReport> metrics;
  std::vector<std::pair<std::string, std::vector<double>>> series;
  std::optional<invr::RunMeta> reference;
  bool have_baseline = false;
  for (const auto& dir : run_dirs) {
    invr::RunMeta meta = invr::read_runmeta(dir + "/runmeta.json");
    if (!reference) {
      reference = meta;
    } else if (meta.world_seed != reference->world_seed || meta.ticks != reference->ticks ||
               meta.warmup_ticks != reference->warmup_ticks ||
               meta.sim_seed != reference->sim_seed) {
      throw invr::MismatchedRuns("run " + dir + " does not share the reference world/horizon");
    }
    invr::MetricReport m = invr::read_summary(dir + "/summary.csv");
    if (m.variant == baseline) have_baseline = true;
    series.emplace_back(m.variant, invr::read_psei_series(dir + "/psei_series.csv"));
    metrics.push_back(std::move(m));
  }
  if (!have_baseline) throw invr::MismatchedRuns("baseline run missing: " + baseline);

  std::string dir = out_dir.empty() ? "." : out_dir;
  std::filesystem::create_directories(dir);
  invr::write_report(metrics, baseline, dir + "/report.csv");
  invr::write_psei_report(series, kEwmaAlpha, dir + "/psei_report.csv");
  std::cout << "report over " << metrics.size() << " runs written to " << dir
            << "/report.csv and " << dir << "/psei_report.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"invrlab: inverse-retrieval long-tail recommendation laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string variant_name = "BASELINE";
  std::string log_path;
  std::string baseline = "BASELINE";
  std::optional<std::uint64_t> seed_override;
  std::vector<std::string> run_dirs;

  auto* generate = app.add_subcommand("generate", "generate and persist a synthetic world");
  generate->add_option("--config", config_path, "experiment config (JSON)");
  generate->add_option("--out", out_dir, "output directory");

  auto* train = app.add_subcommand("train", "train the retrieval embeddings");
  train->add_option("--config", config_path, "experiment config (JSON)");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--log", log_path, "interaction log to train from (default: simulate warmup)");
  train->add_option("--seed", seed_override, "sim seed override");

  auto* run = app.add_subcommand("run", "simulate one variant over the full horizon");
  run->add_option("--config", config_path, "experiment config (JSON)");
  run->add_option("--variant", variant_name, "variant name")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed_override, "sim seed override");

  auto* report = app.add_subcommand("report", "aggregate finished runs into a comparison table");
  report->add_option("dirs", run_dirs, "run directories")->required();
  report->add_option("--baseline", baseline, "baseline variant name");
  report->add_option("--out", out_dir, "output directory");

  auto* print_config = app.add_subcommand("print-config", "dump the effective configuration");
  print_config->add_option("--config", config_path, "experiment config (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) return cmd_generate(config_path, out_dir);
    if (train->parsed()) return cmd_train(config_path, out_dir, log_path, seed_override);
    if (run->parsed()) return cmd_run(config_path, variant_name, out_dir, seed_override);
    if (report->parsed()) return cmd_report(run_dirs, baseline, out_dir);
    if (print_config->parsed()) {
      invr::ExperimentConfig cfg = load_or_default(config_path, std::nullopt);
      std::cout << invr::serialize_config(cfg);
      return 0;
    }
  } catch (const invr::ConfigParse& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const invr::UnknownVariant& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const invr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
