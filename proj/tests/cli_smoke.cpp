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

// End-to-end checks of the CLI binary: subcommands, artifacts, exit codes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>

#include "invr/io.hpp"

namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "world": {
    "n_users": 300, "n_items": 100, "n_publishers": 8,
    "niche_publisher_fraction": 0.25, "latent_dim": 8,
    "activity_min": 0.2, "activity_max": 0.8, "ticks": 6, "seed": 4
  },
  "train": {"dim": 8, "epochs": 2},
  "invr": {"users_per_item": 8, "items_per_user_cap": 4, "min_exposure": 8},
  "cold_start": {"age_limit": 5},
  "publisher_thresholds": {
    "max_total_revenue": 1e9, "max_avg_impressions_per_item": 1e9,
    "max_total_clicks": 1e9, "max_avg_revenue_per_item": 1e9
  },
  "warmup_ticks": 5,
  "sim_seeds": [7]
})";

fs::path work_dir() {
  auto dir = fs::temp_directory_path() / "invrlab_cli_smoke";
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(INVRLAB_BIN) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path write_config() {
  auto path = work_dir() / "config.json";
  std::ofstream out(path);
  out << kTinyConfig;
  return path;
}

}  // namespace

TEST_CASE("print-config exits cleanly") {
  CHECK(run_cli("print-config") == 0);
  auto cfg = write_config();
  CHECK(run_cli("print-config --config " + cfg.string()) == 0);
}

TEST_CASE("usage and config errors exit with code 1") {
  CHECK(run_cli("") == 1);                       // missing subcommand
  CHECK(run_cli("run") == 1);                    // missing required --variant
  auto bad = work_dir() / "bad.json";
  {
    std::ofstream out(bad);
    out << "{\"world\": {\"n_userz\": 5}}";
  }
  CHECK(run_cli("print-config --config " + bad.string()) == 1);
  auto cfg = write_config();
  CHECK(run_cli("run --variant SIDEWAYS --config " + cfg.string()) == 1);
}

TEST_CASE("generate is idempotent per seed") {
  auto cfg = write_config();
  auto out1 = work_dir() / "w1";
  auto out2 = work_dir() / "w2";
  REQUIRE(run_cli("generate --config " + cfg.string() + " --out " + out1.string()) == 0);
  REQUIRE(run_cli("generate --config " + cfg.string() + " --out " + out2.string()) == 0);
  for (const char* name : {"publishers.csv", "items.csv", "users.csv"}) {
    CHECK(slurp(out1 / name) == slurp(out2 / name));
  }
}

TEST_CASE("train writes the embedding table and accepts a log") {
  auto cfg = write_config();
  auto out = work_dir() / "train";
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + out.string()) == 0);
  REQUIRE(fs::exists(out / "embeddings.csv"));
  std::string head = slurp(out / "embeddings.csv").substr(0, 6);
  CHECK(head == "dim=8\n");
  // Retrain from the emitted warmup log.
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (work_dir() / "train2").string() +
                  " --log " + (out / "warmup_interactions.csv").string()) == 0);
  CHECK(fs::exists(work_dir() / "train2" / "embeddings.csv"));
}

TEST_CASE("run and report produce the full artifact chain") {
  auto cfg = write_config();
  auto base_dir = work_dir() / "runs" / "BASELINE";
  auto base2_dir = work_dir() / "runs" / "BASELINE2";
  auto rank_dir = work_dir() / "runs" / "INVR_USER_RANK";

  REQUIRE(run_cli("run --variant BASELINE --config " + cfg.string() + " --out " +
                  base_dir.string()) == 0);
  REQUIRE(run_cli("run --variant BASELINE --config " + cfg.string() + " --out " +
                  base2_dir.string()) == 0);
  REQUIRE(run_cli("run --variant INVR_USER_RANK --config " + cfg.string() + " --out " +
                  rank_dir.string()) == 0);

  for (const char* name :
       {"interactions.csv", "ledger.csv", "assignments.csv", "summary.csv", "psei_series.csv",
        "runmeta.json"}) {
    CHECK(fs::exists(base_dir / name));
    CHECK(fs::exists(rank_dir / name));
  }

  // Baseline emits no InvR records; reruns are byte-identical.
  CHECK(slurp(base_dir / "interactions.csv").find("INVR") == std::string::npos);
  CHECK(slurp(base_dir / "interactions.csv") == slurp(base2_dir / "interactions.csv"));
  CHECK(slurp(base_dir / "summary.csv") == slurp(base2_dir / "summary.csv"));

  // The treated variant assigned something.
  std::string assignments = slurp(rank_dir / "assignments.csv");
  CHECK(assignments.find("INVR_USER_RANK") != std::string::npos);

  // A/A report has all-zero relative columns.
  auto report_dir = work_dir() / "report_aa";
  REQUIRE(run_cli("report " + base_dir.string() + " " + base2_dir.string() + " --out " +
                  report_dir.string()) == 0);
  std::string report = slurp(report_dir / "report.csv");
  std::istringstream lines(report);
  std::string header, row;
  std::getline(lines, header);
  while (std::getline(lines, row)) {
    CHECK(row.substr(row.size() - std::string(",0,0,0,0,0,0,0").size()) == ",0,0,0,0,0,0,0");
  }
  CHECK(fs::exists(report_dir / "psei_report.csv"));

  // Reporting without the baseline run is a runtime failure (exit 2).
  CHECK(run_cli("report " + rank_dir.string() + " --out " + (work_dir() / "r2").string()) == 2);
}
