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

#include <fstream>
#include <string>

#include <json.hpp>

#include "invr/common.hpp"
#include "invr/sim.hpp"

namespace invr {

// JSON serialization of the experiment configuration. Parsing starts from
// the built-in defaults and overwrites the keys present in the file; unknown
// keys are rejected with their path so typos surface immediately.

namespace detail {

using nlohmann::json;

template <typename T>
void read_field(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigParse("config key '" + path + key + "' has the wrong type");
  }
}

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigParse("unknown config key '" + path + key + "'");
  }
}

inline json world_to_json(const WorldConfig& w) {
  return json{{"n_users", w.n_users},
              {"n_items", w.n_items},
              {"n_publishers", w.n_publishers},
              {"latent_dim", w.latent_dim},
              {"popularity_exponent", w.popularity_exponent},
              {"niche_publisher_fraction", w.niche_publisher_fraction},
              {"activity_min", w.activity_min},
              {"activity_max", w.activity_max},
              {"consent_rate", w.consent_rate},
              {"scroll_continuation", w.scroll_continuation},
              {"click_beta", w.click_beta},
              {"click_bias", w.click_bias},
              {"pop_weight", w.pop_weight},
              {"initial_popularity_clicks", w.initial_popularity_clicks},
              {"topic_dispersion_niche", w.topic_dispersion_niche},
              {"topic_dispersion_broad", w.topic_dispersion_broad},
              {"ticks", w.ticks},
              {"seed", w.seed}};
}

inline void world_from_json(const json& obj, WorldConfig& w) {
  check_keys(obj, "world.",
             {"n_users", "n_items", "n_publishers", "latent_dim", "popularity_exponent",
              "niche_publisher_fraction", "activity_min", "activity_max", "consent_rate",
              "scroll_continuation", "click_beta", "click_bias", "pop_weight",
              "initial_popularity_clicks", "topic_dispersion_niche", "topic_dispersion_broad",
              "ticks", "seed"});
  read_field(obj, "world.", "n_users", w.n_users);
  read_field(obj, "world.", "n_items", w.n_items);
  read_field(obj, "world.", "n_publishers", w.n_publishers);
  read_field(obj, "world.", "latent_dim", w.latent_dim);
  read_field(obj, "world.", "popularity_exponent", w.popularity_exponent);
  read_field(obj, "world.", "niche_publisher_fraction", w.niche_publisher_fraction);
  read_field(obj, "world.", "activity_min", w.activity_min);
  read_field(obj, "world.", "activity_max", w.activity_max);
  read_field(obj, "world.", "consent_rate", w.consent_rate);
  read_field(obj, "world.", "scroll_continuation", w.scroll_continuation);
  read_field(obj, "world.", "click_beta", w.click_beta);
  read_field(obj, "world.", "click_bias", w.click_bias);
  read_field(obj, "world.", "pop_weight", w.pop_weight);
  read_field(obj, "world.", "initial_popularity_clicks", w.initial_popularity_clicks);
  read_field(obj, "world.", "topic_dispersion_niche", w.topic_dispersion_niche);
  read_field(obj, "world.", "topic_dispersion_broad", w.topic_dispersion_broad);
  read_field(obj, "world.", "ticks", w.ticks);
  read_field(obj, "world.", "seed", w.seed);
}

inline json train_to_json(const TrainConfig& t) {
  return json{{"dim", t.dim},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"learning_rate", t.learning_rate},
              {"optimizer_epsilon", t.optimizer_epsilon},
              {"init_scale", t.init_scale},
              {"seed", t.seed}};
}

inline void train_from_json(const json& obj, TrainConfig& t) {
  check_keys(obj, "train.",
             {"dim", "batch_size", "epochs", "learning_rate", "optimizer_epsilon", "init_scale",
              "seed"});
  read_field(obj, "train.", "dim", t.dim);
  read_field(obj, "train.", "batch_size", t.batch_size);
  read_field(obj, "train.", "epochs", t.epochs);
  read_field(obj, "train.", "learning_rate", t.learning_rate);
  read_field(obj, "train.", "optimizer_epsilon", t.optimizer_epsilon);
  read_field(obj, "train.", "init_scale", t.init_scale);
  read_field(obj, "train.", "seed", t.seed);
}

inline json invr_to_json(const InvrConfig& c) {
  return json{{"users_per_item", c.users_per_item},
              {"items_per_user_cap", c.items_per_user_cap},
              {"overfetch_factor", c.overfetch_factor},
              {"ordering_mode", to_string(c.ordering_mode)},
              {"min_exposure", c.min_exposure},
              {"max_impressions_per_user_item", c.max_impressions_per_user_item},
              {"recompute_period", c.recompute_period},
              {"second_round", c.second_round},
              {"seed", c.seed}};
}

inline void invr_from_json(const json& obj, const std::string& path, InvrConfig& c) {
  check_keys(obj, path,
             {"users_per_item", "items_per_user_cap", "overfetch_factor", "ordering_mode",
              "min_exposure", "max_impressions_per_user_item", "recompute_period", "second_round",
              "seed"});
  read_field(obj, path, "users_per_item", c.users_per_item);
  read_field(obj, path, "items_per_user_cap", c.items_per_user_cap);
  read_field(obj, path, "overfetch_factor", c.overfetch_factor);
  if (obj.contains("ordering_mode")) {
    c.ordering_mode = ordering_mode_from_string(obj.at("ordering_mode").get<std::string>());
  }
  read_field(obj, path, "min_exposure", c.min_exposure);
  read_field(obj, path, "max_impressions_per_user_item", c.max_impressions_per_user_item);
  read_field(obj, path, "recompute_period", c.recompute_period);
  read_field(obj, path, "second_round", c.second_round);
  read_field(obj, path, "seed", c.seed);
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  json variants = json::array();
  for (const auto& v : cfg.variants) {
    if (v.invr) {
      variants.push_back(json{{"name", to_string(v.name)}, {"invr", detail::invr_to_json(*v.invr)}});
    } else {
      variants.push_back(std::string(to_string(v.name)));
    }
  }
  return json{
      {"world", detail::world_to_json(cfg.world)},
      {"train", detail::train_to_json(cfg.train)},
      {"invr", detail::invr_to_json(cfg.invr)},
      {"slate",
       json{{"slate_size", cfg.slate.slate_size},
            {"invr_slots_max", cfg.slate.invr_slots_max},
            {"invr_position_lo", cfg.slate.invr_position_lo},
            {"invr_position_hi", cfg.slate.invr_position_hi}}},
      {"cold_start",
       json{{"age_limit", cfg.cold_start.age_limit},
            {"min_interactions", cfg.cold_start.min_interactions},
            {"insert_rate", cfg.cold_start.insert_rate}}},
      {"publisher_thresholds",
       json{{"max_total_revenue", cfg.publisher_thresholds.max_total_revenue},
            {"max_avg_impressions_per_item", cfg.publisher_thresholds.max_avg_impressions_per_item},
            {"max_total_clicks", cfg.publisher_thresholds.max_total_clicks},
            {"max_avg_revenue_per_item", cfg.publisher_thresholds.max_avg_revenue_per_item}}},
      {"user_selection",
       json{{"min_history_len", cfg.user_selection.min_history_len},
            {"min_recent_visits", cfg.user_selection.min_recent_visits},
            {"recent_window", cfg.user_selection.recent_window}}},
      {"variants", variants},
      {"history_max_len", cfg.history_max_len},
      {"warmup_ticks", cfg.warmup_ticks},
      {"negative_keep_prob", cfg.negative_keep_prob},
      {"feedback_retrain", cfg.feedback_retrain},
      {"feedback_period", cfg.feedback_period},
      {"out_dir", cfg.out_dir},
      {"sim_seeds", cfg.sim_seeds}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& root) {
  using nlohmann::json;
  if (!root.is_object()) throw ConfigParse("config root must be a JSON object");
  detail::check_keys(root, "",
                     {"world", "train", "invr", "slate", "cold_start", "publisher_thresholds",
                      "user_selection", "variants", "history_max_len", "warmup_ticks",
                      "negative_keep_prob", "feedback_retrain", "feedback_period", "out_dir",
                      "sim_seeds"});
  ExperimentConfig cfg = default_experiment_config();
  if (root.contains("world")) detail::world_from_json(root.at("world"), cfg.world);
  if (root.contains("train")) detail::train_from_json(root.at("train"), cfg.train);
  if (root.contains("invr")) detail::invr_from_json(root.at("invr"), "invr.", cfg.invr);
  if (root.contains("slate")) {
    const json& obj = root.at("slate");
    detail::check_keys(obj, "slate.",
                       {"slate_size", "invr_slots_max", "invr_position_lo", "invr_position_hi"});
    detail::read_field(obj, "slate.", "slate_size", cfg.slate.slate_size);
    detail::read_field(obj, "slate.", "invr_slots_max", cfg.slate.invr_slots_max);
    detail::read_field(obj, "slate.", "invr_position_lo", cfg.slate.invr_position_lo);
    detail::read_field(obj, "slate.", "invr_position_hi", cfg.slate.invr_position_hi);
  }
  if (root.contains("cold_start")) {
    const json& obj = root.at("cold_start");
    detail::check_keys(obj, "cold_start.", {"age_limit", "min_interactions", "insert_rate"});
    detail::read_field(obj, "cold_start.", "age_limit", cfg.cold_start.age_limit);
    detail::read_field(obj, "cold_start.", "min_interactions", cfg.cold_start.min_interactions);
    detail::read_field(obj, "cold_start.", "insert_rate", cfg.cold_start.insert_rate);
  }
  if (root.contains("publisher_thresholds")) {
    const json& obj = root.at("publisher_thresholds");
    detail::check_keys(obj, "publisher_thresholds.",
                       {"max_total_revenue", "max_avg_impressions_per_item", "max_total_clicks",
                        "max_avg_revenue_per_item"});
    detail::read_field(obj, "publisher_thresholds.", "max_total_revenue",
                       cfg.publisher_thresholds.max_total_revenue);
    detail::read_field(obj, "publisher_thresholds.", "max_avg_impressions_per_item",
                       cfg.publisher_thresholds.max_avg_impressions_per_item);
    detail::read_field(obj, "publisher_thresholds.", "max_total_clicks",
                       cfg.publisher_thresholds.max_total_clicks);
    detail::read_field(obj, "publisher_thresholds.", "max_avg_revenue_per_item",
                       cfg.publisher_thresholds.max_avg_revenue_per_item);
  }
  if (root.contains("user_selection")) {
    const json& obj = root.at("user_selection");
    detail::check_keys(obj, "user_selection.",
                       {"min_history_len", "min_recent_visits", "recent_window"});
    detail::read_field(obj, "user_selection.", "min_history_len",
                       cfg.user_selection.min_history_len);
    detail::read_field(obj, "user_selection.", "min_recent_visits",
                       cfg.user_selection.min_recent_visits);
    detail::read_field(obj, "user_selection.", "recent_window", cfg.user_selection.recent_window);
  }
  if (root.contains("variants")) {
    const json& arr = root.at("variants");
    if (!arr.is_array() || arr.empty()) throw ConfigParse("config key 'variants' must be a non-empty array");
    cfg.variants.clear();
    for (const auto& entry : arr) {
      VariantSpec spec;
      if (entry.is_string()) {
        spec.name = variant_from_string(entry.get<std::string>());
      } else if (entry.is_object()) {
        detail::check_keys(entry, "variants[].", {"name", "invr"});
        if (!entry.contains("name")) throw ConfigParse("variant entry missing 'name'");
        spec.name = variant_from_string(entry.at("name").get<std::string>());
        if (entry.contains("invr")) {
          InvrConfig override_cfg = cfg.invr;
          detail::invr_from_json(entry.at("invr"), "variants[].invr.", override_cfg);
          spec.invr = override_cfg;
        }
      } else {
        throw ConfigParse("variant entries must be strings or objects");
      }
      cfg.variants.push_back(std::move(spec));
    }
  }
  detail::read_field(root, "", "history_max_len", cfg.history_max_len);
  detail::read_field(root, "", "warmup_ticks", cfg.warmup_ticks);
  detail::read_field(root, "", "negative_keep_prob", cfg.negative_keep_prob);
  detail::read_field(root, "", "feedback_retrain", cfg.feedback_retrain);
  detail::read_field(root, "", "feedback_period", cfg.feedback_period);
  detail::read_field(root, "", "out_dir", cfg.out_dir);
  if (root.contains("sim_seeds")) {
    try {
      cfg.sim_seeds = root.at("sim_seeds").get<std::vector<std::uint64_t>>();
    } catch (const json::exception&) {
      throw ConfigParse("config key 'sim_seeds' must be an array of integers");
    }
  }
  cfg.validate();
  return cfg;
}

inline std::string serialize_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigParse(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(root);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParse("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

}  // namespace invr
