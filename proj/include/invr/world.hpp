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
#include <numeric>
#include <vector>

#include "invr/common.hpp"

namespace invr {

// Synthetic content platform: users and items carry ground-truth latent
// topic vectors that drive clicks; the recommender only ever sees learned
// embeddings and click counts.

struct WorldConfig {
  int n_users = 10000;
  int n_items = 2000;
  int n_publishers = 20;
  int latent_dim = 8;
  double popularity_exponent = 0.8;       // pre-existing popularity ~ rank^-exp
  double niche_publisher_fraction = 0.2;  // publishers specialized in one topic
  double activity_min = 0.05;             // per-user visit probability range
  double activity_max = 0.6;
  double consent_rate = 0.97;
  double scroll_continuation = 0.85;      // geometric scroll-depth parameter
  double click_beta = 6.0;                // click ~ sigmoid(beta * relevance + bias)
  double click_bias = -3.0;
  double pop_weight = 0.55;               // lambda in score = dot + lambda*log1p(clicks)
  std::int64_t initial_popularity_clicks = 120;  // head item's pre-existing clicks
  double topic_dispersion_niche = 0.25;
  double topic_dispersion_broad = 0.5;
  int ticks = 50;                         // main-phase ticks
  std::uint64_t seed = 1;

  void validate() const {
    if (n_users < 1 || n_items < 1 || n_publishers < 1) {
      throw InvalidConfig("world sizes must be positive");
    }
    if (latent_dim < 1) throw InvalidConfig("world.latent_dim must be >= 1");
    if (popularity_exponent < 0.0) throw InvalidConfig("world.popularity_exponent must be >= 0");
    if (!(niche_publisher_fraction > 0.0 && niche_publisher_fraction < 1.0)) {
      throw InvalidConfig("world.niche_publisher_fraction must be in (0,1)");
    }
    if (!(activity_min >= 0.0 && activity_max <= 1.0 && activity_min <= activity_max)) {
      throw InvalidConfig("world activity range must satisfy 0 <= min <= max <= 1");
    }
    if (!(consent_rate >= 0.0 && consent_rate <= 1.0)) {
      throw InvalidConfig("world.consent_rate must be in [0,1]");
    }
    if (!(scroll_continuation > 0.0 && scroll_continuation <= 1.0)) {
      throw InvalidConfig("world.scroll_continuation must be in (0,1]");
    }
    if (initial_popularity_clicks < 0) {
      throw InvalidConfig("world.initial_popularity_clicks must be >= 0");
    }
    if (ticks < 1) throw InvalidConfig("world.ticks must be >= 1");
  }
};

struct Publisher {
  PublisherId id = 0;
  bool niche = false;
  std::vector<double> centroid;  // topic direction, unit length
  double revenue_per_click = 1.0;
};

struct CatalogItem {
  ItemId id = 0;
  PublisherId publisher = 0;
  Tick created = 0;
  std::vector<double> latent;          // unit length
  std::int64_t initial_clicks = 0;     // pre-existing popularity
  int popularity_rank = 0;             // 1 = most popular prior
};

struct UserProfile {
  UserId id = 0;
  std::vector<double> latent;  // unit length
  double visit_prob = 0.0;
  bool consent = true;
};

struct World {
  WorldConfig config;
  std::vector<Publisher> publishers;
  std::vector<CatalogItem> items;
  std::vector<UserProfile> users;
};

// Deterministic per seed. Niche publishers draw item latents tightly around
// their topic centroid and their items occupy the tail of the pre-existing
// popularity ranking, which is what makes them under-exposed under a
// popularity-biased recommender.
inline World generate_world(const WorldConfig& config) {
  config.validate();
  World world;
  world.config = config;
  Rng rng(config.seed);

  int n_niche = static_cast<int>(std::llround(config.niche_publisher_fraction *
                                              static_cast<double>(config.n_publishers)));
  n_niche = std::clamp(n_niche, 1, config.n_publishers - 1);

  world.publishers.reserve(static_cast<std::size_t>(config.n_publishers));
  for (int p = 0; p < config.n_publishers; ++p) {
    Publisher pub;
    pub.id = p;
    pub.niche = p < n_niche;
    pub.centroid = rng.unit_vector(config.latent_dim);
    pub.revenue_per_click = rng.uniform_in(0.5, 2.0);
    world.publishers.push_back(std::move(pub));
  }

  world.items.reserve(static_cast<std::size_t>(config.n_items));
  for (int i = 0; i < config.n_items; ++i) {
    CatalogItem item;
    item.id = i;
    item.publisher = rng.uniform_int(config.n_publishers);
    const Publisher& pub = world.publishers[static_cast<std::size_t>(item.publisher)];
    double dispersion = pub.niche ? config.topic_dispersion_niche : config.topic_dispersion_broad;
    item.latent.resize(static_cast<std::size_t>(config.latent_dim));
    double norm2 = 0.0;
    for (int k = 0; k < config.latent_dim; ++k) {
      double x = pub.centroid[static_cast<std::size_t>(k)] + dispersion * rng.normal();
      item.latent[static_cast<std::size_t>(k)] = x;
      norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(std::max(norm2, 1e-12));
    for (auto& x : item.latent) x *= inv;
    world.items.push_back(std::move(item));
  }

  // Popularity ranks: broad-publisher items shuffled into the head of the
  // ranking, niche items shuffled into the tail.
  std::vector<std::size_t> broad, niche;
  for (std::size_t i = 0; i < world.items.size(); ++i) {
    const auto& pub = world.publishers[static_cast<std::size_t>(world.items[i].publisher)];
    (pub.niche ? niche : broad).push_back(i);
  }
  rng.shuffle(broad);
  rng.shuffle(niche);
  int rank = 1;
  for (std::size_t i : broad) {
    world.items[i].popularity_rank = rank++;
  }
  for (std::size_t i : niche) {
    world.items[i].popularity_rank = rank++;
  }
  for (auto& item : world.items) {
    double weight = std::pow(static_cast<double>(item.popularity_rank), -config.popularity_exponent);
    item.initial_clicks = static_cast<std::int64_t>(
        std::floor(static_cast<double>(config.initial_popularity_clicks) * weight));
  }

  world.users.reserve(static_cast<std::size_t>(config.n_users));
  for (int u = 0; u < config.n_users; ++u) {
    UserProfile user;
    user.id = u;
    user.latent = rng.unit_vector(config.latent_dim);
    user.visit_prob = rng.uniform_in(config.activity_min, config.activity_max);
    user.consent = rng.uniform() < config.consent_rate;
    world.users.push_back(std::move(user));
  }
  return world;
}

}  // namespace invr
