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
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "invr/common.hpp"

namespace invr {

// ID-embedding training for the retrieval model. Item vectors are learned
// directly; a user vector is the average of the item vectors in the user's
// interaction history, so the user tower has no parameters of its own.

struct TrainConfig {
  int dim = 128;
  int batch_size = 128;
  int epochs = 10;
  double learning_rate = 0.1;
  double optimizer_epsilon = 1e-8;
  double init_scale = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (dim < 1) throw InvalidConfig("train.dim must be >= 1");
    if (batch_size < 1) throw InvalidConfig("train.batch_size must be >= 1");
    if (epochs < 0) throw InvalidConfig("train.epochs must be >= 0");
    if (!(learning_rate > 0.0)) throw InvalidConfig("train.learning_rate must be > 0");
    if (!(optimizer_epsilon > 0.0)) throw InvalidConfig("train.optimizer_epsilon must be > 0");
    if (!(init_scale > 0.0)) throw InvalidConfig("train.init_scale must be > 0");
  }
};

// Learned item vectors plus the per-coordinate squared-gradient sums the
// adaptive-gradient optimizer carries between batches.
class ItemEmbeddingTable {
 public:
  ItemEmbeddingTable() = default;
  explicit ItemEmbeddingTable(int dim) : dim_(dim) {
    if (dim < 1) throw InvalidConfig("embedding dim must be >= 1");
  }

  int dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(ItemId id) const { return entries_.count(id) > 0; }

  const std::vector<double>& vec(ItemId id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw UnknownItem("unknown item id " + std::to_string(id));
    return it->second;
  }

  void insert(ItemId id, std::vector<double> v) {
    if (static_cast<int>(v.size()) != dim_) {
      throw DimensionMismatch("vector length does not match table dim");
    }
    entries_[id] = std::move(v);
    accum_[id].assign(static_cast<std::size_t>(dim_), 0.0);
  }

  std::vector<double>& mutable_vec(ItemId id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw UnknownItem("unknown item id " + std::to_string(id));
    return it->second;
  }

  std::vector<double>& accumulator(ItemId id) {
    auto it = accum_.find(id);
    if (it == accum_.end()) throw UnknownItem("unknown item id " + std::to_string(id));
    return it->second;
  }

  std::vector<ItemId> ids_sorted() const {
    std::vector<ItemId> ids;
    ids.reserve(entries_.size());
    for (const auto& [id, v] : entries_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

 private:
  int dim_ = 0;
  std::unordered_map<ItemId, std::vector<double>> entries_;
  std::unordered_map<ItemId, std::vector<double>> accum_;
};

// A user's recent interaction history, most recent last, truncated to max_len.
struct UserHistory {
  UserId user = 0;
  std::vector<ItemId> items;
  int max_len = 50;

  void push(ItemId item) {
    items.push_back(item);
    if (static_cast<int>(items.size()) > max_len) {
      items.erase(items.begin(), items.end() - max_len);
    }
  }
};

// One implicit-feedback example: the history at event time, the shown item
// and whether it was clicked (1) or visible-but-not-clicked (0).
struct TrainingExample {
  std::shared_ptr<const std::vector<ItemId>> history;
  ItemId item = 0;
  double label = 0.0;
};

namespace detail {

inline std::vector<double> pooled_mean(const std::vector<ItemId>& items,
                                       const ItemEmbeddingTable& table) {
  std::vector<double> u(static_cast<std::size_t>(table.dim()), 0.0);
  for (ItemId id : items) {
    const auto& v = table.vec(id);
    for (std::size_t k = 0; k < u.size(); ++k) u[k] += v[k];
  }
  double inv = 1.0 / static_cast<double>(items.size());
  for (auto& x : u) x *= inv;
  return u;
}

}  // namespace detail

// Coordinate-wise mean of the history items' vectors. Duplicated history
// entries count once per occurrence.
inline std::vector<double> user_embedding(const UserHistory& history,
                                          const ItemEmbeddingTable& table) {
  if (history.items.empty()) {
    throw EmptyHistory("user " + std::to_string(history.user) + " has empty history");
  }
  return detail::pooled_mean(history.items, table);
}

// Binary cross-entropy of the logistic of the user-item dot product.
inline double example_loss(const ItemEmbeddingTable& table, const TrainingExample& ex) {
  if (!ex.history || ex.history->empty()) throw EmptyHistory("training example has empty history");
  std::vector<double> u = detail::pooled_mean(*ex.history, table);
  double s = dot(u, table.vec(ex.item));
  return softplus(s) - ex.label * s;
}

using GradientMap = std::unordered_map<ItemId, std::vector<double>>;

// Accumulates dLoss/dVec into `grads` for every item vector the example
// touches: the target item and, through the pooled user vector, each history
// item (per occurrence).
inline void accumulate_example_gradient(const ItemEmbeddingTable& table,
                                        const TrainingExample& ex, GradientMap& grads) {
  if (!ex.history || ex.history->empty()) throw EmptyHistory("training example has empty history");
  const int dim = table.dim();
  std::vector<double> u = detail::pooled_mean(*ex.history, table);
  const std::vector<double>& vj = table.vec(ex.item);
  double g = sigmoid(dot(u, vj)) - ex.label;

  auto slot = [&](ItemId id) -> std::vector<double>& {
    auto [it, inserted] = grads.try_emplace(id);
    if (inserted) it->second.assign(static_cast<std::size_t>(dim), 0.0);
    return it->second;
  };

  auto& gj = slot(ex.item);
  for (int k = 0; k < dim; ++k) gj[static_cast<std::size_t>(k)] += g * u[static_cast<std::size_t>(k)];

  double scale = g / static_cast<double>(ex.history->size());
  for (ItemId id : *ex.history) {
    auto& gi = slot(id);
    for (int k = 0; k < dim; ++k) {
      gi[static_cast<std::size_t>(k)] += scale * vj[static_cast<std::size_t>(k)];
    }
  }
}

// Gradient of a single example as a sorted map, for oracle comparisons.
inline std::map<ItemId, std::vector<double>> example_gradient(const ItemEmbeddingTable& table,
                                                              const TrainingExample& ex) {
  GradientMap grads;
  accumulate_example_gradient(table, ex, grads);
  return std::map<ItemId, std::vector<double>>(grads.begin(), grads.end());
}

// Mini-batch training with a per-coordinate adaptive-gradient update:
// accumulate squared gradients, divide each step by sqrt(acc) + epsilon.
// Items absent from `initial` are initialized uniform in [-init_scale,
// init_scale] from config.seed, in ascending id order. Examples are consumed
// in the order given; the final short batch is processed.
inline ItemEmbeddingTable train(const std::vector<TrainingExample>& examples,
                                const TrainConfig& config,
                                const ItemEmbeddingTable* initial = nullptr) {
  config.validate();
  if (initial && initial->dim() != config.dim) {
    throw InvalidConfig("initial table dim does not match config.dim");
  }
  ItemEmbeddingTable table = initial ? *initial : ItemEmbeddingTable(config.dim);

  std::unordered_set<ItemId> seen;
  std::vector<ItemId> fresh;
  auto note = [&](ItemId id) {
    if (!table.contains(id) && seen.insert(id).second) fresh.push_back(id);
  };
  for (const auto& ex : examples) {
    if (!ex.history || ex.history->empty()) throw EmptyHistory("training example has empty history");
    note(ex.item);
    for (ItemId id : *ex.history) note(id);
  }
  std::sort(fresh.begin(), fresh.end());
  Rng rng(config.seed);
  for (ItemId id : fresh) {
    std::vector<double> v(static_cast<std::size_t>(config.dim));
    for (auto& x : v) x = rng.uniform_in(-config.init_scale, config.init_scale);
    table.insert(id, std::move(v));
  }

  if (examples.empty()) return table;

  GradientMap grads;
  const std::size_t n = examples.size();
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t start = 0; start < n; start += bs) {
      std::size_t end = std::min(start + bs, n);
      grads.clear();
      for (std::size_t i = start; i < end; ++i) {
        accumulate_example_gradient(table, examples[i], grads);
      }
      double scale = 1.0 / static_cast<double>(end - start);
      for (auto& [id, g] : grads) {
        auto& acc = table.accumulator(id);
        auto& v = table.mutable_vec(id);
        for (std::size_t k = 0; k < g.size(); ++k) {
          double gk = g[k] * scale;
          acc[k] += gk * gk;
          v[k] -= config.learning_rate * gk / (std::sqrt(acc[k]) + config.optimizer_epsilon);
        }
      }
    }
  }
  return table;
}

// Mean epoch loss over a set of examples.
inline double dataset_loss(const ItemEmbeddingTable& table,
                           const std::vector<TrainingExample>& examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) total += example_loss(table, ex);
  return total / static_cast<double>(examples.size());
}

struct UserEmbeddingSet {
  std::unordered_map<UserId, std::vector<double>> embeddings;
  std::vector<UserId> skipped;  // users whose filtered history was empty
};

// One vector per user from the filtered history (unknown items dropped).
// Users with nothing left are omitted and listed in `skipped`.
inline UserEmbeddingSet build_user_embeddings(const std::vector<UserHistory>& users,
                                              const ItemEmbeddingTable& table) {
  UserEmbeddingSet out;
  std::vector<ItemId> kept;
  for (const auto& h : users) {
    kept.clear();
    for (ItemId id : h.items) {
      if (table.contains(id)) kept.push_back(id);
    }
    if (kept.empty()) {
      out.skipped.push_back(h.user);
      continue;
    }
    out.embeddings.emplace(h.user, detail::pooled_mean(kept, table));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: header line `dim=<d>`, then one row per item,
// `item_id,v1,...,vd`, ids ascending. Optimizer state is not persisted.
// ---------------------------------------------------------------------------

inline void save_table(const ItemEmbeddingTable& table, std::ostream& out) {
  out << "dim=" << table.dim() << "\n";
  for (ItemId id : table.ids_sorted()) {
    out << id;
    for (double x : table.vec(id)) out << ',' << format_double(x);
    out << "\n";
  }
  if (!out) throw IoFailure("failed writing embedding table");
}

inline ItemEmbeddingTable load_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("dim=", 0) != 0) {
    throw IoFailure("embedding table missing dim= header");
  }
  int dim = static_cast<int>(parse_int(line.substr(4)));
  ItemEmbeddingTable table(dim);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        parts.push_back(line.substr(pos));
        break;
      }
      parts.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (static_cast<int>(parts.size()) != dim + 1) {
      throw IoFailure("embedding row has wrong field count");
    }
    ItemId id = parse_int(parts[0]);
    if (table.contains(id)) throw DuplicateId("duplicate item id in embedding table");
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) v[static_cast<std::size_t>(k)] = parse_double(parts[static_cast<std::size_t>(k + 1)]);
    table.insert(id, std::move(v));
  }
  return table;
}

}  // namespace invr
