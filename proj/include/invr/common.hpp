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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace invr {

using ItemId = std::int64_t;
using UserId = std::int64_t;
using PublisherId = std::int64_t;
using Tick = std::int32_t;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define INVR_DEFINE_ERROR(NAME)                  \
  class NAME : public Error {                    \
   public:                                       \
    using Error::Error;                          \
  }

INVR_DEFINE_ERROR(EmptyHistory);
INVR_DEFINE_ERROR(UnknownItem);
INVR_DEFINE_ERROR(InvalidConfig);
INVR_DEFINE_ERROR(DimensionMismatch);
INVR_DEFINE_ERROR(DuplicateId);
INVR_DEFINE_ERROR(EmptyIndex);
INVR_DEFINE_ERROR(UnknownId);
INVR_DEFINE_ERROR(ZeroTotalExposure);
INVR_DEFINE_ERROR(EmptyTreatedSet);
INVR_DEFINE_ERROR(InvalidAlpha);
INVR_DEFINE_ERROR(ZeroBaseline);
INVR_DEFINE_ERROR(ConfigParse);
INVR_DEFINE_ERROR(UnknownVariant);
INVR_DEFINE_ERROR(IoFailure);
INVR_DEFINE_ERROR(MismatchedRuns);

#undef INVR_DEFINE_ERROR

// ---------------------------------------------------------------------------
// Interaction records
// ---------------------------------------------------------------------------

enum class Source : std::uint8_t { kOrganic = 0, kInvr = 1, kColdStart = 2 };

inline const char* to_string(Source s) {
  switch (s) {
    case Source::kOrganic:
      return "ORGANIC";
    case Source::kInvr:
      return "INVR";
    case Source::kColdStart:
      return "COLDSTART";
  }
  return "ORGANIC";
}

inline Source source_from_string(const std::string& s) {
  if (s == "ORGANIC") return Source::kOrganic;
  if (s == "INVR") return Source::kInvr;
  if (s == "COLDSTART") return Source::kColdStart;
  throw ConfigParse("unknown interaction source: " + s);
}

// One recommendation event. `history` is the user's interaction history
// snapshotted at serve time; it is shared between all records of one visit
// and may be null when no consumer needs it.
struct InteractionRecord {
  Tick tick = 0;
  UserId user = 0;
  ItemId item = 0;
  int position = 0;  // 1-based slate position
  bool visible = false;
  bool clicked = false;
  Source source = Source::kOrganic;
  std::shared_ptr<const std::vector<ItemId>> history;
};

// ---------------------------------------------------------------------------
// Deterministic randomness
//
// All randomness in the library flows through splitmix64, either sequentially
// (Rng) or as counter-based draws keyed on (seed, stream, coordinates). The
// counter-based form gives common random numbers across A/B variants: a draw
// depends only on its key, never on how many draws happened before it.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Order-sensitive key derivation for named substreams.
inline std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) {
    std::uint64_t s = h ^ (p + 0x9e3779b97f4a7c15ULL);
    h = splitmix64(s);
  }
  return h;
}

inline double u64_to_unit(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;  // [0, 1)
}

// One-shot keyed uniform in [0,1).
inline double keyed_uniform(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = mix_key(parts);
  return u64_to_unit(splitmix64(s));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  double uniform() { return u64_to_unit(next_u64()); }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller; second value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::vector<double> unit_vector(int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm2 = 0.0;
    for (auto& x : v) {
      x = normal();
      norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(std::max(norm2, 1e-300));
    for (auto& x : v) x *= inv;
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Shortest round-trip decimal form; keeps CSV artifacts byte-stable.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoFailure("failed to parse number: '" + s + "'");
  }
  return v;
}

inline std::int64_t parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoFailure("failed to parse integer: '" + s + "'");
  }
  return v;
}

}  // namespace invr
