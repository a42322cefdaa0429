#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "reljoin/errors.hpp"
#include "reljoin/plan.hpp"
#include "reljoin/stats.hpp"

namespace reljoin {

// Keys are implied 8 bytes; a row's byte count includes them.
inline constexpr std::uint64_t kKeyBytes = 8;

// Identity of a source row, used to compare join outputs as multisets.
struct RowRef {
  std::uint32_t source = 0;
  std::uint32_t ordinal = 0;
  friend constexpr auto operator<=>(const RowRef&, const RowRef&) = default;
};

// Lineage marker for the null side of an outer-join row.
inline constexpr RowRef kNullRef{std::numeric_limits<std::uint32_t>::max(), 0};

struct Row {
  std::int64_t key = 0;
  std::uint64_t bytes = 0;
  std::vector<RowRef> lineage;
  friend auto operator<=>(const Row&, const Row&) = default;
};

struct Dataset {
  std::vector<std::vector<Row>> partitions;
  Partitioning partitioning;

  std::uint64_t cardinality() const {
    std::uint64_t n = 0;
    for (const auto& part : partitions) n += part.size();
    return n;
  }

  std::uint64_t size_bytes() const {
    std::uint64_t n = 0;
    for (const auto& part : partitions) {
      for (const auto& r : part) n += r.bytes;
    }
    return n;
  }

  DatasetStats stats() const { return {size_bytes(), cardinality()}; }

  std::vector<Row> rows() const {
    std::vector<Row> out;
    out.reserve(cardinality());
    for (const auto& part : partitions) out.insert(out.end(), part.begin(), part.end());
    return out;
  }
};

// Keys drawn uniformly from 1..domain.
struct UniformKeys {
  std::uint64_t domain = 1;
};
// Key r in 1..domain drawn with probability proportional to r^-exponent.
struct ZipfKeys {
  std::uint64_t domain = 1;
  double exponent = 1.0;
};
// Key of row i is i + 1: a unique key per row.
struct SequentialKeys {};

using KeyDistribution = std::variant<UniformKeys, ZipfKeys, SequentialKeys>;

// Row i placed in partition i mod p.
struct RoundRobinPlacement {};
// Each row placed in partition i with probability weights[i]; missing trailing weights are zero.
struct SkewedPlacement {
  std::vector<double> weights;
};

using InitialPlacement = std::variant<RoundRobinPlacement, SkewedPlacement>;

struct GeneratorSpec {
  std::uint64_t cardinality = 0;
  std::uint64_t row_payload_bytes = 0;
  KeyDistribution keys = UniformKeys{1};
  InitialPlacement placement = RoundRobinPlacement{};
  std::uint64_t seed = 0x5eed;

  void validate() const {
    if (const auto* u = std::get_if<UniformKeys>(&keys); u && u->domain == 0) {
      throw InvariantError("uniform key domain must be positive");
    }
    if (const auto* z = std::get_if<ZipfKeys>(&keys)) {
      if (z->domain == 0) throw InvariantError("zipf key domain must be positive");
      if (!(z->exponent > 0.0)) throw InvariantError("zipf exponent must be positive");
    }
    if (cardinality > std::numeric_limits<std::uint32_t>::max()) throw InvariantError("cardinality too large");
    if (const auto* s = std::get_if<SkewedPlacement>(&placement)) {
      double sum = 0.0;
      for (double w : s->weights) {
        if (!(w >= 0.0)) throw InvariantError("placement weights must be non-negative");
        sum += w;
      }
      if (s->weights.empty() || std::fabs(sum - 1.0) > 1e-6) throw InvariantError("placement weights must sum to 1");
    }
  }
};

namespace detail {

// Platform-independent draws on top of the standardized mt19937_64 engine.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  __extension__ using u128 = unsigned __int128;
  return static_cast<std::uint64_t>((static_cast<u128>(rng()) * n) >> 64);
}

inline double unit_interval(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::vector<double> cumulative(std::vector<double> weights) {
  double acc = 0.0;
  for (auto& w : weights) {
    acc += w;
    w = acc;
  }
  for (auto& w : weights) w /= acc;
  return weights;
}

inline std::size_t draw_cumulative(const std::vector<double>& cdf, double u) {
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

}  // namespace detail

/// Deterministic synthetic dataset split into `partitions` task partitions.
inline Dataset generate(const GeneratorSpec& spec, std::uint32_t partitions, std::uint32_t source = 0) {
  spec.validate();
  if (partitions == 0) throw InvariantError("partition count must be positive");
  std::mt19937_64 key_rng(spec.seed);
  std::mt19937_64 place_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<double> zipf_cdf;
  if (const auto* z = std::get_if<ZipfKeys>(&spec.keys)) {
    zipf_cdf.resize(z->domain);
    for (std::uint64_t r = 0; r < z->domain; ++r) zipf_cdf[r] = std::pow(static_cast<double>(r + 1), -z->exponent);
    zipf_cdf = detail::cumulative(std::move(zipf_cdf));
  }
  std::vector<double> place_cdf;
  if (const auto* s = std::get_if<SkewedPlacement>(&spec.placement)) {
    if (s->weights.size() > partitions) throw InvariantError("more placement weights than partitions");
    place_cdf = detail::cumulative(s->weights);
  }

  Dataset out;
  out.partitions.resize(partitions);
  const std::uint64_t row_bytes = kKeyBytes + spec.row_payload_bytes;
  for (std::uint64_t i = 0; i < spec.cardinality; ++i) {
    std::int64_t key = 0;
    if (const auto* u = std::get_if<UniformKeys>(&spec.keys)) {
      key = static_cast<std::int64_t>(detail::uniform_below(key_rng, u->domain) + 1);
    } else if (std::holds_alternative<ZipfKeys>(spec.keys)) {
      key = static_cast<std::int64_t>(detail::draw_cumulative(zipf_cdf, detail::unit_interval(key_rng)) + 1);
    } else {
      key = static_cast<std::int64_t>(i + 1);
    }
    std::size_t part = 0;
    if (place_cdf.empty()) {
      part = static_cast<std::size_t>(i % partitions);
    } else {
      part = detail::draw_cumulative(place_cdf, detail::unit_interval(place_rng));
    }
    out.partitions[part].push_back(Row{key, row_bytes, {RowRef{source, static_cast<std::uint32_t>(i)}}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generator spec JSON:
//   {"cardinality": N, "row_payload_bytes": N, "seed": N,
//    "keys": {"distribution": "uniform", "domain": N}
//          | {"distribution": "zipf", "domain": N, "exponent": x}
//          | {"distribution": "sequential"},
//    "placement": {"kind": "round_robin"} | {"kind": "skewed", "weights": [..]}}

inline GeneratorSpec generator_spec_from_json(const json& j, const std::string& where = "generator") {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  detail::allow_only(j, {"cardinality", "row_payload_bytes", "seed", "keys", "placement"}, where);
  GeneratorSpec spec;
  spec.cardinality = detail::require_count(j, "cardinality", where);
  if (j.contains("row_payload_bytes")) spec.row_payload_bytes = detail::require_count(j, "row_payload_bytes", where);
  if (j.contains("seed")) spec.seed = detail::require_count(j, "seed", where);
  if (j.contains("keys")) {
    const json& k = j["keys"];
    const std::string kw = where + ".keys";
    if (!k.is_object()) throw SchemaError(kw + ": expected an object");
    const auto dist = detail::require_string(k, "distribution", kw);
    if (dist == "uniform") {
      detail::allow_only(k, {"distribution", "domain"}, kw);
      spec.keys = UniformKeys{detail::require_count(k, "domain", kw)};
    } else if (dist == "zipf") {
      detail::allow_only(k, {"distribution", "domain", "exponent"}, kw);
      spec.keys = ZipfKeys{detail::require_count(k, "domain", kw), detail::require_number(k, "exponent", kw)};
    } else if (dist == "sequential") {
      detail::allow_only(k, {"distribution"}, kw);
      spec.keys = SequentialKeys{};
    } else {
      throw SchemaError(kw + ": unknown distribution '" + dist + "'");
    }
  } else {
    spec.keys = SequentialKeys{};
  }
  if (j.contains("placement")) {
    const json& p = j["placement"];
    const std::string pw = where + ".placement";
    if (!p.is_object()) throw SchemaError(pw + ": expected an object");
    const auto kind = detail::require_string(p, "kind", pw);
    if (kind == "round_robin") {
      detail::allow_only(p, {"kind"}, pw);
      spec.placement = RoundRobinPlacement{};
    } else if (kind == "skewed") {
      detail::allow_only(p, {"kind", "weights"}, pw);
      const json& w = detail::require(p, "weights", pw);
      if (!w.is_array()) throw SchemaError(pw + ": 'weights' must be an array");
      SkewedPlacement s;
      for (const auto& x : w) {
        if (!x.is_number()) throw SchemaError(pw + ": weights must be numbers");
        s.weights.push_back(x.get<double>());
      }
      spec.placement = std::move(s);
    } else {
      throw SchemaError(pw + ": unknown placement kind '" + kind + "'");
    }
  }
  spec.validate();
  return spec;
}

inline json to_json(const GeneratorSpec& spec) {
  json j{{"cardinality", spec.cardinality}, {"row_payload_bytes", spec.row_payload_bytes}, {"seed", spec.seed}};
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, UniformKeys>) {
          j["keys"] = {{"distribution", "uniform"}, {"domain", k.domain}};
        } else if constexpr (std::is_same_v<T, ZipfKeys>) {
          j["keys"] = {{"distribution", "zipf"}, {"domain", k.domain}, {"exponent", k.exponent}};
        } else {
          j["keys"] = {{"distribution", "sequential"}};
        }
      },
      spec.keys);
  if (const auto* s = std::get_if<SkewedPlacement>(&spec.placement)) {
    j["placement"] = {{"kind", "skewed"}, {"weights", s->weights}};
  } else {
    j["placement"] = {{"kind", "round_robin"}};
  }
  return j;
}

}  // namespace reljoin
