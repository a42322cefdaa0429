#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>

#include "reljoin/errors.hpp"
#include "reljoin/types.hpp"

namespace reljoin {

inline constexpr std::uint64_t kKB = 1000;
inline constexpr std::uint64_t kMB = 1000 * kKB;
inline constexpr std::uint64_t kGB = 1000 * kMB;

/// Size and cardinality of a dataset flowing through a plan.
///
/// The only data input of the cost model. An empty dataset has zero size and
/// zero rows; the constructor rejects any other combination involving zero.
class DatasetStats {
 public:
  constexpr DatasetStats() = default;
  DatasetStats(std::uint64_t size_bytes, std::uint64_t cardinality)
      : size_bytes_(size_bytes), cardinality_(cardinality) {
    if ((size_bytes == 0) != (cardinality == 0)) {
      throw InvariantError("dataset stats: size_bytes and cardinality must be zero together (size=" +
                           std::to_string(size_bytes) + ", rows=" + std::to_string(cardinality) + ")");
    }
  }

  constexpr std::uint64_t size_bytes() const { return size_bytes_; }
  constexpr std::uint64_t cardinality() const { return cardinality_; }
  constexpr bool empty() const { return cardinality_ == 0; }

  // Defined only for non-empty datasets.
  double row_size() const {
    if (cardinality_ == 0) throw ZeroCardinality("row size of an empty dataset is undefined");
    return static_cast<double>(size_bytes_) / static_cast<double>(cardinality_);
  }

  friend constexpr bool operator==(const DatasetStats&, const DatasetStats&) = default;

 private:
  std::uint64_t size_bytes_ = 0;
  std::uint64_t cardinality_ = 0;
};

// Statistics above the watermark are not trusted for cost-based selection.
struct StatsValidity {
  std::uint64_t watermark_bytes = 1 * kGB;

  static constexpr StatsValidity desk_default() { return {1 * kGB}; }
  static constexpr StatsValidity production_default() { return {100 * kGB}; }
};

constexpr bool is_valid(const DatasetStats& stats, const StatsValidity& validity) {
  return stats.size_bytes() <= validity.watermark_bytes;
}

constexpr bool is_valid(const std::optional<DatasetStats>& stats, const StatsValidity& validity) {
  return stats.has_value() && is_valid(*stats, validity);
}

// Logical operator payloads. Tree structure lives in plan.hpp.

struct ScanOp {
  std::string name;
  std::optional<DatasetStats> stats;  // absent when the source declares none
  friend bool operator==(const ScanOp&, const ScanOp&) = default;
};

struct FilterOp {
  double selectivity = 1.0;  // planner estimate, in (0, 1]
  // Fraction of rows the simulator actually keeps; defaults to the estimate.
  std::optional<double> runtime_selectivity;
  double effective_runtime_selectivity() const { return runtime_selectivity.value_or(selectivity); }
  friend bool operator==(const FilterOp&, const FilterOp&) = default;
};

struct ProjectOp {
  double width_fraction = 1.0;  // in (0, 1]
  friend bool operator==(const ProjectOp&, const ProjectOp&) = default;
};

struct JoinOp {
  JoinType join_type = JoinType::Inner;
  ConditionKind condition = ConditionKind::Equi;
  Predicate predicate = Predicate::Less;  // meaningful for non-equi joins only
  bool key_sortable = true;
  std::optional<JoinMethod> hint;
  // Matching rows of the smaller side per row of the larger side; b/a when absent.
  std::optional<double> fanout;
  friend bool operator==(const JoinOp&, const JoinOp&) = default;
};

using LogicalOperator = std::variant<ScanOp, FilterOp, ProjectOp, JoinOp>;

constexpr std::size_t arity(const LogicalOperator& op) {
  switch (op.index()) {
    case 0: return 0;
    case 1:
    case 2: return 1;
    default: return 2;
  }
}

namespace detail {

// ceil(f * n) that does not round an exact product up because of representation error.
inline std::uint64_t scaled_ceil(double f, std::uint64_t n) {
  const long double x = static_cast<long double>(f) * static_cast<long double>(n);
  const long double nearest = std::nearbyint(x);
  if (std::fabs(x - nearest) <= 1e-9L * std::max<long double>(1.0L, std::fabs(x))) {
    return static_cast<std::uint64_t>(nearest);
  }
  return static_cast<std::uint64_t>(std::ceil(x));
}

}  // namespace detail

inline DatasetStats propagate_filter(const DatasetStats& in, double selectivity) {
  if (in.empty()) return {};
  return {detail::scaled_ceil(selectivity, in.size_bytes()), detail::scaled_ceil(selectivity, in.cardinality())};
}

inline DatasetStats propagate_project(const DatasetStats& in, double width_fraction) {
  if (in.empty()) return {};
  return {detail::scaled_ceil(width_fraction, in.size_bytes()), in.cardinality()};
}

/// Output estimate of a join under the even-matching assumption.
///
/// Sides are ordered by size internally (A larger, ties keep `left` as A).
/// Output rows = a * fanout, which is b rows for the default fanout b/a; each
/// output row is as wide as one row of A plus one row of B. Semi and anti
/// joins emit rows of their left input only, so their estimate is `left`.
inline DatasetStats propagate_join(const JoinOp& join, const DatasetStats& left, const DatasetStats& right) {
  if (is_semi_or_anti(join.join_type)) return left;
  const bool swap = right.size_bytes() > left.size_bytes();
  const DatasetStats& a = swap ? right : left;
  const DatasetStats& b = swap ? left : right;
  if (a.empty() || b.empty()) return {};
  const std::uint64_t rows = join.fanout ? detail::scaled_ceil(*join.fanout, a.cardinality()) : b.cardinality();
  if (rows == 0) return {};
  const long double width = static_cast<long double>(a.size_bytes()) / a.cardinality() +
                            static_cast<long double>(b.size_bytes()) / b.cardinality();
  return {detail::scaled_ceil(static_cast<double>(width), rows), rows};
}

/// Static output estimate of one operator given its input estimates.
/// Throws MissingStats when a required input (or a scan's declared stats) is absent.
inline DatasetStats propagate(const LogicalOperator& op, std::span<const std::optional<DatasetStats>> inputs) {
  if (inputs.size() != arity(op)) {
    throw InvariantError("propagate: operator expects " + std::to_string(arity(op)) + " inputs, got " +
                         std::to_string(inputs.size()));
  }
  for (const auto& in : inputs) {
    if (!in) throw MissingStats("propagate: input statistics are absent");
  }
  return std::visit(
      [&](const auto& o) -> DatasetStats {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, ScanOp>) {
          if (!o.stats) throw MissingStats("scan '" + o.name + "' declares no statistics");
          return *o.stats;
        } else if constexpr (std::is_same_v<T, FilterOp>) {
          return propagate_filter(*inputs[0], o.selectivity);
        } else if constexpr (std::is_same_v<T, ProjectOp>) {
          return propagate_project(*inputs[0], o.width_fraction);
        } else {
          return propagate_join(o, *inputs[0], *inputs[1]);
        }
      },
      op);
}

}  // namespace reljoin
