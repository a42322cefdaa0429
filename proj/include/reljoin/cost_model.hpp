#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "reljoin/errors.hpp"
#include "reljoin/stats.hpp"
#include "reljoin/types.hpp"

namespace reljoin {

struct ClusterParams {
  std::uint32_t parallelism = 20;  // p: join tasks / shuffle partitions
  std::uint32_t nodes = 5;         // n: labels traces only, enters no formula
  double network_weight = 1.0;     // w
  std::uint64_t memory_budget_bytes = 512 * kMB;  // per-task hash map budget
  StatsValidity validity = StatsValidity::desk_default();

  void validate() const {
    if (parallelism < 1) throw InvariantError("parallelism must be >= 1");
    if (nodes < 1) throw InvariantError("node count must be >= 1");
    if (!(network_weight > 0.0) || !std::isfinite(network_weight)) {
      throw InvariantError("network weight w must be a positive finite number");
    }
    if (memory_budget_bytes == 0) throw InvariantError("memory budget must be positive");
    if (validity.watermark_bytes == 0) throw InvariantError("watermark must be positive");
  }

  double p() const { return static_cast<double>(parallelism); }
  double w() const { return network_weight; }
};

struct PhaseCost {
  std::string_view phase;
  bool network = false;
  double workload = 0.0;
};

// Workloads are in byte-equivalent units; sort adds a log2(rows) factor per byte.
struct CostBreakdown {
  double network_workload = 0.0;
  double compute_workload = 0.0;
  double weighted_total = 0.0;
  std::vector<PhaseCost> phases;
};

namespace detail {
inline double bytes(const DatasetStats& s) { return static_cast<double>(s.size_bytes()); }
inline double rows(const DatasetStats& s) { return static_cast<double>(s.cardinality()); }
}  // namespace detail

// Network: every task fetches the (p-1)/p of B it does not hold.
inline double broadcast_cost(const DatasetStats& b, const ClusterParams& params) {
  return (params.p() - 1.0) * detail::bytes(b);
}

// Every task hashes the whole replica of B.
inline double build_cost(const DatasetStats& b, const ClusterParams& params) {
  return params.p() * detail::bytes(b);
}

// Average-case probe with fanout b/a: each A row once, each B row once.
inline double probe_cost(const DatasetStats& a, const DatasetStats& b) {
  return detail::bytes(a) + detail::bytes(b);
}

inline double shuffle_cost(const DatasetStats& a, const DatasetStats& b, const ClusterParams& params) {
  return (params.p() - 1.0) / params.p() * (detail::bytes(a) + detail::bytes(b));
}

// |A| log2(a/p) + |B| log2(b/p), each log clamped at zero when a side has fewer rows than tasks.
inline double sort_cost(const DatasetStats& a, const DatasetStats& b, const ClusterParams& params) {
  auto term = [&](const DatasetStats& s) {
    if (s.empty()) return 0.0;
    return detail::bytes(s) * std::max(0.0, std::log2(detail::rows(s) / params.p()));
  };
  return term(a) + term(b);
}

inline double merge_cost(const DatasetStats& a, const DatasetStats& b) {
  return detail::bytes(a) + detail::bytes(b);
}

// Shuffle hash join: each task hashes only its partition of B.
inline double partition_build_cost(const DatasetStats& b) { return detail::bytes(b); }

inline double nested_loop_cost(const DatasetStats& a, const DatasetStats& b) {
  return detail::bytes(a) + detail::rows(a) * detail::bytes(b);
}

// Shuffled nested loop: the inner loop covers one partition of B per task.
inline double cartesian_nl_cost(const DatasetStats& a, const DatasetStats& b, const ClusterParams& params) {
  return detail::bytes(a) + detail::rows(a) / params.p() * detail::bytes(b);
}

/// Weighted cost of running A join B with `method`; requires |A| >= |B|.
inline CostBreakdown total_cost(JoinMethod method, const DatasetStats& a, const DatasetStats& b,
                                const ClusterParams& params) {
  if (a.size_bytes() < b.size_bytes()) {
    throw InvariantError("total_cost: sides must be normalized so that |A| >= |B|");
  }
  CostBreakdown out;
  switch (method) {
    case JoinMethod::BroadcastHash:
      out.phases = {{"broadcast", true, broadcast_cost(b, params)},
                    {"build", false, build_cost(b, params)},
                    {"probe", false, probe_cost(a, b)}};
      break;
    case JoinMethod::ShuffleHash:
      out.phases = {{"shuffle", true, shuffle_cost(a, b, params)},
                    {"partition_build", false, partition_build_cost(b)},
                    {"probe", false, probe_cost(a, b)}};
      break;
    case JoinMethod::ShuffleSort:
      out.phases = {{"shuffle", true, shuffle_cost(a, b, params)},
                    {"sort", false, sort_cost(a, b, params)},
                    {"merge", false, merge_cost(a, b)}};
      break;
    case JoinMethod::BroadcastNestedLoop:
      out.phases = {{"broadcast", true, broadcast_cost(b, params)},
                    {"nested_loop", false, nested_loop_cost(a, b)}};
      break;
    case JoinMethod::CartesianProduct:
      out.phases = {{"shuffle", true, shuffle_cost(a, b, params)},
                    {"nested_loop", false, cartesian_nl_cost(a, b, params)}};
      break;
  }
  for (const auto& ph : out.phases) {
    (ph.network ? out.network_workload : out.compute_workload) += ph.workload;
  }
  out.weighted_total = params.w() * out.network_workload + out.compute_workload;
  return out;
}

// Relative size above which broadcast hash beats shuffle hash.
inline double k0_threshold(const ClusterParams& params) {
  const double p = params.p();
  const double w = params.w();
  return (p * w + p - w) / w;
}

// k = |A| / |B|; infinite for an empty B.
inline double relative_size(const DatasetStats& a, const DatasetStats& b) {
  if (b.size_bytes() == 0) return std::numeric_limits<double>::infinity();
  return detail::bytes(a) / detail::bytes(b);
}

}  // namespace reljoin
