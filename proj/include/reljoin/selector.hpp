#pragma once

#include <map>
#include <optional>
#include <string>

#include "reljoin/cost_model.hpp"
#include "reljoin/errors.hpp"
#include "reljoin/stats.hpp"
#include "reljoin/types.hpp"

namespace reljoin {

struct Feasibility {
  bool broadcast_hash = false;  // equi, not full outer, |B| fits the budget
  bool shuffle_hash = false;    // equi, |B| / p fits the budget
  bool key_sortable = false;    // equi with a sortable key
  bool inner_like = false;
};

inline Feasibility feasibility(const JoinOp& join, const DatasetStats& b, const ClusterParams& params) {
  const bool equi = join.condition == ConditionKind::Equi;
  const double budget = static_cast<double>(params.memory_budget_bytes);
  const double b_bytes = static_cast<double>(b.size_bytes());
  Feasibility f;
  f.broadcast_hash = equi && join.join_type != JoinType::FullOuter && b_bytes <= budget;
  f.shuffle_hash = equi && b_bytes / params.p() <= budget;
  f.key_sortable = equi && join.key_sortable;
  f.inner_like = inner_like(join.join_type);
  return f;
}

inline bool is_feasible(JoinMethod m, const Feasibility& f) {
  switch (m) {
    case JoinMethod::BroadcastHash: return f.broadcast_hash;
    case JoinMethod::ShuffleHash: return f.shuffle_hash;
    case JoinMethod::ShuffleSort: return f.key_sortable;
    case JoinMethod::CartesianProduct: return f.inner_like;
    case JoinMethod::BroadcastNestedLoop: return true;
  }
  return false;
}

// Feasibility that does not depend on sizes; used when statistics are missing or untrusted.
inline bool structurally_feasible(JoinMethod m, const JoinOp& join) {
  const bool equi = join.condition == ConditionKind::Equi;
  switch (m) {
    case JoinMethod::BroadcastHash: return equi && join.join_type != JoinType::FullOuter;
    case JoinMethod::ShuffleHash: return equi;
    case JoinMethod::ShuffleSort: return equi && join.key_sortable;
    case JoinMethod::CartesianProduct: return inner_like(join.join_type);
    case JoinMethod::BroadcastNestedLoop: return true;
  }
  return false;
}

namespace detail {

inline void check_hint(JoinMethod hint, bool feasible) {
  if (!feasible) {
    throw InfeasibleHint("hinted method " + std::string(to_string(hint)) + " is not feasible for this join");
  }
}

inline JoinMethod cheaper_nested_loop(const DatasetStats& a, const DatasetStats& b, const ClusterParams& params,
                                      bool inner) {
  if (inner) {
    const double cartesian = total_cost(JoinMethod::CartesianProduct, a, b, params).weighted_total;
    const double broadcast_nl = total_cost(JoinMethod::BroadcastNestedLoop, a, b, params).weighted_total;
    if (cartesian <= broadcast_nl) return JoinMethod::CartesianProduct;
  }
  return JoinMethod::BroadcastNestedLoop;
}

}  // namespace detail

/// Cost-based method selection for an equi-join with sides normalized so |A| >= |B|.
///
/// Hints win outright. Otherwise broadcast hash is taken only when strictly
/// cheaper than shuffle hash, then shuffle hash, then shuffle sort, and the
/// nested-loop family last.
inline JoinMethod select_equi(const JoinOp& join, const DatasetStats& a, const DatasetStats& b,
                              const ClusterParams& params) {
  if (join.condition != ConditionKind::Equi) throw InvariantError("select_equi called on a non-equi join");
  const Feasibility f = feasibility(join, b, params);
  if (join.hint) {
    detail::check_hint(*join.hint, is_feasible(*join.hint, f));
    return *join.hint;
  }
  const double broadcast_hash = total_cost(JoinMethod::BroadcastHash, a, b, params).weighted_total;
  const double shuffle_hash = total_cost(JoinMethod::ShuffleHash, a, b, params).weighted_total;
  if (broadcast_hash < shuffle_hash && f.broadcast_hash) return JoinMethod::BroadcastHash;
  if (f.shuffle_hash) return JoinMethod::ShuffleHash;
  if (f.key_sortable) return JoinMethod::ShuffleSort;
  return detail::cheaper_nested_loop(a, b, params, f.inner_like);
}

inline JoinMethod select_non_equi(const JoinOp& join, const DatasetStats& a, const DatasetStats& b,
                                  const ClusterParams& params) {
  if (join.condition != ConditionKind::NonEqui) throw InvariantError("select_non_equi called on an equi-join");
  const Feasibility f = feasibility(join, b, params);
  if (join.hint) {
    detail::check_hint(*join.hint, is_feasible(*join.hint, f));
    return *join.hint;
  }
  return detail::cheaper_nested_loop(a, b, params, f.inner_like);
}

// Used when either side's statistics are missing or above the watermark.
inline JoinMethod select_without_stats(const JoinOp& join) {
  if (join.hint) {
    detail::check_hint(*join.hint, structurally_feasible(*join.hint, join));
    return *join.hint;
  }
  if (join.condition == ConditionKind::Equi && join.key_sortable) return JoinMethod::ShuffleSort;
  return JoinMethod::BroadcastNestedLoop;
}

// Orders the inputs of a join so the larger (by size) comes first.
struct NormalizedSides {
  std::optional<DatasetStats> larger;
  std::optional<DatasetStats> smaller;
  bool flipped = false;  // logical right input became the larger side
};

inline NormalizedSides normalize_sides(const std::optional<DatasetStats>& left,
                                       const std::optional<DatasetStats>& right) {
  if (left && right && right->size_bytes() > left->size_bytes()) return {right, left, true};
  return {left, right, false};
}

/// Method chosen for one join together with the inputs it was chosen from.
struct Selection {
  JoinMethod method = JoinMethod::ShuffleSort;
  NormalizedSides sides;
  bool stats_valid = false;
  std::optional<CostBreakdown> cost;                    // of the chosen method
  std::map<JoinMethod, CostBreakdown> feasible_costs;  // every feasible method
  std::optional<double> k;
  double k0 = 0.0;
};

/// Full selection pipeline for the relative-size strategy: validity gate, then
/// select_equi / select_non_equi on normalized sides.
inline Selection select_join(const JoinOp& join, const std::optional<DatasetStats>& left,
                             const std::optional<DatasetStats>& right, const ClusterParams& params) {
  Selection s;
  s.sides = normalize_sides(left, right);
  s.k0 = k0_threshold(params);
  s.stats_valid = is_valid(s.sides.larger, params.validity) && is_valid(s.sides.smaller, params.validity);
  if (!s.stats_valid) {
    s.method = select_without_stats(join);
    return s;
  }
  const DatasetStats& a = *s.sides.larger;
  const DatasetStats& b = *s.sides.smaller;
  s.k = relative_size(a, b);
  s.method = join.condition == ConditionKind::Equi ? select_equi(join, a, b, params)
                                                   : select_non_equi(join, a, b, params);
  const Feasibility f = feasibility(join, b, params);
  for (JoinMethod m : kAllMethods) {
    if (is_feasible(m, f)) s.feasible_costs.emplace(m, total_cost(m, a, b, params));
  }
  s.cost = total_cost(s.method, a, b, params);
  return s;
}

}  // namespace reljoin
