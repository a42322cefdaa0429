#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "reljoin/cost_model.hpp"
#include "reljoin/selector.hpp"
#include "reljoin/units.hpp"

namespace reljoin {

struct ShuffleSortForced {};
struct ShuffleHashForced {};
struct AbsoluteSize {
  std::uint64_t threshold_bytes = 10 * kMB;
};
struct RelJoin {
  double w = 1.0;
};

using Strategy = std::variant<ShuffleSortForced, ShuffleHashForced, AbsoluteSize, RelJoin>;

inline std::string to_string(const Strategy& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ShuffleSortForced>) {
          return "shuffle-sort";
        } else if constexpr (std::is_same_v<T, ShuffleHashForced>) {
          return "shuffle-hash";
        } else if constexpr (std::is_same_v<T, AbsoluteSize>) {
          return "absolute-size:" + std::to_string(v.threshold_bytes);
        } else {
          char buf[64];
          std::snprintf(buf, sizeof buf, "reljoin:%g", v.w);
          return buf;
        }
      },
      s);
}

/// "shuffle-sort", "shuffle-hash", "absolute-size[:bytes]", "reljoin[:w]".
inline Strategy parse_strategy(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const std::optional<std::string_view> arg =
      colon == std::string_view::npos ? std::nullopt : std::optional(text.substr(colon + 1));
  if (name == "shuffle-sort" && !arg) return ShuffleSortForced{};
  if (name == "shuffle-hash" && !arg) return ShuffleHashForced{};
  if (name == "absolute-size") return AbsoluteSize{arg ? parse_size(*arg) : 10 * kMB};
  if (name == "reljoin") {
    double w = 1.0;
    if (arg) {
      try {
        std::size_t used = 0;
        w = std::stod(std::string(*arg), &used);
        if (used != arg->size()) throw std::invalid_argument("trailing");
      } catch (const std::logic_error&) {
        throw InvariantError("invalid network weight in strategy '" + std::string(text) + "'");
      }
      if (!(w > 0.0)) throw InvariantError("network weight must be positive");
    }
    return RelJoin{w};
  }
  throw InvariantError("unknown strategy '" + std::string(text) + "'");
}

// RelJoin carries its own network weight; the other strategies use the cluster's.
inline ClusterParams effective_params(const Strategy& s, ClusterParams params) {
  if (const auto* r = std::get_if<RelJoin>(&s)) params.network_weight = r->w;
  return params;
}

namespace detail {

inline JoinMethod nested_loop_fallback(const DatasetStats& a, const DatasetStats& b, const ClusterParams& params,
                                       const JoinOp& join) {
  return cheaper_nested_loop(a, b, params, inner_like(join.join_type));
}

}  // namespace detail

/// Method chosen by `strategy` for a join whose sides are normalized (|A| >= |B|) and trusted.
inline JoinMethod decide(const Strategy& strategy, const JoinOp& join, const DatasetStats& a, const DatasetStats& b,
                         const ClusterParams& cluster) {
  const ClusterParams params = effective_params(strategy, cluster);
  if (std::holds_alternative<RelJoin>(strategy) || join.condition == ConditionKind::NonEqui) {
    return join.condition == ConditionKind::Equi ? select_equi(join, a, b, params)
                                                 : select_non_equi(join, a, b, params);
  }
  const Feasibility f = feasibility(join, b, params);
  if (join.hint) {
    detail::check_hint(*join.hint, is_feasible(*join.hint, f));
    return *join.hint;
  }
  if (std::holds_alternative<ShuffleSortForced>(strategy)) {
    if (f.key_sortable) return JoinMethod::ShuffleSort;
    return detail::nested_loop_fallback(a, b, params, join);
  }
  if (std::holds_alternative<ShuffleHashForced>(strategy)) {
    if (f.shuffle_hash) return JoinMethod::ShuffleHash;
    if (f.key_sortable) return JoinMethod::ShuffleSort;
    return detail::nested_loop_fallback(a, b, params, join);
  }
  const auto& absolute = std::get<AbsoluteSize>(strategy);
  if (b.size_bytes() <= absolute.threshold_bytes && f.broadcast_hash) return JoinMethod::BroadcastHash;
  if (f.shuffle_hash) return JoinMethod::ShuffleHash;
  if (f.key_sortable) return JoinMethod::ShuffleSort;
  return detail::nested_loop_fallback(a, b, params, join);
}

/// Strategy-level counterpart of select_join: validity gate, side normalization, and cost record.
inline Selection decide_join(const Strategy& strategy, const JoinOp& join, const std::optional<DatasetStats>& left,
                             const std::optional<DatasetStats>& right, const ClusterParams& cluster) {
  const ClusterParams params = effective_params(strategy, cluster);
  if (std::holds_alternative<RelJoin>(strategy)) return select_join(join, left, right, params);
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
  s.method = decide(strategy, join, a, b, params);
  const Feasibility f = feasibility(join, b, params);
  for (JoinMethod m : kAllMethods) {
    if (is_feasible(m, f)) s.feasible_costs.emplace(m, total_cost(m, a, b, params));
  }
  s.cost = total_cost(s.method, a, b, params);
  return s;
}

}  // namespace reljoin
