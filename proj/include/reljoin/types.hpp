#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "reljoin/errors.hpp"

namespace reljoin {

enum class JoinMethod { BroadcastHash, ShuffleHash, ShuffleSort, BroadcastNestedLoop, CartesianProduct };

inline constexpr std::array<JoinMethod, 5> kAllMethods = {
    JoinMethod::BroadcastHash, JoinMethod::ShuffleHash, JoinMethod::ShuffleSort,
    JoinMethod::BroadcastNestedLoop, JoinMethod::CartesianProduct};

// Higher-rank methods are preferred whenever they are feasible.
constexpr int rank(JoinMethod m) {
  switch (m) {
    case JoinMethod::BroadcastHash:
    case JoinMethod::ShuffleHash:
      return 3;
    case JoinMethod::ShuffleSort:
      return 2;
    case JoinMethod::BroadcastNestedLoop:
    case JoinMethod::CartesianProduct:
      return 1;
  }
  return 0;
}

constexpr bool uses_broadcast(JoinMethod m) {
  return m == JoinMethod::BroadcastHash || m == JoinMethod::BroadcastNestedLoop;
}

constexpr bool needs_equi(JoinMethod m) {
  return m == JoinMethod::BroadcastHash || m == JoinMethod::ShuffleHash || m == JoinMethod::ShuffleSort;
}

constexpr std::string_view to_string(JoinMethod m) {
  switch (m) {
    case JoinMethod::BroadcastHash: return "broadcast_hash";
    case JoinMethod::ShuffleHash: return "shuffle_hash";
    case JoinMethod::ShuffleSort: return "shuffle_sort";
    case JoinMethod::BroadcastNestedLoop: return "broadcast_nested_loop";
    case JoinMethod::CartesianProduct: return "cartesian_product";
  }
  return "?";
}

inline std::optional<JoinMethod> parse_join_method(std::string_view s) {
  for (auto m : kAllMethods) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

enum class JoinType { Inner, LeftOuter, RightOuter, FullOuter, LeftSemi, LeftAnti };

inline constexpr std::array<JoinType, 6> kAllJoinTypes = {JoinType::Inner,    JoinType::LeftOuter,
                                                          JoinType::RightOuter, JoinType::FullOuter,
                                                          JoinType::LeftSemi, JoinType::LeftAnti};

constexpr std::string_view to_string(JoinType t) {
  switch (t) {
    case JoinType::Inner: return "inner";
    case JoinType::LeftOuter: return "left_outer";
    case JoinType::RightOuter: return "right_outer";
    case JoinType::FullOuter: return "full_outer";
    case JoinType::LeftSemi: return "left_semi";
    case JoinType::LeftAnti: return "left_anti";
  }
  return "?";
}

inline std::optional<JoinType> parse_join_type(std::string_view s) {
  for (auto t : kAllJoinTypes) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

// Only plain inner joins may run as a cross product of partitions.
constexpr bool inner_like(JoinType t) { return t == JoinType::Inner; }

constexpr bool preserves_left(JoinType t) {
  return t == JoinType::LeftOuter || t == JoinType::FullOuter;
}
constexpr bool preserves_right(JoinType t) {
  return t == JoinType::RightOuter || t == JoinType::FullOuter;
}
constexpr bool is_semi_or_anti(JoinType t) {
  return t == JoinType::LeftSemi || t == JoinType::LeftAnti;
}

enum class ConditionKind { Equi, NonEqui };

constexpr std::string_view to_string(ConditionKind c) {
  return c == ConditionKind::Equi ? "equi" : "non_equi";
}

// Key-inequality predicates available to non-equi joins, evaluated as pred(left.key, right.key).
enum class Predicate { Less, LessEqual, NotEqual };

constexpr std::string_view to_string(Predicate p) {
  switch (p) {
    case Predicate::Less: return "lt";
    case Predicate::LessEqual: return "le";
    case Predicate::NotEqual: return "ne";
  }
  return "?";
}

inline std::optional<Predicate> parse_predicate(std::string_view s) {
  if (s == "lt") return Predicate::Less;
  if (s == "le") return Predicate::LessEqual;
  if (s == "ne") return Predicate::NotEqual;
  return std::nullopt;
}

}  // namespace reljoin
