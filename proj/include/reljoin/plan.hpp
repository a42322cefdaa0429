#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "reljoin/cost_model.hpp"
#include "reljoin/errors.hpp"
#include "reljoin/stats.hpp"
#include "reljoin/types.hpp"

namespace reljoin {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Logical plans

struct LogicalNode {
  int id = -1;  // pre-order index, assigned by number_nodes()
  LogicalOperator op;
  std::vector<LogicalNode> children;

  bool is_join() const { return std::holds_alternative<JoinOp>(op); }
  const JoinOp& join() const { return std::get<JoinOp>(op); }
};

struct LogicalPlan {
  LogicalNode root;
  int node_count = 0;
};

inline int number_nodes(LogicalNode& node, int next = 0) {
  node.id = next++;
  for (auto& c : node.children) next = number_nodes(c, next);
  return next;
}

inline LogicalPlan make_plan(LogicalNode root) {
  LogicalPlan plan{std::move(root), 0};
  plan.node_count = number_nodes(plan.root);
  return plan;
}

inline void for_each_node(const LogicalNode& node, const std::function<void(const LogicalNode&)>& fn) {
  for (const auto& c : node.children) for_each_node(c, fn);
  fn(node);
}

// Joins in post-order: every join appears after the joins beneath it, left subtree first.
inline std::vector<const LogicalNode*> joins_post_order(const LogicalNode& root) {
  std::vector<const LogicalNode*> out;
  for_each_node(root, [&](const LogicalNode& n) {
    if (n.is_join()) out.push_back(&n);
  });
  return out;
}

inline int count_joins(const LogicalNode& root) { return static_cast<int>(joins_post_order(root).size()); }

// Checks arity and value ranges; throws InvariantError.
inline void validate(const LogicalNode& node) {
  if (node.children.size() != arity(node.op)) {
    throw InvariantError("node " + std::to_string(node.id) + ": expected " + std::to_string(arity(node.op)) +
                         " children, found " + std::to_string(node.children.size()));
  }
  auto unit_range = [&](double v, const char* what) {
    if (!(v > 0.0 && v <= 1.0)) {
      throw InvariantError(std::string(what) + " must be in (0, 1], got " + std::to_string(v));
    }
  };
  if (const auto* f = std::get_if<FilterOp>(&node.op)) {
    unit_range(f->selectivity, "selectivity");
    if (f->runtime_selectivity && !(*f->runtime_selectivity >= 0.0 && *f->runtime_selectivity <= 1.0)) {
      throw InvariantError("runtime_selectivity must be in [0, 1]");
    }
  } else if (const auto* p = std::get_if<ProjectOp>(&node.op)) {
    unit_range(p->width_fraction, "width_fraction");
  } else if (const auto* j = std::get_if<JoinOp>(&node.op)) {
    if (j->fanout && !(*j->fanout >= 0.0)) throw InvariantError("fanout must be non-negative");
    if (j->hint && needs_equi(*j->hint) && j->condition != ConditionKind::Equi) {
      throw InvariantError("hint " + std::string(to_string(*j->hint)) + " requires an equi-join condition");
    }
  } else if (const auto* s = std::get_if<ScanOp>(&node.op)) {
    if (s->name.empty()) throw InvariantError("scan name must not be empty");
  }
  for (const auto& c : node.children) validate(c);
}

// ---------------------------------------------------------------------------
// JSON schema helpers

inline json to_json(const DatasetStats& s) {
  return json{{"size_bytes", s.size_bytes()}, {"cardinality", s.cardinality()}};
}

inline json to_json(const CostBreakdown& c) {
  json phases = json::object();
  for (const auto& ph : c.phases) phases[std::string(ph.phase)] = ph.workload;
  return json{{"network", c.network_workload},
              {"compute", c.compute_workload},
              {"weighted_total", c.weighted_total},
              {"phases", phases}};
}

// Canonical text: sorted keys, two-space indent, trailing newline.
inline std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing field '" + key + "'");
  return *it;
}

inline double require_number(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) throw SchemaError(where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

inline std::uint64_t require_count(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw SchemaError(where + ": field '" + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw SchemaError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline void allow_only(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw SchemaError(where + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace detail

inline DatasetStats stats_from_json(const json& j, const std::string& where = "stats") {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  detail::allow_only(j, {"size_bytes", "cardinality"}, where);
  const auto size = detail::require_count(j, "size_bytes", where);
  const auto rows = detail::require_count(j, "cardinality", where);
  try {
    return DatasetStats(size, rows);
  } catch (const InvariantError& e) {
    throw InvariantError(where + ": " + e.what());
  }
}

inline LogicalNode logical_from_json(const json& j, const std::string& where = "$") {
  if (!j.is_object()) throw SchemaError(where + ": plan node must be an object");
  const std::string op = detail::require_string(j, "op", where);
  LogicalNode node;
  std::size_t expected_children = 0;
  if (op == "scan") {
    detail::allow_only(j, {"op", "name", "stats"}, where);
    ScanOp scan{detail::require_string(j, "name", where), std::nullopt};
    if (auto it = j.find("stats"); it != j.end() && !it->is_null()) scan.stats = stats_from_json(*it, where + ".stats");
    node.op = std::move(scan);
  } else if (op == "filter") {
    detail::allow_only(j, {"op", "selectivity", "runtime_selectivity", "children"}, where);
    FilterOp f{detail::require_number(j, "selectivity", where), std::nullopt};
    if (j.contains("runtime_selectivity")) f.runtime_selectivity = detail::require_number(j, "runtime_selectivity", where);
    node.op = f;
    expected_children = 1;
  } else if (op == "project") {
    detail::allow_only(j, {"op", "width_fraction", "children"}, where);
    node.op = ProjectOp{detail::require_number(j, "width_fraction", where)};
    expected_children = 1;
  } else if (op == "join") {
    detail::allow_only(j, {"op", "join_type", "condition", "predicate", "sortable", "hint", "fanout", "children"},
                       where);
    JoinOp join;
    if (j.contains("join_type")) {
      const auto s = detail::require_string(j, "join_type", where);
      auto t = parse_join_type(s);
      if (!t) throw SchemaError(where + ": unknown join_type '" + s + "'");
      join.join_type = *t;
    }
    if (j.contains("condition")) {
      const auto s = detail::require_string(j, "condition", where);
      if (s == "equi") {
        join.condition = ConditionKind::Equi;
      } else if (s == "non_equi") {
        join.condition = ConditionKind::NonEqui;
      } else {
        throw SchemaError(where + ": unknown condition '" + s + "'");
      }
    }
    if (j.contains("predicate")) {
      const auto s = detail::require_string(j, "predicate", where);
      auto p = parse_predicate(s);
      if (!p) throw SchemaError(where + ": unknown predicate '" + s + "'");
      if (join.condition == ConditionKind::Equi) throw SchemaError(where + ": predicate given for an equi-join");
      join.predicate = *p;
    }
    if (j.contains("sortable")) {
      if (!j["sortable"].is_boolean()) throw SchemaError(where + ": field 'sortable' must be a boolean");
      join.key_sortable = j["sortable"].get<bool>();
    }
    if (j.contains("hint") && !j["hint"].is_null()) {
      const auto s = detail::require_string(j, "hint", where);
      auto m = parse_join_method(s);
      if (!m) throw SchemaError(where + ": unknown hint '" + s + "'");
      join.hint = *m;
    }
    if (j.contains("fanout")) join.fanout = detail::require_number(j, "fanout", where);
    node.op = join;
    expected_children = 2;
  } else {
    throw SchemaError(where + ": unknown operator '" + op + "'");
  }
  if (expected_children > 0) {
    const json& kids = detail::require(j, "children", where);
    if (!kids.is_array()) throw SchemaError(where + ": 'children' must be an array");
    if (kids.size() != expected_children) {
      throw InvariantError(where + ": '" + op + "' takes " + std::to_string(expected_children) + " children, found " +
                           std::to_string(kids.size()));
    }
    for (std::size_t i = 0; i < kids.size(); ++i) {
      node.children.push_back(logical_from_json(kids[i], where + ".children[" + std::to_string(i) + "]"));
    }
  }
  return node;
}

/// Parses a logical plan document. Throws SchemaError or InvariantError.
inline LogicalPlan parse_plan(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  LogicalPlan plan = make_plan(logical_from_json(doc));
  validate(plan.root);
  return plan;
}

inline json to_json(const LogicalNode& node) {
  json j = std::visit(
      [](const auto& o) -> json {
        using T = std::decay_t<decltype(o)>;
        json out;
        if constexpr (std::is_same_v<T, ScanOp>) {
          out = {{"op", "scan"}, {"name", o.name}};
          if (o.stats) out["stats"] = to_json(*o.stats);
        } else if constexpr (std::is_same_v<T, FilterOp>) {
          out = {{"op", "filter"}, {"selectivity", o.selectivity}};
          if (o.runtime_selectivity) out["runtime_selectivity"] = *o.runtime_selectivity;
        } else if constexpr (std::is_same_v<T, ProjectOp>) {
          out = {{"op", "project"}, {"width_fraction", o.width_fraction}};
        } else {
          out = {{"op", "join"},
                 {"join_type", std::string(to_string(o.join_type))},
                 {"condition", std::string(to_string(o.condition))},
                 {"sortable", o.key_sortable}};
          if (o.condition == ConditionKind::NonEqui) out["predicate"] = std::string(to_string(o.predicate));
          if (o.hint) out["hint"] = std::string(to_string(*o.hint));
          if (o.fanout) out["fanout"] = *o.fanout;
        }
        return out;
      },
      node.op);
  if (!node.children.empty()) {
    json kids = json::array();
    for (const auto& c : node.children) kids.push_back(to_json(c));
    j["children"] = std::move(kids);
  }
  return j;
}

inline std::string serialize_plan(const LogicalPlan& plan) { return canonical_dump(to_json(plan.root)); }

inline bool structurally_equal(const LogicalNode& a, const LogicalNode& b) {
  if (!(a.op == b.op) || a.children.size() != b.children.size()) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!structurally_equal(a.children[i], b.children[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Physical plans

struct Dataset;  // simulator.hpp

enum class ExchangeKind { Broadcast, Shuffle };

constexpr std::string_view to_string(ExchangeKind k) { return k == ExchangeKind::Broadcast ? "broadcast" : "shuffle"; }

struct Partitioning {
  enum class Kind { Arbitrary, HashOnKey };
  Kind kind = Kind::Arbitrary;
  std::uint32_t partitions = 0;

  static Partitioning arbitrary() { return {}; }
  static Partitioning hashed(std::uint32_t p) { return {Kind::HashOnKey, p}; }
  bool is_hashed(std::uint32_t p) const { return kind == Kind::HashOnKey && partitions == p; }
  friend bool operator==(const Partitioning&, const Partitioning&) = default;
};

enum class StatsOrigin { Estimate, Runtime };

constexpr std::string_view to_string(StatsOrigin o) { return o == StatsOrigin::Estimate ? "estimate" : "runtime"; }

// Why a selection was made; attached to each physical join.
struct JoinAnnotation {
  std::optional<DatasetStats> larger;   // A, the probe / streamed side
  std::optional<DatasetStats> smaller;  // B, the build / broadcast side
  StatsOrigin origin = StatsOrigin::Estimate;
  bool stats_valid = false;
  std::optional<CostBreakdown> cost;  // of the chosen method, when stats are valid
  std::optional<double> k;
  double k0 = 0.0;
};

struct PhysScan {
  std::string name;
};

struct PhysExchange {
  ExchangeKind kind = ExchangeKind::Shuffle;
  std::uint32_t partitions = 1;
};

// children[0] is the larger input A, children[1] the smaller input B.
// `flipped` is set when the logical left input ended up as children[1].
struct PhysJoin {
  JoinOp logical;
  JoinMethod method = JoinMethod::ShuffleSort;
  bool flipped = false;
  std::optional<JoinAnnotation> annotation;
};

// An already-computed intermediate result, used by adaptive re-planning.
struct PhysMaterialized {
  std::shared_ptr<const Dataset> data;
  DatasetStats stats;
  Partitioning partitioning;
  int producer_stage = -1;  // stage that produced `data`, when it ran as an exchange producer
};

using PhysicalOperator = std::variant<PhysScan, FilterOp, ProjectOp, PhysExchange, PhysJoin, PhysMaterialized>;

struct PhysicalNode {
  int id = -1;  // logical node id; -1 for exchanges
  PhysicalOperator op;
  std::vector<PhysicalNode> children;

  bool is_exchange() const { return std::holds_alternative<PhysExchange>(op); }
  bool is_join() const { return std::holds_alternative<PhysJoin>(op); }
};

struct PhysicalPlan {
  PhysicalNode root;
};

/// Partitioning of a local join's output, given the partitioning of the larger input.
///
/// Shuffle-family joins emit rows in the partition their key hashes to. Broadcast
/// joins keep A's layout unless rows of the replicated side must be emitted once
/// globally (outer or semi/anti on that side) or the output key comes from B.
inline Partitioning join_output_partitioning(const PhysJoin& j, const Partitioning& larger, std::uint32_t p) {
  const bool equi = j.logical.condition == ConditionKind::Equi;
  switch (j.method) {
    case JoinMethod::ShuffleHash:
    case JoinMethod::ShuffleSort:
      return Partitioning::hashed(p);
    case JoinMethod::CartesianProduct:
      return equi ? Partitioning::hashed(p) : Partitioning::arbitrary();
    case JoinMethod::BroadcastHash:
    case JoinMethod::BroadcastNestedLoop: {
      const JoinType t = j.logical.join_type;
      const bool smaller_side_emitted_globally =
          j.flipped ? (preserves_left(t) || is_semi_or_anti(t)) : preserves_right(t);
      if (smaller_side_emitted_globally) return Partitioning::arbitrary();
      if (!equi && j.flipped) return Partitioning::arbitrary();
      return larger;
    }
  }
  return Partitioning::arbitrary();
}

inline Partitioning static_partitioning(const PhysicalNode& node, std::uint32_t p) {
  return std::visit(
      [&](const auto& o) -> Partitioning {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, PhysScan>) {
          return Partitioning::arbitrary();
        } else if constexpr (std::is_same_v<T, FilterOp> || std::is_same_v<T, ProjectOp>) {
          return static_partitioning(node.children.at(0), p);
        } else if constexpr (std::is_same_v<T, PhysExchange>) {
          return o.kind == ExchangeKind::Shuffle ? Partitioning::hashed(o.partitions) : Partitioning::arbitrary();
        } else if constexpr (std::is_same_v<T, PhysJoin>) {
          return join_output_partitioning(o, static_partitioning(node.children.at(0), p), p);
        } else {
          return o.partitioning;
        }
      },
      node.op);
}

struct PlannerOptions {
  bool exchange_reuse = true;  // skip a shuffle when the input is already hash-partitioned on the key
};

/// Wraps two physical inputs (already ordered A, B) into a local join with the exchanges its method needs.
inline PhysicalNode make_join_node(int id, PhysJoin join, PhysicalNode larger, PhysicalNode smaller, std::uint32_t p,
                                   const PlannerOptions& options = {}) {
  auto exchange = [&](PhysicalNode child, ExchangeKind kind) {
    PhysicalNode ex{-1, PhysExchange{kind, p}, {}};
    ex.children.push_back(std::move(child));
    return ex;
  };
  auto shuffled = [&](PhysicalNode child) {
    if (options.exchange_reuse && static_partitioning(child, p).is_hashed(p)) return child;
    return exchange(std::move(child), ExchangeKind::Shuffle);
  };
  PhysicalNode node{id, std::move(join), {}};
  if (uses_broadcast(std::get<PhysJoin>(node.op).method)) {
    node.children.push_back(std::move(larger));
    node.children.push_back(exchange(std::move(smaller), ExchangeKind::Broadcast));
  } else {
    node.children.push_back(shuffled(std::move(larger)));
    node.children.push_back(shuffled(std::move(smaller)));
  }
  return node;
}

inline json to_json(const JoinAnnotation& a) {
  json j{{"origin", std::string(to_string(a.origin))}, {"stats_valid", a.stats_valid}, {"k0", a.k0}};
  json stats = json::object();
  stats["left"] = a.larger ? to_json(*a.larger) : json(nullptr);
  stats["right"] = a.smaller ? to_json(*a.smaller) : json(nullptr);
  j["stats"] = std::move(stats);
  j["k"] = a.k ? json(*a.k) : json(nullptr);
  j["cost_breakdown"] = a.cost ? to_json(*a.cost) : json(nullptr);
  return j;
}

inline json to_json(const PhysicalNode& node) {
  json j = std::visit(
      [&](const auto& o) -> json {
        using T = std::decay_t<decltype(o)>;
        json out;
        if constexpr (std::is_same_v<T, PhysScan>) {
          out = {{"op", "scan"}, {"name", o.name}};
        } else if constexpr (std::is_same_v<T, FilterOp>) {
          out = {{"op", "filter"}, {"selectivity", o.selectivity}};
          if (o.runtime_selectivity) out["runtime_selectivity"] = *o.runtime_selectivity;
        } else if constexpr (std::is_same_v<T, ProjectOp>) {
          out = {{"op", "project"}, {"width_fraction", o.width_fraction}};
        } else if constexpr (std::is_same_v<T, PhysExchange>) {
          out = {{"op", "exchange"}, {"kind", std::string(to_string(o.kind))}, {"partitions", o.partitions}};
        } else if constexpr (std::is_same_v<T, PhysJoin>) {
          out = {{"op", "join"},
                 {"method", std::string(to_string(o.method))},
                 {"join_type", std::string(to_string(o.logical.join_type))},
                 {"condition", std::string(to_string(o.logical.condition))},
                 {"sortable", o.logical.key_sortable},
                 {"flipped", o.flipped}};
          if (o.logical.condition == ConditionKind::NonEqui) out["predicate"] = std::string(to_string(o.logical.predicate));
          if (o.logical.hint) out["hint"] = std::string(to_string(*o.logical.hint));
          if (o.annotation) out["annotation"] = to_json(*o.annotation);
        } else {
          out = {{"op", "materialized"}, {"stats", to_json(o.stats)}};
        }
        return out;
      },
      node.op);
  if (node.id >= 0) j["id"] = node.id;
  if (!node.children.empty()) {
    json kids = json::array();
    for (const auto& c : node.children) kids.push_back(to_json(c));
    j["children"] = std::move(kids);
  }
  return j;
}

inline std::string serialize_plan(const PhysicalPlan& plan) { return canonical_dump(to_json(plan.root)); }

inline void for_each_node(const PhysicalNode& node, const std::function<void(const PhysicalNode&)>& fn) {
  for (const auto& c : node.children) for_each_node(c, fn);
  fn(node);
}

// ---------------------------------------------------------------------------
// Stages

/// Partition of a physical plan into stages cut at exchange nodes.
///
/// Nodes are identified by their pre-order index in the plan. Stage ids are
/// assigned in completion order, so ascending id is a topological order.
struct StageGraph {
  struct Stage {
    int id = 0;
    int root = 0;              // pre-order index of the stage's top node
    std::vector<int> members;  // pre-order indices, exchanges belong to the consumer side
  };
  struct Edge {
    int producer = 0;
    int consumer = 0;
    int exchange = 0;  // pre-order index of the exchange node
  };
  std::vector<Stage> stages;
  std::vector<Edge> edges;
  std::vector<int> topological_order;

  int stage_of(int node_index) const {
    for (const auto& s : stages) {
      for (int m : s.members) {
        if (m == node_index) return s.id;
      }
    }
    return -1;
  }
};

inline StageGraph segment_stages(const PhysicalPlan& plan) {
  StageGraph g;
  int next_index = 0;
  struct Pending {
    int root;
    std::vector<int> members;
    std::vector<std::pair<int, int>> inbound;  // (producer stage, exchange index)
  };
  // Returns the stage id of the stage rooted at `node`.
  std::function<int(const PhysicalNode&)> build_stage;
  std::function<void(const PhysicalNode&, Pending&)> collect = [&](const PhysicalNode& node, Pending& stage) {
    const int index = next_index++;
    stage.members.push_back(index);
    for (const auto& child : node.children) {
      if (node.is_exchange()) {
        const int producer = build_stage(child);
        stage.inbound.emplace_back(producer, index);
      } else {
        collect(child, stage);
      }
    }
  };
  build_stage = [&](const PhysicalNode& top) {
    Pending stage{next_index, {}, {}};
    collect(top, stage);
    const int id = static_cast<int>(g.stages.size());
    g.stages.push_back({id, stage.root, std::move(stage.members)});
    for (auto [producer, ex] : stage.inbound) g.edges.push_back({producer, id, ex});
    return id;
  };
  build_stage(plan.root);
  for (const auto& s : g.stages) g.topological_order.push_back(s.id);
  return g;
}

}  // namespace reljoin
