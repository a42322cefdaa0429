#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reljoin/plan.hpp"
#include "reljoin/selector.hpp"
#include "reljoin/simulator.hpp"
#include "reljoin/strategies.hpp"

namespace reljoin {

struct TaggedStats {
  std::optional<DatasetStats> stats;
  StatsOrigin origin = StatsOrigin::Estimate;
};

/// Static estimates for every logical node, indexed by node id. Nodes whose
/// inputs lack statistics get no estimate.
inline std::vector<std::optional<DatasetStats>> estimate_stats(const LogicalPlan& plan) {
  std::vector<std::optional<DatasetStats>> out(static_cast<std::size_t>(plan.node_count));
  for_each_node(plan.root, [&](const LogicalNode& n) {
    std::vector<std::optional<DatasetStats>> inputs;
    for (const auto& c : n.children) inputs.push_back(out.at(static_cast<std::size_t>(c.id)));
    bool have_all = true;
    for (const auto& in : inputs) have_all = have_all && in.has_value();
    if (const auto* scan = std::get_if<ScanOp>(&n.op)) {
      out[static_cast<std::size_t>(n.id)] = scan->stats;
    } else if (have_all) {
      out[static_cast<std::size_t>(n.id)] = propagate(n.op, inputs);
    }
  });
  return out;
}

enum class DecisionPhase { Static, Adaptive };

constexpr std::string_view to_string(DecisionPhase p) { return p == DecisionPhase::Static ? "static" : "adaptive"; }

struct DecisionRecord {
  int join_id = -1;
  DecisionPhase phase = DecisionPhase::Static;
  Selection selection;
  StatsOrigin origin = StatsOrigin::Estimate;
};

struct DecisionLog {
  std::vector<DecisionRecord> entries;

  const DecisionRecord* find(int join_id, DecisionPhase phase) const {
    for (const auto& e : entries) {
      if (e.join_id == join_id && e.phase == phase) return &e;
    }
    return nullptr;
  }

  // Joins whose adaptive method differs from the static one.
  int changed_decisions() const {
    int n = 0;
    for (const auto& e : entries) {
      if (e.phase != DecisionPhase::Adaptive) continue;
      const auto* s = find(e.join_id, DecisionPhase::Static);
      if (s && s->selection.method != e.selection.method) ++n;
    }
    return n;
  }

  // Methods by join id for one phase.
  std::map<int, JoinMethod> methods(DecisionPhase phase) const {
    std::map<int, JoinMethod> out;
    for (const auto& e : entries) {
      if (e.phase == phase) out[e.join_id] = e.selection.method;
    }
    return out;
  }
};

inline json to_json(const DecisionRecord& r) {
  auto side = [&](const std::optional<DatasetStats>& s) -> json {
    if (!s) return nullptr;
    json j = to_json(*s);
    j["origin"] = std::string(to_string(r.origin));
    return j;
  };
  json costs = json::object();
  for (const auto& [m, c] : r.selection.feasible_costs) costs[std::string(to_string(m))] = to_json(c);
  return json{{"join_id", r.join_id},
              {"phase", std::string(to_string(r.phase))},
              {"method", std::string(to_string(r.selection.method))},
              {"flipped", r.selection.sides.flipped},
              {"stats_valid", r.selection.stats_valid},
              {"stats", {{"left", side(r.selection.sides.larger)}, {"right", side(r.selection.sides.smaller)}}},
              {"costs", std::move(costs)},
              {"k", r.selection.k && std::isfinite(*r.selection.k) ? json(*r.selection.k) : json(nullptr)},
              {"k0", r.selection.k0}};
}

inline json to_json(const DecisionLog& log) {
  json out = json::array();
  for (const auto& e : log.entries) out.push_back(to_json(e));
  return out;
}

inline JoinAnnotation annotate(const Selection& s, StatsOrigin origin) {
  JoinAnnotation a;
  a.larger = s.sides.larger;
  a.smaller = s.sides.smaller;
  a.origin = origin;
  a.stats_valid = s.stats_valid;
  a.cost = s.cost;
  if (s.k && std::isfinite(*s.k)) a.k = s.k;
  a.k0 = s.k0;
  return a;
}

namespace detail {

struct Materialization {
  std::shared_ptr<const Dataset> data;
  DatasetStats stats;
  int producer_stage = -1;
};

using ChooseFn = std::function<std::pair<Selection, StatsOrigin>(const LogicalNode&)>;

// Lowers a logical subtree; completed nodes become materialized leaves.
inline PhysicalNode lower(const LogicalNode& node, const ChooseFn& choose, const ClusterParams& params,
                          const PlannerOptions& options, const std::map<int, Materialization>* done = nullptr) {
  if (done) {
    if (auto it = done->find(node.id); it != done->end()) {
      return PhysicalNode{node.id,
                          PhysMaterialized{it->second.data, it->second.stats, it->second.data->partitioning,
                                           it->second.producer_stage},
                          {}};
    }
  }
  if (const auto* scan = std::get_if<ScanOp>(&node.op)) return PhysicalNode{node.id, PhysScan{scan->name}, {}};
  if (const auto* f = std::get_if<FilterOp>(&node.op)) {
    PhysicalNode out{node.id, *f, {}};
    out.children.push_back(lower(node.children.at(0), choose, params, options, done));
    return out;
  }
  if (const auto* pr = std::get_if<ProjectOp>(&node.op)) {
    PhysicalNode out{node.id, *pr, {}};
    out.children.push_back(lower(node.children.at(0), choose, params, options, done));
    return out;
  }
  const JoinOp& join = node.join();
  PhysicalNode left = lower(node.children.at(0), choose, params, options, done);
  PhysicalNode right = lower(node.children.at(1), choose, params, options, done);
  auto [sel, origin] = choose(node);
  PhysJoin pj{join, sel.method, sel.sides.flipped, annotate(sel, origin)};
  if (sel.sides.flipped) std::swap(left, right);
  return make_join_node(node.id, std::move(pj), std::move(left), std::move(right), params.parallelism, options);
}

}  // namespace detail

/// One-shot planning from static estimates. Appends one static record per join to `log`.
inline PhysicalPlan optimize_static(const LogicalPlan& plan, const ClusterParams& params, const Strategy& strategy,
                                    const PlannerOptions& options = {}, DecisionLog* log = nullptr,
                                    int* selector_invocations = nullptr) {
  params.validate();
  const auto est = estimate_stats(plan);
  auto choose = [&](const LogicalNode& n) {
    const auto& l = est.at(static_cast<std::size_t>(n.children.at(0).id));
    const auto& r = est.at(static_cast<std::size_t>(n.children.at(1).id));
    Selection s = decide_join(strategy, n.join(), l, r, params);
    if (selector_invocations) ++*selector_invocations;
    if (log) log->entries.push_back({n.id, DecisionPhase::Static, s, StatsOrigin::Estimate});
    return std::make_pair(s, StatsOrigin::Estimate);
  };
  return PhysicalPlan{detail::lower(plan.root, choose, params, options)};
}

struct RunResult {
  Dataset output;
  WorkloadTrace trace;
  DecisionLog log;
  PhysicalPlan static_plan;
  PhysicalPlan final_plan;  // plan actually executed; equals static_plan for static runs
  int selector_invocations = 0;
  std::map<int, TaggedStats> node_stats;  // stats each join was decided with, by node id
};

/// Plans once from static estimates and executes that plan unchanged.
inline RunResult execute_static(const LogicalPlan& plan, const SourceMap& sources, const ClusterParams& params,
                                const Strategy& strategy, const PlannerOptions& options = {}, std::uint64_t seed = 0) {
  RunResult r;
  r.static_plan = optimize_static(plan, params, strategy, options, &r.log, &r.selector_invocations);
  r.final_plan = r.static_plan;
  Engine engine(params, sources, seed);
  r.output = engine.execute(r.final_plan, r.trace);
  const auto est = estimate_stats(plan);
  for (std::size_t i = 0; i < est.size(); ++i) r.node_stats[static_cast<int>(i)] = {est[i], StatsOrigin::Estimate};
  return r;
}

/// Staged execution with re-selection at every join.
///
/// Joins are visited in post-order. For each, the producer stages of both inputs
/// run first and their measured output replaces the static estimate; the join
/// is then re-selected with those statistics, executed, and its measured output
/// becomes the input of the joins above it. Completed stages are never revisited.
inline RunResult execute_adaptive(const LogicalPlan& plan, const SourceMap& sources, const ClusterParams& params,
                                  const Strategy& strategy, const PlannerOptions& options = {},
                                  std::uint64_t seed = 0) {
  RunResult r;
  r.static_plan = optimize_static(plan, params, strategy, options, &r.log, &r.selector_invocations);
  const auto est = estimate_stats(plan);
  for (std::size_t i = 0; i < est.size(); ++i) r.node_stats[static_cast<int>(i)] = {est[i], StatsOrigin::Estimate};

  Engine engine(params, sources, seed);
  std::map<int, detail::Materialization> done;
  std::map<int, Selection> adaptive;
  std::set<int> completed_joins;

  auto no_pending_joins = [](const LogicalNode&) -> std::pair<Selection, StatsOrigin> {
    throw ReoptimizationConflict("producer subtree still contains an unexecuted join");
  };

  for (const LogicalNode* join : joins_post_order(plan.root)) {
    if (completed_joins.count(join->id)) throw ReoptimizationConflict("join " + std::to_string(join->id) + " re-selected after completion");

    // Step 1: run the producer stages of both inputs and measure their outputs.
    std::array<DatasetStats, 2> measured;
    for (std::size_t side = 0; side < 2; ++side) {
      const LogicalNode& child = join->children[side];
      PhysicalNode sub = detail::lower(child, no_pending_joins, params, options, &done);
      int stage = -1;
      auto data = std::make_shared<const Dataset>(engine.run_stage(sub, r.trace, &stage));
      measured[side] = data->stats();
      done[child.id] = {data, measured[side], stage};
      r.node_stats[child.id] = {measured[side], StatsOrigin::Runtime};
    }

    // Steps 2-3: re-select with measured statistics.
    Selection sel = decide_join(strategy, join->join(), measured[0], measured[1], params);
    ++r.selector_invocations;
    r.log.entries.push_back({join->id, DecisionPhase::Adaptive, sel, StatsOrigin::Runtime});
    adaptive[join->id] = sel;

    // Step 4: execute the join over the materialized inputs and keep its output.
    auto reuse = [&](const LogicalNode&) -> std::pair<Selection, StatsOrigin> { return {sel, StatsOrigin::Runtime}; };
    LogicalNode shell{join->id, join->op, {}};
    for (const auto& c : join->children) shell.children.push_back(LogicalNode{c.id, c.op, {}});
    PhysicalNode join_node = detail::lower(shell, reuse, params, options, &done);
    auto out = std::make_shared<const Dataset>(engine.execute(PhysicalPlan{std::move(join_node)}, r.trace));
    done[join->id] = {out, out->stats(), -1};
    r.node_stats[join->id] = {out->stats(), StatsOrigin::Runtime};
    completed_joins.insert(join->id);
  }

  // Whatever sits above the last join runs as the final stage.
  if (auto it = done.find(plan.root.id); it != done.end()) {
    r.output = *it->second.data;
  } else {
    PhysicalNode top = detail::lower(plan.root, no_pending_joins, params, options, &done);
    r.output = engine.run_stage(top, r.trace);
  }

  // Record the plan that was executed, annotated with the statistics each join saw.
  auto replay = [&](const LogicalNode& n) -> std::pair<Selection, StatsOrigin> {
    return {adaptive.at(n.id), StatsOrigin::Runtime};
  };
  r.final_plan = PhysicalPlan{detail::lower(plan.root, replay, params, options)};
  return r;
}

/// Model-predicted weighted total of `methods` (by join id), evaluated with the
/// measured inputs each join saw in the adaptive run `r`. Joins whose measured
/// statistics are untrusted contribute nothing.
inline double model_weighted_total(const RunResult& r, const std::map<int, JoinMethod>& methods,
                                   const ClusterParams& params) {
  double total = 0.0;
  for (const auto& e : r.log.entries) {
    if (e.phase != DecisionPhase::Adaptive || !e.selection.stats_valid) continue;
    const auto it = methods.find(e.join_id);
    if (it == methods.end()) continue;
    total += total_cost(it->second, *e.selection.sides.larger, *e.selection.sides.smaller, params).weighted_total;
  }
  return total;
}

// Same, for the methods the adaptive run actually used.
inline double model_weighted_total(const RunResult& r, const ClusterParams& params) {
  return model_weighted_total(r, r.log.methods(DecisionPhase::Adaptive), params);
}

}  // namespace reljoin
