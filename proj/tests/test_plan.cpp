#include <gtest/gtest.h>

#include <random>

#include "reljoin/reljoin.hpp"

using namespace reljoin;

namespace {

const char* kScan = R"({"op": "scan", "name": "t", "stats": {"size_bytes": 100, "cardinality": 10}})";

const char* kJoin = R"({
  "op": "join", "join_type": "inner", "condition": "equi",
  "children": [
    {"op": "scan", "name": "a", "stats": {"size_bytes": 4000, "cardinality": 40}},
    {"op": "scan", "name": "b", "stats": {"size_bytes": 100, "cardinality": 1}}
  ]
})";

LogicalNode scan(const std::string& name, std::uint64_t size, std::uint64_t rows) {
  return LogicalNode{-1, ScanOp{name, DatasetStats(size, rows)}, {}};
}

LogicalNode join(LogicalNode l, LogicalNode r, JoinOp op = {}) {
  LogicalNode n{-1, op, {}};
  n.children.push_back(std::move(l));
  n.children.push_back(std::move(r));
  return n;
}

PhysicalPlan lowered(const LogicalPlan& plan, JoinMethod m, std::uint32_t p = 4, PlannerOptions opt = {}) {
  auto choose = [&](const LogicalNode&) {
    Selection s;
    s.method = m;
    return std::make_pair(s, StatsOrigin::Estimate);
  };
  ClusterParams params;
  params.parallelism = p;
  return PhysicalPlan{detail::lower(plan.root, choose, params, opt)};
}

int count_exchanges(const PhysicalNode& n, ExchangeKind kind) {
  int c = 0;
  for_each_node(n, [&](const PhysicalNode& x) {
    if (const auto* e = std::get_if<PhysExchange>(&x.op); e && e->kind == kind) ++c;
  });
  return c;
}

// Random structurally valid logical tree.
LogicalNode random_tree(std::mt19937_64& rng, int depth) {
  const int pick = depth <= 0 ? 0 : static_cast<int>(rng() % 4);
  auto unit = [&] { return static_cast<double>(1 + rng() % 1000) / 1000.0; };
  if (pick == 0) {
    std::optional<DatasetStats> st;
    if (rng() % 4) {
      const std::uint64_t rows = rng() % 5000;
      st = DatasetStats(rows == 0 ? 0 : rows * (8 + rng() % 100), rows);
    }
    return LogicalNode{-1, ScanOp{"s" + std::to_string(rng() % 10), st}, {}};
  }
  if (pick == 1) {
    FilterOp f{unit(), std::nullopt};
    if (rng() % 2) f.runtime_selectivity = unit();
    LogicalNode n{-1, f, {}};
    n.children.push_back(random_tree(rng, depth - 1));
    return n;
  }
  if (pick == 2) {
    LogicalNode n{-1, ProjectOp{unit()}, {}};
    n.children.push_back(random_tree(rng, depth - 1));
    return n;
  }
  JoinOp j;
  j.join_type = kAllJoinTypes[rng() % kAllJoinTypes.size()];
  j.condition = rng() % 3 ? ConditionKind::Equi : ConditionKind::NonEqui;
  if (j.condition == ConditionKind::NonEqui) j.predicate = static_cast<Predicate>(rng() % 3);
  j.key_sortable = rng() % 4 != 0;
  if (rng() % 3 == 0) {
    const JoinMethod m = kAllMethods[rng() % kAllMethods.size()];
    if (!needs_equi(m) || j.condition == ConditionKind::Equi) j.hint = m;
  }
  if (rng() % 4 == 0) j.fanout = static_cast<double>(rng() % 300) / 100.0;
  return join(random_tree(rng, depth - 1), random_tree(rng, depth - 1), j);
}

}  // namespace

TEST(ParsePlan, ScanOnly) {
  const LogicalPlan p = parse_plan(kScan);
  EXPECT_EQ(p.node_count, 1);
  EXPECT_EQ(std::get<ScanOp>(p.root.op).stats, DatasetStats(100, 10));
}

TEST(ParsePlan, TwoScanJoin) {
  const LogicalPlan p = parse_plan(kJoin);
  EXPECT_EQ(p.node_count, 3);
  EXPECT_EQ(count_joins(p.root), 1);
  EXPECT_EQ(p.root.id, 0);
  EXPECT_EQ(p.root.children[0].id, 1);
  EXPECT_EQ(p.root.children[1].id, 2);
}

TEST(ParsePlan, RangeViolations) {
  EXPECT_THROW(parse_plan(R"({"op": "filter", "selectivity": 1.5, "children": [{"op": "scan", "name": "t"}]})"),
               InvariantError);
  EXPECT_THROW(parse_plan(R"({"op": "filter", "selectivity": 0, "children": [{"op": "scan", "name": "t"}]})"),
               InvariantError);
  EXPECT_THROW(parse_plan(R"({"op": "project", "width_fraction": 2, "children": [{"op": "scan", "name": "t"}]})"),
               InvariantError);
  EXPECT_THROW(parse_plan(R"({"op": "filter", "selectivity": 0.5, "runtime_selectivity": 1.5,
                              "children": [{"op": "scan", "name": "t"}]})"),
               InvariantError);
  EXPECT_THROW(parse_plan(R"({"op": "scan", "name": "t", "stats": {"size_bytes": 0, "cardinality": 3}})"),
               InvariantError);
}

TEST(ParsePlan, SchemaErrors) {
  EXPECT_THROW(parse_plan("{"), SchemaError);
  EXPECT_THROW(parse_plan(R"({"op": "sort"})"), SchemaError);
  EXPECT_THROW(parse_plan(R"({"op": "scan"})"), SchemaError);
  EXPECT_THROW(parse_plan(R"({"op": "scan", "name": "t", "colour": 1})"), SchemaError);
  EXPECT_THROW(parse_plan(R"({"op": "join", "join_type": "outer", "children": []})"), SchemaError);
  EXPECT_THROW(parse_plan(R"({"op": "join", "hint": "hash_loop", "children": []})"), SchemaError);
  EXPECT_THROW(parse_plan(R"({"op": "scan", "name": "t", "stats": {"size_bytes": -1, "cardinality": 3}})"),
               SchemaError);
}

TEST(ParsePlan, ArityViolations) {
  EXPECT_THROW(parse_plan(R"({"op": "join", "children": [{"op": "scan", "name": "t"}]})"), InvariantError);
}

TEST(ParsePlan, EquiOnlyHintOnNonEquiJoin) {
  EXPECT_THROW(parse_plan(R"({"op": "join", "condition": "non_equi", "predicate": "lt", "hint": "shuffle_hash",
                              "children": [{"op": "scan", "name": "a"}, {"op": "scan", "name": "b"}]})"),
               InvariantError);
}

TEST(Serialize, CanonicalAndByteStable) {
  const LogicalPlan p = parse_plan(kJoin);
  const std::string s1 = serialize_plan(p);
  const std::string s2 = serialize_plan(parse_plan(s1));
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(s1.back(), '\n');
  // keys are emitted sorted
  EXPECT_LT(s1.find("\"children\""), s1.find("\"condition\""));
  EXPECT_LT(s1.find("\"condition\""), s1.find("\"join_type\""));
}

TEST(Serialize, RoundTripProperty) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 500; ++i) {
    const LogicalPlan p = make_plan(random_tree(rng, 4));
    validate(p.root);
    const std::string text = serialize_plan(p);
    const LogicalPlan q = parse_plan(text);
    ASSERT_TRUE(structurally_equal(p.root, q.root)) << text;
    EXPECT_EQ(p.node_count, q.node_count);
    EXPECT_EQ(text, serialize_plan(q));
  }
}

TEST(Numbering, PreOrderAndPostOrderJoins) {
  LogicalPlan p = make_plan(join(join(scan("a", 10, 1), scan("b", 10, 1)), scan("c", 10, 1)));
  EXPECT_EQ(p.node_count, 5);
  const auto joins = joins_post_order(p.root);
  ASSERT_EQ(joins.size(), 2u);
  EXPECT_EQ(joins[0]->id, 1);
  EXPECT_EQ(joins[1]->id, 0);
}

TEST(Stages, NoExchangeIsOneStage) {
  const LogicalPlan p = parse_plan(kScan);
  const StageGraph g = segment_stages(lowered(p, JoinMethod::ShuffleHash));
  EXPECT_EQ(g.stages.size(), 1u);
  EXPECT_TRUE(g.edges.empty());
}

TEST(Stages, BroadcastHashIsTwoStages) {
  const PhysicalPlan phys = lowered(parse_plan(kJoin), JoinMethod::BroadcastHash);
  EXPECT_EQ(count_exchanges(phys.root, ExchangeKind::Broadcast), 1);
  EXPECT_EQ(count_exchanges(phys.root, ExchangeKind::Shuffle), 0);
  const StageGraph g = segment_stages(phys);
  EXPECT_EQ(g.stages.size(), 2u);
  EXPECT_EQ(g.edges.size(), 1u);
}

TEST(Stages, ShuffleSortIsThreeStages) {
  const PhysicalPlan phys = lowered(parse_plan(kJoin), JoinMethod::ShuffleSort);
  EXPECT_EQ(count_exchanges(phys.root, ExchangeKind::Shuffle), 2);
  const StageGraph g = segment_stages(phys);
  EXPECT_EQ(g.stages.size(), 3u);
  EXPECT_EQ(g.edges.size(), 2u);
}

TEST(Stages, ExchangeReuseOnChains) {
  // second join consumes an already hash-partitioned input
  const LogicalPlan p = make_plan(join(join(scan("a", 1000, 10), scan("b", 500, 5)), scan("c", 100, 1)));
  const PhysicalPlan reused = lowered(p, JoinMethod::ShuffleHash);
  EXPECT_EQ(count_exchanges(reused.root, ExchangeKind::Shuffle), 3);
  EXPECT_EQ(segment_stages(reused).stages.size(), 4u);

  PlannerOptions strict;
  strict.exchange_reuse = false;
  const PhysicalPlan full = lowered(p, JoinMethod::ShuffleHash, 4, strict);
  EXPECT_EQ(count_exchanges(full.root, ExchangeKind::Shuffle), 4);
  EXPECT_EQ(segment_stages(full).stages.size(), 5u);
}

TEST(Stages, TopologicalPartitionProperty) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    const LogicalPlan p = make_plan(random_tree(rng, 4));
    const JoinMethod m = kAllMethods[rng() % kAllMethods.size()];
    PlannerOptions opt;
    opt.exchange_reuse = rng() % 2;
    const PhysicalPlan phys = lowered(p, m, 4, opt);
    const StageGraph g = segment_stages(phys);

    // flatten in pre-order
    std::vector<const PhysicalNode*> flat;
    std::function<void(const PhysicalNode&)> walk = [&](const PhysicalNode& n) {
      flat.push_back(&n);
      for (const auto& c : n.children) walk(c);
    };
    walk(phys.root);
    int exchanges = 0;
    std::vector<int> owner(flat.size(), -1);
    for (const auto& s : g.stages) {
      for (int m2 : s.members) {
        ASSERT_EQ(owner[static_cast<std::size_t>(m2)], -1) << "node in two stages";
        owner[static_cast<std::size_t>(m2)] = s.id;
      }
    }
    for (std::size_t k = 0; k < flat.size(); ++k) {
      ASSERT_GE(owner[k], 0) << "node in no stage";
      if (flat[k]->is_exchange()) ++exchanges;
    }
    if (!opt.exchange_reuse) EXPECT_EQ(static_cast<int>(g.stages.size()), exchanges + 1);
    EXPECT_EQ(static_cast<int>(g.edges.size()), exchanges);
    for (const auto& e : g.edges) {
      EXPECT_TRUE(flat[static_cast<std::size_t>(e.exchange)]->is_exchange());
      EXPECT_EQ(owner[static_cast<std::size_t>(e.exchange)], e.consumer);
      EXPECT_LT(e.producer, e.consumer);  // ascending ids are a topological order
    }
  }
}

TEST(PhysicalJson, AnnotatedJoin) {
  ClusterParams params;
  const LogicalPlan p = parse_plan(kJoin);
  const PhysicalPlan phys = optimize_static(p, params, RelJoin{});
  const json j = to_json(phys.root);
  EXPECT_EQ(j["method"], "broadcast_hash");
  EXPECT_EQ(j["annotation"]["k0"], 39.0);
  EXPECT_EQ(j["annotation"]["k"], 40.0);
  EXPECT_EQ(j["annotation"]["cost_breakdown"]["weighted_total"], 4000.0 + 40 * 100.0);
  EXPECT_EQ(j["children"][1]["op"], "exchange");
  EXPECT_EQ(j["children"][1]["kind"], "broadcast");
  EXPECT_EQ(serialize_plan(phys), serialize_plan(optimize_static(p, params, RelJoin{})));
}
