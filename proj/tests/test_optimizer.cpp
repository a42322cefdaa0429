#include <gtest/gtest.h>

#include <random>

#include "oracle.hpp"
#include "reljoin/reljoin.hpp"

using namespace reljoin;

namespace {

LogicalNode scan(const std::string& name, std::optional<DatasetStats> st) { return LogicalNode{-1, ScanOp{name, st}, {}}; }

LogicalNode filter(LogicalNode child, double estimate, std::optional<double> actual = std::nullopt) {
  LogicalNode n{-1, FilterOp{estimate, actual}, {}};
  n.children.push_back(std::move(child));
  return n;
}

LogicalNode join(LogicalNode l, LogicalNode r, JoinOp op = {}) {
  LogicalNode n{-1, op, {}};
  n.children.push_back(std::move(l));
  n.children.push_back(std::move(r));
  return n;
}

GeneratorSpec fact(std::uint64_t rows, std::uint64_t seed = 1) {
  return GeneratorSpec{rows, 92, SequentialKeys{}, RoundRobinPlacement{}, seed};
}
GeneratorSpec dim(std::uint64_t rows, std::uint64_t domain, std::uint64_t seed = 2) {
  return GeneratorSpec{rows, 92, UniformKeys{domain}, RoundRobinPlacement{}, seed};
}

DatasetStats declared(const GeneratorSpec& g) {
  return DatasetStats(g.cardinality * (kKeyBytes + g.row_payload_bytes), g.cardinality);
}

// Static estimate says k = 5; the filter actually keeps 1% of B, so k is about 500.
struct FilterScenario {
  GeneratorSpec a = fact(20000);
  GeneratorSpec b = dim(4000, 20000);
  LogicalPlan plan = make_plan(join(scan("a", declared(a)), filter(scan("b", declared(b)), 1.0, 0.01)));
  SourceMap sources() const { return generate_sources({{"a", a}, {"b", b}}, 20); }
};

}  // namespace

TEST(OptimizeStatic, LargeRatioBroadcasts) {
  const LogicalPlan p = make_plan(join(scan("a", DatasetStats(100000, 1000)), scan("b", DatasetStats(1000, 10))));
  DecisionLog log;
  const PhysicalPlan phys = optimize_static(p, ClusterParams{}, RelJoin{}, {}, &log);
  EXPECT_EQ(std::get<PhysJoin>(phys.root.op).method, JoinMethod::BroadcastHash);
  ASSERT_EQ(log.entries.size(), 1u);
  EXPECT_EQ(log.entries[0].phase, DecisionPhase::Static);
  EXPECT_DOUBLE_EQ(*log.entries[0].selection.k, 100.0);
}

TEST(OptimizeStatic, ForcedSortIgnoresStats) {
  const LogicalPlan p = make_plan(join(scan("a", DatasetStats(100000, 1000)), scan("b", DatasetStats(1000, 10))));
  EXPECT_EQ(std::get<PhysJoin>(optimize_static(p, ClusterParams{}, ShuffleSortForced{}).root.op).method,
            JoinMethod::ShuffleSort);
}

TEST(OptimizeStatic, AbsentStatsFallBackToSort) {
  const LogicalPlan p = make_plan(join(scan("a", std::nullopt), scan("b", DatasetStats(1000, 10))));
  const PhysicalPlan phys = optimize_static(p, ClusterParams{}, RelJoin{});
  const auto& j = std::get<PhysJoin>(phys.root.op);
  EXPECT_EQ(j.method, JoinMethod::ShuffleSort);
  EXPECT_FALSE(j.annotation->stats_valid);
}

TEST(OptimizeStatic, FlippedJoinPutsLargerSideFirst) {
  const LogicalPlan p = make_plan(join(scan("small", DatasetStats(1000, 10)), scan("big", DatasetStats(100000, 1000))));
  const PhysicalPlan phys = optimize_static(p, ClusterParams{}, RelJoin{});
  const auto& j = std::get<PhysJoin>(phys.root.op);
  EXPECT_TRUE(j.flipped);
  EXPECT_EQ(std::get<PhysScan>(phys.root.children[0].op).name, "big");
}

TEST(Adaptive, WrongEstimateIsCorrected) {
  const FilterScenario sc;
  const SourceMap src = sc.sources();
  const ClusterParams params;
  const RunResult st = execute_static(sc.plan, src, params, RelJoin{});
  const RunResult ad = execute_adaptive(sc.plan, src, params, RelJoin{});
  EXPECT_EQ(st.log.methods(DecisionPhase::Static).at(0), JoinMethod::ShuffleHash);
  EXPECT_EQ(ad.log.methods(DecisionPhase::Adaptive).at(0), JoinMethod::BroadcastHash);
  EXPECT_EQ(ad.log.changed_decisions(), 1);
  EXPECT_LT(ad.trace.total_network_bytes(), st.trace.total_network_bytes());
  EXPECT_EQ(oracle::sorted(ad.output.rows()), oracle::sorted(st.output.rows()));
}

TEST(Adaptive, AgreeingEstimatesChangeNothing) {
  GeneratorSpec a = fact(5000), b = dim(1000, 5000);
  const LogicalPlan p = make_plan(join(scan("a", declared(a)), scan("b", declared(b))));
  const RunResult r = execute_adaptive(p, generate_sources({{"a", a}, {"b", b}}, 20), ClusterParams{}, RelJoin{});
  EXPECT_EQ(r.log.changed_decisions(), 0);
  EXPECT_EQ(r.log.entries.size(), 2u);
}

TEST(Adaptive, ChainUsesMeasuredInputs) {
  GeneratorSpec a = fact(8000, 1), b = dim(2000, 8000, 2), c = fact(9000, 3);
  // the inner join's estimate assumes nothing is filtered; at runtime 5% of B survives
  const LogicalPlan p = make_plan(join(scan("c", declared(c)),
                                       join(scan("a", declared(a)), filter(scan("b", declared(b)), 1.0, 0.05))));
  const RunResult r = execute_adaptive(p, generate_sources({{"a", a}, {"b", b}, {"c", c}}, 20), ClusterParams{},
                                       RelJoin{});
  const auto* top = r.log.find(0, DecisionPhase::Adaptive);
  const auto* top_static = r.log.find(0, DecisionPhase::Static);
  ASSERT_TRUE(top && top_static);
  EXPECT_EQ(top->origin, StatsOrigin::Runtime);
  EXPECT_EQ(top_static->origin, StatsOrigin::Estimate);
  const int inner_id = p.root.children[1].id;
  const TaggedStats& inner = r.node_stats.at(inner_id);
  EXPECT_EQ(inner.origin, StatsOrigin::Runtime);
  // the inner join output is the smaller side of the top join
  EXPECT_EQ(top->selection.sides.smaller, inner.stats);
  EXPECT_NE(top->selection.sides.smaller, top_static->selection.sides.smaller);
  EXPECT_EQ(inner.stats->cardinality(), r.output.cardinality());
}

TEST(Adaptive, SelectorInvocationsAreTwoPerJoin) {
  std::mt19937_64 rng(5);
  for (int h = 1; h <= 5; ++h) {
    std::map<std::string, GeneratorSpec> specs;
    specs["t0"] = fact(2000 + rng() % 2000, rng());
    LogicalNode root = scan("t0", declared(specs["t0"]));
    for (int i = 1; i <= h; ++i) {
      const std::string name = "t" + std::to_string(i);
      specs[name] = dim(100 + rng() % 3000, 2000, rng());
      root = join(std::move(root), scan(name, declared(specs[name])));
    }
    const LogicalPlan p = make_plan(std::move(root));
    const RunResult r = execute_adaptive(p, generate_sources(specs, 20), ClusterParams{}, RelJoin{});
    EXPECT_EQ(r.selector_invocations, 2 * h);
    EXPECT_EQ(static_cast<int>(r.log.entries.size()), 2 * h);
  }
}

TEST(Adaptive, FinalPlanReproducesOutput) {
  const FilterScenario sc;
  const SourceMap src = sc.sources();
  const RunResult r = execute_adaptive(sc.plan, src, ClusterParams{}, RelJoin{});
  EXPECT_EQ(std::get<PhysJoin>(r.final_plan.root.op).method, JoinMethod::BroadcastHash);
  auto [out, trace] = execute(r.final_plan, src, ClusterParams{});
  EXPECT_EQ(oracle::sorted(out.rows()), oracle::sorted(r.output.rows()));
}

TEST(Adaptive, DecisionLogJson) {
  const FilterScenario sc;
  const RunResult r = execute_adaptive(sc.plan, sc.sources(), ClusterParams{}, RelJoin{});
  const json j = to_json(r.log);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["phase"], "static");
  EXPECT_EQ(j[1]["phase"], "adaptive");
  EXPECT_EQ(j[1]["method"], "broadcast_hash");
  EXPECT_EQ(j[1]["stats"]["right"]["origin"], "runtime");
  EXPECT_EQ(j[0]["stats"]["right"]["origin"], "estimate");
  EXPECT_EQ(j[1]["k0"], 39.0);
  EXPECT_TRUE(j[1]["costs"].contains("shuffle_hash"));
}

// Random chains under every strategy: identical output to the static run, and
// with trusted stats the adaptive methods never cost more than the static ones
// on the measured inputs.
TEST(Adaptive, SemanticPreservationAndModelDominance) {
  std::mt19937_64 rng(99);
  const std::vector<Strategy> strategies = {RelJoin{}, ShuffleSortForced{}, ShuffleHashForced{}, AbsoluteSize{20000}};
  for (int q = 0; q < 40; ++q) {
    std::map<std::string, GeneratorSpec> specs;
    const std::uint64_t domain = 500 + rng() % 3000;
    specs["t0"] = GeneratorSpec{400 + rng() % 3000, rng() % 100, UniformKeys{domain}, RoundRobinPlacement{}, rng()};
    LogicalNode root = scan("t0", declared(specs["t0"]));
    const int h = 1 + static_cast<int>(rng() % 3);
    for (int i = 1; i <= h; ++i) {
      const std::string name = "t" + std::to_string(i);
      specs[name] = GeneratorSpec{50 + rng() % 3000, rng() % 100, UniformKeys{domain}, RoundRobinPlacement{}, rng()};
      LogicalNode side = scan(name, declared(specs[name]));
      if (rng() % 2) side = filter(std::move(side), 1.0, (1 + rng() % 100) / 100.0);
      JoinOp j;
      j.join_type = rng() % 4 == 0 ? JoinType::LeftOuter : JoinType::Inner;
      root = rng() % 2 ? join(std::move(root), std::move(side), j) : join(std::move(side), std::move(root), j);
    }
    const LogicalPlan p = make_plan(std::move(root));
    const SourceMap src = generate_sources(specs, 20);
    const Strategy& s = strategies[static_cast<std::size_t>(q) % strategies.size()];
    const RunResult st = execute_static(p, src, ClusterParams{}, s);
    const RunResult ad = execute_adaptive(p, src, ClusterParams{}, s);
    ASSERT_EQ(oracle::sorted(st.output.rows()), oracle::sorted(ad.output.rows())) << "query " << q;
    if (std::holds_alternative<RelJoin>(s)) {
      const double adaptive_model = model_weighted_total(ad, ClusterParams{});
      const double static_model = model_weighted_total(ad, st.log.methods(DecisionPhase::Static), ClusterParams{});
      EXPECT_LE(adaptive_model, static_model * (1 + 1e-12)) << "query " << q;
    }
  }
}

TEST(Adaptive, DeterministicTraces) {
  const FilterScenario sc;
  const SourceMap src = sc.sources();
  const auto a = execute_adaptive(sc.plan, src, ClusterParams{}, RelJoin{}, {}, 7);
  const auto b = execute_adaptive(sc.plan, src, ClusterParams{}, RelJoin{}, {}, 7);
  EXPECT_EQ(canonical_dump(to_json(a.trace)), canonical_dump(to_json(b.trace)));
  EXPECT_EQ(canonical_dump(to_json(a.log)), canonical_dump(to_json(b.log)));
}

TEST(EstimateStats, PropagatesAndLeavesGapsForMissingStats) {
  const LogicalPlan p = make_plan(join(scan("a", DatasetStats(1000, 100)), filter(scan("b", std::nullopt), 0.5)));
  const auto est = estimate_stats(p);
  EXPECT_EQ(est[0], std::nullopt);
  EXPECT_EQ(est[1], DatasetStats(1000, 100));
  EXPECT_EQ(est[2], std::nullopt);
}
