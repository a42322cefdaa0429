#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "reljoin/reljoin.hpp"

using namespace reljoin;

namespace {

QueryResult result(const std::string& name, double total, std::vector<JoinMethod> decisions) {
  QueryResult q;
  q.query = name;
  q.weighted_total = total;
  q.decision_vector = std::move(decisions);
  return q;
}

StrategyReport report(const std::string& name, std::vector<QueryResult> qs) {
  StrategyReport r;
  r.strategy = name;
  r.queries = std::move(qs);
  for (auto& q : r.queries) q.strategy = name;
  r.aggregates = aggregate(r.queries);
  return r;
}

constexpr auto BH = JoinMethod::BroadcastHash;
constexpr auto SH = JoinMethod::ShuffleHash;
constexpr auto SS = JoinMethod::ShuffleSort;

}  // namespace

TEST(Psts, PublishedFixture) {
  const double pct_join = 100.0 * 66 / 629;
  const auto v = psts(20.8, pct_join);
  ASSERT_TRUE(v);
  EXPECT_NEAR(*v, 1.98, 0.01);
}

TEST(Psts, AbsentWithoutDisagreement) {
  EXPECT_FALSE(psts(5.0, 0.0));
  EXPECT_FALSE(psts(0.0, 0.0));
  EXPECT_TRUE(psts(-3.0, 1.0));
}

TEST(Compare, HandBuiltFixture) {
  const StrategyReport base = report("base", {result("q1", 100, {SH, SH}), result("q2", 200, {BH}),
                                              result("q3", 300, {SS})});
  const StrategyReport s = report("s", {result("q1", 80, {BH, SH}), result("q2", 200, {BH}),
                                        result("q3", 250, {BH})});
  const Pairwise p = compare(s, base);
  EXPECT_EQ(p.baseline, "base");
  EXPECT_EQ(p.join_diff_count, 2);
  EXPECT_EQ(p.total_joins, 4);
  EXPECT_DOUBLE_EQ(p.pct_join_diff, 50.0);
  // base 600, s 530
  EXPECT_NEAR(p.pct_cost_diff, 100.0 * 70 / 600, 1e-12);
  ASSERT_TRUE(p.psts);
  EXPECT_NEAR(*p.psts, (70.0 / 6.0) / 50.0, 1e-12);
}

TEST(Compare, FailedQueriesAreSkipped) {
  QueryResult bad = result("q2", 1, {BH});
  bad.error = "boom";
  const StrategyReport base = report("base", {result("q1", 100, {SH}), result("q2", 200, {SH})});
  const StrategyReport s = report("s", {result("q1", 50, {BH}), bad});
  const Pairwise p = compare(s, base);
  EXPECT_EQ(p.total_joins, 1);
  EXPECT_EQ(p.join_diff_count, 1);
  EXPECT_DOUBLE_EQ(p.pct_cost_diff, 50.0);
  EXPECT_EQ(s.aggregates.count, 1u);
}

TEST(Compare, AgainstItselfIsAbsent) {
  const StrategyReport base = report("base", {result("q1", 100, {SH, BH}), result("q2", 7, {SS})});
  const Pairwise p = compare(base, base);
  EXPECT_EQ(p.join_diff_count, 0);
  EXPECT_FALSE(p.psts);
  EXPECT_DOUBLE_EQ(p.pct_cost_diff, 0.0);
}

TEST(Aggregate, Values) {
  const auto a = aggregate({result("a", 1, {}), result("b", 3, {}), result("c", 5, {})});
  EXPECT_EQ(a.count, 3u);
  EXPECT_DOUBLE_EQ(a.mean, 3.0);
  EXPECT_DOUBLE_EQ(a.min, 1.0);
  EXPECT_DOUBLE_EQ(a.max, 5.0);
  EXPECT_NEAR(a.stddev, std::sqrt(8.0 / 3.0), 1e-12);
  EXPECT_EQ(aggregate({}).count, 0u);
}

TEST(Properties, AggregatesArePermutationInvariant) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<QueryResult> qs;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      qs.push_back(result("q" + std::to_string(i), std::ldexp(static_cast<double>(rng() % 1000000), -(int)(rng() % 20)), {}));
    }
    const Aggregates a = aggregate(qs);
    std::shuffle(qs.begin(), qs.end(), rng);
    const Aggregates b = aggregate(qs);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.stddev, b.stddev);
    EXPECT_EQ(a.min, b.min);
    EXPECT_EQ(a.max, b.max);
  }
}

TEST(Suite, IdenticalChoicesGiveAbsentPsts) {
  auto qs = disagreement_suite(1);
  const auto rep = run_suite(qs, {ShuffleSortForced{}, ShuffleSortForced{}}, ClusterParams{}, 0);
  ASSERT_TRUE(rep.reports[1].pairwise);
  EXPECT_FALSE(rep.reports[1].pairwise->psts);
  EXPECT_EQ(rep.reports[1].pairwise->join_diff_count, 0);
}

TEST(Suite, DefaultBaselineIsAbsoluteSize) {
  auto qs = disagreement_suite(2);
  const auto rep = run_suite(qs, {RelJoin{}, AbsoluteSize{}}, ClusterParams{});
  EXPECT_EQ(rep.baseline, "absolute-size:10000000");
  const auto none = run_suite(qs, {RelJoin{}}, ClusterParams{});
  EXPECT_TRUE(none.baseline.empty());
  EXPECT_FALSE(none.reports[0].pairwise);
}

TEST(Suite, RelJoinPstsIsNonNegativeOnRelativeSizeQueries) {
  const auto qs = disagreement_suite(12);
  const auto rep = run_suite(qs, {AbsoluteSize{}, RelJoin{}}, ClusterParams{});
  for (const auto& r : rep.reports) {
    for (const auto& q : r.queries) EXPECT_TRUE(q.ok()) << q.query << ": " << q.error.value_or("");
  }
  const auto& p = rep.reports[1].pairwise;
  ASSERT_TRUE(p);
  ASSERT_GT(p->join_diff_count, 0);
  ASSERT_TRUE(p->psts);
  EXPECT_GE(*p->psts, 0.0);
}

TEST(Suite, Deterministic) {
  const auto qs = disagreement_suite(4, 77);
  const auto a = to_json(run_suite(qs, {AbsoluteSize{}, RelJoin{}, ShuffleHashForced{}}, ClusterParams{}));
  const auto b = to_json(run_suite(disagreement_suite(4, 77), {AbsoluteSize{}, RelJoin{}, ShuffleHashForced{}},
                                   ClusterParams{}));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a["note"], kProxyNote);
}

TEST(Suite, PerQueryFailuresAreRecorded) {
  auto qs = disagreement_suite(2);
  // a source the plan references but the suite never generates
  qs[0].sources.erase("dim");
  const auto rep = run_suite(qs, {AbsoluteSize{}, RelJoin{}}, ClusterParams{});
  for (const auto& r : rep.reports) {
    ASSERT_EQ(r.queries.size(), 2u);
    EXPECT_FALSE(r.queries[0].ok());
    EXPECT_TRUE(r.queries[1].ok());
    EXPECT_EQ(r.aggregates.count, 1u);
  }
  const std::string table = format_table(rep);
  EXPECT_NE(table.find(kProxyNote), std::string::npos);
}

TEST(Suite, SuiteShape) {
  const auto qs = disagreement_suite(20);
  ASSERT_EQ(qs.size(), 20u);
  int two_join = 0;
  for (const auto& q : qs) {
    const int joins = static_cast<int>(joins_post_order(q.plan.root).size());
    EXPECT_TRUE(joins == 1 || joins == 2);
    two_join += joins == 2;
    for (const auto& [name, g] : q.sources) EXPECT_GE(g.cardinality, 40u) << name;
  }
  EXPECT_EQ(two_join, 6);
}

TEST(Manifest, ParsesInlineAndFilePlans) {
  const auto dir = std::filesystem::temp_directory_path() / "reljoin_manifest_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "p.json") << R"({"op": "join", "children": [
      {"op": "scan", "name": "a", "stats": {"size_bytes": 4000, "cardinality": 40}},
      {"op": "scan", "name": "b", "stats": {"size_bytes": 400, "cardinality": 40}}]})";
  }
  const json j = json::parse(R"({
    "queries": [
      {"name": "file", "plan": "p.json", "seed": 3,
       "sources": {"a": {"cardinality": 40, "row_payload_bytes": 92},
                   "b": {"cardinality": 40, "keys": {"distribution": "uniform", "domain": 40}}}},
      {"plan": {"op": "scan", "name": "a"}, "sources": {"a": {"cardinality": 5}}}
    ],
    "strategies": ["shuffle-sort", "reljoin:2"],
    "baseline": "shuffle-sort",
    "params": {"parallelism": 4}
  })");
  const Manifest m = manifest_from_json(j, dir);
  ASSERT_EQ(m.queries.size(), 2u);
  EXPECT_EQ(m.queries[0].name, "file");
  EXPECT_EQ(m.queries[0].seed, 3u);
  EXPECT_EQ(m.queries[1].name, "q2");
  EXPECT_EQ(m.strategies.size(), 2u);
  EXPECT_EQ(to_string(m.strategies[1]), "reljoin:2");
  EXPECT_EQ(m.baseline, "shuffle-sort");
  EXPECT_EQ(m.params["parallelism"], 4);
  const auto rep = run_suite(m.queries, m.strategies, ClusterParams{}, 0);
  for (const auto& r : rep.reports) {
    for (const auto& q : r.queries) EXPECT_TRUE(q.ok()) << q.error.value_or("");
  }
  std::filesystem::remove_all(dir);
}

TEST(Manifest, Errors) {
  EXPECT_THROW(manifest_from_json(json::array()), SchemaError);
  EXPECT_THROW(manifest_from_json(json::parse(R"({"queries": []})")), SchemaError);
  EXPECT_THROW(manifest_from_json(json::parse(R"({"queries": [{"plan": "nope.json", "sources": {}}]})")),
               SchemaError);
  EXPECT_THROW(manifest_from_json(json::parse(
                   R"({"queries": [{"plan": {"op": "scan", "name": "a"}, "sources": {}}], "strategies": ["x"]})")),
               SchemaError);
  EXPECT_THROW(manifest_from_json(json::parse(
                   R"({"queries": [{"plan": {"op": "scan", "name": "a"}, "sources": {}}], "extra": 1})")),
               SchemaError);
}

TEST(Manifest, QuerySpecRoundTrip) {
  for (const auto& q : disagreement_suite(3)) {
    const json j = json{{"queries", json::array({to_json(q)})}};
    const Manifest m = manifest_from_json(j);
    EXPECT_EQ(to_json(m.queries[0]).dump(), to_json(q).dump());
  }
}
