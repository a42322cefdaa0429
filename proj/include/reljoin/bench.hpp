#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reljoin/generator.hpp"
#include "reljoin/optimizer.hpp"
#include "reljoin/plan.hpp"
#include "reljoin/strategies.hpp"

namespace reljoin {

inline constexpr const char* kProxyNote =
    "time proxy: weighted workload w*network_bytes + compute_units (wall clock is not modeled)";

struct QuerySpec {
  std::string name;
  LogicalPlan plan;
  std::map<std::string, GeneratorSpec> sources;
  std::uint64_t seed = 0;
};

struct QueryResult {
  std::string query;
  std::string strategy;
  std::optional<std::string> error;
  std::uint64_t total_network_bytes = 0;
  double total_compute_units = 0.0;
  double weighted_total = 0.0;        // measured: w * network + compute
  double model_weighted_total = 0.0;  // cost model over the measured join inputs
  std::vector<JoinMethod> decision_vector;  // adaptive choice per join, post-order
  int changed_decisions = 0;
  bool ok() const { return !error.has_value(); }
};

struct Aggregates {
  double mean = 0.0;
  double max = 0.0;
  double min = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

struct Pairwise {
  std::string baseline;
  int join_diff_count = 0;
  int total_joins = 0;
  double pct_join_diff = 0.0;
  double pct_cost_diff = 0.0;
  std::optional<double> psts;
};

struct StrategyReport {
  std::string strategy;
  std::vector<QueryResult> queries;
  Aggregates aggregates;
  std::optional<Pairwise> pairwise;
};

struct SuiteReport {
  ClusterParams params;
  std::string baseline;
  std::vector<StrategyReport> reports;
};

/// Undefined without disagreements.
inline std::optional<double> psts(double pct_cost_diff, double pct_join_diff) {
  if (!(pct_join_diff > 0.0)) return std::nullopt;
  return pct_cost_diff / pct_join_diff;
}

inline Aggregates aggregate(const std::vector<QueryResult>& results) {
  std::vector<double> v;
  for (const auto& q : results) {
    if (q.ok()) v.push_back(q.weighted_total);
  }
  Aggregates a;
  a.count = v.size();
  if (v.empty()) return a;
  // sorted so the sums do not depend on query order
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  a.mean = sum / static_cast<double>(v.size());
  a.min = v.front();
  a.max = v.back();
  double ss = 0.0;
  for (double x : v) ss += (x - a.mean) * (x - a.mean);
  a.stddev = std::sqrt(ss / static_cast<double>(v.size()));
  return a;
}

/// Compares per-query decisions and totals with the baseline. Only queries that
/// succeeded under both strategies count.
inline Pairwise compare(const StrategyReport& s, const StrategyReport& base) {
  Pairwise p;
  p.baseline = base.strategy;
  std::map<std::string, const QueryResult*> by_name;
  for (const auto& q : base.queries) by_name[q.query] = &q;
  double base_total = 0.0;
  double total = 0.0;
  for (const auto& q : s.queries) {
    const auto it = by_name.find(q.query);
    if (it == by_name.end() || !q.ok() || !it->second->ok()) continue;
    const QueryResult& b = *it->second;
    const std::size_t n = std::max(q.decision_vector.size(), b.decision_vector.size());
    for (std::size_t i = 0; i < n; ++i) {
      const bool same = i < q.decision_vector.size() && i < b.decision_vector.size() &&
                        q.decision_vector[i] == b.decision_vector[i];
      if (!same) ++p.join_diff_count;
    }
    p.total_joins += static_cast<int>(n);
    base_total += b.weighted_total;
    total += q.weighted_total;
  }
  if (p.total_joins > 0) p.pct_join_diff = 100.0 * p.join_diff_count / p.total_joins;
  if (base_total > 0.0) p.pct_cost_diff = 100.0 * (base_total - total) / base_total;
  p.psts = psts(p.pct_cost_diff, p.pct_join_diff);
  return p;
}

/// Source seeds are mixed with the query seed so one spec yields distinct data per query.
inline SourceMap materialize_sources(const QuerySpec& q, std::uint32_t partitions) {
  std::map<std::string, GeneratorSpec> specs = q.sources;
  for (auto& [name, spec] : specs) spec.seed = detail::mix64(spec.seed ^ q.seed);
  return generate_sources(specs, partitions);
}

inline QueryResult run_query(const QuerySpec& q, const SourceMap& sources, const Strategy& strategy,
                             const ClusterParams& params) {
  QueryResult r;
  r.query = q.name;
  r.strategy = to_string(strategy);
  try {
    RunResult run = execute_adaptive(q.plan, sources, params, strategy, {}, q.seed);
    r.total_network_bytes = run.trace.total_network_bytes();
    r.total_compute_units = run.trace.total_compute_units();
    r.weighted_total = run.trace.weighted_total(params.network_weight);
    r.model_weighted_total = model_weighted_total(run, params);
    for (const auto& [id, m] : run.log.methods(DecisionPhase::Adaptive)) r.decision_vector.push_back(m);
    r.changed_decisions = run.log.changed_decisions();
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

/// Runs every query under every strategy, adaptively. Per-query failures are recorded.
/// `baseline` names the strategy the others are compared against; empty picks the
/// first AbsoluteSize entry, if any.
inline SuiteReport run_suite(const std::vector<QuerySpec>& queries, const std::vector<Strategy>& strategies,
                             const ClusterParams& params, std::optional<std::size_t> baseline = std::nullopt) {
  params.validate();
  for (const auto& q : queries) validate(q.plan.root);
  SuiteReport out;
  out.params = params;
  for (const auto& s : strategies) out.reports.push_back(StrategyReport{to_string(s), {}, {}, {}});
  for (const auto& q : queries) {
    std::optional<SourceMap> sources;
    std::string gen_error;
    try {
      sources = materialize_sources(q, params.parallelism);
    } catch (const std::exception& e) {
      gen_error = e.what();
    }
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      if (sources) {
        out.reports[i].queries.push_back(run_query(q, *sources, strategies[i], params));
      } else {
        QueryResult r;
        r.query = q.name;
        r.strategy = out.reports[i].strategy;
        r.error = gen_error;
        out.reports[i].queries.push_back(std::move(r));
      }
    }
  }
  if (!baseline) {
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      if (std::holds_alternative<AbsoluteSize>(strategies[i])) {
        baseline = i;
        break;
      }
    }
  }
  for (auto& rep : out.reports) rep.aggregates = aggregate(rep.queries);
  if (baseline) {
    out.baseline = out.reports.at(*baseline).strategy;
    for (auto& rep : out.reports) rep.pairwise = compare(rep, out.reports[*baseline]);
  }
  return out;
}

inline json to_json(const QueryResult& q) {
  json decisions = json::array();
  for (JoinMethod m : q.decision_vector) decisions.push_back(std::string(to_string(m)));
  json j{{"query", q.query},
         {"strategy", q.strategy},
         {"total_network_bytes", q.total_network_bytes},
         {"total_compute_units", q.total_compute_units},
         {"weighted_total", q.weighted_total},
         {"model_weighted_total", q.model_weighted_total},
         {"decision_vector", std::move(decisions)},
         {"changed_decisions", q.changed_decisions}};
  j["error"] = q.error ? json(*q.error) : json(nullptr);
  return j;
}

inline json to_json(const StrategyReport& r) {
  json queries = json::array();
  for (const auto& q : r.queries) queries.push_back(to_json(q));
  json j{{"strategy", r.strategy},
         {"queries", std::move(queries)},
         {"aggregates",
          {{"mean", r.aggregates.mean},
           {"max", r.aggregates.max},
           {"min", r.aggregates.min},
           {"stddev", r.aggregates.stddev},
           {"count", r.aggregates.count}}}};
  if (r.pairwise) {
    const Pairwise& p = *r.pairwise;
    j["pairwise"] = {{"baseline", p.baseline},
                     {"join_diff_count", p.join_diff_count},
                     {"total_joins", p.total_joins},
                     {"pct_join_diff", p.pct_join_diff},
                     {"pct_cost_diff", p.pct_cost_diff},
                     {"psts", p.psts ? json(*p.psts) : json(nullptr)}};
  } else {
    j["pairwise"] = nullptr;
  }
  return j;
}

inline json to_json(const ClusterParams& p) {
  return json{{"parallelism", p.parallelism},
              {"nodes", p.nodes},
              {"network_weight", p.network_weight},
              {"memory_budget_bytes", p.memory_budget_bytes},
              {"watermark_bytes", p.validity.watermark_bytes}};
}

inline json to_json(const SuiteReport& s) {
  json reports = json::array();
  for (const auto& r : s.reports) reports.push_back(to_json(r));
  return json{{"note", kProxyNote},
              {"params", to_json(s.params)},
              {"baseline", s.baseline.empty() ? json(nullptr) : json(s.baseline)},
              {"reports", std::move(reports)}};
}

inline std::string format_table(const SuiteReport& s) {
  std::ostringstream os;
  os << "# " << kProxyNote << "\n";
  if (!s.baseline.empty()) os << "# baseline: " << s.baseline << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %5s %5s %14s %14s %14s %14s %9s %9s %9s %8s\n", "strategy", "ok",
                "fail", "mean", "min", "max", "stddev", "join_diff", "%join", "%cost", "psts");
  os << line;
  for (const auto& r : s.reports) {
    const std::size_t failed = r.queries.size() - r.aggregates.count;
    std::string diff = "-", pj = "-", pc = "-", ps = "-";
    if (r.pairwise) {
      diff = std::to_string(r.pairwise->join_diff_count) + "/" + std::to_string(r.pairwise->total_joins);
      char b[32];
      std::snprintf(b, sizeof b, "%.2f", r.pairwise->pct_join_diff);
      pj = b;
      std::snprintf(b, sizeof b, "%.2f", r.pairwise->pct_cost_diff);
      pc = b;
      if (r.pairwise->psts) {
        std::snprintf(b, sizeof b, "%.3f", *r.pairwise->psts);
        ps = b;
      }
    }
    std::snprintf(line, sizeof line, "%-24s %5zu %5zu %14.0f %14.0f %14.0f %14.0f %9s %9s %9s %8s\n",
                  r.strategy.c_str(), r.aggregates.count, failed, r.aggregates.mean, r.aggregates.min,
                  r.aggregates.max, r.aggregates.stddev, diff.c_str(), pj.c_str(), pc.c_str(), ps.c_str());
    os << line;
  }
  return os.str();
}

// ---- manifest -------------------------------------------------------------

struct Manifest {
  std::vector<QuerySpec> queries;
  std::vector<Strategy> strategies;
  std::optional<std::string> baseline;
  json params = json::object();  // raw overrides, applied by the caller
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// {"queries": [{"name", "plan": path|object, "sources": {name: generator}, "seed"}],
///  "strategies": [...], "baseline": "...", "params": {...}}. Plan paths resolve
/// against `base_dir`.
inline Manifest manifest_from_json(const json& j, const std::filesystem::path& base_dir = ".") {
  if (!j.is_object()) throw SchemaError("manifest must be an object");
  detail::allow_only(j, {"queries", "strategies", "baseline", "params"}, "manifest");
  Manifest m;
  const json& qs = detail::require(j, "queries", "manifest");
  if (!qs.is_array() || qs.empty()) throw SchemaError("manifest.queries must be a non-empty array");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const std::string where = "manifest.queries[" + std::to_string(i) + "]";
    const json& q = qs[i];
    if (!q.is_object()) throw SchemaError(where + " must be an object");
    detail::allow_only(q, {"name", "plan", "sources", "seed"}, where);
    QuerySpec spec;
    spec.name = q.contains("name") ? detail::require_string(q, "name", where) : "q" + std::to_string(i + 1);
    const json& plan = detail::require(q, "plan", where);
    if (plan.is_string()) {
      spec.plan = parse_plan(read_file(base_dir / plan.get<std::string>()));
    } else {
      LogicalNode root = logical_from_json(plan, where + ".plan");
      validate(root);
      spec.plan = make_plan(std::move(root));
    }
    const json& sources = detail::require(q, "sources", where);
    if (!sources.is_object()) throw SchemaError(where + ".sources must be an object");
    for (const auto& [name, g] : sources.items()) {
      spec.sources[name] = generator_spec_from_json(g, where + ".sources." + name);
    }
    if (q.contains("seed")) spec.seed = detail::require_count(q, "seed", where);
    m.queries.push_back(std::move(spec));
  }
  if (j.contains("strategies")) {
    const json& ss = j["strategies"];
    if (!ss.is_array()) throw SchemaError("manifest.strategies must be an array");
    for (const auto& s : ss) {
      if (!s.is_string()) throw SchemaError("manifest.strategies entries must be strings");
      try {
        m.strategies.push_back(parse_strategy(s.get<std::string>()));
      } catch (const InvariantError& e) {
        throw SchemaError(std::string("manifest.strategies: ") + e.what());
      }
    }
  }
  if (j.contains("baseline")) m.baseline = detail::require_string(j, "baseline", "manifest");
  if (j.contains("params")) {
    if (!j["params"].is_object()) throw SchemaError("manifest.params must be an object");
    m.params = j["params"];
  }
  return m;
}

inline json to_json(const QuerySpec& q) {
  json sources = json::object();
  for (const auto& [name, spec] : q.sources) sources[name] = to_json(spec);
  return json{{"name", q.name}, {"plan", to_json(q.plan.root)}, {"sources", std::move(sources)}, {"seed", q.seed}};
}

// ---- synthetic suite --------------------------------------------------------

namespace detail {

inline LogicalNode scan_node(const std::string& name, const GeneratorSpec& g) {
  const std::uint64_t bytes = g.cardinality * (kKeyBytes + g.row_payload_bytes);
  return LogicalNode{-1, ScanOp{name, DatasetStats(bytes, g.cardinality)}, {}};
}

inline LogicalNode join_node(LogicalNode left, LogicalNode right) {
  JoinOp j;
  j.join_type = JoinType::Inner;
  j.condition = ConditionKind::Equi;
  LogicalNode n{-1, j, {}};
  n.children.push_back(std::move(left));
  n.children.push_back(std::move(right));
  return n;
}

}  // namespace detail

/// Relative-size queries over foreign-key joins. Each query joins a fact table
/// (unique keys) with a dimension whose keys reference it, so the join yields one
/// row per dimension row; every third query adds a second join against a wider
/// table with unique keys. The size ratio is drawn log-uniformly over [1.5, 400]
/// so both sides of the relative threshold and of any fixed broadcast threshold
/// are represented. Every join input has at least 2p rows.
inline std::vector<QuerySpec> disagreement_suite(std::size_t count, std::uint64_t seed = 0x5eed,
                                                 std::uint32_t parallelism = 20) {
  std::mt19937_64 rng(seed);
  const std::uint64_t min_rows = 2ull * parallelism;
  auto uniform_int = [&](std::uint64_t lo, std::uint64_t hi) { return lo + detail::uniform_below(rng, hi - lo + 1); };
  std::vector<QuerySpec> out;
  for (std::size_t i = 0; i < count; ++i) {
    QuerySpec q;
    q.name = "q" + std::to_string(i + 1);
    q.seed = uniform_int(1, 1u << 30);
    const std::uint64_t fact_rows = uniform_int(2000, 20000);
    const double ratio = std::exp(std::log(1.5) + detail::unit_interval(rng) * (std::log(400.0) - std::log(1.5)));
    const auto dim_rows = std::max<std::uint64_t>(min_rows, static_cast<std::uint64_t>(fact_rows / ratio));

    GeneratorSpec fact{fact_rows, 92, SequentialKeys{}, RoundRobinPlacement{}, uniform_int(1, 1u << 30)};
    GeneratorSpec dim{dim_rows, 92, UniformKeys{fact_rows}, RoundRobinPlacement{}, uniform_int(1, 1u << 30)};
    q.sources["fact"] = fact;
    q.sources["dim"] = dim;
    LogicalNode root = detail::join_node(detail::scan_node("fact", fact), detail::scan_node("dim", dim));
    if (i % 3 == 2) {
      // joined rows are 200 bytes wide; the third table's keys cover the fact keys
      const std::uint64_t wide_rows = fact_rows + uniform_int(0, 2 * fact_rows);
      GeneratorSpec wide{wide_rows, 192, SequentialKeys{}, RoundRobinPlacement{}, uniform_int(1, 1u << 30)};
      q.sources["wide"] = wide;
      root = detail::join_node(detail::scan_node("wide", wide), std::move(root));
    }
    q.plan = make_plan(std::move(root));
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace reljoin
