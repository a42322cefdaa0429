// reljoin command line: gen / optimize / explain / run / bench.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reljoin/reljoin.hpp"

namespace {

using namespace reljoin;

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kExecution = 3 };

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by every subcommand; unset flags leave the config untouched.
struct CommonFlags {
  std::string strategy;
  double w = 0.0;
  std::uint32_t parallelism = 0;
  std::string memory_budget;
  std::string watermark;
  std::uint64_t seed = 0;
  std::string out;
  bool json_output = false;
  std::vector<CLI::Option*> opts;  // strategy, w, parallelism, memory, watermark, seed, out

  void attach(CLI::App* app) {
    opts.push_back(app->add_option("--strategy", strategy, "shuffle-sort | shuffle-hash | absolute-size[:size] | reljoin[:w]"));
    opts.push_back(app->add_option("--w", w, "network weight"));
    opts.push_back(app->add_option("--parallelism,-p", parallelism, "join tasks / shuffle partitions"));
    opts.push_back(app->add_option("--memory-budget", memory_budget, "per-task hash map budget, e.g. 512MB"));
    opts.push_back(app->add_option("--watermark", watermark, "largest trusted statistics size, e.g. 1GB"));
    opts.push_back(app->add_option("--seed", seed, "simulation seed"));
    opts.push_back(app->add_option("--out,-o", out, "write output here instead of standard output"));
    app->add_flag("--json", json_output, "machine-readable output");
  }

  bool set(std::size_t i) const { return opts.at(i)->count() > 0; }

  void apply(Config& cfg) const {
    if (set(0)) cfg.strategy = strategy;
    if (set(1)) cfg.params.network_weight = w;
    if (set(2)) cfg.params.parallelism = parallelism;
    try {
      if (set(3)) cfg.params.memory_budget_bytes = parse_size(memory_budget);
      if (set(4)) cfg.params.validity.watermark_bytes = parse_size(watermark);
    } catch (const InvariantError& e) {
      throw ValidationError(e.what());
    }
    if (set(5)) cfg.seed = seed;
    if (set(6)) cfg.out = out;
  }
};

void emit(const Config& cfg, const std::string& text) {
  if (cfg.out) {
    std::ofstream f(*cfg.out, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + *cfg.out);
    f << text;
    return;
  }
  std::cout << text;
}

json read_json(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

LogicalPlan read_plan(const std::string& path) { return parse_plan(read_file(path)); }

Strategy strategy_of(const Config& cfg) {
  try {
    return parse_strategy(cfg.strategy);
  } catch (const InvariantError& e) {
    throw ValidationError(e.what());
  }
}

// name -> generator spec
std::map<std::string, GeneratorSpec> read_sources(const std::string& path) {
  const json j = read_json(path);
  if (!j.is_object()) throw SchemaError(path + ": expected an object of generator specs");
  std::map<std::string, GeneratorSpec> out;
  for (const auto& [name, g] : j.items()) out[name] = generator_spec_from_json(g, name);
  return out;
}

// ---- gen --------------------------------------------------------------------

int cmd_gen(const Config& cfg, const std::string& sources_path, bool with_rows, bool seed_set) {
  auto specs = read_sources(sources_path);
  if (seed_set) {
    for (auto& [name, s] : specs) s.seed = detail::mix64(s.seed ^ cfg.seed);
  }
  json out = json::object();
  for (const auto& [name, spec] : specs) {
    const Dataset d = generate(spec, cfg.params.parallelism);
    json parts = json::array();
    for (std::size_t i = 0; i < d.partitions.size(); ++i) {
      json pj{{"partition", i}, {"rows", d.partitions[i].size()}, {"bytes", detail::bytes_of(d.partitions[i])}};
      if (with_rows) {
        json rows = json::array();
        for (const Row& r : d.partitions[i]) rows.push_back({r.key, r.bytes});
        pj["data"] = std::move(rows);
      }
      parts.push_back(std::move(pj));
    }
    out[name] = {{"spec", to_json(spec)}, {"stats", to_json(d.stats())}, {"partitions", std::move(parts)}};
  }
  emit(cfg, canonical_dump(out));
  return kOk;
}

// ---- optimize -----------------------------------------------------------------

int cmd_optimize(const Config& cfg, const std::string& plan_path, bool no_reuse) {
  const LogicalPlan plan = read_plan(plan_path);
  const Strategy strategy = strategy_of(cfg);
  cfg.params.validate();
  DecisionLog log;
  PlannerOptions options;
  options.exchange_reuse = !no_reuse;
  const PhysicalPlan phys = optimize_static(plan, cfg.params, strategy, options, &log);
  const StageGraph stages = segment_stages(phys);
  json js = json::array();
  for (const auto& s : stages.stages) js.push_back({{"stage_id", s.id}, {"root", s.root}, {"members", s.members}});
  json out{{"strategy", to_string(strategy)},
           {"plan", to_json(phys.root)},
           {"decisions", to_json(log)},
           {"stages", std::move(js)}};
  emit(cfg, canonical_dump(out));
  return kOk;
}

// ---- explain ------------------------------------------------------------------

std::string cost_table(const JoinOp& join, const DatasetStats& left, const DatasetStats& right,
                       const ClusterParams& params, const Strategy& strategy) {
  const Selection sel = decide_join(strategy, join, left, right, params);
  const ClusterParams eff = effective_params(strategy, params);
  std::string s;
  char line[256];
  const DatasetStats& a = *sel.sides.larger;
  const DatasetStats& b = *sel.sides.smaller;
  std::snprintf(line, sizeof line, "|A| = %s (%llu rows)  |B| = %s (%llu rows)%s\n", format_size(a.size_bytes()).c_str(),
                static_cast<unsigned long long>(a.cardinality()), format_size(b.size_bytes()).c_str(),
                static_cast<unsigned long long>(b.cardinality()), sel.sides.flipped ? "  [sides swapped]" : "");
  s += line;
  std::snprintf(line, sizeof line, "p = %u  w = %g  k = %s  k0 = %.4g  stats %s\n", eff.parallelism, eff.network_weight,
                sel.k ? (std::isfinite(*sel.k) ? std::to_string(*sel.k).c_str() : "inf") : "-", sel.k0,
                sel.stats_valid ? "trusted" : "untrusted (fallback)");
  s += line;
  std::snprintf(line, sizeof line, "%-22s %16s %16s %16s %5s %s\n", "method", "network", "compute", "weighted_total",
                "rank", "chosen");
  s += line;
  for (JoinMethod m : kAllMethods) {
    const auto it = sel.feasible_costs.find(m);
    if (it == sel.feasible_costs.end()) {
      std::snprintf(line, sizeof line, "%-22s %16s %16s %16s %5d %s\n", std::string(to_string(m)).c_str(), "-", "-",
                    "-", rank(m), m == sel.method ? "*" : "infeasible");
    } else {
      const CostBreakdown& c = it->second;
      std::snprintf(line, sizeof line, "%-22s %16.0f %16.0f %16.0f %5d %s\n", std::string(to_string(m)).c_str(),
                    c.network_workload, c.compute_workload, c.weighted_total, rank(m), m == sel.method ? "*" : "");
    }
    s += line;
  }
  if (sel.cost) {
    std::snprintf(line, sizeof line, "chosen: %s, weighted total %s\n", std::string(to_string(sel.method)).c_str(),
                  format_size(sel.cost->weighted_total).c_str());
  } else {
    std::snprintf(line, sizeof line, "chosen: %s\n", std::string(to_string(sel.method)).c_str());
  }
  s += line;
  return s;
}

json selection_json(const Selection& sel, int join_id) {
  DecisionRecord r{join_id, DecisionPhase::Static, sel, StatsOrigin::Estimate};
  return to_json(r);
}

struct ExplainArgs {
  std::string plan_path;
  std::string left_size, right_size;
  std::uint64_t left_rows = 0, right_rows = 0;
  std::string join_type = "inner";
  bool non_equi = false;
  std::string hint;
  CLI::Option* left_rows_opt = nullptr;
  CLI::Option* right_rows_opt = nullptr;
  CLI::Option* hint_opt = nullptr;
};

int cmd_explain(const Config& cfg, const ExplainArgs& ex, bool json_output) {
  const Strategy strategy = strategy_of(cfg);
  cfg.params.validate();
  if (!ex.plan_path.empty()) {
    const LogicalPlan plan = read_plan(ex.plan_path);
    const auto est = estimate_stats(plan);
    json all = json::array();
    std::string text;
    for (const LogicalNode* n : joins_post_order(plan.root)) {
      const auto& l = est.at(static_cast<std::size_t>(n->children[0].id));
      const auto& r = est.at(static_cast<std::size_t>(n->children[1].id));
      const Selection sel = decide_join(strategy, n->join(), l, r, cfg.params);
      all.push_back(selection_json(sel, n->id));
      text += "join " + std::to_string(n->id) + " (" + std::string(to_string(n->join().join_type)) + ")\n";
      if (sel.stats_valid) {
        text += cost_table(n->join(), *l, *r, cfg.params, strategy);
      } else {
        text += "statistics missing or above the watermark; chosen: " + std::string(to_string(sel.method)) + "\n";
      }
      text += "\n";
    }
    emit(cfg, json_output ? canonical_dump(all) : text);
    return kOk;
  }
  if (ex.left_size.empty() || ex.right_size.empty()) {
    throw CLI::ValidationError("explain", "give a plan file or both --left-size and --right-size");
  }
  std::uint64_t ls = 0, rs = 0;
  try {
    ls = parse_size(ex.left_size);
    rs = parse_size(ex.right_size);
  } catch (const InvariantError& e) {
    throw ValidationError(e.what());
  }
  // rows default to one per hundred bytes
  const std::uint64_t lr = ex.left_rows_opt->count() ? ex.left_rows : std::max<std::uint64_t>(ls / 100, ls ? 1 : 0);
  const std::uint64_t rr = ex.right_rows_opt->count() ? ex.right_rows : std::max<std::uint64_t>(rs / 100, rs ? 1 : 0);
  JoinOp join;
  const auto jt = parse_join_type(ex.join_type);
  if (!jt) throw ValidationError("unknown join type '" + ex.join_type + "'");
  join.join_type = *jt;
  join.condition = ex.non_equi ? ConditionKind::NonEqui : ConditionKind::Equi;
  if (ex.hint_opt->count()) {
    const auto h = parse_join_method(ex.hint);
    if (!h) throw ValidationError("unknown join method '" + ex.hint + "'");
    join.hint = *h;
  }
  const DatasetStats left(ls, lr);
  const DatasetStats right(rs, rr);
  if (json_output) {
    emit(cfg, canonical_dump(selection_json(decide_join(strategy, join, left, right, cfg.params), 0)));
  } else {
    emit(cfg, cost_table(join, left, right, cfg.params, strategy));
  }
  return kOk;
}

// ---- run ----------------------------------------------------------------------

int cmd_run(const Config& cfg, const std::string& plan_path, const std::string& sources_path, bool static_mode,
            bool include_trace) {
  const LogicalPlan plan = read_plan(plan_path);
  const Strategy strategy = strategy_of(cfg);
  cfg.params.validate();
  const SourceMap sources = generate_sources(read_sources(sources_path), cfg.params.parallelism);
  const RunResult r = static_mode ? execute_static(plan, sources, cfg.params, strategy, {}, cfg.seed)
                                  : execute_adaptive(plan, sources, cfg.params, strategy, {}, cfg.seed);
  json out{{"mode", static_mode ? "static" : "adaptive"},
           {"strategy", to_string(strategy)},
           {"output", to_json(r.output.stats())},
           {"decisions", to_json(r.log)},
           {"changed_decisions", r.log.changed_decisions()},
           {"selector_invocations", r.selector_invocations},
           {"final_plan", to_json(r.final_plan.root)},
           {"totals", to_json(r.trace.totals())},
           {"weighted_total", r.trace.weighted_total(cfg.params.network_weight)},
           {"model_weighted_total", static_mode ? json(nullptr) : json(model_weighted_total(r, cfg.params))}};
  if (include_trace) out["trace"] = to_json(r.trace);
  emit(cfg, canonical_dump(out));
  return kOk;
}

// ---- bench --------------------------------------------------------------------

int cmd_bench(Config cfg, const std::string& manifest_path, std::size_t synthetic, const std::vector<std::string>& strategy_list,
              const CommonFlags& flags, bool json_output) {
  Manifest m;
  if (!manifest_path.empty()) {
    m = manifest_from_json(read_json(manifest_path), std::filesystem::path(manifest_path).parent_path());
    // manifest params sit between the config file and the flags
    if (!m.params.empty()) {
      apply_config(cfg, m.params, "manifest.params");
      flags.apply(cfg);
    }
  } else if (synthetic > 0) {
    m.queries = disagreement_suite(synthetic, cfg.seed, cfg.params.parallelism);
  } else {
    throw CLI::ValidationError("bench", "give --manifest or --synthetic");
  }
  if (!strategy_list.empty()) {
    m.strategies.clear();
    for (const auto& s : strategy_list) {
      try {
        m.strategies.push_back(parse_strategy(s));
      } catch (const InvariantError& e) {
        throw ValidationError(e.what());
      }
    }
  }
  if (m.strategies.empty()) {
    m.strategies = {ShuffleSortForced{}, ShuffleHashForced{}, AbsoluteSize{}, RelJoin{cfg.params.network_weight}};
  }
  std::optional<std::size_t> baseline;
  if (m.baseline) {
    const Strategy b = parse_strategy(*m.baseline);
    for (std::size_t i = 0; i < m.strategies.size(); ++i) {
      if (to_string(m.strategies[i]) == to_string(b)) baseline = i;
    }
    if (!baseline) throw ValidationError("baseline '" + *m.baseline + "' is not in the strategy list");
  }
  cfg.params.validate();
  const SuiteReport report = run_suite(m.queries, m.strategies, cfg.params, baseline);
  const std::string report_json = canonical_dump(to_json(report));
  const std::string table = format_table(report);
  if (cfg.out) {
    emit(cfg, report_json);
    std::cout << (json_output ? report_json : table);
  } else {
    std::cout << (json_output ? report_json : table);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relative-size join method selection: planner, simulator and benchmark harness"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* gen = app.add_subcommand("gen", "generate datasets from generator specs and print their layout");
  std::string gen_sources;
  bool gen_rows = false;
  gen->add_option("sources", gen_sources, "JSON object of name -> generator spec")->required();
  gen->add_flag("--rows", gen_rows, "include every row as [key, bytes]");
  flags.attach(gen);

  auto* opt = app.add_subcommand("optimize", "plan a logical plan from static estimates");
  std::string opt_plan;
  bool no_reuse = false;
  opt->add_option("plan", opt_plan, "logical plan JSON")->required();
  opt->add_flag("--no-exchange-reuse", no_reuse, "always insert shuffles, even over partitioned inputs");
  CommonFlags opt_flags;
  opt_flags.attach(opt);

  auto* explain = app.add_subcommand("explain", "show per-method costs for a join or for every join of a plan");
  ExplainArgs ex;
  explain->add_option("plan", ex.plan_path, "logical plan JSON");
  explain->add_option("--left-size", ex.left_size, "left input size, e.g. 40MB");
  explain->add_option("--right-size", ex.right_size, "right input size, e.g. 0.13MB");
  ex.left_rows_opt = explain->add_option("--left-rows", ex.left_rows, "left cardinality (default size/100)");
  ex.right_rows_opt = explain->add_option("--right-rows", ex.right_rows, "right cardinality (default size/100)");
  explain->add_option("--join-type", ex.join_type, "inner | left_outer | right_outer | full_outer | left_semi | left_anti");
  explain->add_flag("--non-equi", ex.non_equi, "non-equi join condition");
  ex.hint_opt = explain->add_option("--hint", ex.hint, "join method hint");
  CommonFlags ex_flags;
  ex_flags.attach(explain);

  auto* run = app.add_subcommand("run", "execute a plan over generated data and print the trace summary");
  std::string run_plan, run_sources;
  bool run_static = false, run_trace = false;
  run->add_option("plan", run_plan, "logical plan JSON")->required();
  run->add_option("--sources", run_sources, "JSON object of name -> generator spec")->required();
  run->add_flag("--static", run_static, "plan once from estimates instead of re-selecting at runtime");
  run->add_flag("--trace", run_trace, "include per-stage, per-task work");
  CommonFlags run_flags;
  run_flags.attach(run);

  auto* bench = app.add_subcommand("bench", "run a query suite under several strategies");
  std::string manifest;
  std::size_t synthetic = 0;
  std::vector<std::string> strategies;
  bench->add_option("--manifest", manifest, "suite manifest JSON");
  bench->add_option("--synthetic", synthetic, "generate this many relative-size queries instead of a manifest");
  bench->add_option("--strategies", strategies, "strategies to compare")->delimiter(',');
  CommonFlags bench_flags;
  bench_flags.attach(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    Config cfg = load_config();
    if (*gen) {
      flags.apply(cfg);
      return cmd_gen(cfg, gen_sources, gen_rows, flags.set(5));
    }
    if (*opt) {
      opt_flags.apply(cfg);
      return cmd_optimize(cfg, opt_plan, no_reuse);
    }
    if (*explain) {
      ex_flags.apply(cfg);
      return cmd_explain(cfg, ex, ex_flags.json_output);
    }
    if (*run) {
      run_flags.apply(cfg);
      return cmd_run(cfg, run_plan, run_sources, run_static, run_trace);
    }
    if (*bench) {
      bench_flags.apply(cfg);
      return cmd_bench(cfg, manifest, synthetic, strategies, bench_flags, bench_flags.json_output);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "reljoin: " << e.what() << "\n";
    return kUsage;
  } catch (const SchemaError& e) {
    std::cerr << "reljoin: invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const ValidationError& e) {
    std::cerr << "reljoin: invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const InvariantError& e) {
    std::cerr << "reljoin: invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const MissingStats& e) {
    std::cerr << "reljoin: invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const ZeroCardinality& e) {
    std::cerr << "reljoin: invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const InfeasibleHint& e) {
    std::cerr << "reljoin: invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const UnboundSource& e) {
    std::cerr << "reljoin: invalid input: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "reljoin: execution failed: " << e.what() << "\n";
    return kExecution;
  }
  return kUsage;
}
