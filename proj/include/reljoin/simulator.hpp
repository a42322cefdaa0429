#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "reljoin/cost_model.hpp"
#include "reljoin/errors.hpp"
#include "reljoin/generator.hpp"
#include "reljoin/plan.hpp"
#include "reljoin/types.hpp"

namespace reljoin {

// Counters for one task of one stage. Compute units are byte-equivalent, like the cost model.
struct TaskWork {
  std::uint64_t network_bytes_in = 0;
  double build_units = 0.0;
  double probe_units = 0.0;
  double sort_units = 0.0;
  double merge_units = 0.0;
  double nl_units = 0.0;

  double compute_units() const { return build_units + probe_units + sort_units + merge_units + nl_units; }

  TaskWork& operator+=(const TaskWork& o) {
    network_bytes_in += o.network_bytes_in;
    build_units += o.build_units;
    probe_units += o.probe_units;
    sort_units += o.sort_units;
    merge_units += o.merge_units;
    nl_units += o.nl_units;
    return *this;
  }
};

struct StageTrace {
  int stage_id = 0;
  int join_id = -1;  // logical id of the join run in this stage, if any
  std::optional<JoinMethod> method;
  std::vector<TaskWork> tasks;

  TaskWork totals() const {
    TaskWork t;
    for (const auto& w : tasks) t += w;
    return t;
  }
};

struct ExchangeRecord {
  int producer_stage = 0;
  int producer_node = -1;  // logical id of the node whose output crossed the exchange
  ExchangeKind kind = ExchangeKind::Shuffle;
  DatasetStats measured;
};

struct WorkloadTrace {
  std::vector<StageTrace> stages;
  std::vector<ExchangeRecord> exchanges;

  TaskWork totals() const {
    TaskWork t;
    for (const auto& s : stages) t += s.totals();
    return t;
  }
  std::uint64_t total_network_bytes() const { return totals().network_bytes_in; }
  double total_compute_units() const { return totals().compute_units(); }
  double weighted_total(double w) const {
    const TaskWork t = totals();
    return w * static_cast<double>(t.network_bytes_in) + t.compute_units();
  }

  int next_stage_id() const { return static_cast<int>(stages.size()); }
};

inline json to_json(const TaskWork& w) {
  return json{{"network_bytes_in", w.network_bytes_in}, {"build_units", w.build_units},
              {"probe_units", w.probe_units},           {"sort_units", w.sort_units},
              {"merge_units", w.merge_units},           {"nl_units", w.nl_units}};
}

inline json to_json(const WorkloadTrace& t) {
  json stages = json::array();
  for (const auto& s : t.stages) {
    json tasks = json::array();
    for (const auto& w : s.tasks) tasks.push_back(to_json(w));
    json js{{"stage_id", s.stage_id}, {"tasks", std::move(tasks)}, {"totals", to_json(s.totals())}};
    if (s.join_id >= 0) js["join_id"] = s.join_id;
    if (s.method) js["method"] = std::string(to_string(*s.method));
    stages.push_back(std::move(js));
  }
  json exchanges = json::array();
  for (const auto& e : t.exchanges) {
    exchanges.push_back({{"producer_stage", e.producer_stage},
                         {"producer_node", e.producer_node},
                         {"kind", std::string(to_string(e.kind))},
                         {"measured", to_json(e.measured)}});
  }
  return json{{"stages", std::move(stages)}, {"exchanges", std::move(exchanges)}, {"totals", to_json(t.totals())}};
}

// Multiplicative (Fibonacci) hash of a key, reduced to a partition index.
inline std::uint32_t partition_of(std::int64_t key, std::uint32_t p) {
  const std::uint64_t h = static_cast<std::uint64_t>(key) * 0x9e3779b97f4a7c15ULL;
  return static_cast<std::uint32_t>((h >> 32) % p);
}

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Position-independent pseudo-random value of a row, so filters keep the same rows under any plan.
inline double row_unit_hash(const Row& r, std::uint64_t salt) {
  std::uint64_t h = mix64(salt);
  for (const auto& ref : r.lineage) h = mix64(h ^ ((static_cast<std::uint64_t>(ref.source) << 32) | ref.ordinal));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline std::uint64_t bytes_of(const std::vector<Row>& rows) {
  std::uint64_t n = 0;
  for (const auto& r : rows) n += r.bytes;
  return n;
}

inline double sort_units(const std::vector<Row>& part) {
  if (part.size() <= 1) return 0.0;
  return static_cast<double>(bytes_of(part)) * std::log2(static_cast<double>(part.size()));
}

inline Row concat(const Row& left, const Row& right) {
  Row out{left.key, left.bytes + right.bytes, left.lineage};
  out.lineage.insert(out.lineage.end(), right.lineage.begin(), right.lineage.end());
  return out;
}

inline Row left_only(const Row& left) {
  Row out = left;
  out.lineage.push_back(kNullRef);
  return out;
}

inline Row right_only(const Row& right) {
  Row out{right.key, right.bytes, {kNullRef}};
  out.lineage.insert(out.lineage.end(), right.lineage.begin(), right.lineage.end());
  return out;
}

inline bool predicate_holds(Predicate p, std::int64_t l, std::int64_t r) {
  switch (p) {
    case Predicate::Less: return l < r;
    case Predicate::LessEqual: return l <= r;
    case Predicate::NotEqual: return l != r;
  }
  return false;
}

}  // namespace detail

using SourceMap = std::map<std::string, std::shared_ptr<const Dataset>>;

/// Executes physical plans task by task and accounts workload per stage.
///
/// One engine executes one plan at a time; engines share nothing, so separate
/// instances may run concurrently.
class Engine {
 public:
  Engine(ClusterParams params, SourceMap sources, std::uint64_t seed = 0)
      : params_(params), sources_(std::move(sources)), seed_(seed) {
    params_.validate();
    std::uint32_t next = 0;
    for (const auto& [name, data] : sources_) {
      if (!data) throw UnboundSource("source '" + name + "' is bound to no data");
      if (data->partitions.size() != params_.parallelism) {
        throw InvariantError("source '" + name + "' has " + std::to_string(data->partitions.size()) +
                             " partitions, parallelism is " + std::to_string(params_.parallelism));
      }
      source_ids_[name] = next++;
    }
  }

  const ClusterParams& params() const { return params_; }

  std::uint32_t source_id(const std::string& name) const {
    auto it = source_ids_.find(name);
    if (it == source_ids_.end()) throw UnboundSource("no data bound to scan '" + name + "'");
    return it->second;
  }

  /// Runs the whole plan; stages are appended to `trace` in completion order.
  Dataset execute(const PhysicalPlan& plan, WorkloadTrace& trace) {
    StageTrace root;
    Dataset out = eval(plan.root, root, trace);
    finish_stage(std::move(root), trace);
    return out;
  }

  /// Runs a subtree as its own stage; exchanges inside it start further stages first.
  Dataset run_stage(const PhysicalNode& node, WorkloadTrace& trace, int* stage_id = nullptr) {
    StageTrace st;
    Dataset out = eval(node, st, trace);
    const int id = finish_stage(std::move(st), trace);
    if (stage_id) *stage_id = id;
    return out;
  }

 private:
  int finish_stage(StageTrace st, WorkloadTrace& trace) {
    st.stage_id = trace.next_stage_id();
    if (st.tasks.empty()) st.tasks.resize(params_.parallelism);
    trace.stages.push_back(std::move(st));
    return trace.stages.back().stage_id;
  }

  std::uint32_t p() const { return params_.parallelism; }

  Dataset eval(const PhysicalNode& node, StageTrace& stage, WorkloadTrace& trace) {
    if (const auto* scan = std::get_if<PhysScan>(&node.op)) return eval_scan(*scan);
    if (const auto* m = std::get_if<PhysMaterialized>(&node.op)) {
      if (!m->data) throw InvariantError("materialized node without data");
      return *m->data;
    }
    if (const auto* f = std::get_if<FilterOp>(&node.op)) {
      Dataset in = eval(node.children.at(0), stage, trace);
      const double keep = f->effective_runtime_selectivity();
      const std::uint64_t salt = seed_ ^ (0x51ed270b27a3f2c1ULL * static_cast<std::uint64_t>(node.id + 1));
      for (auto& part : in.partitions) {
        std::erase_if(part, [&](const Row& r) { return !(detail::row_unit_hash(r, salt) < keep); });
      }
      return in;
    }
    if (const auto* pr = std::get_if<ProjectOp>(&node.op)) {
      Dataset in = eval(node.children.at(0), stage, trace);
      for (auto& part : in.partitions) {
        for (auto& r : part) r.bytes = std::max<std::uint64_t>(1, reljoin::detail::scaled_ceil(pr->width_fraction, r.bytes));
      }
      return in;
    }
    if (node.is_exchange()) throw InvariantError("exchange nodes may only appear directly below a join");
    return eval_join(node, stage, trace);
  }

  Dataset eval_scan(const PhysScan& scan) {
    auto it = sources_.find(scan.name);
    if (it == sources_.end()) throw UnboundSource("no data bound to scan '" + scan.name + "'");
    const std::uint32_t id = source_ids_.at(scan.name);
    Dataset out = *it->second;
    for (auto& part : out.partitions) {
      for (auto& r : part) {
        for (auto& ref : r.lineage) {
          if (ref != kNullRef) ref.source = id;
        }
      }
    }
    out.partitioning = Partitioning::arbitrary();
    return out;
  }

  enum class InputMode { InPlace, Shuffled, Broadcast };

  struct JoinInput {
    Dataset data;
    InputMode mode = InputMode::InPlace;
  };

  JoinInput eval_join_input(const PhysicalNode& child, StageTrace& stage, WorkloadTrace& trace) {
    if (!child.is_exchange()) return {eval(child, stage, trace), InputMode::InPlace};
    const auto& ex = std::get<PhysExchange>(child.op);
    if (ex.partitions != p()) throw InvariantError("exchange partition count differs from parallelism");
    int producer_stage = 0;
    Dataset produced;
    const PhysicalNode& source = child.children.at(0);
    const auto* done = std::get_if<PhysMaterialized>(&source.op);
    if (done && done->producer_stage >= 0 && done->data) {
      producer_stage = done->producer_stage;
      produced = *done->data;
    } else {
      produced = run_stage(source, trace, &producer_stage);
    }
    trace.exchanges.push_back({producer_stage, source.id, ex.kind, produced.stats()});
    return {std::move(produced), ex.kind == ExchangeKind::Shuffle ? InputMode::Shuffled : InputMode::Broadcast};
  }

  // Hash-repartitions `data`; a row's bytes are charged to its destination when it changes task.
  Dataset shuffle(const Dataset& data, StageTrace& stage) {
    Dataset out;
    out.partitions.resize(p());
    for (std::uint32_t src = 0; src < data.partitions.size(); ++src) {
      for (const auto& r : data.partitions[src]) {
        const std::uint32_t dst = partition_of(r.key, p());
        if (dst != src) stage.tasks[dst].network_bytes_in += r.bytes;
        out.partitions[dst].push_back(r);
      }
    }
    out.partitioning = Partitioning::hashed(p());
    return out;
  }

  // Every task fetches the part of `data` it does not already hold.
  std::vector<Row> broadcast(const Dataset& data, StageTrace& stage) {
    const std::uint64_t total = data.size_bytes();
    for (std::uint32_t t = 0; t < p(); ++t) {
      const std::uint64_t local = t < data.partitions.size() ? detail::bytes_of(data.partitions[t]) : 0;
      stage.tasks[t].network_bytes_in += total - local;
    }
    return data.rows();
  }

  struct TaskMatches {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;  // (outer index, inner index)
    std::vector<char> outer_matched;
    std::vector<char> inner_matched;
  };

  TaskMatches match_hash(const std::vector<Row>& outer, const std::vector<Row>& inner, TaskWork& work) {
    TaskMatches m;
    m.outer_matched.assign(outer.size(), 0);
    m.inner_matched.assign(inner.size(), 0);
    const std::uint64_t build_bytes = detail::bytes_of(inner);
    if (build_bytes > params_.memory_budget_bytes) {
      throw OutOfBudget("hash build of " + std::to_string(build_bytes) + " bytes exceeds the per-task budget of " +
                        std::to_string(params_.memory_budget_bytes));
    }
    std::unordered_multimap<std::int64_t, std::uint32_t> table;
    table.reserve(inner.size());
    for (std::uint32_t j = 0; j < inner.size(); ++j) table.emplace(inner[j].key, j);
    work.build_units += static_cast<double>(build_bytes);
    for (std::uint32_t i = 0; i < outer.size(); ++i) {
      work.probe_units += static_cast<double>(outer[i].bytes);
      auto [lo, hi] = table.equal_range(outer[i].key);
      for (auto it = lo; it != hi; ++it) {
        work.probe_units += static_cast<double>(inner[it->second].bytes);
        m.pairs.emplace_back(i, it->second);
        m.outer_matched[i] = 1;
        m.inner_matched[it->second] = 1;
      }
    }
    return m;
  }

  TaskMatches match_sort_merge(const std::vector<Row>& outer, const std::vector<Row>& inner, TaskWork& work) {
    TaskMatches m;
    m.outer_matched.assign(outer.size(), 0);
    m.inner_matched.assign(inner.size(), 0);
    work.sort_units += detail::sort_units(outer) + detail::sort_units(inner);
    work.merge_units += static_cast<double>(detail::bytes_of(outer) + detail::bytes_of(inner));
    auto sorted_index = [](const std::vector<Row>& rows) {
      std::vector<std::uint32_t> idx(rows.size());
      std::iota(idx.begin(), idx.end(), 0u);
      std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return rows[x].key < rows[y].key; });
      return idx;
    };
    const auto oi = sorted_index(outer);
    const auto ii = sorted_index(inner);
    std::size_t a = 0, b = 0;
    while (a < oi.size() && b < ii.size()) {
      const auto ka = outer[oi[a]].key;
      const auto kb = inner[ii[b]].key;
      if (ka < kb) {
        ++a;
      } else if (kb < ka) {
        ++b;
      } else {
        std::size_t a_end = a, b_end = b;
        while (a_end < oi.size() && outer[oi[a_end]].key == ka) ++a_end;
        while (b_end < ii.size() && inner[ii[b_end]].key == ka) ++b_end;
        for (std::size_t x = a; x < a_end; ++x) {
          for (std::size_t y = b; y < b_end; ++y) {
            m.pairs.emplace_back(oi[x], ii[y]);
            m.outer_matched[oi[x]] = 1;
            m.inner_matched[ii[y]] = 1;
          }
        }
        a = a_end;
        b = b_end;
      }
    }
    return m;
  }

  TaskMatches match_nested_loop(const std::vector<Row>& outer, const std::vector<Row>& inner, const PhysJoin& j,
                                TaskWork& work) {
    TaskMatches m;
    m.outer_matched.assign(outer.size(), 0);
    m.inner_matched.assign(inner.size(), 0);
    const std::uint64_t inner_bytes = detail::bytes_of(inner);
    const bool equi = j.logical.condition == ConditionKind::Equi;
    for (std::uint32_t i = 0; i < outer.size(); ++i) {
      work.nl_units += static_cast<double>(outer[i].bytes + inner_bytes);
      for (std::uint32_t k = 0; k < inner.size(); ++k) {
        bool hit = false;
        if (equi) {
          hit = outer[i].key == inner[k].key;
        } else {
          // Outer rows come from A; the predicate is stated on the logical (left, right) pair.
          const std::int64_t l = j.flipped ? inner[k].key : outer[i].key;
          const std::int64_t r = j.flipped ? outer[i].key : inner[k].key;
          hit = detail::predicate_holds(j.logical.predicate, l, r);
        }
        if (hit) {
          m.pairs.emplace_back(i, k);
          m.outer_matched[i] = 1;
          m.inner_matched[k] = 1;
        }
      }
    }
    return m;
  }

  Dataset eval_join(const PhysicalNode& node, StageTrace& stage, WorkloadTrace& trace) {
    const auto& j = std::get<PhysJoin>(node.op);
    if (node.children.size() != 2) throw InvariantError("join node needs two children");
    if (needs_equi(j.method) && j.logical.condition != ConditionKind::Equi) {
      throw InvariantError(std::string(to_string(j.method)) + " cannot evaluate a non-equi condition");
    }
    JoinInput a_in = eval_join_input(node.children[0], stage, trace);
    JoinInput b_in = eval_join_input(node.children[1], stage, trace);
    if (stage.tasks.empty()) stage.tasks.resize(p());
    stage.join_id = node.id;
    stage.method = j.method;

    for (const JoinInput* in : {&a_in, &b_in}) {
      if (in->mode != InputMode::Broadcast && in->data.partitions.size() != p()) {
        throw InvariantError("join input partition count differs from parallelism");
      }
    }
    if (a_in.mode == InputMode::Broadcast) throw InvariantError("the larger join input is never broadcast");
    const bool broadcast_method = uses_broadcast(j.method);
    if (broadcast_method != (b_in.mode == InputMode::Broadcast)) {
      throw InvariantError(std::string(to_string(j.method)) + " requires a broadcast exchange exactly on its smaller input");
    }

    Dataset a = a_in.mode == InputMode::Shuffled ? shuffle(a_in.data, stage) : std::move(a_in.data);
    if (!broadcast_method && !a.partitioning.is_hashed(p())) {
      throw InvariantError("shuffle-family join input is not hash-partitioned on the key");
    }

    // The inner side is either per task (co-partitioned) or whole-B visible to every task.
    std::vector<Row> b_global;
    Dataset b_local;
    bool inner_global = false;
    if (b_in.mode == InputMode::Broadcast) {
      b_global = broadcast(b_in.data, stage);
      inner_global = true;
    } else {
      b_local = b_in.mode == InputMode::Shuffled ? shuffle(b_in.data, stage) : std::move(b_in.data);
      if (!b_local.partitioning.is_hashed(p())) {
        throw InvariantError("shuffle-family join input is not hash-partitioned on the key");
      }
      if (j.method == JoinMethod::CartesianProduct && j.logical.condition == ConditionKind::NonEqui) {
        // Every (A_i, B_j) partition pair must meet: each task reads all remote partitions of B.
        const std::uint64_t total = b_local.size_bytes();
        for (std::uint32_t t = 0; t < p(); ++t) {
          stage.tasks[t].network_bytes_in += total - detail::bytes_of(b_local.partitions[t]);
        }
        b_global = b_local.rows();
        inner_global = true;
      }
    }

    const JoinType type = j.logical.join_type;
    const bool left_is_outer = !j.flipped;  // logical left input == A
    Dataset out;
    out.partitions.resize(p());
    std::vector<char> global_inner_matched(inner_global ? b_global.size() : 0, 0);

    for (std::uint32_t t = 0; t < p(); ++t) {
      const std::vector<Row>& outer = a.partitions[t];
      const std::vector<Row>& inner = inner_global ? b_global : b_local.partitions[t];
      TaskWork& work = stage.tasks[t];
      TaskMatches m;
      switch (j.method) {
        case JoinMethod::BroadcastHash:
        case JoinMethod::ShuffleHash:
          m = match_hash(outer, inner, work);
          break;
        case JoinMethod::ShuffleSort:
          m = match_sort_merge(outer, inner, work);
          break;
        case JoinMethod::BroadcastNestedLoop:
        case JoinMethod::CartesianProduct:
          m = match_nested_loop(outer, inner, j, work);
          break;
      }
      auto& dst = out.partitions[t];
      if (type == JoinType::LeftSemi || type == JoinType::LeftAnti) {
        const bool want = type == JoinType::LeftSemi;
        if (left_is_outer) {
          for (std::uint32_t i = 0; i < outer.size(); ++i) {
            if (static_cast<bool>(m.outer_matched[i]) == want) dst.push_back(outer[i]);
          }
        } else if (!inner_global) {
          for (std::uint32_t k = 0; k < inner.size(); ++k) {
            if (static_cast<bool>(m.inner_matched[k]) == want) dst.push_back(inner[k]);
          }
        }
      } else {
        for (auto [i, k] : m.pairs) {
          dst.push_back(left_is_outer ? detail::concat(outer[i], inner[k]) : detail::concat(inner[k], outer[i]));
        }
        // Unmatched rows of A are final per task.
        const bool keep_outer = left_is_outer ? preserves_left(type) : preserves_right(type);
        if (keep_outer) {
          for (std::uint32_t i = 0; i < outer.size(); ++i) {
            if (!m.outer_matched[i]) dst.push_back(left_is_outer ? detail::left_only(outer[i]) : detail::right_only(outer[i]));
          }
        }
        const bool keep_inner = left_is_outer ? preserves_right(type) : preserves_left(type);
        if (keep_inner && !inner_global) {
          for (std::uint32_t k = 0; k < inner.size(); ++k) {
            if (!m.inner_matched[k]) dst.push_back(left_is_outer ? detail::right_only(inner[k]) : detail::left_only(inner[k]));
          }
        }
      }
      if (inner_global) {
        for (std::size_t k = 0; k < m.inner_matched.size(); ++k) global_inner_matched[k] |= m.inner_matched[k];
      }
    }

    // Rows of a replicated B that must appear once are emitted after the matched flags are combined.
    if (inner_global) {
      auto& dst = out.partitions[0];
      if (type == JoinType::LeftSemi || type == JoinType::LeftAnti) {
        if (!left_is_outer) {
          const bool want = type == JoinType::LeftSemi;
          for (std::size_t k = 0; k < b_global.size(); ++k) {
            if (static_cast<bool>(global_inner_matched[k]) == want) dst.push_back(b_global[k]);
          }
        }
      } else {
        const bool keep_inner = left_is_outer ? preserves_right(type) : preserves_left(type);
        if (keep_inner) {
          for (std::size_t k = 0; k < b_global.size(); ++k) {
            if (!global_inner_matched[k]) {
              dst.push_back(left_is_outer ? detail::right_only(b_global[k]) : detail::left_only(b_global[k]));
            }
          }
        }
      }
    }
    out.partitioning = join_output_partitioning(j, a.partitioning, p());
    return out;
  }

  ClusterParams params_;
  SourceMap sources_;
  std::map<std::string, std::uint32_t> source_ids_;
  std::uint64_t seed_ = 0;
};

/// Convenience wrapper: runs `plan` over `sources` on a fresh engine.
inline std::pair<Dataset, WorkloadTrace> execute(const PhysicalPlan& plan, const SourceMap& sources,
                                                 const ClusterParams& params, std::uint64_t seed = 0) {
  Engine engine(params, sources, seed);
  WorkloadTrace trace;
  Dataset out = engine.execute(plan, trace);
  return {std::move(out), std::move(trace)};
}

// Builds the engine inputs from generator specs, one dataset per named source.
inline SourceMap generate_sources(const std::map<std::string, GeneratorSpec>& specs, std::uint32_t partitions) {
  SourceMap out;
  for (const auto& [name, spec] : specs) out[name] = std::make_shared<const Dataset>(generate(spec, partitions));
  return out;
}

}  // namespace reljoin
