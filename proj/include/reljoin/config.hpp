#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "reljoin/cost_model.hpp"
#include "reljoin/plan.hpp"
#include "reljoin/strategies.hpp"
#include "reljoin/units.hpp"

namespace reljoin {

inline constexpr std::uint64_t kDefaultSeed = 0x5eed;
inline constexpr const char* kConfigEnv = "RELJOIN_CONFIG";

struct Config {
  ClusterParams params;  // p=20, n=5, w=1, watermark 1 GB
  std::uint64_t seed = kDefaultSeed;
  std::string strategy = "reljoin";
  std::optional<std::string> out;
};

namespace detail {

inline std::uint64_t size_value(const json& v, const std::string& where) {
  if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) return v.get<std::uint64_t>();
  if (v.is_string()) {
    try {
      return parse_size(v.get<std::string>());
    } catch (const InvariantError& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  throw SchemaError(where + " must be a byte count or a size string");
}

}  // namespace detail

/// Overlays the keys present in `j` onto `cfg`. Sizes take a byte count or a string such as "512MB".
inline void apply_config(Config& cfg, const json& j, const std::string& where = "config") {
  if (!j.is_object()) throw SchemaError(where + " must be an object");
  detail::allow_only(j, {"parallelism", "nodes", "w", "memory_budget", "watermark", "seed", "strategy", "out"}, where);
  if (j.contains("parallelism")) {
    cfg.params.parallelism = static_cast<std::uint32_t>(detail::require_count(j, "parallelism", where));
  }
  if (j.contains("nodes")) cfg.params.nodes = static_cast<std::uint32_t>(detail::require_count(j, "nodes", where));
  if (j.contains("w")) cfg.params.network_weight = detail::require_number(j, "w", where);
  if (j.contains("memory_budget")) {
    cfg.params.memory_budget_bytes = detail::size_value(j["memory_budget"], where + ".memory_budget");
  }
  if (j.contains("watermark")) {
    cfg.params.validity.watermark_bytes = detail::size_value(j["watermark"], where + ".watermark");
  }
  if (j.contains("seed")) cfg.seed = detail::require_count(j, "seed", where);
  if (j.contains("strategy")) cfg.strategy = detail::require_string(j, "strategy", where);
  if (j.contains("out")) cfg.out = detail::require_string(j, "out", where);
}

/// Built-in defaults, overlaid with the file named by RELJOIN_CONFIG when set.
inline Config load_config() {
  Config cfg;
  const char* path = std::getenv(kConfigEnv);
  if (!path || !*path) return cfg;
  std::ifstream in(path);
  if (!in) throw SchemaError(std::string("cannot read config file ") + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("config file ") + path + ": " + e.what());
  }
  apply_config(cfg, j, path);
  return cfg;
}

}  // namespace reljoin
