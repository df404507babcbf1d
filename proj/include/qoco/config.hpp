#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qoco/baselines.hpp"
#include "qoco/common.hpp"
#include "qoco/controller.hpp"
#include "qoco/metrics.hpp"
#include "qoco/sim_env.hpp"
#include "qoco/workload.hpp"

namespace qoco {

enum class Method : std::uint8_t { None, CoTo, Bypass, LQoCo };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::None: return "none";
    case Method::CoTo: return "coto";
    case Method::Bypass: return "bypass";
    case Method::LQoCo: return "lqoco";
  }
  return "?";
}

inline std::optional<Method> method_from_name(std::string_view s) {
  for (const auto m : {Method::None, Method::CoTo, Method::Bypass, Method::LQoCo})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

/// Workload selection. `id` is a standard id (S-1..S-19), "changing" for the
/// nine-phase sequence, or "trace" together with `trace_file`.
struct WorkloadSelection {
  std::string id = "S-3";
  std::string trace_file;
  double duration = 1500.0;       // standard workloads
  double phase_duration = 150.0;  // changing sequence
  double offered_load = 1.6;      // offered bandwidth / flush base bandwidth
  ArrivalProcess arrival = ArrivalProcess::Poisson;
};

inline constexpr double kDefaultFlushBandwidth = 8.0 * 1024 * 1024;

/// Experiment flush defaults: light noise plus an occasional 20 s dip to 60%.
inline FlushProcess default_flush() {
  FlushProcess f;
  f.noise_cv = 0.05;
  f.dip_rate = 0.005;
  f.dip_depth = 0.4;
  f.dip_duration = 20.0;
  return f;
}

struct ExperimentConfig {
  WorkloadSelection workload;
  SimConfig sim;
  double cache_seconds = 20.0;  // capacity in seconds of base flush
  std::optional<double> cache_capacity;
  double overload_threshold = 100.0;
  FlushProcess flush = default_flush();
  // Flush base bandwidth; unset means kDefaultFlushBandwidth, or for trace
  // workloads the trace's mean bandwidth divided by the offered load.
  std::optional<double> base_bandwidth;
  LQoCoConfig lqoco;
  double initial_grant_factor = 1.0;  // starting grant for rate-limited methods, x base
  std::string warm_start;
  CoToConfig coto;
  BypassConfig bypass;
  double bytes_per_token = 1024.0;
  double window = 150.0;
  std::vector<Method> methods{Method::None, Method::LQoCo};
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "qoco-out";
  std::size_t workers = 1;
  bool write_logs = true;
  std::int64_t max_drain_ticks = 100000;

  void validate() const {
    if (methods.empty()) throw ConfigError("experiment.methods: at least one method is required");
    if (seeds.empty()) throw ConfigError("experiment.seeds: at least one seed is required");
    if (workers == 0) throw ConfigError("experiment.workers must be >= 1");
    if (!(window > 0.0)) throw ConfigError("metrics.window must be > 0");
    if (max_drain_ticks < 0) throw ConfigError("experiment.max_drain_ticks must be >= 0");
    if (workload.id == "trace") {
      if (workload.trace_file.empty())
        throw ConfigError("workload.trace_file is required when workload.id = trace");
      if (!std::filesystem::exists(workload.trace_file))
        throw ConfigError("workload.trace_file: no such file '" + workload.trace_file + "'");
    } else if (workload.id != "changing") {
      build_standard_spec(workload.id, 1.0, 1.0);
    }
    if (!(workload.duration > 0.0)) throw ConfigError("workload.duration must be > 0");
    if (!(workload.phase_duration > 0.0)) throw ConfigError("workload.phase_duration must be > 0");
    if (!(workload.offered_load > 0.0)) throw ConfigError("workload.offered_load must be > 0");
    if (!(cache_seconds > 0.0)) throw ConfigError("sim.cache_seconds must be > 0");
    if (cache_capacity && !(*cache_capacity > 0.0))
      throw ConfigError("sim.cache_capacity must be > 0");
    if (!(overload_threshold > 0.0 && overload_threshold <= 100.0))
      throw ConfigError("sim.overload_threshold must lie in (0,100]");
    if (base_bandwidth && !(*base_bandwidth > 0.0))
      throw ConfigError("flush.base_bandwidth must be > 0");
    if (!(initial_grant_factor > 0.0)) throw ConfigError("lqoco.initial_grant_factor must be > 0");
    if (!(bytes_per_token > 0.0)) throw ConfigError("executor.bytes_per_token must be > 0");
    lqoco.validate();
    coto.validate();
    bypass.validate();
  }
};

namespace detail {

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

inline double to_double(const std::string& v, const std::string& key) {
  return parse_double_or_throw(v, key);
}

template <typename T>
T to_integer(const std::string& v, const std::string& key) {
  T out{};
  if (!parse_number(v, out)) throw ConfigError(key + ": not an integer: '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

template <std::size_t N>
std::array<double, N> to_edges(const std::string& v, const std::string& key) {
  const auto parts = split(v, ',');
  if (parts.size() != N)
    throw ConfigError(key + ": expected " + std::to_string(N) + " comma-separated values");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_double_or_throw(parts[i], key);
  return out;
}

inline const std::map<std::string, Setter>& setters() {
  using C = ExperimentConfig;
  using S = const std::string&;
  static const std::map<std::string, Setter> table{
      // experiment
      {"experiment.methods",
       [](C& c, S v) {
         c.methods.clear();
         for (const auto part : split(v, ',')) {
           const auto m = method_from_name(trim(part));
           if (!m)
             throw ConfigError("experiment.methods: unknown method '" + std::string(trim(part)) +
                               "' (valid: none, coto, bypass, lqoco)");
           if (std::find(c.methods.begin(), c.methods.end(), *m) != c.methods.end())
             throw ConfigError("experiment.methods: duplicate method '" + std::string(trim(part)) + "'");
           c.methods.push_back(*m);
         }
       }},
      {"experiment.seeds",
       [](C& c, S v) {
         c.seeds.clear();
         for (const auto part : split(v, ','))
           c.seeds.push_back(to_integer<std::uint64_t>(std::string(trim(part)), "experiment.seeds"));
       }},
      {"experiment.output_dir", [](C& c, S v) { c.output_dir = v; }},
      {"experiment.workers",
       [](C& c, S v) { c.workers = to_integer<std::size_t>(v, "experiment.workers"); }},
      {"experiment.write_logs", [](C& c, S v) { c.write_logs = to_bool(v, "experiment.write_logs"); }},
      {"experiment.max_drain_ticks",
       [](C& c, S v) { c.max_drain_ticks = to_integer<std::int64_t>(v, "experiment.max_drain_ticks"); }},
      // workload
      {"workload.id", [](C& c, S v) { c.workload.id = v; }},
      {"workload.trace_file", [](C& c, S v) { c.workload.trace_file = v; }},
      {"workload.duration",
       [](C& c, S v) { c.workload.duration = to_double(v, "workload.duration"); }},
      {"workload.phase_duration",
       [](C& c, S v) { c.workload.phase_duration = to_double(v, "workload.phase_duration"); }},
      {"workload.offered_load",
       [](C& c, S v) { c.workload.offered_load = to_double(v, "workload.offered_load"); }},
      {"workload.arrival",
       [](C& c, S v) {
         if (v == "poisson") {
           c.workload.arrival = ArrivalProcess::Poisson;
         } else if (v == "constant") {
           c.workload.arrival = ArrivalProcess::Constant;
         } else {
           throw ConfigError("workload.arrival: expected poisson or constant, got '" + v + "'");
         }
       }},
      // sim
      {"sim.tick", [](C& c, S v) { c.sim.tick = to_double(v, "sim.tick"); }},
      {"sim.cache_service_time",
       [](C& c, S v) { c.sim.cache_service_time = to_double(v, "sim.cache_service_time"); }},
      {"sim.storage_service_time",
       [](C& c, S v) { c.sim.storage_service_time = to_double(v, "sim.storage_service_time"); }},
      {"sim.collapse_fraction",
       [](C& c, S v) { c.sim.collapse_fraction = to_double(v, "sim.collapse_fraction"); }},
      {"sim.overload_flush_efficiency",
       [](C& c, S v) {
         c.sim.overload_flush_efficiency = to_double(v, "sim.overload_flush_efficiency");
       }},
      {"sim.cache_seconds", [](C& c, S v) { c.cache_seconds = to_double(v, "sim.cache_seconds"); }},
      {"sim.cache_capacity",
       [](C& c, S v) { c.cache_capacity = to_double(v, "sim.cache_capacity"); }},
      {"sim.overload_threshold",
       [](C& c, S v) { c.overload_threshold = to_double(v, "sim.overload_threshold"); }},
      // flush
      {"flush.base_bandwidth",
       [](C& c, S v) { c.base_bandwidth = to_double(v, "flush.base_bandwidth"); }},
      {"flush.noise_cv", [](C& c, S v) { c.flush.noise_cv = to_double(v, "flush.noise_cv"); }},
      {"flush.dip_rate", [](C& c, S v) { c.flush.dip_rate = to_double(v, "flush.dip_rate"); }},
      {"flush.dip_depth", [](C& c, S v) { c.flush.dip_depth = to_double(v, "flush.dip_depth"); }},
      {"flush.dip_duration",
       [](C& c, S v) { c.flush.dip_duration = to_double(v, "flush.dip_duration"); }},
      // collector
      {"collector.w_edges",
       [](C& c, S v) { c.lqoco.bands.w_edges = to_edges<3>(v, "collector.w_edges"); }},
      {"collector.p_edges",
       [](C& c, S v) { c.lqoco.bands.p_edges = to_edges<2>(v, "collector.p_edges"); }},
      {"collector.b_edges",
       [](C& c, S v) { c.lqoco.bands.b_edges = to_edges<2>(v, "collector.b_edges"); }},
      {"collector.bdp_max_decay",
       [](C& c, S v) { c.lqoco.bands.bdp_max_decay = to_double(v, "collector.bdp_max_decay"); }},
      // lqoco
      {"lqoco.action_rates",
       [](C& c, S v) { c.lqoco.actions.rates = to_edges<5>(v, "lqoco.action_rates"); }},
      {"lqoco.reward_mode",
       [](C& c, S v) {
         if (v == "lookup") {
           c.lqoco.reward_mode = RewardMode::Lookup;
         } else if (v == "index") {
           c.lqoco.reward_mode = RewardMode::IndexSum;
         } else {
           throw ConfigError("lqoco.reward_mode: expected lookup or index, got '" + v + "'");
         }
       }},
      {"lqoco.f_w", [](C& c, S v) { c.lqoco.weights.f_W = to_double(v, "lqoco.f_w"); }},
      {"lqoco.f_p", [](C& c, S v) { c.lqoco.weights.f_P = to_double(v, "lqoco.f_p"); }},
      {"lqoco.f_b", [](C& c, S v) { c.lqoco.weights.f_B = to_double(v, "lqoco.f_b"); }},
      {"lqoco.gamma", [](C& c, S v) { c.lqoco.learner.gamma = to_double(v, "lqoco.gamma"); }},
      {"lqoco.eta", [](C& c, S v) { c.lqoco.learner.eta = to_double(v, "lqoco.eta"); }},
      {"lqoco.alpha", [](C& c, S v) { c.lqoco.learner.alpha = to_double(v, "lqoco.alpha"); }},
      {"lqoco.beta", [](C& c, S v) { c.lqoco.learner.beta = to_double(v, "lqoco.beta"); }},
      {"lqoco.epsilon", [](C& c, S v) { c.lqoco.learner.epsilon = to_double(v, "lqoco.epsilon"); }},
      {"lqoco.batch_size",
       [](C& c, S v) { c.lqoco.learner.batch_size = to_integer<std::size_t>(v, "lqoco.batch_size"); }},
      {"lqoco.prune_period",
       [](C& c, S v) {
         c.lqoco.learner.prune_period = to_integer<std::size_t>(v, "lqoco.prune_period");
       }},
      {"lqoco.table_update_period",
       [](C& c, S v) {
         c.lqoco.learner.table_update_period =
             to_integer<std::size_t>(v, "lqoco.table_update_period");
       }},
      {"lqoco.buffer_capacity",
       [](C& c, S v) {
         c.lqoco.learner.buffer_capacity = to_integer<std::size_t>(v, "lqoco.buffer_capacity");
       }},
      {"lqoco.fine_tune_rate",
       [](C& c, S v) { c.lqoco.fine_tune_rate = to_double(v, "lqoco.fine_tune_rate"); }},
      {"lqoco.fine_tune_deadband",
       [](C& c, S v) { c.lqoco.fine_tune_deadband = to_double(v, "lqoco.fine_tune_deadband"); }},
      {"lqoco.fast_decrease_w",
       [](C& c, S v) { c.lqoco.fast_decrease_w = to_double(v, "lqoco.fast_decrease_w"); }},
      {"lqoco.fast_decrease_b",
       [](C& c, S v) { c.lqoco.fast_decrease_b = to_double(v, "lqoco.fast_decrease_b"); }},
      {"lqoco.fast_increase_w",
       [](C& c, S v) { c.lqoco.fast_increase_w = to_double(v, "lqoco.fast_increase_w"); }},
      {"lqoco.fast_increase_b",
       [](C& c, S v) { c.lqoco.fast_increase_b = to_double(v, "lqoco.fast_increase_b"); }},
      {"lqoco.bound_lb_factor",
       [](C& c, S v) { c.lqoco.bound_lb_factor = to_double(v, "lqoco.bound_lb_factor"); }},
      {"lqoco.bound_ub_factor",
       [](C& c, S v) { c.lqoco.bound_ub_factor = to_double(v, "lqoco.bound_ub_factor"); }},
      {"lqoco.bound_n",
       [](C& c, S v) { c.lqoco.bound_N = to_integer<std::size_t>(v, "lqoco.bound_n"); }},
      {"lqoco.bound_v", [](C& c, S v) { c.lqoco.bound_v = to_double(v, "lqoco.bound_v"); }},
      {"lqoco.bound_sigma",
       [](C& c, S v) { c.lqoco.bound_sigma = to_double(v, "lqoco.bound_sigma"); }},
      {"lqoco.bound_delta",
       [](C& c, S v) { c.lqoco.bound_delta = to_double(v, "lqoco.bound_delta"); }},
      {"lqoco.floor_factor",
       [](C& c, S v) { c.lqoco.floor_factor = to_double(v, "lqoco.floor_factor"); }},
      {"lqoco.initial_grant_factor",
       [](C& c, S v) { c.initial_grant_factor = to_double(v, "lqoco.initial_grant_factor"); }},
      {"lqoco.warm_start", [](C& c, S v) { c.warm_start = v; }},
      // coto
      {"coto.low_edge", [](C& c, S v) { c.coto.low_edge = to_double(v, "coto.low_edge"); }},
      {"coto.high_edge", [](C& c, S v) { c.coto.high_edge = to_double(v, "coto.high_edge"); }},
      {"coto.rate", [](C& c, S v) { c.coto.rate = to_double(v, "coto.rate"); }},
      {"coto.delta_units",
       [](C& c, S v) {
         if (v == "band") {
           c.coto.delta_units = CoToDeltaUnits::BandIndex;
         } else if (v == "percent") {
           c.coto.delta_units = CoToDeltaUnits::Percent;
         } else {
           throw ConfigError("coto.delta_units: expected band or percent, got '" + v + "'");
         }
       }},
      // bypass
      {"bypass.latency_threshold",
       [](C& c, S v) { c.bypass.latency_threshold = to_double(v, "bypass.latency_threshold"); }},
      {"bypass.window",
       [](C& c, S v) { c.bypass.window = to_integer<std::size_t>(v, "bypass.window"); }},
      // executor
      {"executor.bytes_per_token",
       [](C& c, S v) { c.bytes_per_token = to_double(v, "executor.bytes_per_token"); }},
      // metrics
      {"metrics.window", [](C& c, S v) { c.window = to_double(v, "metrics.window"); }},
  };
  return table;
}

}  // namespace detail

/// Applies one `section.key = value` override.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second(cfg, value);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::setters()) keys.push_back(k);
  return keys;
}

/// Parses a sectioned key=value file. Unknown sections and keys are errors.
/// Relative trace paths resolve against the config file's directory.
inline ExperimentConfig parse_config_lines(const std::vector<std::string>& lines,
                                           const std::string& source,
                                           const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  const auto sections = parse_sections(lines, source);
  for (const auto& sec : sections) {
    for (std::size_t i = 0; i < sec.entries.size(); ++i) {
      const auto& [k, v] = sec.entries[i];
      const std::string key = sec.name + "." + k;
      try {
        set_config_value(cfg, key, v);
      } catch (const ConfigError& e) {
        throw ParseError(source, sec.entry_lines[i], e.what());
      }
      if (key == "workload.trace_file" && !base_dir.empty() &&
          std::filesystem::path(v).is_relative())
        cfg.workload.trace_file = (base_dir / v).string();
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  auto cfg = parse_config_lines(read_lines(path), path,
                                std::filesystem::path(path).parent_path());
  cfg.validate();
  return cfg;
}

}  // namespace qoco
