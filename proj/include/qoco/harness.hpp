#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <string_view>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qoco/baselines.hpp"
#include "qoco/collector.hpp"
#include "qoco/common.hpp"
#include "qoco/config.hpp"
#include "qoco/controller.hpp"
#include "qoco/executor.hpp"
#include "qoco/metrics.hpp"
#include "qoco/qtable_io.hpp"
#include "qoco/rl_core.hpp"
#include "qoco/sim_env.hpp"
#include "qoco/workload.hpp"

namespace qoco {

// ---------------------------------------------------------------------------
// Workload resolution

struct ResolvedWorkload {
  std::string name;
  std::optional<WorkloadSequence> sequence;
  std::shared_ptr<const std::vector<IoRequest>> trace;
  double duration = 0.0;
  double base_bandwidth = 0.0;  // flush base, bytes/second
  std::uint64_t max_io = 0;
  std::vector<double> phase_starts;
};

inline ResolvedWorkload resolve_workload(const ExperimentConfig& cfg) {
  const auto& w = cfg.workload;
  ResolvedWorkload out;
  out.name = w.id;
  if (w.id == "trace") {
    auto trace = std::make_shared<std::vector<IoRequest>>(load_trace(w.trace_file));
    if (trace->empty()) throw ConfigError("workload.trace_file '" + w.trace_file + "' is empty");
    double bytes = 0.0;
    for (const auto& r : *trace) {
      bytes += static_cast<double>(r.size);
      out.max_io = std::max(out.max_io, r.size);
    }
    const double tick = cfg.sim.tick;
    out.duration = std::max(tick, std::ceil(trace->back().arrival_time / tick + 1e-9) * tick);
    out.base_bandwidth = cfg.base_bandwidth.value_or(bytes / out.duration / w.offered_load);
    out.trace = std::move(trace);
    out.phase_starts = {0.0};
    out.name = "trace:" + std::filesystem::path(w.trace_file).filename().string();
    return out;
  }

  WorkloadSequence seq;
  if (w.id == "changing") {
    seq = build_changing_sequence(w.phase_duration, 1.0, 0.0, w.arrival);
  } else {
    seq.phases.push_back(build_standard_spec(w.id, w.duration, 1.0, w.arrival));
  }
  for (const auto& p : seq.phases) out.max_io = std::max(out.max_io, p.io_size);
  out.base_bandwidth = cfg.base_bandwidth.value_or(kDefaultFlushBandwidth);
  const double offered = w.offered_load * out.base_bandwidth;
  for (auto& p : seq.phases) p.offered_rate = offered / static_cast<double>(p.io_size);
  seq.validate();
  out.duration = seq.total_duration();
  out.phase_starts = seq.phase_starts();
  out.sequence = std::move(seq);
  return out;
}

/// Pulls requests either from a generator or from a loaded trace.
class RequestSource {
 public:
  RequestSource(const ResolvedWorkload& w, std::uint64_t seed) : trace_(w.trace) {
    if (w.sequence) gen_.emplace(*w.sequence, seed);
  }

  std::optional<IoRequest> next() {
    if (gen_) return gen_->next();
    if (pos_ < trace_->size()) return (*trace_)[pos_++];
    return std::nullopt;
  }

 private:
  std::optional<TraceGenerator> gen_;
  std::shared_ptr<const std::vector<IoRequest>> trace_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// One (method, seed) run

struct TickRecord {
  std::int64_t t = 0;
  double I = 0.0;       // admitted into cache, bytes/second
  double O = 0.0;       // flushed, bytes/second
  double W = 0.0;       // percent
  double served = 0.0;  // cache plus storage-direct, bytes/second
  double grant = 0.0;   // bytes/second
  std::size_t queue_depth = 0;
  double p999_running = 0.0;  // seconds
};

struct DecisionRecord {
  std::int64_t t = 0;
  ControllerDecision decision;
};

struct RequestLatency {
  double arrival_time = 0.0;
  double latency = 0.0;
};

struct RunResult {
  Method method = Method::None;
  std::uint64_t seed = 0;
  MetricsReport report;
  std::vector<TickRecord> ticks;  // includes ticks spent draining after the trace ends
  std::int64_t trace_ticks = 0;
  std::vector<DecisionRecord> decisions;
  std::vector<RequestLatency> latencies;  // completion order
  std::optional<QTable> qtable;
  double controller_seconds = 0.0;
  std::uint64_t controller_ticks = 0;
  std::uint64_t unfinished = 0;
};

struct RunOptions {
  bool running_p999 = true;
  bool keep_latencies = true;
};

namespace detail {

inline std::uint64_t seed_for(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed, stream, 0x9e37);
}

enum : std::uint64_t { kTraceStream = 1, kFlushStream = 2, kControllerStream = 3 };

}  // namespace detail

inline std::uint64_t trace_seed(std::uint64_t seed) {
  return detail::seed_for(seed, detail::kTraceStream);
}

inline RunResult run_one(const ExperimentConfig& cfg, const ResolvedWorkload& wl, Method method,
                         std::uint64_t seed, const QTable* warm = nullptr,
                         const RunOptions& opts = {}) {
  RunResult res;
  res.method = method;
  res.seed = seed;

  const double tick = cfg.sim.tick;
  SimConfig sc = cfg.sim;
  sc.total_duration = wl.duration;
  sc.seed = seed;
  CacheModel cache;
  cache.capacity = cfg.cache_capacity.value_or(cfg.cache_seconds * wl.base_bandwidth);
  cache.overload_threshold = cfg.overload_threshold;
  FlushProcess fp = cfg.flush;
  fp.base_bandwidth = wl.base_bandwidth;
  fp.seed = detail::seed_for(seed, detail::kFlushStream);
  SimEnv env(sc, cache, fp);

  RequestSource source(wl, trace_seed(seed));
  std::optional<IoRequest> pending = source.next();

  const double min_grant = static_cast<double>(wl.max_io) / tick;
  const bool limited = method == Method::CoTo || method == Method::LQoCo;
  double grant = std::max(min_grant, cfg.initial_grant_factor * wl.base_bandwidth);
  TokenBucket bucket(cfg.bytes_per_token);

  std::optional<LQoCoController> ctrl;
  PeakFlushEstimator peak(cfg.lqoco.bands.bdp_max_decay, wl.base_bandwidth);
  if (method == Method::LQoCo) {
    LQoCoConfig lc = cfg.lqoco;
    lc.min_bandwidth = std::max(lc.min_bandwidth, min_grant);
    QTable q = warm ? *warm : make_control_qtable(lc.actions);
    ctrl.emplace(lc, std::move(q), wl.base_bandwidth,
                 detail::seed_for(seed, detail::kControllerStream));
  }
  CoToState coto{cfg.coto, std::nullopt, 0.0, 0.0};
  coto.cfg.floor = std::max(coto.cfg.floor, min_grant);
  LatencyEstimator bypass_est(cfg.bypass.window);

  res.trace_ticks = static_cast<std::int64_t>(std::llround(wl.duration / tick));
  const std::int64_t last_tick = res.trace_ticks + cfg.max_drain_ticks;

  RunningQuantile running(99.9);
  std::vector<double> all_latency;
  double served_bytes = 0.0;
  double latency_sum = 0.0;
  std::uint64_t n_requests = 0;

  auto record_latency = [&](double arrival, double latency) {
    all_latency.push_back(latency);
    latency_sum += latency;
    ++n_requests;
    if (opts.running_p999) running.add(latency);
    if (opts.keep_latencies) res.latencies.push_back({arrival, latency});
  };

  std::int64_t t = 0;
  for (;; ++t) {
    const bool trace_done = !pending;
    if (t >= res.trace_ticks && trace_done && env.queue_depth() == 0) break;
    if (t >= last_tick) break;

    const double tick_end = static_cast<double>(t + 1) * tick;
    while (pending && pending->arrival_time < tick_end) {
      env.enqueue(*pending);
      pending = source.next();
    }

    const double grant_bytes = limited ? grant * tick : env.queued_bytes();
    auto plan = env.plan_tick(grant_bytes);
    Route route = Route::Cache;
    if (method == Method::Bypass) route = bypass_route(bypass_est.estimate(), cfg.bypass);
    if (limited) {
      bucket.set_bandwidth(grant, tick);
      bucket.replenish();
    }
    auto batch = env.drain_host_queue([&](const IoRequest& r) {
      if (limited && !bucket.can_admit(r.size)) return false;
      if (!plan.accept(route, static_cast<double>(r.size))) return false;
      if (limited) bucket.try_admit(r.size);
      return true;
    });
    for (auto& q : batch) q.route = route;

    const SystemSample s = env.step(TickInputs{std::move(batch), grant_bytes});

    bool cache_seen = false;
    for (const auto& c : s.completed) {
      record_latency(c.arrival_time, c.latency);
      if (c.route == Route::Cache) {
        bypass_est.add(c.latency - c.queueing_delay);
        cache_seen = true;
      }
    }
    if (method == Method::Bypass && !cache_seen)
      bypass_est.add(env.overloaded() ? sc.storage_service_time : sc.cache_service_time);

    TickRecord rec;
    rec.t = s.t;
    rec.I = s.I;
    rec.O = s.O;
    rec.W = s.W;
    rec.served = s.I + s.bypassed;
    rec.grant = s.grant;
    rec.queue_depth = s.host_queue_depth;
    rec.p999_running = running.value();
    res.ticks.push_back(rec);
    if (t < res.trace_ticks) served_bytes += (s.I + s.bypassed) * tick;

    if (method == Method::CoTo) {
      grant = coto_decide(coto, s.W, grant, s.O);
    } else if (method == Method::LQoCo) {
      const auto t0 = std::chrono::steady_clock::now();
      const StateSample st = compute_state(s, peak);
      const DiscreteState d = discretize(st, cfg.lqoco.bands);
      const Classification cls = classify(d);
      const ControllerDecision dec = ctrl->tick(d, cls, st, grant);
      const auto t1 = std::chrono::steady_clock::now();
      res.controller_seconds += std::chrono::duration<double>(t1 - t0).count();
      ++res.controller_ticks;
      grant = dec.executed_I;
      res.decisions.push_back({s.t, dec});
    }
  }

  // Requests still queued when the drain cap is hit are charged their wait so far.
  const double end_time = static_cast<double>(t) * tick;
  for (const auto& q : env.host_queue()) {
    record_latency(q.request.arrival_time,
                   end_time - static_cast<double>(q.arrival_tick) * tick);
    ++res.unfinished;
  }
  while (pending) {
    record_latency(pending->arrival_time, std::max(0.0, end_time - pending->arrival_time));
    ++res.unfinished;
    pending = source.next();
  }

  auto& rep = res.report;
  rep.method = std::string(to_string(method));
  rep.workload = wl.name;
  rep.seed = seed;
  rep.duration = wl.duration;
  rep.window = cfg.window;
  rep.requests = n_requests;
  rep.mean_throughput = served_bytes / wl.duration;
  std::vector<double> served;
  std::vector<double> W;
  for (const auto& r : res.ticks) {
    if (r.t >= res.trace_ticks) break;
    served.push_back(r.served);
    W.push_back(r.W);
  }
  rep.jitter = served.empty() ? 0.0 : jitter(served);
  rep.mean_latency = n_requests ? latency_sum / static_cast<double>(n_requests) : 0.0;
  rep.p999_latency = all_latency.empty() ? 0.0 : percentile(std::move(all_latency), 99.9);
  rep.cache_full = cache_full_windows(W, cfg.overload_threshold, cfg.window, tick);
  if (ctrl) res.qtable = ctrl->learner().real();
  return res;
}

/// P99.9 over requests whose arrival lies in [lo, hi]; nullopt if none did.
inline std::optional<double> window_percentile(const std::vector<RequestLatency>& lat, double lo,
                                               double hi, double q = 99.9) {
  std::vector<double> v;
  for (const auto& r : lat)
    if (r.arrival_time >= lo && r.arrival_time <= hi) v.push_back(r.latency);
  if (v.empty()) return std::nullopt;
  return percentile(std::move(v), q);
}

// ---------------------------------------------------------------------------
// Log files

inline constexpr std::string_view kSamplesHeader = "#qoco-samples v1";
inline constexpr std::string_view kDecisionsHeader = "#qoco-decisions v1";

inline std::string run_stem(Method m, std::uint64_t seed) {
  return std::string(to_string(m)) + "-s" + std::to_string(seed);
}

/// Rows: t,I_t,O_t,W_t,queue_depth
inline void write_samples(const RunResult& r, const std::string& path) {
  auto out = open_for_write(path);
  out << kSamplesHeader << '\n';
  for (const auto& k : r.ticks) {
    out << k.t << ',' << format_double(k.I) << ',' << format_double(k.O) << ','
        << format_double(k.W) << ',' << k.queue_depth << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

/// Rows: t,source,action,recommended_I,executed_I,bound_rejected,learn,lb,ub,class
inline void write_decisions(const RunResult& r, const std::string& path) {
  auto out = open_for_write(path);
  out << kDecisionsHeader << '\n';
  for (const auto& [t, d] : r.decisions) {
    out << t << ',' << to_string(d.source) << ',' << d.action_label() << ','
        << format_double(d.recommended_I) << ',' << format_double(d.executed_I) << ','
        << (d.bound_rejected ? 1 : 0) << ',' << (d.learn ? 1 : 0) << ',' << format_double(d.lb)
        << ',' << format_double(d.ub) << ',' << to_string(d.cls) << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

struct DecisionRow {
  std::int64_t t = 0;
  std::string source;
  std::string action;
  double recommended_I = 0.0;
  double executed_I = 0.0;
  bool bound_rejected = false;
  bool learn = false;
  double lb = 0.0;
  double ub = 0.0;
  std::string cls;
};

inline std::vector<DecisionRow> load_decisions(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != kDecisionsHeader)
    throw ParseError(path, 1, "expected header '" + std::string(kDecisionsHeader) + "'");
  std::vector<DecisionRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const auto c = split(line, ',');
    DecisionRow r;
    int rej = 0;
    int learn = 0;
    if (c.size() != 10 || !parse_number(c[0], r.t) || !parse_number(c[3], r.recommended_I) ||
        !parse_number(c[4], r.executed_I) || !parse_number(c[5], rej) ||
        !parse_number(c[6], learn) || !parse_number(c[7], r.lb) || !parse_number(c[8], r.ub))
      throw ParseError(path, i + 1, "malformed decision row");
    r.source = std::string(c[1]);
    r.action = std::string(c[2]);
    r.bound_rejected = rej != 0;
    r.learn = learn != 0;
    r.cls = std::string(c[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Rows: t,I,O,W,p999_running
inline void write_tick_csv(const RunResult& r, const std::string& path) {
  auto out = open_for_write(path);
  out << "t,I,O,W,p999_running\n";
  for (const auto& k : r.ticks) {
    out << k.t << ',' << format_double(k.I) << ',' << format_double(k.O) << ','
        << format_double(k.W) << ',' << format_double(k.p999_running) << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

inline void write_run_files(const RunResult& r, const ExperimentConfig& cfg,
                            const std::filesystem::path& dir) {
  const auto stem = run_stem(r.method, r.seed);
  emit_report(r.report, (dir / ("report-" + stem + ".txt")).string());
  if (!cfg.write_logs) return;
  write_samples(r, (dir / ("samples-" + stem + ".csv")).string());
  write_tick_csv(r, (dir / ("ticks-" + stem + ".csv")).string());
  if (r.method == Method::LQoCo) {
    write_decisions(r, (dir / ("decisions-" + stem + ".csv")).string());
    if (r.qtable) save_qtable(*r.qtable, cfg.lqoco.bands, (dir / ("qtable-" + stem + ".txt")).string());
  }
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparisonRow {
  std::string method;
  double throughput = 0.0;
  double mean_latency = 0.0;
  double p999_latency = 0.0;
  double jitter = 0.0;
  double cache_full = 0.0;
  double r_throughput = 1.0;
  double r_mean_latency = 1.0;
  double r_p999_latency = 1.0;
  double r_jitter = 1.0;
  double r_cache_full = 1.0;
};

struct ComparisonTable {
  std::string workload;
  std::string baseline;
  std::vector<ComparisonRow> rows;
};

inline double safe_ratio(double a, double b) {
  if (b == 0.0) return a == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return a / b;
}

/// Rows keep the input order; ratios are against the "none" report when
/// present, otherwise against the first report.
inline ComparisonTable compare(const std::vector<MetricsReport>& reports) {
  if (reports.size() < 2) throw Error("compare needs at least 2 reports");
  for (const auto& r : reports)
    if (r.workload != reports.front().workload)
      throw Error("cannot compare reports from different workloads ('" + reports.front().workload +
                  "' vs '" + r.workload + "')");
  const MetricsReport* base = &reports.front();
  for (const auto& r : reports)
    if (r.method == "none") {
      base = &r;
      break;
    }
  ComparisonTable table;
  table.workload = reports.front().workload;
  table.baseline = base->method;
  for (const auto& r : reports) {
    ComparisonRow row;
    row.method = r.method;
    row.throughput = r.mean_throughput;
    row.mean_latency = r.mean_latency;
    row.p999_latency = r.p999_latency;
    row.jitter = r.jitter;
    row.cache_full = r.cache_full_total();
    row.r_throughput = safe_ratio(r.mean_throughput, base->mean_throughput);
    row.r_mean_latency = safe_ratio(r.mean_latency, base->mean_latency);
    row.r_p999_latency = safe_ratio(r.p999_latency, base->p999_latency);
    row.r_jitter = safe_ratio(r.jitter, base->jitter);
    row.r_cache_full = safe_ratio(row.cache_full, base->cache_full_total());
    table.rows.push_back(row);
  }
  return table;
}

inline void print_comparison(std::ostream& os, const ComparisonTable& t) {
  os << "workload " << t.workload << " (ratios vs " << t.baseline << ")\n";
  const auto old = os.flags();
  const auto prec = os.precision();
  auto cell = [&](double v, int width, int digits) {
    os << ' ' << std::setw(width) << std::fixed << std::setprecision(digits) << v;
  };
  os << std::left << std::setw(8) << "method" << std::right;
  for (const auto* h : {"MB/s", "x", "mean ms", "x", "p99.9 ms", "x", "jitter", "x", "full s", "x"})
    os << ' ' << std::setw(std::string_view(h) == "x" ? 8 : 12) << h;
  os << '\n';
  for (const auto& r : t.rows) {
    os << std::left << std::setw(8) << r.method << std::right;
    cell(r.throughput / (1024.0 * 1024.0), 12, 2);
    cell(r.r_throughput, 8, 2);
    cell(r.mean_latency * 1e3, 12, 3);
    cell(r.r_mean_latency, 8, 2);
    cell(r.p999_latency * 1e3, 12, 3);
    cell(r.r_p999_latency, 8, 2);
    cell(r.jitter, 12, 4);
    cell(r.r_jitter, 8, 2);
    cell(r.cache_full, 12, 0);
    cell(r.r_cache_full, 8, 2);
    os << '\n';
  }
  os.flags(old);
  os.precision(prec);
}

// ---------------------------------------------------------------------------
// Experiment

struct ExperimentResult {
  ResolvedWorkload workload;
  std::vector<RunResult> runs;  // seed-major, methods in config order
};

/// Runs every (method, seed) pair. Each run owns its state; up to
/// `cfg.workers` runs execute concurrently. Results come back in a fixed order.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {},
                                       bool write_files = true) {
  cfg.validate();
  ExperimentResult out;
  out.workload = resolve_workload(cfg);
  std::optional<QTable> warm;
  if (!cfg.warm_start.empty())
    warm = load_qtable(cfg.warm_start, cfg.lqoco.bands, cfg.lqoco.actions);

  const std::filesystem::path dir(cfg.output_dir);
  if (write_files) std::filesystem::create_directories(dir);

  struct Job {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto seed : cfg.seeds)
    for (const auto m : cfg.methods) jobs.push_back({m, seed});
  out.runs.resize(jobs.size());

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::optional<std::string> error;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out.runs[i] = run_one(cfg, out.workload, jobs[i].method, jobs[i].seed,
                              warm ? &*warm : nullptr, opts);
        if (write_files) write_run_files(out.runs[i], cfg, dir);
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (!error) error = e.what();
      }
    }
  };
  const std::size_t n = std::min(cfg.workers, jobs.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) throw Error(*error);

  if (write_files) {
    for (const auto seed : cfg.seeds) {
      std::vector<MetricsReport> reps;
      for (const auto& r : out.runs)
        if (r.seed == seed) reps.push_back(r.report);
      emit_reports(reps, (dir / ("report-s" + std::to_string(seed) + ".txt")).string());
    }
  }
  return out;
}

}  // namespace qoco
