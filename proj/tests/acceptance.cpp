// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mdp_oracle.hpp"
#include "qoco/baselines.hpp"
#include "qoco/config.hpp"
#include "qoco/controller.hpp"
#include "qoco/harness.hpp"
#include "qoco/metrics.hpp"
#include "qoco/qtable_io.hpp"
#include "qoco/sim_env.hpp"

using namespace qoco;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Pair {
  std::string workload;
  std::uint64_t seed = 0;
  RunResult none, coto, lqoco;
};

// ---------------------------------------------------------------------------

std::vector<Pair> run_standard(double& max_runtime) {
  const std::vector<std::string> workloads{"S-1", "S-3", "S-6", "S-9", "S-14"};
  RunOptions opts;
  opts.running_p999 = false;
  opts.keep_latencies = false;
  std::vector<Pair> pairs;
  for (const auto& id : workloads) {
    ExperimentConfig cfg;
    cfg.workload.id = id;
    cfg.workload.duration = 1500;
    cfg.workload.offered_load = 1.6;
    const auto wl = resolve_workload(cfg);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Pair p;
      p.workload = id;
      p.seed = seed;
      for (auto [m, dst] : {std::pair{Method::None, &p.none}, std::pair{Method::CoTo, &p.coto},
                            std::pair{Method::LQoCo, &p.lqoco}}) {
        const auto t0 = Clock::now();
        *dst = run_one(cfg, wl, m, seed, nullptr, opts);
        max_runtime = std::max(max_runtime, seconds_since(t0));
      }
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

void criteria_1_to_3(const std::vector<Pair>& pairs, double max_runtime) {
  std::size_t c1 = 0, c2 = 0, c3 = 0;
  std::map<std::string, std::vector<double>> ratio_by_wl;
  for (const auto& p : pairs) {
    const auto& n = p.none.report;
    const auto& c = p.coto.report;
    const auto& l = p.lqoco.report;
    if (l.jitter <= 0.5 * n.jitter) ++c1;
    if (l.cache_full_total() <= 0.5 * n.cache_full_total()) ++c2;
    if (l.jitter <= c.jitter && l.mean_throughput >= 0.95 * c.mean_throughput) ++c3;
    ratio_by_wl[p.workload].push_back(l.jitter / n.jitter);
  }
  const double n = static_cast<double>(pairs.size());
  double lq_full = 0, nc_full = 0, lq_j = 0, nc_j = 0, co_j = 0, lq_tp = 0, co_tp = 0;
  for (const auto& p : pairs) {
    lq_full += p.lqoco.report.cache_full_total();
    nc_full += p.none.report.cache_full_total();
    lq_j += p.lqoco.report.jitter;
    nc_j += p.none.report.jitter;
    co_j += p.coto.report.jitter;
    lq_tp += p.lqoco.report.mean_throughput;
    co_tp += p.coto.report.mean_throughput;
  }
  verdict(1, c1 >= 0.8 * n && max_runtime <= 120.0,
          fmt("jitter<=0.5x none on %.0f/%.0f pairs; mean jitter lqoco %.4f none %.4f", c1, n,
              lq_j / n, nc_j / n) +
              fmt("; slowest run %.2f s", max_runtime));
  verdict(2, c2 >= 0.8 * n,
          fmt("cache-full<=0.5x none on %.0f/%.0f pairs; total seconds lqoco %.0f none %.0f", c2, n,
              lq_full, nc_full));
  verdict(3, c3 >= 0.7 * n,
          fmt("jitter<=coto and throughput>=0.95x coto on %.0f/%.0f pairs; mean jitter coto %.4f",
              c3, n, co_j / n) +
              fmt("; throughput lqoco/coto %.3f", lq_tp / co_tp));
}

// ---------------------------------------------------------------------------

void criterion_4() {
  ExperimentConfig cfg;
  cfg.workload.id = "changing";
  cfg.workload.phase_duration = 150;
  const auto wl = resolve_workload(cfg);
  RunOptions opts;
  opts.running_p999 = false;
  std::size_t windows = 0, won = 0;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto none = run_one(cfg, wl, Method::None, seed, nullptr, opts);
    const auto lq = run_one(cfg, wl, Method::LQoCo, seed, nullptr, opts);
    for (std::size_t i = 1; i < wl.phase_starts.size(); ++i) {
      const double b = wl.phase_starts[i];
      const auto pn = window_percentile(none.latencies, b - 60, b + 60);
      const auto pl = window_percentile(lq.latencies, b - 60, b + 60);
      ++windows;
      if (pn && pl && *pl < *pn) ++won;
      if (pn && pl) worst = std::max(worst, *pl / *pn);
    }
  }
  verdict(4, won == windows && windows > 0,
          fmt("lqoco p99.9 < none in %.0f/%.0f boundary windows (3 seeds); worst ratio %.3f", won,
              windows, worst));
}

// ---------------------------------------------------------------------------

void criterion_5() {
  const auto t0 = Clock::now();
  int ok = 0;
  std::uint64_t max_updates = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = mdp::train(seed);
    if (r.converged && r.updates <= 50000) ++ok;
    max_updates = std::max(max_updates, r.updates);
  }
  const double secs = seconds_since(t0);
  verdict(5, ok == 10 && secs < 5.0,
          fmt("%.0f/10 seeds within 1e-3 of Q*; most updates %.0f; %.3f s", ok,
              static_cast<double>(max_updates), secs));
}

// ---------------------------------------------------------------------------

bool watermark_recomputation() {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FlushProcess fp;
    fp.base_bandwidth = 1000;
    fp.noise_cv = 0.2;
    fp.dip_rate = 0.02;
    fp.dip_depth = 0.5;
    fp.dip_duration = 5;
    fp.seed = seed;
    CacheModel c;
    c.capacity = 5000;
    SimEnv env(SimConfig{}, c, fp);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint64_t> size(1, 300);
    std::uniform_real_distribution<double> grant(0, 3000);
    std::uint64_t id = 0;
    double net = 0;
    for (int t = 0; t < 400; ++t) {
      for (int i = 0; i < 10; ++i) {
        IoRequest r;
        r.id = id++;
        r.size = size(rng);
        r.arrival_time = t;
        env.enqueue(r);
      }
      const double g = grant(rng);
      auto batch = env.drain_host_queue(g);
      const auto s = env.step({std::move(batch), g});
      net += s.I - s.O;
      const double W = 100.0 * net / c.capacity;
      if (std::abs(W - s.W) > 1e-9 * std::max(1.0, std::abs(s.W))) return false;
    }
  }
  return true;
}

bool jitter_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1e7);
  std::uniform_int_distribution<int> len(1, 2000);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> xs(static_cast<std::size_t>(len(rng)));
    for (auto& x : xs) x = u(rng);
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    if (jitter(xs) != std::sqrt(var) / mean) return false;
  }
  return true;
}

bool percentile_oracle() {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len(1, 10000);
  std::uniform_int_distribution<std::size_t> q10(1, 1000);
  std::exponential_distribution<double> e(3.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> xs(len(rng));
    for (auto& x : xs) x = e(rng);
    const std::size_t q = q10(rng);
    auto sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t num = q * xs.size();
    const std::size_t rank = std::max<std::size_t>(1, num / 1000 + (num % 1000 ? 1 : 0));
    if (percentile(xs, static_cast<double>(q) / 10.0) != sorted[rank - 1]) return false;
  }
  std::vector<double> ladder;
  for (int i = 1; i <= 1000; ++i) ladder.push_back(i);
  return percentile(ladder, 99.9) == 999.0;
}

bool reward_extremes() {
  const RewardWeights w;
  double hi = -1e9, lo = 1e9;
  for (std::size_t i = 0; i < kNumStates; ++i) {
    const auto d = DiscreteState::from_index(i);
    const double r = compute_reward(d, w, RewardMode::Lookup);
    if (classify(d).is_better() != (r == 0.75)) return false;
    hi = std::max(hi, r);
    lo = std::min(lo, r);
  }
  const DiscreteState minus{WLevel::High, PLevel::High, BLevel::Overuse};
  return hi == 0.75 && lo == -1.0 && compute_reward(minus, w, RewardMode::Lookup) == -1.0;
}

bool coto_examples() {
  CoToState a;
  coto_decide(a, 90, 100, 100);
  const double high = coto_decide(a, 90, 100, 100);
  CoToState b;
  coto_decide(b, 50, 100, 100);
  const double mid = coto_decide(b, 55, 100, 100);
  CoToState c;
  coto_decide(c, 50, 110, 100);
  const double change = coto_decide(c, 85, 110, 100);
  return high == 95.0 && mid == 100.0 && c.last_alpha == (2.0 - 1.0) / 3.0 * (10.0 / 100.0) &&
         change == (1.0 + c.last_alpha) * 110.0 && std::abs(change / 110.0 - 1.0333) < 1e-4;
}

bool bound_examples() {
  AdaptiveBoundConfig r;
  r.lb = 0;
  r.ub = 1000;
  r.N = 3;
  r.sigma = 0.2;
  AdaptiveBound refresh(r);
  for (double x : {90.0, 100.0, 110.0}) refresh.update(x, true);
  const bool refreshed = refresh.lb() == 80.0 && refresh.ub() == 120.0 && refresh.better_count() == 0;

  AdaptiveBoundConfig v;
  v.lb = 0;
  v.ub = 100;
  AdaptiveBound viol(v);
  std::vector<double> seen;
  for (double x : {200.0, 210.0, 220.0}) {
    viol.update(x, false);
    seen.push_back(viol.v_ub());
  }
  const bool recurrence = seen == std::vector<double>{0.5, 0.75, 0.875} && viol.ub() == 100.0;
  viol.update(230, false);  // accumulator would read 0.9375 > 0.9
  const bool snapped = viol.ub() == 220.0 && viol.v_ub() == 0.0;
  return refreshed && recurrence && snapped && (0.875 - 1.0) * 0.5 + 1.0 == 0.9375;
}

void criterion_6() {
  const bool w = watermark_recomputation();
  const bool j = jitter_oracle();
  const bool p = percentile_oracle();
  const bool r = reward_extremes();
  const bool c = coto_examples();
  const bool b = bound_examples();
  std::string d = std::string("watermark ") + (w ? "ok" : "BAD") + ", jitter " + (j ? "ok" : "BAD") +
                  ", percentile " + (p ? "ok" : "BAD") + ", reward " + (r ? "ok" : "BAD") +
                  ", coto " + (c ? "ok" : "BAD") + ", bound " + (b ? "ok" : "BAD");
  verdict(6, w && j && p && r && c && b, d);
}

// ---------------------------------------------------------------------------

struct GateStats {
  std::size_t extreme = 0, rejected = 0, windows = 0, violations = 0;
};

void check_decisions(const std::vector<DecisionRow>& rows, double initial_grant, GateStats& g) {
  double prev = initial_grant;
  for (const auto& r : rows) {
    if (r.cls == "ExtremeHigh" || r.cls == "ExtremeLow") {
      ++g.extreme;
      const bool down = r.action == "FastDecrease" || r.action == "SlowDecrease";
      const bool up = r.action == "FastIncrease" || r.action == "SlowIncrease";
      if (r.learn || (r.cls == "ExtremeHigh" ? !down : !up)) ++g.violations;
    }
    if (r.bound_rejected) {
      ++g.rejected;
      if (r.executed_I != prev) ++g.violations;
    }
    prev = r.executed_I;
  }
}

void check_bucket(const RunResult& r, std::uint64_t max_io, double tick, GateStats& g) {
  const std::size_t M = 10;
  if (r.ticks.size() < M) return;
  for (std::size_t i = 0; i + M <= r.ticks.size(); ++i) {
    double admitted = 0, allowed = 0;
    for (std::size_t k = i; k < i + M; ++k) {
      admitted += r.ticks[k].served * tick;
      allowed += r.ticks[k].grant * tick;
    }
    ++g.windows;
    if (admitted > allowed + static_cast<double>(max_io) + 1e-6 * allowed) ++g.violations;
  }
}

void criterion_7(const std::vector<Pair>& pairs) {
  GateStats g;
  const fs::path dir = fs::temp_directory_path() / "qoco_acceptance_gating";
  fs::remove_all(dir);
  // Full run logs written to disk and read back, one per workload.
  for (const auto& id : {"S-1", "S-3", "S-6", "S-9", "S-14"}) {
    ExperimentConfig cfg;
    cfg.workload.id = id;
    cfg.methods = {Method::LQoCo};
    cfg.seeds = {7};
    cfg.output_dir = (dir / id).string();
    RunOptions opts;
    opts.running_p999 = false;
    opts.keep_latencies = false;
    const auto res = run_experiment(cfg, opts);
    const double initial = std::max(static_cast<double>(res.workload.max_io) / cfg.sim.tick,
                                    cfg.initial_grant_factor * res.workload.base_bandwidth);
    check_decisions(load_decisions((dir / id / "decisions-lqoco-s7.csv").string()), initial, g);
    check_bucket(res.runs[0], res.workload.max_io, cfg.sim.tick, g);
  }
  // In-memory logs of every rate-limited run from criteria 1-3.
  for (const auto& p : pairs) {
    ExperimentConfig cfg;
    cfg.workload.id = p.workload;
    const auto wl = resolve_workload(cfg);
    std::vector<DecisionRow> rows;
    for (const auto& [t, d] : p.lqoco.decisions) {
      DecisionRow r;
      r.t = t;
      r.action = d.action_label();
      r.executed_I = d.executed_I;
      r.bound_rejected = d.bound_rejected;
      r.learn = d.learn;
      r.cls = std::string(to_string(d.cls));
      rows.push_back(std::move(r));
    }
    const double initial = std::max(static_cast<double>(wl.max_io) / cfg.sim.tick,
                                    cfg.initial_grant_factor * wl.base_bandwidth);
    check_decisions(rows, initial, g);
    check_bucket(p.lqoco, wl.max_io, cfg.sim.tick, g);
    check_bucket(p.coto, wl.max_io, cfg.sim.tick, g);
  }
  verdict(7, g.violations == 0 && g.extreme > 0 && g.windows > 0,
          fmt("%.0f extreme ticks, %.0f rejected ticks, %.0f bucket windows, %.0f violations",
              g.extreme, g.rejected, g.windows, g.violations));
}

// ---------------------------------------------------------------------------

void criterion_8() {
  const fs::path root = fs::temp_directory_path() / "qoco_acceptance_determinism";
  fs::remove_all(root);
  ExperimentConfig cfg;
  cfg.workload.id = "S-6";
  cfg.methods = {Method::None, Method::CoTo, Method::Bypass, Method::LQoCo};
  cfg.seeds = {3};
  RunOptions opts;
  opts.keep_latencies = false;
  for (const auto* sub : {"a", "b"}) {
    cfg.output_dir = (root / sub).string();
    run_experiment(cfg, opts);
  }
  std::size_t files = 0, same = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    const auto name = e.path().filename().string();
    const bool wanted = name.rfind("report-", 0) == 0 || name.rfind("samples-", 0) == 0 ||
                        name.rfind("decisions-", 0) == 0;
    if (!wanted) continue;
    ++files;
    const auto a = slurp(e.path());
    if (!a.empty() && a == slurp(root / "b" / name)) ++same;
  }
  verdict(8, files >= 9 && same == files,
          fmt("%.0f/%.0f report, sample and decision files byte-identical", same, files));
}

// ---------------------------------------------------------------------------

void criterion_9() {
  ExperimentConfig cfg;
  cfg.workload.id = "S-3";
  cfg.workload.duration = 1500;
  const auto wl = resolve_workload(cfg);
  RunOptions opts;
  opts.running_p999 = false;
  opts.keep_latencies = false;
  const auto r = run_one(cfg, wl, Method::LQoCo, 1, nullptr, opts);
  const double per_tick = r.controller_seconds / static_cast<double>(r.controller_ticks);
  const fs::path path = fs::temp_directory_path() / "qoco_acceptance_qtable.txt";
  save_qtable(*r.qtable, cfg.lqoco.bands, path.string());
  const auto bytes = static_cast<double>(fs::file_size(path));
  verdict(9, per_tick < 1e-3 && bytes < 100.0 * 1024 && r.controller_ticks >= 1500,
          fmt("%.2f us per controller tick over %.0f ticks; Q table file %.0f bytes",
              per_tick * 1e6, static_cast<double>(r.controller_ticks), bytes));
}

}  // namespace

int main() {
  try {
    double max_runtime = 0;
    const auto t0 = Clock::now();
    const auto pairs = run_standard(max_runtime);
    std::printf("standard runs: %zu pairs x 3 methods in %.1f s\n", pairs.size(), seconds_since(t0));
    criteria_1_to_3(pairs, max_runtime);
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7(pairs);
    criterion_8();
    criterion_9();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%s (%d failing)\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
