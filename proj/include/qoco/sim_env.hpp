#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <vector>

#include "qoco/common.hpp"
#include "qoco/workload.hpp"

namespace qoco {

/// Stochastic destage bandwidth: gaussian jitter around a base rate plus
/// occasional multiplicative dips (background GC, aggregation).
struct FlushProcess {
  double base_bandwidth = 64.0 * 1024 * 1024;  // bytes/second
  double noise_cv = 0.05;
  double dip_rate = 0.0;      // dip starts per second
  double dip_depth = 0.0;     // fraction removed while a dip is active
  double dip_duration = 0.0;  // seconds
  std::uint64_t seed = 0;

  void validate() const {
    if (!(base_bandwidth > 0.0)) throw Error("flush base_bandwidth must be > 0");
    if (!(noise_cv >= 0.0)) throw Error("flush noise_cv must be >= 0");
    if (!(dip_rate >= 0.0)) throw Error("flush dip_rate must be >= 0");
    if (!(dip_depth >= 0.0 && dip_depth < 1.0)) throw Error("flush dip_depth must lie in [0,1)");
    if (!(dip_duration >= 0.0)) throw Error("flush dip_duration must be >= 0");
  }
};

/// True when a dip covers tick `t`. Pure in (seed, t).
inline bool dip_active(const FlushProcess& fp, std::int64_t t, double tick = 1.0) {
  if (fp.dip_rate <= 0.0 || fp.dip_depth <= 0.0 || fp.dip_duration <= 0.0) return false;
  const double p_start = 1.0 - std::exp(-fp.dip_rate * tick);
  const auto span = static_cast<std::int64_t>(std::ceil(fp.dip_duration / tick - 1e-12));
  for (std::int64_t s = std::max<std::int64_t>(0, t - span + 1); s <= t; ++s) {
    std::mt19937_64 rng(mix_seed(fp.seed, static_cast<std::uint64_t>(s), 2));
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_start) return true;
  }
  return false;
}

/// Flush bandwidth (bytes/second) available during tick `t`.
inline double flush_draw(const FlushProcess& fp, std::int64_t t, double tick = 1.0) {
  double o = fp.base_bandwidth;
  if (fp.noise_cv > 0.0) {
    std::mt19937_64 rng(mix_seed(fp.seed, static_cast<std::uint64_t>(t), 1));
    std::normal_distribution<double> noise(0.0, fp.noise_cv);
    o = std::max(0.0, fp.base_bandwidth * (1.0 + noise(rng)));
  }
  if (dip_active(fp, t, tick)) o *= (1.0 - fp.dip_depth);
  return o;
}

struct CacheModel {
  double capacity = 1024.0 * 1024 * 1024;  // bytes
  double occupied = 0.0;
  double overload_threshold = 100.0;  // percent

  double watermark() const { return 100.0 * occupied / capacity; }
  bool overloaded() const { return watermark() >= overload_threshold; }

  void validate() const {
    if (!(capacity > 0.0)) throw Error("cache capacity must be > 0");
    if (!(overload_threshold > 0.0 && overload_threshold <= 100.0))
      throw Error("overload_threshold must lie in (0,100]");
    if (!(occupied >= 0.0 && occupied <= capacity)) throw Error("cache occupancy out of range");
  }
};

struct SimConfig {
  double tick = 1.0;
  double total_duration = 1500.0;
  std::uint64_t seed = 0;
  double cache_service_time = 0.0001;
  double storage_service_time = 0.002;
  // While overloaded, admission is capped at this fraction of min(grant, flushed).
  double collapse_fraction = 0.1;
  // While overloaded, destage runs at this fraction of its drawn bandwidth.
  double overload_flush_efficiency = 0.7;

  void validate() const {
    if (!(tick > 0.0)) throw Error("sim tick must be > 0");
    if (!(total_duration >= tick)) throw Error("sim total_duration must be >= tick");
    if (!(cache_service_time >= 0.0 && storage_service_time >= 0.0))
      throw Error("service times must be >= 0");
    if (!(collapse_fraction >= 0.0 && collapse_fraction <= 0.1))
      throw Error("collapse_fraction must lie in [0,0.1]");
    if (!(overload_flush_efficiency > 0.0 && overload_flush_efficiency <= 1.0))
      throw Error("overload_flush_efficiency must lie in (0,1]");
  }
};

enum class Route : std::uint8_t { Cache, StorageDirect };

struct QueuedRequest {
  IoRequest request;
  std::int64_t arrival_tick = 0;
  Route route = Route::Cache;
};

struct Completion {
  std::uint64_t id = 0;
  double arrival_time = 0.0;
  double latency = 0.0;        // seconds, end to end
  double queueing_delay = 0.0; // seconds spent in the host queue
  Route route = Route::Cache;
};

struct SystemSample {
  std::int64_t t = 0;
  double I = 0.0;  // bytes/second admitted into the cache
  double O = 0.0;  // bytes/second flushed to the storage tier
  double W = 0.0;  // percent
  std::size_t host_queue_depth = 0;
  std::vector<Completion> completed;
  double bypassed = 0.0;        // bytes/second sent straight to storage
  double destage_demand = 0.0;  // bytes/second of new destage work
  double grant = 0.0;           // bytes/second the executor allowed
  bool overloaded = false;      // watermark was at/above threshold at tick start
};

struct TickInputs {
  std::vector<QueuedRequest> requests;  // FIFO order, each tagged with its route
  double grant_bytes = 0.0;             // executor allowance for this tick
};

/// Discrete-time model of the caching tier, the storage tier behind it and the
/// host-side queue in front of it.
class SimEnv {
 public:
  SimEnv(SimConfig cfg, CacheModel cache, FlushProcess flush)
      : cfg_(cfg), cache_(cache), flush_(flush) {
    cfg_.validate();
    cache_.validate();
    flush_.validate();
  }

  const SimConfig& config() const { return cfg_; }
  const CacheModel& cache() const { return cache_; }
  const FlushProcess& flush() const { return flush_; }
  std::int64_t tick_index() const { return t_; }
  double now() const { return static_cast<double>(t_) * cfg_.tick; }
  double watermark() const { return cache_.watermark(); }
  bool overloaded() const { return cache_.overloaded(); }

  std::size_t queue_depth() const { return queue_.size(); }
  double queued_bytes() const { return queued_bytes_; }
  const std::deque<QueuedRequest>& host_queue() const { return queue_; }

  void enqueue(const IoRequest& r) {
    QueuedRequest q;
    q.request = r;
    q.arrival_tick = static_cast<std::int64_t>(std::floor(r.arrival_time / cfg_.tick + 1e-9));
    queued_bytes_ += static_cast<double>(r.size);
    queue_.push_back(q);
  }

  /// FIFO pop while `admit(request)` accepts; stops at the first refusal.
  template <typename Admit>
  std::vector<QueuedRequest> drain_host_queue(Admit&& admit) {
    std::vector<QueuedRequest> out;
    while (!queue_.empty() && admit(queue_.front().request)) {
      queued_bytes_ -= static_cast<double>(queue_.front().request.size);
      out.push_back(queue_.front());
      queue_.pop_front();
    }
    if (queue_.empty()) queued_bytes_ = 0.0;
    return out;
  }

  /// Byte-budget form: admits FIFO until the next request would overrun the
  /// budget. Unused budget is discarded.
  std::vector<QueuedRequest> drain_host_queue(double budget_bytes) {
    double left = budget_bytes;
    return drain_host_queue([&left](const IoRequest& r) {
      const auto sz = static_cast<double>(r.size);
      if (sz > left) return false;
      left -= sz;
      return true;
    });
  }

  /// What the tiers can take during the current tick. `accept` reserves room
  /// for one request and refuses once the relevant budget is spent.
  struct TickPlan {
    bool overloaded = false;
    double capacity = 0.0;      // bytes the storage tier moves this tick
    double storage_left = 0.0;  // after storage-direct traffic
    double cache_budget = 0.0;
    double admitted = 0.0;
    double bypassed = 0.0;

    bool accept(Route route, double size) {
      if (route == Route::StorageDirect) {
        if (storage_left <= 0.0) return false;
        storage_left -= size;
        bypassed += size;
        return true;
      }
      if (overloaded) {
        if (admitted + size > cache_budget) return false;
      } else if (admitted >= cache_budget) {
        // The last request may overhang the free space; the overhang is
        // written through in the same tick.
        return false;
      }
      admitted += size;
      return true;
    }
  };

  TickPlan plan_tick(double grant_bytes) const {
    TickPlan p;
    p.overloaded = cache_.overloaded();
    p.capacity = flush_draw(flush_, t_, cfg_.tick) * cfg_.tick;
    if (p.overloaded) p.capacity *= cfg_.overload_flush_efficiency;
    p.storage_left = p.capacity;
    p.cache_budget = p.overloaded ? cfg_.collapse_fraction * std::min(grant_bytes, p.capacity)
                                  : cache_.capacity - cache_.occupied + p.capacity;
    return p;
  }

  /// Advances one tick. Requests the cache or storage tier cannot take this
  /// tick go back to the head of the host queue in their original order.
  SystemSample step(TickInputs in) {
    const double tick = cfg_.tick;
    TickPlan plan = plan_tick(in.grant_bytes);

    SystemSample s;
    s.t = t_;
    s.overloaded = plan.overloaded;
    s.grant = in.grant_bytes / tick;

    std::size_t accepted = 0;
    while (accepted < in.requests.size() &&
           plan.accept(in.requests[accepted].route,
                       static_cast<double>(in.requests[accepted].request.size)))
      ++accepted;
    for (std::size_t i = in.requests.size(); i-- > accepted;) {
      queued_bytes_ += static_cast<double>(in.requests[i].request.size);
      queue_.push_front(in.requests[i]);
    }

    const double admitted = plan.admitted;
    double flushed = std::min(std::max(0.0, plan.storage_left), cache_.occupied + admitted);
    double next = cache_.occupied + admitted - flushed;
    if (next > cache_.capacity) {
      flushed += next - cache_.capacity;
      next = cache_.capacity;
    }
    cache_.occupied = std::clamp(next, 0.0, cache_.capacity);

    for (std::size_t i = 0; i < accepted; ++i) {
      const auto& q = in.requests[i];
      Completion c;
      c.id = q.request.id;
      c.arrival_time = q.request.arrival_time;
      c.queueing_delay = static_cast<double>(std::max<std::int64_t>(0, t_ - q.arrival_tick)) * tick;
      c.route = q.route;
      const bool slow = q.route == Route::StorageDirect || plan.overloaded;
      c.latency = c.queueing_delay + (slow ? cfg_.storage_service_time : cfg_.cache_service_time);
      s.completed.push_back(c);
    }

    s.I = admitted / tick;
    s.O = flushed / tick;
    s.W = cache_.watermark();
    s.bypassed = plan.bypassed / tick;
    s.destage_demand = (admitted + plan.bypassed) / tick;
    s.host_queue_depth = queue_.size();
    ++t_;
    return s;
  }

 private:
  SimConfig cfg_;
  CacheModel cache_;
  FlushProcess flush_;
  std::deque<QueuedRequest> queue_;
  double queued_bytes_ = 0.0;
  std::int64_t t_ = 0;
};

}  // namespace qoco
