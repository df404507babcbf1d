#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "qoco/common.hpp"
#include "qoco/sim_env.hpp"

namespace qoco {

// ---------------------------------------------------------------------------
// CoTo: three-band watermark state machine.

enum class CoToBand : std::uint8_t { Low, Mid, High };

enum class CoToDeltaUnits : std::uint8_t { BandIndex, Percent };

struct CoToConfig {
  double low_edge = 20.0;   // Low is [0, low_edge)
  double high_edge = 80.0;  // High is [high_edge, 100]
  double rate = 0.05;
  CoToDeltaUnits delta_units = CoToDeltaUnits::BandIndex;
  double floor = 1.0;  // bytes/second

  void validate() const {
    if (!(low_edge > 0.0 && low_edge < high_edge && high_edge <= 100.0))
      throw ConfigError("coto band edges must satisfy 0 < low < high <= 100");
    if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("coto rate must lie in (0,1)");
    if (!(floor > 0.0)) throw ConfigError("coto floor must be > 0");
  }
};

inline CoToBand coto_band(double W, const CoToConfig& cfg) {
  if (W < cfg.low_edge) return CoToBand::Low;
  if (W < cfg.high_edge) return CoToBand::Mid;
  return CoToBand::High;
}

struct CoToState {
  CoToConfig cfg;
  std::optional<CoToBand> prev_band;
  double prev_W = 0.0;
  double last_alpha = 0.0;
};

/// Next bandwidth from the watermark, the current bandwidth and the flush rate.
inline double coto_decide(CoToState& st, double W, double I, double O) {
  const CoToBand band = coto_band(W, st.cfg);
  double alpha = 0.0;
  if (st.prev_band && band != *st.prev_band) {
    const double dW = st.cfg.delta_units == CoToDeltaUnits::BandIndex
                          ? static_cast<double>(band) - static_cast<double>(*st.prev_band)
                          : W - st.prev_W;
    const double change = O > 0.0 ? std::abs(I - O) / O : 0.0;
    alpha = dW / 3.0 * change;
  } else if (band == CoToBand::High) {
    alpha = -st.cfg.rate;
  } else if (band == CoToBand::Low) {
    alpha = st.cfg.rate;
  }
  st.prev_band = band;
  st.prev_W = W;
  st.last_alpha = alpha;
  return std::max(st.cfg.floor, (1.0 + alpha) * I);
}

// ---------------------------------------------------------------------------
// Bypass: latency-threshold routing to the storage tier.

struct BypassConfig {
  double latency_threshold = 0.001;  // seconds
  std::size_t window = 100;

  void validate() const {
    if (!(latency_threshold > 0.0)) throw ConfigError("bypass latency_threshold must be > 0");
    if (window == 0) throw ConfigError("bypass window must be >= 1");
  }
};

/// Moving average over the most recent `window` latency samples; 0 when empty.
class LatencyEstimator {
 public:
  explicit LatencyEstimator(std::size_t window = 100) : ring_(window, 0.0) {}

  void add(double latency) {
    if (count_ == ring_.size()) sum_ -= ring_[head_];
    ring_[head_] = latency;
    sum_ += latency;
    head_ = (head_ + 1) % ring_.size();
    count_ = std::min(count_ + 1, ring_.size());
  }

  double estimate() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }
  std::size_t count() const { return count_; }

 private:
  std::vector<double> ring_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  double sum_ = 0.0;
};

inline Route bypass_route(double latency_estimate, const BypassConfig& cfg) {
  return latency_estimate > cfg.latency_threshold ? Route::StorageDirect : Route::Cache;
}

// ---------------------------------------------------------------------------
// No control: the offered load passes straight through.

inline double no_control(double offered) { return offered; }

}  // namespace qoco
