#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "qoco/common.hpp"
#include "qoco/sim_env.hpp"

namespace qoco {

enum class WLevel : std::uint8_t { ExtremelyLow, Low, Mid, High };
enum class PLevel : std::uint8_t { Low, Mid, High };
enum class BLevel : std::uint8_t { Underuse, Fulluse, Overuse };

inline constexpr std::size_t kWLevels = 4;
inline constexpr std::size_t kPLevels = 3;
inline constexpr std::size_t kBLevels = 3;
inline constexpr std::size_t kNumStates = kWLevels * kPLevels * kBLevels;

inline constexpr std::array<std::string_view, kWLevels> kWNames{"ExtremelyLow", "Low", "Mid",
                                                                 "High"};
inline constexpr std::array<std::string_view, kPLevels> kPNames{"Low", "Mid", "High"};
inline constexpr std::array<std::string_view, kBLevels> kBNames{"Underuse", "Fulluse", "Overuse"};

inline std::string_view to_string(WLevel v) { return kWNames[static_cast<std::size_t>(v)]; }
inline std::string_view to_string(PLevel v) { return kPNames[static_cast<std::size_t>(v)]; }
inline std::string_view to_string(BLevel v) { return kBNames[static_cast<std::size_t>(v)]; }

template <typename E, std::size_t N>
std::optional<E> level_from_name(std::string_view name,
                                 const std::array<std::string_view, N>& names) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == name) return static_cast<E>(i);
  return std::nullopt;
}

/// Continuous state observed at the end of a tick.
struct StateSample {
  double W = 0.0;  // percent
  double P = 0.0;  // (I - O) / O
  double B = 0.0;  // percent of estimated peak flush bandwidth
  bool p_unbounded = false;  // O was zero; P is treated as +inf
};

struct DiscreteState {
  WLevel w = WLevel::ExtremelyLow;
  PLevel p = PLevel::Low;
  BLevel b = BLevel::Underuse;

  std::size_t index() const {
    return static_cast<std::size_t>(w) * kPLevels * kBLevels +
           static_cast<std::size_t>(p) * kBLevels + static_cast<std::size_t>(b);
  }

  static DiscreteState from_index(std::size_t i) {
    DiscreteState d;
    d.w = static_cast<WLevel>(i / (kPLevels * kBLevels));
    d.p = static_cast<PLevel>((i / kBLevels) % kPLevels);
    d.b = static_cast<BLevel>(i % kBLevels);
    return d;
  }

  friend bool operator==(const DiscreteState&, const DiscreteState&) = default;
};

/// Band edges. W: [0,w0) [w0,w1) [w1,w2) [w2,100]. P: (-inf,p0] (p0,p1) [p1,inf).
/// B: [0,b0) [b0,b1) [b1,inf).
struct DiscretizationConfig {
  std::array<double, 3> w_edges{10.0, 30.0, 80.0};
  std::array<double, 2> p_edges{-0.1, 0.1};
  std::array<double, 2> b_edges{15.0, 100.0};
  double bdp_max_decay = 0.999;

  void validate() const {
    if (!(w_edges[0] > 0.0 && w_edges[0] < w_edges[1] && w_edges[1] < w_edges[2] &&
          w_edges[2] <= 100.0))
      throw ConfigError("watermark band edges must be strictly increasing within (0,100]");
    if (!(p_edges[0] < p_edges[1])) throw ConfigError("processing-ability edges must increase");
    if (!(b_edges[0] > 0.0 && b_edges[0] < b_edges[1]))
      throw ConfigError("BDP band edges must be positive and increasing");
    if (!(bdp_max_decay > 0.0 && bdp_max_decay <= 1.0))
      throw ConfigError("bdp_max_decay must lie in (0,1]");
  }

  friend bool operator==(const DiscretizationConfig&, const DiscretizationConfig&) = default;
};

inline WLevel discretize_w(double W, const DiscretizationConfig& cfg) {
  if (W < cfg.w_edges[0]) return WLevel::ExtremelyLow;
  if (W < cfg.w_edges[1]) return WLevel::Low;
  if (W < cfg.w_edges[2]) return WLevel::Mid;
  return WLevel::High;
}

inline PLevel discretize_p(double P, const DiscretizationConfig& cfg) {
  if (P <= cfg.p_edges[0]) return PLevel::Low;
  if (P < cfg.p_edges[1]) return PLevel::Mid;
  return PLevel::High;
}

inline BLevel discretize_b(double B, const DiscretizationConfig& cfg) {
  if (B < cfg.b_edges[0]) return BLevel::Underuse;
  if (B < cfg.b_edges[1]) return BLevel::Fulluse;
  return BLevel::Overuse;
}

inline DiscreteState discretize(const StateSample& s, const DiscretizationConfig& cfg) {
  DiscreteState d;
  d.w = discretize_w(s.W, cfg);
  d.p = s.p_unbounded ? PLevel::High : discretize_p(s.P, cfg);
  d.b = discretize_b(s.B, cfg);
  return d;
}

/// Decayed running maximum of observed flush bandwidth.
class PeakFlushEstimator {
 public:
  explicit PeakFlushEstimator(double decay = 0.999, double initial = 0.0)
      : decay_(decay), estimate_(initial) {}

  double observe(double O) {
    estimate_ = std::max(O, estimate_ * decay_);
    return estimate_;
  }

  double estimate() const { return estimate_; }

 private:
  double decay_;
  double estimate_;
};

inline StateSample compute_state(const SystemSample& sample, PeakFlushEstimator& peak) {
  StateSample s;
  s.W = sample.W;
  if (sample.O > 0.0) {
    s.P = (sample.I - sample.O) / sample.O;
  } else if (sample.I > 0.0) {
    s.P = std::numeric_limits<double>::infinity();
    s.p_unbounded = true;
  } else {
    // Idle tick: nothing in, nothing out.
    s.P = 0.0;
  }
  const double est = peak.observe(sample.O);
  s.B = est > 0.0 ? 100.0 * sample.destage_demand / est : 0.0;
  return s;
}

enum class StateCategory : std::uint8_t { Better, Worse, General };
enum class Extreme : std::uint8_t { None, High, Low };
enum class StateClass : std::uint8_t { Better, Worse, General, ExtremeHigh, ExtremeLow };

inline std::string_view to_string(StateClass c) {
  switch (c) {
    case StateClass::Better: return "Better";
    case StateClass::Worse: return "Worse";
    case StateClass::General: return "General";
    case StateClass::ExtremeHigh: return "ExtremeHigh";
    case StateClass::ExtremeLow: return "ExtremeLow";
  }
  return "?";
}

struct Classification {
  StateCategory category = StateCategory::General;
  Extreme extreme = Extreme::None;

  /// Extreme classes take precedence for action selection.
  StateClass effective() const {
    if (extreme == Extreme::High) return StateClass::ExtremeHigh;
    if (extreme == Extreme::Low) return StateClass::ExtremeLow;
    switch (category) {
      case StateCategory::Better: return StateClass::Better;
      case StateCategory::Worse: return StateClass::Worse;
      case StateCategory::General: return StateClass::General;
    }
    return StateClass::General;
  }

  bool is_better() const { return category == StateCategory::Better; }
};

inline Classification classify(const DiscreteState& d) {
  Classification c;
  if (d.w == WLevel::Mid && d.p == PLevel::Mid && d.b == BLevel::Fulluse) {
    c.category = StateCategory::Better;
  } else if (d.w == WLevel::High && d.p != PLevel::Mid && d.b == BLevel::Overuse) {
    c.category = StateCategory::Worse;
  }
  const bool high = d.w == WLevel::High || d.p == PLevel::High || d.b == BLevel::Overuse;
  const bool low = d.w == WLevel::ExtremelyLow || d.p == PLevel::Low || d.b == BLevel::Underuse;
  if (high) {
    c.extreme = Extreme::High;
  } else if (low) {
    c.extreme = Extreme::Low;
  }
  return c;
}

}  // namespace qoco
