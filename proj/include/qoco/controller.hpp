#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>

#include "qoco/collector.hpp"
#include "qoco/common.hpp"
#include "qoco/rl_core.hpp"

namespace qoco {

// ---------------------------------------------------------------------------
// Adaptive bound

struct AdaptiveBoundConfig {
  double lb = 0.0;
  double ub = 0.0;
  std::size_t N = 30;    // better-state count that triggers a band refresh
  double v = 0.9;        // violation threshold
  double sigma = 0.15;   // band half-width as a fraction of the mean
  double delta = 0.5;    // accumulator decay

  void validate() const {
    if (!(lb >= 0.0 && lb <= ub)) throw ConfigError("adaptive bound needs 0 <= lb <= ub");
    if (N == 0) throw ConfigError("adaptive bound N must be >= 1");
    if (!(sigma >= 0.0 && sigma < 1.0)) throw ConfigError("adaptive bound sigma must lie in [0,1)");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("adaptive bound delta must lie in (0,1)");
    if (!(v > 0.0)) throw ConfigError("adaptive bound v must be > 0");
  }
};

/// Lower/upper band that vetoes out-of-range recommendations. The band
/// re-centres on recent recommendations after N better-state ticks and snaps
/// toward the policy after persistent violations.
class AdaptiveBound {
 public:
  explicit AdaptiveBound(const AdaptiveBoundConfig& cfg)
      : cfg_(cfg), lb_(cfg.lb), ub_(cfg.ub) {
    cfg_.validate();
  }

  double lb() const { return lb_; }
  double ub() const { return ub_; }
  std::size_t better_count() const { return c_b_; }
  double v_ub() const { return v_ub_; }
  double v_lb() const { return v_lb_; }
  const AdaptiveBoundConfig& config() const { return cfg_; }

  /// Returns (executed, rejected). Boundaries are inclusive.
  std::pair<double, bool> gate(double recommended, double previous) const {
    if (recommended >= lb_ && recommended <= ub_) return {recommended, false};
    return {previous, true};
  }

  void update(double recommended, bool better) {
    const double prev_rec = history_.empty() ? recommended : history_.back();
    history_.push_back(recommended);
    while (history_.size() > cfg_.N) history_.pop_front();

    if (better) ++c_b_;
    if (recommended > ub_) v_ub_ = (v_ub_ - 1.0) * cfg_.delta + 1.0;
    if (recommended < lb_) v_lb_ = (v_lb_ - 1.0) * cfg_.delta + 1.0;

    if (c_b_ >= cfg_.N) {
      const double mean = std::accumulate(history_.begin(), history_.end(), 0.0) /
                          static_cast<double>(history_.size());
      lb_ = mean * (1.0 - cfg_.sigma);
      ub_ = mean * (1.0 + cfg_.sigma);
      c_b_ = 0;
    }
    if (v_lb_ > cfg_.v) {
      lb_ = std::min(prev_rec, ub_);
      v_lb_ = 0.0;
    }
    if (v_ub_ > cfg_.v) {
      ub_ = std::max(prev_rec, lb_);
      v_ub_ = 0.0;
    }
  }

 private:
  AdaptiveBoundConfig cfg_;
  double lb_;
  double ub_;
  std::size_t c_b_ = 0;
  double v_ub_ = 0.0;
  double v_lb_ = 0.0;
  std::deque<double> history_;
};

// ---------------------------------------------------------------------------
// Decision loop

enum class DecisionSource : std::uint8_t { Policy, SafeAction, FineTune };

inline std::string_view to_string(DecisionSource s) {
  switch (s) {
    case DecisionSource::Policy: return "policy";
    case DecisionSource::SafeAction: return "safe_action";
    case DecisionSource::FineTune: return "fine_tune";
  }
  return "?";
}

struct ControllerDecision {
  double recommended_I = 0.0;
  double executed_I = 0.0;
  double rate = 0.0;
  std::optional<Action> action;  // empty for fine-tune steps
  DecisionSource source = DecisionSource::Policy;
  bool bound_rejected = false;
  bool learn = false;
  double lb = 0.0;
  double ub = 0.0;
  StateClass cls = StateClass::General;

  std::string action_label() const {
    if (action) return std::string(to_string(*action));
    if (rate > 0.0) return "FineTuneUp";
    if (rate < 0.0) return "FineTuneDown";
    return "FineTuneHold";
  }
};

struct LQoCoConfig {
  ActionSet actions;
  RewardWeights weights;
  RewardMode reward_mode = RewardMode::Lookup;
  LearnerConfig learner;
  DiscretizationConfig bands;
  double fine_tune_rate = 0.001;
  double fine_tune_deadband = 0.1;  // watermark points
  // Safe-action severity: fast steps when the triggering dimension is deep in its band.
  double fast_decrease_w = 90.0;
  double fast_decrease_b = 150.0;
  double fast_increase_w = 5.0;
  double fast_increase_b = 5.0;
  // Bound defaults relative to the flush-bandwidth estimate.
  double bound_lb_factor = 0.2;
  double bound_ub_factor = 5.0;
  std::size_t bound_N = 30;
  double bound_v = 0.9;
  double bound_sigma = 0.15;
  double bound_delta = 0.5;
  double floor_factor = 1e-3;  // positive floor on the bandwidth, relative to the estimate
  double min_bandwidth = 0.0;  // absolute floor, bytes/second

  void validate() const {
    actions.validate();
    weights.validate();
    learner.validate();
    bands.validate();
    if (!(fine_tune_rate >= 0.0 && fine_tune_rate < 0.01))
      throw ConfigError("fine_tune_rate must lie in [0,0.01)");
    if (!(fine_tune_deadband >= 0.0)) throw ConfigError("fine_tune_deadband must be >= 0");
    if (!(bound_lb_factor >= 0.0 && bound_lb_factor <= bound_ub_factor))
      throw ConfigError("bound factors need 0 <= lb_factor <= ub_factor");
    if (!(floor_factor > 0.0)) throw ConfigError("floor_factor must be > 0");
    if (!(min_bandwidth >= 0.0)) throw ConfigError("min_bandwidth must be >= 0");
  }

  AdaptiveBoundConfig bound_for(double flush_estimate) const {
    AdaptiveBoundConfig b;
    b.lb = bound_lb_factor * flush_estimate;
    b.ub = bound_ub_factor * flush_estimate;
    b.N = bound_N;
    b.v = bound_v;
    b.sigma = bound_sigma;
    b.delta = bound_delta;
    return b;
  }
};

/// Safe action for an extreme state; nullopt when the state is not extreme.
inline std::optional<Action> safe_action(const Classification& cls, const DiscreteState& d,
                                         const StateSample& s, const LQoCoConfig& cfg) {
  if (cls.extreme == Extreme::High) {
    const bool severe = (d.w == WLevel::High && s.W >= cfg.fast_decrease_w) ||
                        (d.b == BLevel::Overuse && s.B >= cfg.fast_decrease_b);
    return severe ? Action::FastDecrease : Action::SlowDecrease;
  }
  if (cls.extreme == Extreme::Low) {
    const bool severe = (d.w == WLevel::ExtremelyLow && s.W < cfg.fast_increase_w) ||
                        (d.b == BLevel::Underuse && s.B < cfg.fast_increase_b);
    return severe ? Action::FastIncrease : Action::SlowIncrease;
  }
  return std::nullopt;
}

/// The learned bandwidth controller: safe actions in extreme states, small
/// trend-following steps in better states, epsilon-greedy Q policy otherwise,
/// all passed through the adaptive bound.
class LQoCoController {
 public:
  LQoCoController(LQoCoConfig cfg, QTable initial, double flush_estimate, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        learner_(std::move(initial), cfg_.learner),
        bound_(cfg_.bound_for(flush_estimate)),
        floor_(std::max(cfg_.floor_factor * flush_estimate, cfg_.min_bandwidth)),
        rng_(mix_seed(seed, 0x1c0c0)) {
    cfg_.validate();
    if (learner_.real().states() != kNumStates || learner_.real().actions() != kNumActions)
      throw Error("controller needs a 36x5 Q table");
  }

  const LQoCoConfig& config() const { return cfg_; }
  const QLearner& learner() const { return learner_; }
  QLearner& learner() { return learner_; }
  const AdaptiveBound& bound() const { return bound_; }
  AdaptiveBound& bound() { return bound_; }
  std::uint64_t ticks() const { return t_; }

  /// Chooses the next bandwidth for state `d`; does not learn or move the bound.
  ControllerDecision decide(const DiscreteState& d, const Classification& cls,
                            const StateSample& s, double I_prev) {
    if (!(I_prev > 0.0)) throw Error("decide needs a positive previous bandwidth");
    ControllerDecision out;
    out.cls = cls.effective();
    if (auto safe = safe_action(cls, d, s, cfg_)) {
      out.source = DecisionSource::SafeAction;
      out.action = *safe;
      out.rate = cfg_.actions.rate(*safe);
    } else if (cls.is_better()) {
      out.source = DecisionSource::FineTune;
      const double dW = prev_W_ ? s.W - *prev_W_ : 0.0;
      if (dW < -cfg_.fine_tune_deadband) {
        out.rate = cfg_.fine_tune_rate;
      } else if (dW > cfg_.fine_tune_deadband) {
        out.rate = -cfg_.fine_tune_rate;
      }
    } else {
      out.source = DecisionSource::Policy;
      const auto a = static_cast<Action>(learner_.act(d.index(), rng_));
      out.action = a;
      out.rate = cfg_.actions.rate(a);
    }
    out.recommended_I = std::max(floor_, (1.0 + out.rate) * I_prev);
    auto [executed, rejected] = bound_.gate(out.recommended_I, I_prev);
    out.executed_I = executed;
    out.bound_rejected = rejected;
    out.learn = out.source == DecisionSource::Policy && !rejected;
    out.lb = bound_.lb();
    out.ub = bound_.ub();
    return out;
  }

  /// One control tick: credit the previous decision, run periodic learning,
  /// decide, then advance the adaptive bound.
  ControllerDecision tick(const DiscreteState& d, const Classification& cls, const StateSample& s,
                          double I_prev) {
    if (last_ && last_->learn) {
      Transition tr;
      tr.s_prev = last_state_.index();
      tr.a_prev = static_cast<std::size_t>(*last_->action);
      tr.reward = compute_reward(d, cfg_.weights, cfg_.reward_mode);
      tr.s_next = d.index();
      learner_.store(tr);
    }
    learner_.on_tick(t_, rng_);

    auto out = decide(d, cls, s, I_prev);
    bound_.update(out.recommended_I, cls.is_better());
    prev_W_ = s.W;
    last_ = out;
    last_state_ = d;
    ++t_;
    return out;
  }

 private:
  LQoCoConfig cfg_;
  QLearner learner_;
  AdaptiveBound bound_;
  double floor_;
  std::mt19937_64 rng_;
  std::optional<double> prev_W_;
  std::optional<ControllerDecision> last_;
  DiscreteState last_state_;
  std::uint64_t t_ = 0;
};

}  // namespace qoco
