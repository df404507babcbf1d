#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "qoco/collector.hpp"
#include "qoco/common.hpp"

namespace qoco {

// ---------------------------------------------------------------------------
// Actions

enum class Action : std::uint8_t { FastDecrease, SlowDecrease, Keep, SlowIncrease, FastIncrease };

inline constexpr std::size_t kNumActions = 5;
inline constexpr std::array<std::string_view, kNumActions> kActionNames{
    "FastDecrease", "SlowDecrease", "Keep", "SlowIncrease", "FastIncrease"};

inline std::string_view to_string(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }

/// Adjustment rate applied as I_next = (1 + rate) * I_prev.
struct ActionSet {
  std::array<double, kNumActions> rates{-0.03, -0.01, 0.0, 0.01, 0.03};

  double rate(Action a) const { return rates[static_cast<std::size_t>(a)]; }
  static bool is_decrease(Action a) { return a == Action::FastDecrease || a == Action::SlowDecrease; }
  static bool is_increase(Action a) { return a == Action::FastIncrease || a == Action::SlowIncrease; }

  void validate() const {
    if (rates[2] != 0.0) throw ConfigError("Keep must be exactly 0");
    for (std::size_t i = 1; i < kNumActions; ++i)
      if (!(rates[i - 1] < rates[i])) throw ConfigError("action rates must be strictly increasing");
    if (!(rates[0] > -1.0)) throw ConfigError("decrease rates must stay above -100%");
  }

  /// Smallest magnitude first, decrease before increase on equal magnitude.
  std::vector<std::size_t> preference_order() const {
    std::vector<std::size_t> order(kNumActions);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
      const double ma = std::abs(rates[a]);
      const double mb = std::abs(rates[b]);
      if (ma != mb) return ma < mb;
      return rates[a] < rates[b];
    });
    return order;
  }
};

// ---------------------------------------------------------------------------
// Reward

struct RewardWeights {
  double f_W = 0.5;
  double f_P = 0.25;
  double f_B = 0.25;

  void validate() const {
    if (f_W < 0.0 || f_P < 0.0 || f_B < 0.0) throw ConfigError("reward weights must be >= 0");
    if (std::abs(f_W + f_P + f_B - 1.0) > 1e-9) throw ConfigError("reward weights must sum to 1");
  }
};

enum class RewardMode : std::uint8_t { Lookup, IndexSum };

inline constexpr std::array<double, kWLevels> kWReward{0.0, 0.0, 1.0, -1.0};
inline constexpr std::array<double, kPLevels> kPReward{-1.0, 0.0, -1.0};
inline constexpr std::array<double, kBLevels> kBReward{0.0, 1.0, -1.0};

inline double compute_reward(const DiscreteState& next, const RewardWeights& w,
                             RewardMode mode = RewardMode::Lookup) {
  const auto wi = static_cast<std::size_t>(next.w);
  const auto pi = static_cast<std::size_t>(next.p);
  const auto bi = static_cast<std::size_t>(next.b);
  if (mode == RewardMode::Lookup) {
    return w.f_W * kWReward[wi] + w.f_P * kPReward[pi] + w.f_B * kBReward[bi];
  }
  auto term = [](std::size_t idx, std::size_t levels) {
    const double x = static_cast<double>(idx);
    const double m = static_cast<double>(levels - 1);
    return x * x / (m * m) - 1.0;
  };
  return term(wi, kWLevels) * w.f_W + term(pi, kPLevels) * w.f_P + term(bi, kBLevels) * w.f_B;
}

// ---------------------------------------------------------------------------
// Q table

/// Dense state x action table with a mask of never-selectable pairs. Argmax
/// ties resolve by `preference` (earlier wins).
class QTable {
 public:
  QTable(std::size_t states, std::size_t actions)
      : states_(states), actions_(actions), values_(states * actions, 0.0),
        mask_(states * actions, false), preference_(actions) {
    if (states == 0 || actions == 0) throw Error("QTable needs at least one state and action");
    std::iota(preference_.begin(), preference_.end(), 0);
  }

  std::size_t states() const { return states_; }
  std::size_t actions() const { return actions_; }

  double value(std::size_t s, std::size_t a) const { return values_[s * actions_ + a]; }
  void set_value(std::size_t s, std::size_t a, double v) { values_[s * actions_ + a] = v; }
  bool masked(std::size_t s, std::size_t a) const { return mask_[s * actions_ + a]; }
  void set_masked(std::size_t s, std::size_t a, bool m) { mask_[s * actions_ + a] = m; }

  const std::vector<std::size_t>& preference() const { return preference_; }
  void set_preference(std::vector<std::size_t> order) {
    if (order.size() != actions_) throw Error("preference order must list every action");
    preference_ = std::move(order);
  }

  std::size_t unmasked_count(std::size_t s) const {
    std::size_t n = 0;
    for (std::size_t a = 0; a < actions_; ++a) n += masked(s, a) ? 0 : 1;
    return n;
  }

  std::size_t argmax(std::size_t s) const {
    std::size_t best = actions_;
    for (const auto a : preference_) {
      if (masked(s, a)) continue;
      if (best == actions_ || value(s, a) > value(s, best)) best = a;
    }
    if (best == actions_) throw Error("all actions are masked for state " + std::to_string(s));
    return best;
  }

  /// Copies values only; the mask is structural.
  void copy_values_from(const QTable& other) { values_ = other.values_; }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::size_t states_;
  std::size_t actions_;
  std::vector<double> values_;
  std::vector<bool> mask_;
  std::vector<std::size_t> preference_;
};

/// 36 x 5 table over the discretized cache state. Increase actions are masked
/// in extreme-high states, decrease actions in extreme-low states.
inline QTable make_control_qtable(const ActionSet& actions = {}) {
  QTable q(kNumStates, kNumActions);
  q.set_preference(actions.preference_order());
  for (std::size_t s = 0; s < kNumStates; ++s) {
    const auto cls = classify(DiscreteState::from_index(s));
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const auto act = static_cast<Action>(a);
      if (cls.extreme == Extreme::High && ActionSet::is_increase(act)) q.set_masked(s, a, true);
      if (cls.extreme == Extreme::Low && ActionSet::is_decrease(act)) q.set_masked(s, a, true);
    }
  }
  return q;
}

/// Epsilon-greedy over unmasked actions.
template <typename Rng>
std::size_t select_action(const QTable& q, std::size_t s, double epsilon, Rng& rng) {
  const std::size_t n = q.unmasked_count(s);
  if (n == 0) throw Error("all actions are masked for state " + std::to_string(s));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t k = pick(rng);
    for (std::size_t a = 0; a < q.actions(); ++a) {
      if (q.masked(s, a)) continue;
      if (k-- == 0) return a;
    }
  }
  return q.argmax(s);
}

// ---------------------------------------------------------------------------
// Prioritized replay

struct Transition {
  std::size_t s_prev = 0;
  std::size_t a_prev = 0;
  double reward = 0.0;
  std::size_t s_next = 0;
  double priority = 1.0;
};

/// Experience buffer sampled in proportion to priority^alpha. Sums live in a
/// Fenwick tree so sampling and priority updates are O(log n).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(double alpha = 0.6) : alpha_(alpha) {
    if (!(alpha >= 0.0)) throw Error("alpha must be >= 0");
  }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Transition& at(std::size_t i) const { return items_[i]; }
  double alpha() const { return alpha_; }

  double max_priority() const {
    if (items_.empty()) return 1.0;
    if (max_dirty_) {
      max_cached_ = 0.0;
      for (const auto& t : items_) max_cached_ = std::max(max_cached_, t.priority);
      max_dirty_ = false;
    }
    return max_cached_;
  }

  /// Stores with the current maximal priority (1 for the first transition).
  void store(Transition t) {
    t.priority = max_priority();
    items_.push_back(t);
    seq_.push_back(next_seq_++);
    fenwick_push(weight(t.priority));
    if (!max_dirty_) max_cached_ = std::max(max_cached_, t.priority);
  }

  /// Keeps the `keep` highest-priority transitions; newer wins ties.
  void prune(std::size_t keep) {
    if (items_.size() <= keep) return;
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [this](std::size_t a, std::size_t b) {
      if (items_[a].priority != items_[b].priority) return items_[a].priority > items_[b].priority;
      return seq_[a] > seq_[b];
    });
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    std::vector<Transition> items;
    std::vector<std::uint64_t> seq;
    for (const auto i : idx) {
      items.push_back(items_[i]);
      seq.push_back(seq_[i]);
    }
    items_ = std::move(items);
    seq_ = std::move(seq);
    rebuild();
  }

  void set_priority(std::size_t i, double p) {
    const double old_w = weight(items_[i].priority);
    if (items_[i].priority >= max_cached_) max_dirty_ = true;
    items_[i].priority = p;
    if (!max_dirty_) max_cached_ = std::max(max_cached_, p);
    fenwick_add(i, weight(p) - old_w);
  }

  double total_weight() const { return prefix(items_.size()); }

  double probability(std::size_t i) const {
    const double total = total_weight();
    if (!(total > 0.0)) return 1.0 / static_cast<double>(items_.size());
    return weight(items_[i].priority) / total;
  }

  /// Sample an index with P(j) = p_j^alpha / sum p_i^alpha (uniform when every
  /// weight is zero).
  template <typename Rng>
  std::size_t sample(Rng& rng) const {
    if (items_.empty()) throw Error("cannot sample from an empty replay buffer");
    const double total = total_weight();
    if (!(total > 0.0)) {
      std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
      return pick(rng);
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    // Fenwick descent: smallest index whose prefix sum exceeds target.
    std::size_t pos = 0;
    std::size_t step = 1;
    while (step * 2 <= tree_.size()) step *= 2;
    for (; step > 0; step /= 2) {
      const std::size_t next = pos + step;
      if (next <= tree_.size() && tree_[next - 1] <= target) {
        pos = next;
        target -= tree_[next - 1];
      }
    }
    pos = std::min(pos, items_.size() - 1);
    // Guard against landing on a zero-weight slot through rounding.
    while (pos > 0 && weight(items_[pos].priority) == 0.0) --pos;
    return pos;
  }

  /// Recomputes partial sums from scratch to shed accumulated rounding.
  void rebuild() {
    tree_.assign(items_.size(), 0.0);
    for (std::size_t i = 0; i < items_.size(); ++i) {
      tree_[i] += weight(items_[i].priority);
      const std::size_t parent = (i + 1) + ((i + 1) & (~(i + 1) + 1));
      if (parent <= tree_.size()) tree_[parent - 1] += tree_[i];
    }
    max_dirty_ = true;
  }

 private:
  double weight(double p) const { return std::pow(p, alpha_); }

  double prefix(std::size_t n) const {
    double s = 0.0;
    for (std::size_t i = n; i > 0; i -= i & (~i + 1)) s += tree_[i - 1];
    return s;
  }

  void fenwick_add(std::size_t i, double delta) {
    for (std::size_t k = i + 1; k <= tree_.size(); k += k & (~k + 1)) tree_[k - 1] += delta;
  }

  void fenwick_push(double w) {
    const std::size_t k = tree_.size() + 1;
    const std::size_t low = k & (~k + 1);
    tree_.push_back(w + prefix(k - 1) - prefix(k - low));
  }

  double alpha_;
  std::vector<Transition> items_;
  std::vector<std::uint64_t> seq_;
  std::uint64_t next_seq_ = 0;
  std::vector<double> tree_;
  mutable double max_cached_ = 0.0;
  mutable bool max_dirty_ = false;
};

// ---------------------------------------------------------------------------
// Learner

struct LearnerConfig {
  double gamma = 0.9;
  double eta = 0.1;
  double alpha = 0.6;
  double beta = 0.4;
  std::size_t batch_size = 32;           // k
  std::size_t prune_period = 100;        // K
  std::size_t table_update_period = 50;  // T
  std::size_t buffer_capacity = 10000;   // N
  double epsilon = 0.14;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
    if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0,1]");
    if (batch_size == 0 || batch_size > buffer_capacity)
      throw ConfigError("batch size must lie in [1, buffer capacity]");
    if (prune_period == 0 || table_update_period == 0)
      throw ConfigError("prune and table-update periods must be >= 1");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
  }
};

/// One double-Q temporal-difference step; returns the TD error.
inline double apply_td_update(QTable& real, const QTable& target, const Transition& tr,
                              double gamma, double eta, double weight) {
  const std::size_t a_star = real.argmax(tr.s_next);
  const double delta = tr.reward + gamma * target.value(tr.s_next, a_star) -
                       real.value(tr.s_prev, tr.a_prev);
  real.set_value(tr.s_prev, tr.a_prev, real.value(tr.s_prev, tr.a_prev) + eta * weight * delta);
  return delta;
}

struct UpdateStats {
  std::size_t samples = 0;
  double mean_abs_td = 0.0;
};

/// Online tabular Q-learning with prioritized replay and a periodically
/// synchronized target table.
class QLearner {
 public:
  QLearner(QTable initial, LearnerConfig cfg)
      : cfg_(cfg), real_(std::move(initial)), target_(real_), buffer_(cfg.alpha) {
    cfg_.validate();
  }

  const LearnerConfig& config() const { return cfg_; }
  const QTable& real() const { return real_; }
  const QTable& target() const { return target_; }
  QTable& real() { return real_; }
  QTable& target() { return target_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::uint64_t updates() const { return updates_; }

  void store(const Transition& t) { buffer_.store(t); }

  void prune() { buffer_.prune(cfg_.buffer_capacity); }

  /// k prioritized samples, importance weights normalized by the batch max,
  /// then the target table is refreshed from the real table.
  template <typename Rng>
  UpdateStats update_step(Rng& rng) {
    UpdateStats st;
    if (buffer_.empty()) return st;
    const double n = static_cast<double>(buffer_.size());
    std::vector<std::size_t> picks(cfg_.batch_size);
    std::vector<double> weights(cfg_.batch_size);
    double wmax = 0.0;
    for (std::size_t j = 0; j < cfg_.batch_size; ++j) {
      picks[j] = buffer_.sample(rng);
      weights[j] = std::pow(n * buffer_.probability(picks[j]), -cfg_.beta);
      wmax = std::max(wmax, weights[j]);
    }
    for (std::size_t j = 0; j < cfg_.batch_size; ++j) {
      const double w = wmax > 0.0 ? weights[j] / wmax : 1.0;
      const double delta =
          apply_td_update(real_, target_, buffer_.at(picks[j]), cfg_.gamma, cfg_.eta, w);
      buffer_.set_priority(picks[j], std::abs(delta));
      st.mean_abs_td += std::abs(delta);
      ++updates_;
    }
    buffer_.rebuild();
    target_.copy_values_from(real_);
    st.samples = cfg_.batch_size;
    st.mean_abs_td /= static_cast<double>(cfg_.batch_size);
    return st;
  }

  /// Periodic bookkeeping for tick `t`: prune every K ticks, learn every T ticks.
  template <typename Rng>
  UpdateStats on_tick(std::uint64_t t, Rng& rng) {
    if (t % cfg_.prune_period == 0) prune();
    if (t % cfg_.table_update_period == 0) return update_step(rng);
    return {};
  }

  template <typename Rng>
  std::size_t act(std::size_t s, Rng& rng) const {
    return select_action(real_, s, cfg_.epsilon, rng);
  }

 private:
  LearnerConfig cfg_;
  QTable real_;
  QTable target_;
  ReplayBuffer buffer_;
  std::uint64_t updates_ = 0;
};

}  // namespace qoco
