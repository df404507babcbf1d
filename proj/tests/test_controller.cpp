#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qoco/controller.hpp"

using namespace qoco;

namespace {

LQoCoConfig greedy_config() {
  LQoCoConfig cfg;
  cfg.learner.epsilon = 0.0;
  return cfg;
}

struct Obs {
  DiscreteState d;
  Classification cls;
  StateSample s;
};

Obs observe(double W, double P, double B) {
  Obs o;
  o.s.W = W;
  o.s.P = P;
  o.s.B = B;
  o.d = discretize(o.s, DiscretizationConfig{});
  o.cls = classify(o.d);
  return o;
}

AdaptiveBoundConfig band(double lb, double ub, std::size_t N = 30, double sigma = 0.15) {
  AdaptiveBoundConfig c;
  c.lb = lb;
  c.ub = ub;
  c.N = N;
  c.sigma = sigma;
  return c;
}

}  // namespace

TEST(Decide, SevereHighWatermarkFastDecrease) {
  LQoCoController c(greedy_config(), make_control_qtable(), 100, 1);
  const auto o = observe(95, 0.0, 50);
  ASSERT_EQ(o.cls.effective(), StateClass::ExtremeHigh);
  const auto d = c.decide(o.d, o.cls, o.s, 100);
  EXPECT_EQ(d.source, DecisionSource::SafeAction);
  EXPECT_EQ(d.action, Action::FastDecrease);
  EXPECT_DOUBLE_EQ(d.recommended_I, 97.0);
  EXPECT_FALSE(d.learn);
}

TEST(Decide, MildHighWatermarkSlowDecrease) {
  LQoCoController c(greedy_config(), make_control_qtable(), 100, 1);
  const auto o = observe(85, 0.0, 50);
  EXPECT_EQ(c.decide(o.d, o.cls, o.s, 100).action, Action::SlowDecrease);
}

TEST(Decide, ExtremeLowIncreases) {
  LQoCoController c(greedy_config(), make_control_qtable(), 100, 1);
  auto o = observe(2, 0.0, 50);
  EXPECT_EQ(c.decide(o.d, o.cls, o.s, 100).action, Action::FastIncrease);
  o = observe(8, 0.0, 50);
  EXPECT_EQ(c.decide(o.d, o.cls, o.s, 100).action, Action::SlowIncrease);
  o = observe(50, -0.5, 50);
  const auto d = c.decide(o.d, o.cls, o.s, 100);
  EXPECT_EQ(d.action, Action::SlowIncrease);
  EXPECT_FALSE(d.learn);
}

TEST(Decide, BetterStateFineTunesAgainstTrend) {
  LQoCoController c(greedy_config(), make_control_qtable(), 100, 1);
  const auto first = observe(55, 0.0, 50);
  ASSERT_TRUE(first.cls.is_better());
  c.tick(first.d, first.cls, first.s, 100);
  const auto o = observe(54, 0.0, 50);
  const auto d = c.decide(o.d, o.cls, o.s, 100);
  EXPECT_EQ(d.source, DecisionSource::FineTune);
  EXPECT_DOUBLE_EQ(d.recommended_I, 100.0 * 1.001);
  EXPECT_FALSE(d.learn);
  EXPECT_EQ(d.action_label(), "FineTuneUp");
}

TEST(Decide, FineTuneDeadBand) {
  LQoCoController c(greedy_config(), make_control_qtable(), 100, 1);
  const auto first = observe(55, 0.0, 50);
  c.tick(first.d, first.cls, first.s, 100);
  auto o = observe(55.05, 0.0, 50);
  EXPECT_EQ(c.decide(o.d, o.cls, o.s, 100).recommended_I, 100.0);
  o = observe(56, 0.0, 50);
  EXPECT_DOUBLE_EQ(c.decide(o.d, o.cls, o.s, 100).recommended_I, 100.0 * 0.999);
}

TEST(Decide, GeneralStateFollowsPolicy) {
  LQoCoController c(greedy_config(), make_control_qtable(), 100, 1);
  const auto o = observe(20, 0.0, 50);
  ASSERT_EQ(o.cls.effective(), StateClass::General);
  const auto d = c.decide(o.d, o.cls, o.s, 100);
  EXPECT_EQ(d.source, DecisionSource::Policy);
  EXPECT_EQ(d.action, Action::Keep);
  EXPECT_EQ(d.recommended_I, 100.0);
  EXPECT_TRUE(d.learn);
}

TEST(Decide, RejectedPolicyStepDoesNotLearn) {
  auto cfg = greedy_config();
  auto q = make_control_qtable();
  const auto o = observe(20, 0.0, 50);
  q.set_value(o.d.index(), static_cast<std::size_t>(Action::FastIncrease), 1.0);
  LQoCoController c(cfg, q, 100, 1);
  // ub is 5x the estimate; an I_prev at ub pushes the +3% step outside.
  const auto d = c.decide(o.d, o.cls, o.s, 500);
  EXPECT_TRUE(d.bound_rejected);
  EXPECT_EQ(d.executed_I, 500.0);
  EXPECT_FALSE(d.learn);
}

TEST(Decide, NonPositivePreviousBandwidthIsAnError) {
  LQoCoController c(greedy_config(), make_control_qtable(), 100, 1);
  const auto o = observe(20, 0.0, 50);
  EXPECT_THROW(c.decide(o.d, o.cls, o.s, 0.0), Error);
}

TEST(BoundGate, Examples) {
  AdaptiveBound b(band(50, 150));
  EXPECT_EQ(b.gate(100, 90), std::make_pair(100.0, false));
  EXPECT_EQ(b.gate(200, 120), std::make_pair(120.0, true));
  AdaptiveBound point(band(100, 100));
  EXPECT_EQ(point.gate(100, 90), std::make_pair(100.0, false));
}

TEST(BoundUpdate, BetterCountRefreshesBand) {
  AdaptiveBound b(band(0, 1000, 3, 0.2));
  b.update(90, true);
  b.update(100, true);
  b.update(110, true);
  EXPECT_DOUBLE_EQ(b.lb(), 80.0);
  EXPECT_DOUBLE_EQ(b.ub(), 120.0);
  EXPECT_EQ(b.better_count(), 0u);
}

TEST(BoundUpdate, RefreshBandWidthIsTwoSigma) {
  AdaptiveBound b(band(0, 1e9, 5, 0.15));
  const std::vector<double> recs{97, 103, 88, 120, 101};
  for (double r : recs) b.update(r, true);
  const double mean = (97 + 103 + 88 + 120 + 101) / 5.0;
  EXPECT_LT(b.lb(), mean);
  EXPECT_GT(b.ub(), mean);
  EXPECT_NEAR((b.ub() - b.lb()) / mean, 0.3, 1e-9);
}

TEST(BoundUpdate, ViolationRecurrence) {
  AdaptiveBound b(band(0, 100));
  b.update(200, false);
  EXPECT_EQ(b.v_ub(), 0.5);
  b.update(210, false);
  EXPECT_EQ(b.v_ub(), 0.75);
  b.update(220, false);
  EXPECT_EQ(b.v_ub(), 0.875);
  EXPECT_EQ(b.ub(), 100.0);
  b.update(230, false);
  // 0.9375 > 0.9: snap to the previous recommendation and reset.
  EXPECT_EQ(b.ub(), 220.0);
  EXPECT_EQ(b.v_ub(), 0.0);
}

TEST(BoundUpdate, LowerViolationSnaps) {
  AdaptiveBound b(band(100, 1000));
  for (double r : {50.0, 40.0, 30.0}) b.update(r, false);
  EXPECT_EQ(b.lb(), 100.0);
  EXPECT_EQ(b.v_lb(), 0.875);
  b.update(20, false);
  EXPECT_EQ(b.lb(), 30.0);
  EXPECT_EQ(b.v_lb(), 0.0);
}

TEST(BoundUpdate, AccumulatorStaysBelowOne) {
  double v = 0.0;
  double prev = -1.0;
  for (int i = 0; i < 1000; ++i) {
    v = (v - 1.0) * 0.5 + 1.0;
    EXPECT_GE(v, prev);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
}

TEST(BoundConfig, Validation) {
  auto c = band(10, 5);
  EXPECT_THROW(c.validate(), ConfigError);
  c = band(0, 10);
  c.delta = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ControllerLoop, StoresOnlyLearnableTransitions) {
  auto cfg = greedy_config();
  cfg.learner.table_update_period = 1000;
  LQoCoController c(cfg, make_control_qtable(), 100, 1);
  const auto general = observe(20, 0.0, 50);
  const auto high = observe(95, 0.0, 50);
  double I = 100;
  I = c.tick(general.d, general.cls, general.s, I).executed_I;  // learn
  I = c.tick(high.d, high.cls, high.s, I).executed_I;           // stores previous, no learn
  I = c.tick(general.d, general.cls, general.s, I).executed_I;  // nothing stored
  c.tick(general.d, general.cls, general.s, I);                 // stores previous
  ASSERT_EQ(c.learner().buffer().size(), 2u);
  const auto& first = c.learner().buffer().at(0);
  EXPECT_EQ(first.s_prev, general.d.index());
  EXPECT_EQ(first.s_next, high.d.index());
  EXPECT_EQ(first.reward, compute_reward(high.d, cfg.weights, cfg.reward_mode));
}

TEST(ControllerLoop, SafeAndGatingPropertiesOnRandomStates) {
  LQoCoConfig cfg;
  LQoCoController c(cfg, make_control_qtable(), 1000, 5);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> W(0, 100), P(-1, 1), B(0, 200);
  double I = 1000;
  for (int t = 0; t < 5000; ++t) {
    const auto o = observe(W(rng), P(rng), B(rng));
    const auto d = c.tick(o.d, o.cls, o.s, I);
    const auto cls = o.cls.effective();
    if (cls == StateClass::ExtremeHigh) {
      ASSERT_TRUE(d.action);
      EXPECT_TRUE(ActionSet::is_decrease(*d.action));
      EXPECT_FALSE(d.learn);
    } else if (cls == StateClass::ExtremeLow) {
      ASSERT_TRUE(d.action);
      EXPECT_TRUE(ActionSet::is_increase(*d.action));
      EXPECT_FALSE(d.learn);
    } else if (cls == StateClass::Better) {
      EXPECT_LE(std::abs(d.executed_I / I - 1.0), 0.001 + 1e-12);
    }
    if (d.bound_rejected) {
      EXPECT_EQ(d.executed_I, I);
    }
    EXPECT_GE(d.executed_I, d.bound_rejected ? 0.0 : d.lb);
    I = d.executed_I;
  }
}
