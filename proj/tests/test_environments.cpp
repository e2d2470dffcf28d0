#include <gtest/gtest.h>

#include "mpg/environments.hpp"
#include "mpg/policy.hpp"
#include "mpg/rollout.hpp"

using namespace mpg;

TEST(FishWar, TransitionExample) {
  const GameSpec g = make_fishwar({});
  EXPECT_NEAR(g.transition({1.0}, {0.25, 0.25}, {})[0], std::sqrt(0.5), 1e-12);
  EXPECT_EQ(g.transition({1.0}, {0.7, 0.7}, {})[0], 0.0);
}

TEST(FishWar, ZeroConsumptionHitsLogFloor) {
  const GameSpec g = make_fishwar({});
  EXPECT_EQ(g.reward(0, {1.0}, {0.0, 0.3}, {}), std::log(kLogFloor));
  EXPECT_TRUE(std::isfinite(g.reward(1, {1.0}, {0.3, 0.0}, {})));
}

TEST(FishWar, InvalidParamsRejected) {
  FishWarParams p;
  p.alpha = 1.0;
  EXPECT_THROW(make_fishwar(p), ConfigError);
  p = {};
  p.x0 = 0.0;
  EXPECT_THROW(make_fishwar(p), ConfigError);
  p = {};
  p.gamma = 1.0;
  EXPECT_THROW(make_fishwar(p), ConfigError);
}

TEST(FishWar, StateStaysInBox) {
  const GameSpec g = make_fishwar({});
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = uniform(rng, 0.0, 1.0);
    const Vec a{uniform(rng, 0.0, x), uniform(rng, 0.0, x)};
    const double next = g.transition({x}, a, {})[0];
    EXPECT_GE(next, 0.0);
    EXPECT_LE(next, 1.0);
  }
}

TEST(FishWar, ClosedLoopCommonTermIsLogXPlusSumLogW) {
  const GameSpec g = make_fishwar({});
  const PolicyFamily pol = make_linear_policy(g, 0.0, 1.0, 0.5);
  const Vec x{0.7};
  const Vec w{0.3, 0.6};
  const Vec a = pol.forward(x, w);
  EXPECT_NEAR(g.decomposition->common(x, a, {}), std::log(0.7) + std::log(0.3) + std::log(0.6), 1e-12);
}

TEST(Mac, ZeroPowerRewardIsBatteryTerm) {
  const MacParams p;
  const GameSpec g = make_mac(p);
  const Vec x{1.0, 2.0, 3.0, 4.0};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(g.reward(k, x, Vec(4, 0.0), Vec(4, 0.7)), p.alpha * x[k]);
}

TEST(Mac, DefaultChannelGains) {
  EXPECT_EQ(MacParams{}.gains, (Vec{2.019, 1.002, 0.514, 0.308}));
}

TEST(Mac, SingleAgentHasNoInterference) {
  MacParams p;
  p.num_agents = 1;
  p.gains = {1.5};
  const GameSpec g = make_mac(p);
  EXPECT_NEAR(g.reward(0, {4.0}, {p.p_max}, {1.0}), std::log(1.0 + 1.5 * p.p_max) + p.alpha * 4.0, 1e-12);
}

TEST(Mac, InterferenceFormula) {
  const MacParams p;
  const GameSpec g = make_mac(p);
  const Vec a{1.0, 0.5, 0.0, 2.0};
  const Vec v{0.6, 0.7, 0.8, 0.9};
  const Vec x(4, 5.0);
  const double num = p.gains[1] * v[1] * a[1];
  const double interference = p.gains[0] * v[0] * a[0] + p.gains[3] * v[3] * a[3];
  EXPECT_NEAR(g.reward(1, x, a, v), std::log(1.0 + num / (1.0 + interference)) + p.alpha * 5.0, 1e-12);
}

TEST(Mac, PowerCapPreventsOverdraw) {
  const MacParams p;
  const GameSpec g = make_mac(p);
  const Box b = g.action_bounds({1.3, 0.0, 10.0, 0.5});
  EXPECT_NEAR(b.upper[0], 1.0, 1e-12);
  EXPECT_EQ(b.upper[1], 0.0);
  EXPECT_EQ(b.upper[2], p.p_max);
  const Vec next = g.transition({1.3, 0.0, 10.0, 0.5}, b.upper, Vec(4, p.discharge_hi));
  for (double xk : next) EXPECT_GE(xk, 0.0);
}

TEST(Mac, BatteryMonotoneAlongTrajectories) {
  const GameSpec g = make_mac({});
  const PolicyFamily pol = make_mlp_policy(g, {{8}, 1.0, Vec(4, 0.3)});
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Trajectory t = rollout(g, pol, pol.initial_params(s), s, true);
    for (std::size_t i = 0; i < t.terminated_at; ++i) {
      for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_LE(t.states[i + 1][k], t.states[i][k]);
        if (t.actions[i][k] > 0.0 && t.states[i][k] > 0.0) EXPECT_LT(t.states[i + 1][k], t.states[i][k]);
      }
    }
  }
}

TEST(Mac, InvalidParamsRejected) {
  MacParams p;
  p.gains = {1.0};
  EXPECT_THROW(make_mac(p), ConfigError);
  p = {};
  p.fading_lo = 2.0;
  EXPECT_THROW(make_mac(p), ConfigError);
  p = {};
  p.alpha = -0.1;
  EXPECT_THROW(make_mac(p), ConfigError);
}

TEST(Decomposition, SplitHoldsAtRandomSamples) {
  const std::vector<GameSpec> games{make_fishwar({}), make_mac({}), make_cooperative(make_fishwar({})),
                                    make_cooperative(make_mac({}))};
  for (const GameSpec& g : games) {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
      Vec x(g.state_dim);
      for (std::size_t m = 0; m < g.state_dim; ++m) {
        x[m] = uniform(rng, g.state_box.lower[m] + 1e-3, g.state_box.upper[m]);
      }
      const Box ab = g.action_bounds(x);
      Vec a(g.total_action_dim());
      for (std::size_t d = 0; d < a.size(); ++d) a[d] = uniform(rng, ab.lower[d] + 1e-6 * ab.upper[d], ab.upper[d]);
      const Vec sigma = g.noise ? g.noise(x, a, rng).reward : Vec{};
      for (std::size_t k = 0; k < g.num_agents; ++k) {
        const double r = g.reward(k, x, a, sigma);
        const double split = g.decomposition->common(x, a, sigma) + g.decomposition->non_common(k, x, a, sigma);
        EXPECT_LE(std::abs(r - split), 1e-12 * std::max(1.0, std::abs(r))) << g.name;
      }
    }
  }
}

TEST(Cooperative, RewardsEqualCommonTermAndThetaVanishes) {
  const GameSpec base = make_fishwar({});
  const GameSpec g = make_cooperative(base);
  EXPECT_EQ(g.name, "fishwar-cooperative");
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Vec x{uniform(rng, 0.1, 1.0)};
    const Vec a{uniform(rng, 0.01, 0.5) * x[0], uniform(rng, 0.01, 0.5) * x[0]};
    const double j = base.decomposition->common(x, a, {});
    EXPECT_NEAR(j, std::log(x[0]) + std::log(a[0] / x[0]) + std::log(a[1] / x[0]), 1e-12);
    for (std::size_t k = 0; k < 2; ++k) {
      EXPECT_EQ(g.reward(k, x, a, {}), j);
      EXPECT_EQ(g.decomposition->non_common(k, x, a, {}), 0.0);
    }
  }
}

TEST(Cooperative, RequiresDeclaredCommonTerm) {
  EXPECT_THROW(make_cooperative(make_non_mpg_counterexample()), ConfigError);
}

TEST(Counterexample, MixedPartialsDisagreeByOne) {
  // closed loop at x = 1: r1 = w1 w2^2, r2 = w1 w2
  const GameSpec g = make_non_mpg_counterexample();
  const auto r = [&](std::size_t k, double w1, double w2) { return g.reward(k, {1.0}, {w1, w2}, {}); };
  const double h = 1e-4;
  const auto mixed = [&](std::size_t k) {
    return (r(k, 1 + h, 1 + h) - r(k, 1 + h, 1 - h) - r(k, 1 - h, 1 + h) + r(k, 1 - h, 1 - h)) / (4 * h * h);
  };
  EXPECT_NEAR(mixed(0), 2.0, 1e-6);
  EXPECT_NEAR(mixed(1), 1.0, 1e-6);
  EXPECT_FALSE(g.decomposition.has_value());
}
