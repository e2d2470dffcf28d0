#pragma once

// Shipped games: the great fish war, the stochastic MAC uplink game, the
// cooperative transform and a non-potential negative control.

#include <cmath>
#include <string>
#include <vector>

#include "mpg/core.hpp"
#include "mpg/game.hpp"

namespace mpg {

/// Floor applied to log arguments so boundary iterates stay finite.
inline constexpr double kLogFloor = 1e-12;

inline double safe_log(double v) { return std::log(std::max(v, kLogFloor)); }

/// Box-type constraint evaluator g(x, a) <= 0 built from the action bounds.
inline ConstraintFn box_constraints(ActionBoundsFn bounds) {
  return [bounds = std::move(bounds)](const Vec& x, const Vec& a) {
    const Box box = bounds(x);
    Vec g;
    g.reserve(2 * a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      g.push_back(box.lower[i] - a[i]);
      g.push_back(a[i] - box.upper[i]);
    }
    return g;
  };
}

struct FishWarParams {
  std::size_t num_agents = 2;
  double alpha = 0.5;
  double gamma = 0.9;
  double x0 = 1.0;
  std::size_t horizon = 200;

  void validate() const {
    if (num_agents < 1) throw ConfigError("fishwar: num_agents must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("fishwar: alpha must lie in (0,1)");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("fishwar: gamma must lie in [0,1)");
    if (!(x0 > 0.0)) throw ConfigError("fishwar: x0 must be positive");
    if (horizon < 1) throw ConfigError("fishwar: horizon must be >= 1");
  }
};

/// r_k = log(a_k), x' = (x - sum a)^alpha. In closed loop with linear
/// policies a_k = w_k x the common term is log(x) + sum log(w_k); written on
/// (x, a) it is sum_k log(a_k) - (N - 1) log(x).
inline GameSpec make_fishwar(const FishWarParams& p) {
  p.validate();
  const std::size_t n = p.num_agents;
  const double nm1 = static_cast<double>(n) - 1.0;
  GameSpec g;
  g.name = "fishwar";
  g.num_agents = n;
  g.state_dim = 1;
  g.action_dims.assign(n, 1);
  g.discount = p.gamma;
  g.horizon = p.horizon;
  g.reward = [](std::size_t k, const Vec&, const Vec& a, const Vec&) { return safe_log(a[k]); };
  g.transition = [alpha = p.alpha](const Vec& x, const Vec& a, const Vec&) {
    double rest = x[0];
    for (double ak : a) rest -= ak;
    return Vec{std::pow(std::max(rest, 0.0), alpha)};
  };
  g.action_bounds = [n](const Vec& x) { return Box::uniform(n, 0.0, std::max(x[0], 0.0)); };
  g.constraints = box_constraints(g.action_bounds);
  g.state_box = Box::uniform(1, 0.0, std::max(1.0, p.x0));
  g.terminal = [](const Vec& x) { return x[0] < 1e-9; };
  g.initial_state = {p.x0};

  Decomposition d;
  d.common = [nm1](const Vec& x, const Vec& a, const Vec&) {
    double s = -nm1 * safe_log(x[0]);
    for (double ak : a) s += safe_log(ak);
    return s;
  };
  d.non_common = [nm1](std::size_t k, const Vec& x, const Vec& a, const Vec&) {
    double s = nm1 * safe_log(x[0]);
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (j != k) s -= safe_log(a[j]);
    }
    return s;
  };
  d.policy_state.assign(n, {0});
  d.reward_state.assign(n, {0});
  g.decomposition = std::move(d);
  g.validate();
  return g;
}

struct MacParams {
  std::size_t num_agents = 4;
  Vec gains{2.019, 1.002, 0.514, 0.308};  // |h_k|^2
  double fading_lo = 0.5;
  double fading_hi = 1.0;
  double discharge_lo = 0.7;
  double discharge_hi = 1.3;
  double alpha = 0.01;
  double b_max = 10.0;
  double p_max = 2.0;
  double gamma = 0.95;
  std::size_t horizon = 100;

  void validate() const {
    if (num_agents < 1) throw ConfigError("mac: num_agents must be >= 1");
    if (gains.size() != num_agents) throw ConfigError("mac: need one channel gain per agent");
    for (double h : gains) {
      if (!(h >= 0.0) || !std::isfinite(h)) throw ConfigError("mac: channel gains must be non-negative");
    }
    if (!(0.0 <= fading_lo && fading_lo <= fading_hi)) throw ConfigError("mac: fading range must be ordered");
    if (!(0.0 < discharge_lo && discharge_lo <= discharge_hi)) {
      throw ConfigError("mac: discharge range must be positive and ordered");
    }
    if (!(alpha >= 0.0)) throw ConfigError("mac: alpha must be >= 0");
    if (!(b_max > 0.0) || !(p_max > 0.0)) throw ConfigError("mac: b_max and p_max must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("mac: gamma must lie in [0,1)");
    if (horizon < 1) throw ConfigError("mac: horizon must be >= 1");
  }
};

/// Per-agent rate term log(1 + h_k v_k a_k / (1 + sum_{j != k} h_j v_j a_j)).
inline double mac_rate(const Vec& gains, std::size_t k, const Vec& a, const Vec& fading) {
  double interference = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (j != k) interference += gains[j] * fading[j] * a[j];
  }
  return safe_log(1.0 + gains[k] * fading[k] * a[k] / (1.0 + interference));
}

/// State: battery levels. Reward noise sigma = fading v (one per agent),
/// transition noise theta = discharge factors delta (one per agent).
inline GameSpec make_mac(const MacParams& p) {
  p.validate();
  const std::size_t n = p.num_agents;
  GameSpec g;
  g.name = "mac";
  g.num_agents = n;
  g.state_dim = n;
  g.action_dims.assign(n, 1);
  g.discount = p.gamma;
  g.horizon = p.horizon;
  g.reward = [gains = p.gains, alpha = p.alpha](std::size_t k, const Vec& x, const Vec& a, const Vec& v) {
    return mac_rate(gains, k, a, v) + alpha * x[k];
  };
  g.transition = [b_max = p.b_max](const Vec& x, const Vec& a, const Vec& delta) {
    Vec next(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) next[k] = std::clamp(x[k] - delta[k] * a[k], 0.0, b_max);
    return next;
  };
  g.noise = [p](const Vec&, const Vec&, Rng& rng) {
    NoiseDraw d;
    for (std::size_t k = 0; k < p.num_agents; ++k) d.reward.push_back(uniform(rng, p.fading_lo, p.fading_hi));
    for (std::size_t k = 0; k < p.num_agents; ++k) {
      d.transition.push_back(uniform(rng, p.discharge_lo, p.discharge_hi));
    }
    return d;
  };
  // Power never exceeds what the worst-case discharge can draw from the battery.
  g.action_bounds = [n, p_max = p.p_max, d_max = p.discharge_hi](const Vec& x) {
    Box b = Box::uniform(n, 0.0, p_max);
    for (std::size_t k = 0; k < n; ++k) b.upper[k] = std::clamp(x[k] / d_max, 0.0, p_max);
    return b;
  };
  g.constraints = box_constraints(g.action_bounds);
  g.state_box = Box::uniform(n, 0.0, p.b_max);
  g.terminal = [](const Vec& x) {
    return std::all_of(x.begin(), x.end(), [](double xk) { return xk < 1e-6; });
  };
  g.initial_state.assign(n, p.b_max);

  Decomposition d;
  d.common = [gains = p.gains, alpha = p.alpha](const Vec& x, const Vec& a, const Vec& v) {
    double s = 1.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += gains[k] * v[k] * a[k];
    double battery = 0.0;
    for (double xk : x) battery += xk;
    return safe_log(s) + alpha * battery;
  };
  d.non_common = [gains = p.gains, alpha = p.alpha](std::size_t k, const Vec& x, const Vec& a, const Vec& v) {
    double s = 1.0;
    double battery = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (j == k) continue;
      s += gains[j] * v[j] * a[j];
      battery += x[j];
    }
    return -safe_log(s) - alpha * battery;
  };
  for (std::size_t k = 0; k < n; ++k) {
    d.policy_state.push_back({k});
    d.reward_state.push_back({k});
  }
  g.decomposition = std::move(d);
  g.validate();
  return g;
}

/// Every agent's reward replaced by the declared common term; Theta_k = 0.
inline GameSpec make_cooperative(const GameSpec& base) {
  if (!base.decomposition) {
    throw ConfigError("make_cooperative: '" + base.name + "' has no declared common term");
  }
  GameSpec g = base;
  g.name = base.name + "-cooperative";
  const CommonTermFn common = base.decomposition->common;
  g.reward = [common](std::size_t, const Vec& x, const Vec& a, const Vec& sigma) { return common(x, a, sigma); };
  g.decomposition->non_common = [](std::size_t, const Vec&, const Vec&, const Vec&) { return 0.0; };
  g.validate();
  return g;
}

/// Two agents, one static state, r_1 = a_1 a_2^2 and r_2 = a_2 a_1. Under
/// linear policies the mixed partials in (w_1, w_2) disagree, so no
/// potential exists.
inline GameSpec make_non_mpg_counterexample() {
  GameSpec g;
  g.name = "counterexample";
  g.num_agents = 2;
  g.state_dim = 1;
  g.action_dims = {1, 1};
  g.discount = 0.9;
  g.horizon = 20;
  g.reward = [](std::size_t k, const Vec&, const Vec& a, const Vec&) {
    return k == 0 ? a[0] * a[1] * a[1] : a[1] * a[0];
  };
  g.transition = [](const Vec& x, const Vec&, const Vec&) { return x; };
  g.action_bounds = [](const Vec&) { return Box::uniform(2, -10.0, 10.0); };
  g.constraints = box_constraints(g.action_bounds);
  g.state_box = Box::uniform(1, 0.5, 2.0);
  g.initial_state = {1.0};
  g.validate();
  return g;
}

}  // namespace mpg
