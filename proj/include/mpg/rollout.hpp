#pragma once

// Seeded rollouts and Monte-Carlo discounted returns.

#include <cstdint>
#include <string>
#include <vector>

#include "mpg/core.hpp"
#include "mpg/game.hpp"
#include "mpg/policy.hpp"

namespace mpg {

struct Trajectory {
  std::vector<Vec> states;             // x_0 .. x_{terminated_at}
  std::vector<Vec> actions;            // projected actions actually applied
  std::vector<Vec> means;              // pi(x_i, w)
  std::vector<Vec> samples;            // pre-projection Gaussian samples (stochastic only)
  std::vector<Vec> rewards;            // [agent][step]
  std::vector<NoiseDraw> noise;        // per step
  std::size_t terminated_at = 0;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  bool absorbed = false;
  /// Absorbing-state data, used for the remaining steps up to the horizon.
  Vec terminal_action;
  NoiseDraw terminal_noise;
  Vec terminal_rewards;  // per agent, per remaining step
};

/// sum_{i < T} gamma^i r_i, where steps past an absorbing state contribute
/// the absorbing-state reward.
inline double discounted_sum(std::span<const double> per_step, double tail, std::size_t terminated_at,
                             std::size_t horizon, double gamma) {
  Vec terms(per_step.size());
  double g = 1.0;
  for (std::size_t i = 0; i < per_step.size(); ++i, g *= gamma) terms[i] = g * per_step[i];
  double total = pairwise_sum(terms);
  if (terminated_at < horizon && tail != 0.0) {
    // g == gamma^terminated_at here
    total += tail * g * (1.0 - std::pow(gamma, static_cast<double>(horizon - terminated_at))) / (1.0 - gamma);
  }
  return total;
}

inline double discounted_return(const Trajectory& traj, std::size_t agent, double gamma) {
  const double tail = traj.absorbed ? traj.terminal_rewards.at(agent) : 0.0;
  return discounted_sum(traj.rewards.at(agent), tail, traj.terminated_at, traj.horizon, gamma);
}

/// a_i = pi(x_i, w) (+ N(0, std^2) exploration when stochastic), projected
/// into the action box; x_{i+1} = f(x_i, a_i, theta_i) clamped to the state
/// box. Stops at the horizon or when x_i is terminal.
inline Trajectory rollout(const GameSpec& game, const PolicyFamily& policy, std::span<const double> w,
                          std::uint64_t seed, bool stochastic) {
  if (w.size() != policy.total_params()) throw ConfigError("rollout: parameter vector has wrong length");
  policy.check_compatible(game);
  Rng rng(seed);
  const std::size_t n_act = game.total_action_dim();
  const Vec& stddev = policy.exploration_std();

  Trajectory traj;
  traj.seed = seed;
  traj.horizon = game.horizon;
  traj.rewards.assign(game.num_agents, {});
  Vec x = game.start_state(rng);
  if (x.size() != game.state_dim) throw ConfigError("rollout: initial state has wrong dimension");
  traj.states.push_back(x);

  std::size_t i = 0;
  for (; i < game.horizon; ++i) {
    if (game.terminal && game.terminal(x)) {
      traj.absorbed = true;
      break;
    }
    const Box bounds = game.action_bounds(x);
    Vec mu = policy.forward(x, w);
    Vec u = mu;
    if (stochastic) {
      for (std::size_t d = 0; d < n_act; ++d) u[d] += stddev[d] * standard_normal(rng);
    }
    Vec a = project_action(u, bounds);
    NoiseDraw nz = game.draw_noise(x, a, rng);
    for (std::size_t k = 0; k < game.num_agents; ++k) {
      traj.rewards[k].push_back(game.reward(k, x, a, nz.reward));
    }
    Vec next = game.transition(x, a, nz.transition);
    if (next.size() != game.state_dim) throw ConfigError("rollout: transition returned wrong dimension");
    for (std::size_t m = 0; m < next.size(); ++m) {
      if (!std::isfinite(next[m])) {
        throw NumericalDomainError("rollout: non-finite state at step " + std::to_string(i + 1),
                                   static_cast<double>(i + 1));
      }
      next[m] = std::clamp(next[m], game.state_box.lower[m], game.state_box.upper[m]);
    }
    traj.means.push_back(std::move(mu));
    if (stochastic) traj.samples.push_back(std::move(u));
    traj.actions.push_back(std::move(a));
    traj.noise.push_back(std::move(nz));
    x = std::move(next);
    traj.states.push_back(x);
  }
  if (i == game.horizon && game.terminal && game.terminal(x)) traj.absorbed = true;
  traj.terminated_at = i;
  if (traj.absorbed) {
    traj.terminal_action = project_action(Vec(n_act, 0.0), game.action_bounds(x));
    traj.terminal_noise = game.draw_noise(x, traj.terminal_action, rng);
    for (std::size_t k = 0; k < game.num_agents; ++k) {
      traj.terminal_rewards.push_back(game.reward(k, x, traj.terminal_action, traj.terminal_noise.reward));
    }
  }
  return traj;
}

struct ReturnEstimate {
  Vec mean;    // per agent
  Vec std_error;  // per agent
};

/// Per-agent mean discounted return over rollouts seeded base_seed + i.
inline ReturnEstimate mc_return(const GameSpec& game, const PolicyFamily& policy, std::span<const double> w,
                                std::size_t num_rollouts, std::uint64_t base_seed, bool stochastic = false) {
  if (num_rollouts < 1) throw ConfigError("mc_return: num_rollouts must be >= 1");
  std::vector<Vec> per(game.num_agents, Vec(num_rollouts));
  parallel_for(num_rollouts, [&](std::size_t r) {
    const Trajectory traj = rollout(game, policy, w, base_seed + r, stochastic);
    for (std::size_t k = 0; k < game.num_agents; ++k) per[k][r] = discounted_return(traj, k, game.discount);
  });
  ReturnEstimate out;
  for (std::size_t k = 0; k < game.num_agents; ++k) {
    out.mean.push_back(mean(per[k]));
    out.std_error.push_back(standard_error(per[k]));
  }
  return out;
}

}  // namespace mpg
