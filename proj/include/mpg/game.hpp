#pragma once

// Stochastic game data model: dimensions, evaluators, noise, boxes and the
// optional common / non-common reward split.

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpg/core.hpp"

namespace mpg {

/// One step's random draws: transition noise theta and the joint reward
/// noise sigma (all agents' reward noises drawn together).
struct NoiseDraw {
  Vec transition;
  Vec reward;
};

using RewardFn =
    std::function<double(std::size_t agent, const Vec& x, const Vec& a, const Vec& sigma)>;
using CommonTermFn = std::function<double(const Vec& x, const Vec& a, const Vec& sigma)>;
using TransitionFn = std::function<Vec(const Vec& x, const Vec& a, const Vec& theta)>;
using ConstraintFn = std::function<Vec(const Vec& x, const Vec& a)>;
using NoiseFn = std::function<NoiseDraw(const Vec& x, const Vec& a, Rng& rng)>;
using ActionBoundsFn = std::function<Box(const Vec& x)>;
using TerminalFn = std::function<bool(const Vec& x)>;

/// Declared split r_k = J + Theta_k, with each agent's policy-input and
/// reward-input state components. Theta_k must not depend on agent k's own
/// parameters; its expected gradient along agent k's own state components
/// must vanish for the game to be potential.
struct Decomposition {
  CommonTermFn common;
  RewardFn non_common;
  std::vector<std::vector<std::size_t>> policy_state;
  std::vector<std::vector<std::size_t>> reward_state;

  /// Union of agent k's policy and reward state components, sorted.
  std::vector<std::size_t> own_state(std::size_t agent) const {
    std::set<std::size_t> s(policy_state.at(agent).begin(), policy_state.at(agent).end());
    s.insert(reward_state.at(agent).begin(), reward_state.at(agent).end());
    return {s.begin(), s.end()};
  }
};

struct GameSpec {
  std::string name;
  std::size_t num_agents = 0;
  std::size_t state_dim = 0;
  std::vector<std::size_t> action_dims;
  double discount = 0.0;
  std::size_t horizon = 0;

  RewardFn reward;
  TransitionFn transition;
  ConstraintFn constraints;  // feasible iff every component <= 0
  NoiseFn noise;             // empty for deterministic games

  Box state_box;
  ActionBoundsFn action_bounds;  // box-type constraints, enforced by projection
  TerminalFn terminal;           // absorbing states; may be empty
  Vec initial_state;
  std::function<Vec(Rng&)> initial_sampler;  // overrides initial_state when set

  std::optional<Decomposition> decomposition;

  std::size_t total_action_dim() const {
    return std::accumulate(action_dims.begin(), action_dims.end(), std::size_t{0});
  }

  std::size_t action_offset(std::size_t agent) const {
    return std::accumulate(action_dims.begin(), action_dims.begin() + static_cast<long>(agent),
                           std::size_t{0});
  }

  bool stochastic() const { return static_cast<bool>(noise); }

  NoiseDraw draw_noise(const Vec& x, const Vec& a, Rng& rng) const {
    return noise ? noise(x, a, rng) : NoiseDraw{};
  }

  Vec start_state(Rng& rng) const { return initial_sampler ? initial_sampler(rng) : initial_state; }

  /// Components of the state the agent's own policy and reward use; all
  /// components when no decomposition is declared.
  std::vector<std::size_t> own_state(std::size_t agent) const {
    if (decomposition) return decomposition->own_state(agent);
    std::vector<std::size_t> all(state_dim);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }

  void validate() const {
    if (num_agents == 0) throw ConfigError(name + ": num_agents must be positive");
    if (state_dim == 0) throw ConfigError(name + ": state_dim must be positive");
    if (action_dims.size() != num_agents) {
      throw ConfigError(name + ": action_dims must have one entry per agent");
    }
    for (std::size_t d : action_dims) {
      if (d == 0) throw ConfigError(name + ": action dimensions must be positive");
    }
    if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError(name + ": discount must lie in [0,1)");
    if (horizon == 0) throw ConfigError(name + ": horizon must be positive");
    if (!reward || !transition || !action_bounds) {
      throw ConfigError(name + ": reward, transition and action bounds are required");
    }
    state_box.validate("state_box");
    if (state_box.size() != state_dim) throw ConfigError(name + ": state_box has wrong dimension");
    if (!initial_sampler && initial_state.size() != state_dim) {
      throw ConfigError(name + ": initial_state has wrong dimension");
    }
    if (decomposition) {
      if (!decomposition->common || !decomposition->non_common) {
        throw ConfigError(name + ": decomposition needs both common and non-common terms");
      }
      if (decomposition->policy_state.size() != num_agents ||
          decomposition->reward_state.size() != num_agents) {
        throw ConfigError(name + ": decomposition index sets need one entry per agent");
      }
      for (std::size_t k = 0; k < num_agents; ++k) {
        for (std::size_t m : decomposition->own_state(k)) {
          if (m >= state_dim) throw ConfigError(name + ": decomposition index out of range");
        }
      }
    }
  }
};

}  // namespace mpg
