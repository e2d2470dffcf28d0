#pragma once

// Potential function J: by line integral of the agents' reward-gradient
// field, or from a declared common reward term; plus the gradient
// consistency check between each r_k and J.

#include <string>
#include <vector>

#include "mpg/core.hpp"
#include "mpg/game.hpp"
#include "mpg/numdiff.hpp"
#include "mpg/policy.hpp"

namespace mpg {

struct LineIntegralOptions {
  std::size_t panels = 256;         // Q, per path segment
  std::size_t noise_samples = 64;   // K, drawn once at the base point
  double h = 1e-4;
  std::uint64_t seed = 0;
};

namespace detail {

/// Number of agents whose own state set contains each component; components
/// nobody owns are shared by every agent.
inline std::vector<std::vector<std::size_t>> state_owners(const GameSpec& game) {
  std::vector<std::vector<std::size_t>> owners(game.state_dim);
  for (std::size_t k = 0; k < game.num_agents; ++k) {
    for (std::size_t m : game.own_state(k)) owners[m].push_back(k);
  }
  for (auto& o : owners) {
    if (o.empty()) {
      for (std::size_t k = 0; k < game.num_agents; ++k) o.push_back(k);
    }
  }
  return owners;
}

/// F(z) . d, where F has x_m-component = mean over owners k of dr_k/dx_m
/// and w_k-components dr_k/dw_k. Agent k's share is one directional
/// derivative of r_k along its own slice of d.
inline double field_dot(const GameSpec& game, const PolicyFamily& policy, const FrozenNoiseRewards& er,
                        const std::vector<std::vector<std::size_t>>& owners, const Vec& z, const Vec& d, double h) {
  const std::size_t s_dim = game.state_dim;
  const VectorFn rewards = [&](const Vec& p) { return er.rewards(p); };
  double total = 0.0;
  for (std::size_t k = 0; k < game.num_agents; ++k) {
    Direction dir;
    for (std::size_t m = 0; m < s_dim; ++m) {
      const auto& o = owners[m];
      if (d[m] != 0.0 && std::find(o.begin(), o.end(), k) != o.end()) {
        dir.index.push_back(m);
        dir.weight.push_back(d[m] / static_cast<double>(o.size()));
      }
    }
    const std::size_t off = s_dim + policy.param_offset(k);
    for (std::size_t i = 0; i < policy.param_dim(k); ++i) {
      if (d[off + i] != 0.0) {
        dir.index.push_back(off + i);
        dir.weight.push_back(d[off + i]);
      }
    }
    if (dir.index.empty()) continue;
    const double scale = max_abs(dir.weight);
    for (double& v : dir.weight) v /= scale;
    total += scale * fd_directional(rewards, z, dir, h)[k];
  }
  return total;
}

}  // namespace detail

/// Line integral of the reward-gradient field along the polyline through
/// `waypoints` (joint (x, w) points), composite trapezoid with `panels`
/// panels per segment, using the given frozen noise set.
inline double potential_path_integral(const GameSpec& game, const PolicyFamily& policy,
                                      const std::vector<Vec>& waypoints, const std::vector<Vec>& sigmas,
                                      const LineIntegralOptions& opts) {
  if (opts.panels < 1) throw ConfigError("line integral: panels must be >= 1");
  const Box joint = game.state_box.joined(policy.param_box());
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    if (!joint.contains(waypoints[i], 1e-12)) {
      throw PathError("line integral: path point " + std::to_string(i) + " lies outside state_box x param_box");
    }
  }
  FrozenNoiseRewards er(game, policy, sigmas);
  const auto owners = detail::state_owners(game);
  double total = 0.0;
  for (std::size_t seg = 0; seg + 1 < waypoints.size(); ++seg) {
    const Vec& p0 = waypoints[seg];
    const Vec& p1 = waypoints[seg + 1];
    Vec d(p0.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = p1[i] - p0[i];
    if (max_abs(d) == 0.0) continue;
    const std::size_t q = opts.panels;
    Vec samples(q + 1);
    parallel_for(q + 1, [&](std::size_t node) {
      const double t = static_cast<double>(node) / static_cast<double>(q);
      Vec z(p0.size());
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = p0[i] + t * d[i];
      const double f = detail::field_dot(game, policy, er, owners, z, d, opts.h);
      if (!std::isfinite(f)) {
        throw NumericalDomainError("line integral: non-finite field at segment " + std::to_string(seg) +
                                       ", z = " + std::to_string(t),
                                   static_cast<double>(seg) + t);
      }
      samples[node] = f * ((node == 0 || node == q) ? 0.5 : 1.0);
    });
    total += pairwise_sum(samples) / static_cast<double>(q);
  }
  return total;
}

/// J(x, pi(x, w)) - J(base_x, pi(base_x, base_w)) along the straight segment.
inline double potential_line_integral(const GameSpec& game, const PolicyFamily& policy, const Vec& x, const Vec& w,
                                      const Vec& base_x, const Vec& base_w, const LineIntegralOptions& opts = {}) {
  const Vec a0 = policy.forward(base_x, base_w);
  const auto sigmas = draw_reward_noise(game, base_x, a0, opts.noise_samples, opts.seed);
  return potential_path_integral(game, policy, {join_point(base_x, base_w), join_point(x, w)}, sigmas, opts);
}

enum class PotentialMode { line_integral, declared };

inline std::string to_string(PotentialMode m) {
  return m == PotentialMode::declared ? "declared" : "line-integral";
}

/// J as a callable. Declared mode evaluates the common term on (x, a,
/// sigma); both modes give the closed-loop value J(x, pi(x, w)) averaged
/// over a frozen noise set.
class PotentialEvaluator {
 public:
  static PotentialEvaluator declared(const GameSpec& game, const PolicyFamily& policy) {
    if (!game.decomposition) {
      throw ConfigError("declared_potential: '" + game.name + "' declares no common reward term");
    }
    PotentialEvaluator j(PotentialMode::declared, game, policy);
    return j;
  }

  static PotentialEvaluator line_integral(const GameSpec& game, const PolicyFamily& policy, Vec base_x, Vec base_w,
                                          LineIntegralOptions opts = {}) {
    PotentialEvaluator j(PotentialMode::line_integral, game, policy);
    j.base_x_ = std::move(base_x);
    j.base_w_ = std::move(base_w);
    j.opts_ = opts;
    return j;
  }

  PotentialMode mode() const { return mode_; }
  double offset() const { return offset_; }
  const Vec& base_x() const { return base_x_; }
  const Vec& base_w() const { return base_w_; }
  const LineIntegralOptions& options() const { return opts_; }

  /// Same potential plus a constant.
  PotentialEvaluator shifted(double c) const {
    PotentialEvaluator j = *this;
    j.offset_ += c;
    return j;
  }

  bool has_instantaneous() const { return mode_ == PotentialMode::declared; }

  /// J(x, a, sigma); declared mode only.
  double operator()(const Vec& x, const Vec& a, const Vec& sigma) const {
    if (mode_ != PotentialMode::declared) {
      throw ConfigError("line-integral potential has no (x, a, sigma) form; declare a common term");
    }
    return game_.decomposition->common(x, a, sigma) + offset_;
  }

  /// Closed-loop J at z = (x, w), averaged over the given noise set.
  double closed_loop(const Vec& z, const std::vector<Vec>& sigmas) const {
    if (mode_ == PotentialMode::declared) {
      FrozenNoiseRewards er(game_, policy_, sigmas);
      return er.common(z) + offset_;
    }
    return offset_ + potential_path_integral(game_, policy_, {join_point(base_x_, base_w_), z}, sigmas, opts_);
  }

  /// Closed-loop J at (x, w) with noise drawn from `seed`.
  double closed_loop(const Vec& x, const Vec& w, std::uint64_t seed) const {
    const Vec& ax = mode_ == PotentialMode::declared ? x : base_x_;
    const Vec& aw = mode_ == PotentialMode::declared ? w : base_w_;
    const auto sigmas = draw_reward_noise(game_, ax, policy_.forward(ax, aw), opts_.noise_samples, seed);
    return closed_loop(join_point(x, w), sigmas);
  }

 private:
  PotentialEvaluator(PotentialMode mode, const GameSpec& game, const PolicyFamily& policy)
      : mode_(mode), game_(game), policy_(policy) {}

  PotentialMode mode_;
  GameSpec game_;
  PolicyFamily policy_;
  Vec base_x_;
  Vec base_w_;
  LineIntegralOptions opts_;
  double offset_ = 0.0;
};

inline PotentialEvaluator declared_potential(const GameSpec& game, const PolicyFamily& policy) {
  return PotentialEvaluator::declared(game, policy);
}

struct ConsistencyReport {
  double state_residual = 0.0;  // max_k ||E[grad_{x_own} r_k] - E[grad_{x_own} J]||_inf
  double param_residual = 0.0;  // max_k ||E[grad_{w_k} r_k] - E[grad_{w_k} J]||_inf
  std::size_t points_sampled = 0;
  std::size_t points_skipped = 0;
  double max_residual() const { return std::max(state_residual, param_residual); }
};

/// Compares each agent's reward gradient with the potential's gradient along
/// the agent's own state components and its own parameter block.
inline ConsistencyReport potential_consistency_check(const GameSpec& game, const PolicyFamily& policy,
                                                     const PotentialEvaluator& j, const FdConfig& cfg = {}) {
  cfg.validate();
  policy.check_compatible(game);
  const auto points = sample_check_points(game, policy, cfg);
  struct Res {
    bool used = false;
    double state = 0.0, param = 0.0;
  };
  std::vector<Res> per(points.size());
  parallel_for(points.size(), [&](std::size_t p) {
    const Vec& x = points[p].x;
    const Vec& w = points[p].w;
    const Vec a = policy.forward(x, w);
    if (!game.action_bounds(x).contains(a, 1e-9)) return;
    const std::uint64_t seed = derive_seed(cfg.base_seed, 0xc0de, p);
    const auto sigmas = draw_reward_noise(game, x, a, cfg.noise_samples, seed);
    FrozenNoiseRewards er(game, policy, sigmas);
    const Vec z = join_point(x, w);
    const VectorFn rewards = [&](const Vec& q) { return er.rewards(q); };
    const VectorFn pot = [&](const Vec& q) { return Vec{j.closed_loop(q, sigmas)}; };
    Rng dir_rng(derive_seed(seed, 0xd2));
    Res r;
    r.used = true;
    for (std::size_t k = 0; k < game.num_agents; ++k) {
      for (std::size_t m : game.own_state(k)) {
        const Direction e = Direction::coordinate(m);
        const double gr = fd_directional(rewards, z, e, cfg.h)[k];
        const double gj = fd_directional(pot, z, e, cfg.h)[0];
        r.state = std::max(r.state, std::abs(gr - gj));
      }
      const std::size_t off = game.state_dim + policy.param_offset(k);
      const bool full = policy.param_dim(k) <= cfg.max_full_block;
      for (const Direction& u : detail::block_directions(off, policy.param_dim(k), full, cfg.num_directions, dir_rng)) {
        const double gr = fd_directional(rewards, z, u, cfg.h)[k];
        const double gj = fd_directional(pot, z, u, cfg.h)[0];
        r.param = std::max(r.param, std::abs(gr - gj));
      }
    }
    per[p] = r;
  });
  ConsistencyReport rep;
  rep.points_sampled = points.size();
  for (const Res& r : per) {
    if (!r.used) {
      ++rep.points_skipped;
      continue;
    }
    rep.state_residual = std::max(rep.state_residual, r.state);
    rep.param_residual = std::max(rep.param_residual, r.param);
  }
  return rep;
}

}  // namespace mpg
