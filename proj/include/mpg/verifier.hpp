#pragma once

// Unilateral-deviation search: holds the other agents' parameters fixed and
// looks for a better block for one agent under that agent's own return.

#include <string>
#include <vector>

#include "mpg/core.hpp"
#include "mpg/game.hpp"
#include "mpg/policy.hpp"
#include "mpg/rollout.hpp"

namespace mpg {

struct NashOptions {
  std::size_t budget = 200;    // return evaluations per agent
  std::size_t restarts = 5;
  std::size_t rollouts = 0;    // per evaluation; 0 means 1 on deterministic games, 32 otherwise
  std::uint64_t seed = 0;
  double h = 1e-4;
  double initial_step = 0.05;  // fraction of the block's box width (or absolute when unbounded)
};

struct AgentDeviation {
  double baseline = 0.0;
  double best = 0.0;
  Vec best_block;
  double gain = 0.0;
  double eps_abs = 0.0;
  double eps_rel = 0.0;
  std::size_t evaluations = 0;
};

struct NashReport {
  std::vector<AgentDeviation> agents;
  double epsilon = 0.0;      // max_k max(gain_k, 0)
  double epsilon_rel = 0.0;  // max_k max(gain_k, 0) / |V_k|
  std::size_t rollouts = 0;
  NashOptions options;
  std::string note;
};

namespace detail {

/// Budget-limited evaluator of one agent's own return as a function of its
/// block; every call uses the same rollout seeds.
class DeviationObjective {
 public:
  DeviationObjective(const GameSpec& game, const PolicyFamily& policy, const Vec& w_star, std::size_t agent,
                     std::size_t rollouts, std::uint64_t seed, std::size_t budget)
      : game_(game), policy_(policy), w_(w_star), agent_(agent), rollouts_(rollouts), seed_(seed), budget_(budget) {}

  bool exhausted() const { return used_ >= budget_; }
  std::size_t used() const { return used_; }

  double operator()(const Vec& block) {
    ++used_;
    Vec w = w_;
    auto dst = policy_.block(std::span<double>(w), agent_);
    std::copy(block.begin(), block.end(), dst.begin());
    try {
      const double v = mc_return(game_, policy_, w, rollouts_, seed_).mean[agent_];
      return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    } catch (const NumericalDomainError&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

 private:
  const GameSpec& game_;
  const PolicyFamily& policy_;
  Vec w_;
  std::size_t agent_;
  std::size_t rollouts_;
  std::uint64_t seed_;
  std::size_t budget_;
  std::size_t used_ = 0;
};

/// Projected FD gradient ascent with backtracking from `start`; returns the
/// best block and value seen.
inline std::pair<Vec, double> local_ascent(DeviationObjective& f, Vec x, double fx, const Box& box, double h,
                                           double step0) {
  const auto project = [&](Vec v) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], box.lower[i], box.upper[i]);
    return v;
  };
  double step = step0;
  while (!f.exhausted() && step > 1e-9 * step0) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size() && !f.exhausted(); ++i) {
      const double s = h * std::max(1.0, std::abs(x[i]));
      Vec xp = x, xm = x;
      xp[i] = std::min(x[i] + s, box.upper[i]);
      xm[i] = std::max(x[i] - s, box.lower[i]);
      if (xp[i] == xm[i]) continue;
      const double fp = f(xp);
      const double fm = f.exhausted() ? fx : f(xm);
      g[i] = std::isfinite(fp) && std::isfinite(fm) ? (fp - fm) / (xp[i] - xm[i]) : 0.0;
    }
    const double gn = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
    if (gn == 0.0) break;
    bool moved = false;
    while (!f.exhausted() && step > 1e-9 * step0) {
      Vec cand = x;
      for (std::size_t i = 0; i < x.size(); ++i) cand[i] += step * g[i] / gn;
      cand = project(std::move(cand));
      const double fc = f(cand);
      if (fc > fx) {
        x = std::move(cand);
        fx = fc;
        moved = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return {x, fx};
}

}  // namespace detail

/// For each agent, best improvement of its own expected return found by
/// deviating unilaterally from w_star. A positive gain certifies that w_star
/// is not an equilibrium; a zero gain is evidence only.
inline NashReport nash_deviation_check(const GameSpec& game, const PolicyFamily& policy, const Vec& w_star,
                                       const NashOptions& opts = {}) {
  if (opts.budget == 0) throw ConfigError("nash_deviation_check: budget must be >= 1");
  policy.check_compatible(game);
  if (w_star.size() != policy.total_params()) throw ConfigError("nash_deviation_check: w has wrong length");
  if (!policy.param_box().contains(w_star, 1e-12)) {
    throw ConfigError("nash_deviation_check: w lies outside the feasible parameter box");
  }
  const std::size_t rollouts = opts.rollouts > 0 ? opts.rollouts : (game.stochastic() ? 32 : 1);
  NashReport rep;
  rep.options = opts;
  rep.rollouts = rollouts;
  rep.agents.resize(game.num_agents);
  const std::uint64_t eval_seed = derive_seed(opts.seed, 0x7a5);

  for (std::size_t k = 0; k < game.num_agents; ++k) {
    const std::size_t off = policy.param_offset(k);
    const std::size_t dim = policy.param_dim(k);
    Box box;
    for (std::size_t i = 0; i < dim; ++i) {
      box.lower.push_back(policy.param_box().lower[off + i]);
      box.upper.push_back(policy.param_box().upper[off + i]);
    }
    const auto block_of = [&](const Vec& w) { return Vec(w.begin() + static_cast<long>(off), w.begin() + static_cast<long>(off + dim)); };
    // baseline evaluation is not charged against the search budget
    detail::DeviationObjective base(game, policy, w_star, k, rollouts, eval_seed, 1);
    AgentDeviation dev;
    dev.baseline = base(block_of(w_star));

    double width = 0.0;
    for (std::size_t i = 0; i < dim; ++i) width = std::max(width, box.bounded(i) ? box.upper[i] - box.lower[i] : 1.0);
    const double step0 = opts.initial_step * width;

    const std::size_t local_budget = opts.restarts > 0 ? opts.budget / 2 : opts.budget;
    detail::DeviationObjective local(game, policy, w_star, k, rollouts, eval_seed, local_budget);
    auto [best_block, best] = detail::local_ascent(local, block_of(w_star), dev.baseline, box, opts.h, step0);
    dev.evaluations = local.used();

    Rng rng(derive_seed(opts.seed, 0x4e57a, k));
    for (std::size_t r = 0; r < opts.restarts; ++r) {
      const std::size_t share = (opts.budget - dev.evaluations) / (opts.restarts - r);
      if (share == 0) continue;
      detail::DeviationObjective f(game, policy, w_star, k, rollouts, eval_seed, share);
      Vec start = block_of(policy.sample_params(rng));
      const double fs = f(start);
      auto [blk, val] = detail::local_ascent(f, start, fs, box, opts.h, step0);
      dev.evaluations += f.used();
      if (val > best) {
        best = val;
        best_block = blk;
      }
    }
    dev.best = best;
    dev.best_block = best_block;
    dev.gain = best - dev.baseline;
    dev.eps_abs = std::max(dev.gain, 0.0);
    dev.eps_rel = dev.eps_abs / std::max(std::abs(dev.baseline), 1e-300);
    rep.epsilon = std::max(rep.epsilon, dev.eps_abs);
    rep.epsilon_rel = std::max(rep.epsilon_rel, dev.eps_rel);
    rep.agents[k] = std::move(dev);
  }
  rep.note = rep.epsilon > 0.0 ? "a profitable unilateral deviation was found"
                               : "no profitable unilateral deviation found within the search budget";
  return rep;
}

}  // namespace mpg
