#pragma once

// Single-objective solvers for the potential's optimal control problem:
// likelihood-ratio policy gradient with a KL-guarded step, the fish-war
// closed form, and the open-loop deterministic MAC baseline.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mpg/core.hpp"
#include "mpg/environments.hpp"
#include "mpg/game.hpp"
#include "mpg/policy.hpp"
#include "mpg/potential.hpp"
#include "mpg/rollout.hpp"

namespace mpg {

enum class Baseline { none, mean_return, time_dependent };

inline std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::none: return "none";
    case Baseline::mean_return: return "mean-return";
    case Baseline::time_dependent: return "time-dependent";
  }
  return "unknown";
}

inline Baseline baseline_from_string(const std::string& s) {
  if (s == "none") return Baseline::none;
  if (s == "mean-return") return Baseline::mean_return;
  if (s == "time-dependent") return Baseline::time_dependent;
  throw ConfigError("unknown baseline '" + s + "'");
}

struct TrainConfig {
  std::size_t batch_size = 4000;  // simulation steps per iteration
  double max_kl = 0.01;
  std::size_t iterations = 400;
  Baseline baseline = Baseline::time_dependent;
  Vec exploration_std;  // per action dimension; empty keeps the policy's own
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;
  std::size_t eval_rollouts = 20;
  std::size_t final_eval_rollouts = 100;
  std::size_t max_halvings = 10;

  void validate(const GameSpec& game) const {
    if (batch_size < game.horizon) throw ConfigError("TrainConfig: batch_size must be >= horizon");
    if (!(max_kl > 0.0)) throw ConfigError("TrainConfig: max_kl must be positive");
    if (iterations < 1) throw ConfigError("TrainConfig: iterations must be >= 1");
    if (eval_every < 1 || eval_rollouts < 1 || final_eval_rollouts < 1) {
      throw ConfigError("TrainConfig: evaluation counts must be >= 1");
    }
  }
};

struct CurvePoint {
  std::size_t iteration = 0;
  double value = 0.0;   // batch-mean discounted potential return (exploring policy)
  double std_error = 0.0;
  double kl = 0.0;      // KL of the accepted step, 0 if none
};

struct EvalPoint {
  std::size_t iteration = 0;
  double value = 0.0;   // deterministic-mean policy on held-out seeds
  double std_error = 0.0;
  double best = 0.0;    // best evaluated value so far
};

struct SolveResult {
  Vec w;
  double value = 0.0;
  double value_stderr = 0.0;
  std::vector<CurvePoint> curve;
  std::vector<EvalPoint> evaluations;
  std::size_t best_iteration = 0;
  std::string terminated_reason;
};

/// sum_i gamma^i J(x_i, a_i, sigma_i), the absorbing tail included.
inline double potential_return(const Trajectory& traj, const PotentialEvaluator& j, double gamma) {
  Vec per(traj.terminated_at);
  for (std::size_t i = 0; i < traj.terminated_at; ++i) {
    per[i] = j(traj.states[i], traj.actions[i], traj.noise[i].reward);
  }
  const double tail =
      traj.absorbed ? j(traj.states[traj.terminated_at], traj.terminal_action, traj.terminal_noise.reward) : 0.0;
  return discounted_sum(per, tail, traj.terminated_at, traj.horizon, gamma);
}

/// Mean discounted potential return of the deterministic-mean policy.
inline ReturnEstimate potential_mc_return(const GameSpec& game, const PolicyFamily& policy, const PotentialEvaluator& j,
                                          std::span<const double> w, std::size_t n, std::uint64_t base_seed) {
  Vec vals(n);
  parallel_for(n, [&](std::size_t r) {
    vals[r] = potential_return(rollout(game, policy, w, base_seed + r, false), j, game.discount);
  });
  return {{mean(vals)}, {standard_error(vals)}};
}

namespace detail {

struct Batch {
  std::vector<Trajectory> episodes;
  std::vector<Vec> step_j;  // per episode, J at each step
  Vec tails;                // per episode, absorbing J (0 if not absorbed)
  Vec returns;
  std::size_t steps = 0;
};

inline Batch collect_batch(const GameSpec& game, const PolicyFamily& policy, const PotentialEvaluator& j,
                           std::span<const double> w, std::size_t batch_size, std::uint64_t seed) {
  Batch b;
  std::size_t next = 0;
  while (b.steps < batch_size) {
    const std::size_t wave = std::max<std::size_t>(1, (batch_size - b.steps + game.horizon - 1) / game.horizon);
    std::vector<Trajectory> trajs(wave);
    parallel_for(wave, [&](std::size_t e) { trajs[e] = rollout(game, policy, w, derive_seed(seed, 0xba7c, next + e), true); });
    next += wave;
    for (auto& t : trajs) {
      b.steps += std::max<std::size_t>(1, t.terminated_at);
      b.episodes.push_back(std::move(t));
    }
  }
  for (const Trajectory& t : b.episodes) {
    Vec per(t.terminated_at);
    for (std::size_t i = 0; i < t.terminated_at; ++i) per[i] = j(t.states[i], t.actions[i], t.noise[i].reward);
    const double tail = t.absorbed ? j(t.states[t.terminated_at], t.terminal_action, t.terminal_noise.reward) : 0.0;
    b.returns.push_back(discounted_sum(per, tail, t.terminated_at, t.horizon, game.discount));
    b.step_j.push_back(std::move(per));
    b.tails.push_back(tail);
  }
  return b;
}

/// Reward-to-go G_t = sum_{i >= t} gamma^(i-t) J_i (tail included) for
/// t = 0 .. horizon; past termination G_t is the tail's remaining value.
inline Vec rewards_to_go(const Vec& step_j, double tail, std::size_t terminated_at, std::size_t horizon,
                         double gamma) {
  Vec g(horizon + 1, 0.0);
  for (std::size_t t = horizon; t-- > terminated_at;) g[t] = tail + gamma * g[t + 1];
  for (std::size_t t = terminated_at; t-- > 0;) g[t] = step_j[t] + gamma * g[t + 1];
  return g;
}

/// Batch-mean KL(old || new) of the Gaussian action distributions over the
/// batch states (shared diagonal covariance).
inline double batch_kl(const PolicyFamily& policy, const Batch& b, std::span<const double> w_new, const Vec& stddev) {
  std::vector<const Vec*> states;
  std::vector<const Vec*> means;
  for (const Trajectory& t : b.episodes) {
    for (std::size_t i = 0; i < t.terminated_at; ++i) {
      states.push_back(&t.states[i]);
      means.push_back(&t.means[i]);
    }
  }
  if (states.empty()) return 0.0;
  Vec kl(states.size());
  parallel_for(states.size(), [&](std::size_t s) {
    const Vec mu = policy.forward(*states[s], w_new);
    double acc = 0.0;
    for (std::size_t d = 0; d < mu.size(); ++d) {
      const double diff = mu[d] - (*means[s])[d];
      acc += diff * diff / (2.0 * stddev[d] * stddev[d]);
    }
    kl[s] = acc;
  });
  return mean(kl);
}

inline Vec project_params(const Box& box, Vec w) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::clamp(w[i], box.lower[i], box.upper[i]);
  return w;
}

}  // namespace detail

/// Likelihood-ratio gradient of E[sum_i gamma^i J] from one batch, averaged
/// per episode.
inline Vec policy_gradient(const GameSpec& game, const PolicyFamily& policy, const detail::Batch& b,
                           std::span<const double> w, Baseline baseline) {
  const std::size_t horizon = game.horizon;
  const double gamma = game.discount;
  const std::size_t n_ep = b.episodes.size();
  std::vector<Vec> togo(n_ep);
  for (std::size_t e = 0; e < n_ep; ++e) {
    const Trajectory& t = b.episodes[e];
    togo[e] = detail::rewards_to_go(b.step_j[e], b.tails[e], t.terminated_at, horizon, gamma);
  }
  Vec base(horizon + 1, 0.0);
  if (baseline == Baseline::time_dependent) {
    for (std::size_t t = 0; t <= horizon; ++t) {
      Vec col(n_ep);
      for (std::size_t e = 0; e < n_ep; ++e) col[e] = togo[e][t];
      base[t] = mean(col);
    }
  } else if (baseline == Baseline::mean_return) {
    std::fill(base.begin(), base.end(), mean(b.returns));
  }

  const Vec& sd = policy.exploration_std();
  std::vector<Vec> per_ep(n_ep, Vec(policy.total_params(), 0.0));
  parallel_for(n_ep, [&](std::size_t e) {
    const Trajectory& t = b.episodes[e];
    Vec& g = per_ep[e];
    double disc = 1.0;
    for (std::size_t i = 0; i < t.terminated_at; ++i, disc *= gamma) {
      const double adv = disc * (togo[e][i] - base[i]);
      if (adv == 0.0) continue;
      std::size_t a_off = 0;
      for (std::size_t k = 0; k < policy.num_agents(); ++k) {
        const std::size_t ak = policy.agent_action_dim(k);
        Vec cot(ak);
        for (std::size_t d = 0; d < ak; ++d) {
          const std::size_t q = a_off + d;
          cot[d] = adv * (t.samples[i][q] - t.means[i][q]) / (sd[q] * sd[q]);
        }
        policy.agent_vjp(k, t.states[i], policy.block(w, k), cot, policy.block(std::span<double>(g), k));
        a_off += ak;
      }
    }
  });
  Vec grad(policy.total_params());
  Vec col(n_ep);
  for (std::size_t p = 0; p < grad.size(); ++p) {
    for (std::size_t e = 0; e < n_ep; ++e) col[e] = per_ep[e][p];
    grad[p] = pairwise_sum(col) / static_cast<double>(n_ep);
    if (!std::isfinite(grad[p])) {
      throw NumericalDomainError("pg_train: non-finite gradient component " + std::to_string(p), static_cast<double>(p));
    }
  }
  return grad;
}

/// Monte-Carlo policy gradient on the single objective E[sum gamma^i J].
/// Each step goes along the batch gradient as far as the batch-mean KL
/// allows, then halves until the projected step satisfies the bound.
inline SolveResult pg_train(const GameSpec& game, const PolicyFamily& policy_in, const PotentialEvaluator& j,
                            const TrainConfig& cfg, std::optional<Vec> w0 = std::nullopt) {
  cfg.validate(game);
  policy_in.check_compatible(game);
  if (!j.has_instantaneous()) {
    throw ConfigError("pg_train: the potential needs an (x, a, sigma) form; use a declared decomposition");
  }
  const PolicyFamily policy = cfg.exploration_std.empty() ? policy_in : policy_in.with_exploration_std(cfg.exploration_std);
  for (double s : policy.exploration_std()) {
    if (!(s > 0.0)) throw ConfigError("pg_train: exploration std must be positive");
  }
  const Box& box = policy.param_box();
  Vec w = detail::project_params(box, w0 ? *w0 : policy.initial_params(cfg.seed));
  if (w.size() != policy.total_params()) throw ConfigError("pg_train: initial parameter vector has wrong length");

  const std::uint64_t eval_seed = derive_seed(cfg.seed, 0xe7a1);
  SolveResult res;
  double best = -std::numeric_limits<double>::infinity();
  Vec best_w = w;
  const auto evaluate = [&](std::size_t it) {
    const ReturnEstimate v = potential_mc_return(game, policy, j, w, cfg.eval_rollouts, eval_seed);
    if (v.mean[0] > best) {
      best = v.mean[0];
      best_w = w;
      res.best_iteration = it;
    }
    res.evaluations.push_back({it, v.mean[0], v.std_error[0], best});
  };

  evaluate(0);
  res.terminated_reason = "iteration limit";
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const detail::Batch batch = detail::collect_batch(game, policy, j, w, cfg.batch_size, derive_seed(cfg.seed, it));
    const Vec grad = policy_gradient(game, policy, batch, w, cfg.baseline);
    CurvePoint cp{it, mean(batch.returns), standard_error(batch.returns), 0.0};

    const double gnorm = max_abs(grad);
    if (gnorm > 0.0) {
      // KL is locally quadratic in the step length; calibrate on a small probe.
      const auto stepped = [&](double s) {
        Vec wn = w;
        for (std::size_t p = 0; p < wn.size(); ++p) wn[p] += s * grad[p];
        return detail::project_params(box, std::move(wn));
      };
      const double probe = 1e-3 / gnorm;
      const double kl_probe = detail::batch_kl(policy, batch, stepped(probe), policy.exploration_std());
      if (kl_probe > 0.0) {
        double s = probe * std::sqrt(cfg.max_kl / kl_probe);
        for (std::size_t h = 0; h <= cfg.max_halvings; ++h, s *= 0.5) {
          Vec wn = stepped(s);
          const double kl = detail::batch_kl(policy, batch, wn, policy.exploration_std());
          if (kl <= cfg.max_kl) {
            w = std::move(wn);
            cp.kl = kl;
            break;
          }
        }
      }
    }
    res.curve.push_back(cp);
    if (it % cfg.eval_every == 0 || it == cfg.iterations) evaluate(it);
  }

  res.w = best_w;
  const ReturnEstimate fin =
      potential_mc_return(game, policy, j, best_w, cfg.final_eval_rollouts, derive_seed(cfg.seed, 0xf1a1));
  res.value = fin.mean[0];
  res.value_stderr = fin.std_error[0];
  return res;
}

/// Fish-war equilibrium gains w_k = (1 - alpha gamma) / (alpha gamma + N (1 - alpha gamma)).
inline Vec fishwar_closed_form(std::size_t n, double alpha, double gamma) {
  if (n < 1) throw ConfigError("fishwar_closed_form: N must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("fishwar_closed_form: alpha must lie in (0,1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("fishwar_closed_form: gamma must lie in [0,1)");
  const double ag = alpha * gamma;
  return Vec(n, (1.0 - ag) / (ag + static_cast<double>(n) * (1.0 - ag)));
}

struct DeterministicSolution {
  std::vector<Vec> power;  // [step][agent]
  double value = 0.0;
  double residual = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

/// Euclidean projection onto {0 <= a <= p_max, sum_i delta_i a_i <= budget}.
inline Vec project_budget(const Vec& y, const Vec& delta, double p_max, double budget) {
  const auto clip = [&](double lambda) {
    Vec a(y.size());
    double used = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      a[i] = std::clamp(y[i] - lambda * delta[i], 0.0, p_max);
      used += delta[i] * a[i];
    }
    return std::pair{a, used};
  };
  auto [a, used] = clip(0.0);
  if (used <= budget) return a;
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) hi = std::max(hi, y[i] / delta[i]);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (clip(mid).second > budget ? lo : hi) = mid;
  }
  return clip(hi).first;
}

inline double mac_open_loop_value(const MacParams& p, const std::vector<Vec>& a, const std::vector<Vec>& v,
                                  const std::vector<Vec>& delta) {
  const std::size_t n = p.num_agents;
  Vec x(n, p.b_max);
  Vec terms(a.size());
  double disc = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i, disc *= p.gamma) {
    double s = 1.0, battery = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      s += p.gains[k] * v[i][k] * a[i][k];
      battery += x[k];
    }
    terms[i] = disc * (std::log(s) + p.alpha * battery);
    for (std::size_t k = 0; k < n; ++k) x[k] -= delta[i][k] * a[i][k];
  }
  return pairwise_sum(terms);
}

}  // namespace detail

/// Open-loop optimum of sum_i gamma^i [log(1 + sum_k h_k v_ik a_ik) + alpha sum_k x_ik]
/// over powers a_ik in [0, p_max] with x_{k,i+1} = x_ki - delta_ik a_ik >= 0,
/// for known fading v and discharge delta sequences ([step][agent]).
/// Accelerated projected gradient ascent; the problem is concave.
inline DeterministicSolution solve_deterministic_mac(const MacParams& p, const std::vector<Vec>& v,
                                                     const std::vector<Vec>& delta, double tol = 1e-6,
                                                     std::size_t max_iter = 200000) {
  p.validate();
  const std::size_t n = p.num_agents;
  const std::size_t steps = v.size();
  if (delta.size() != steps || steps == 0) throw ConfigError("solve_deterministic_mac: sequence lengths differ");
  Vec discount(steps);
  double lip = 1e-12;
  for (std::size_t i = 0; i < steps; ++i) {
    discount[i] = std::pow(p.gamma, static_cast<double>(i));
    double q = 0.0;
    for (std::size_t k = 0; k < n; ++k) q += std::pow(p.gains[k] * v[i][k], 2);
    lip = std::max(lip, discount[i] * q);
  }
  // battery credit: alpha sum_{j > i} gamma^j
  Vec credit(steps, 0.0);
  for (std::size_t i = steps - 1; i-- > 0;) credit[i] = credit[i + 1] + p.alpha * discount[i + 1];
  const double step = 1.0 / lip;

  const auto gradient = [&](const std::vector<Vec>& a) {
    std::vector<Vec> g(steps, Vec(n));
    for (std::size_t i = 0; i < steps; ++i) {
      double s = 1.0;
      for (std::size_t k = 0; k < n; ++k) s += p.gains[k] * v[i][k] * a[i][k];
      for (std::size_t k = 0; k < n; ++k) {
        g[i][k] = discount[i] * p.gains[k] * v[i][k] / s - delta[i][k] * credit[i];
      }
    }
    return g;
  };
  const auto project = [&](std::vector<Vec> y) {
    for (std::size_t k = 0; k < n; ++k) {
      Vec col(steps), d(steps);
      for (std::size_t i = 0; i < steps; ++i) {
        col[i] = y[i][k];
        d[i] = delta[i][k];
      }
      const Vec pk = detail::project_budget(col, d, p.p_max, p.b_max);
      for (std::size_t i = 0; i < steps; ++i) y[i][k] = pk[i];
    }
    return y;
  };
  const auto residual = [&](const std::vector<Vec>& a) {
    const auto g = gradient(a);
    std::vector<Vec> y = a;
    for (std::size_t i = 0; i < steps; ++i) {
      for (std::size_t k = 0; k < n; ++k) y[i][k] += g[i][k];
    }
    const auto pa = project(std::move(y));
    double r = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
      for (std::size_t k = 0; k < n; ++k) r = std::max(r, std::abs(pa[i][k] - a[i][k]));
    }
    return r;
  };

  std::vector<Vec> a(steps, Vec(n, 0.0));
  std::vector<Vec> a_prev = a;
  std::vector<Vec> yk = a;
  double t = 1.0;
  double value = detail::mac_open_loop_value(p, a, v, delta);
  DeterministicSolution sol;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const auto g = gradient(yk);
    std::vector<Vec> z = yk;
    for (std::size_t i = 0; i < steps; ++i) {
      for (std::size_t k = 0; k < n; ++k) z[i][k] += step * g[i][k];
    }
    a = project(std::move(z));
    const double new_value = detail::mac_open_loop_value(p, a, v, delta);
    // restart momentum when the objective drops
    if (new_value < value) {
      t = 1.0;
      yk = a;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      for (std::size_t i = 0; i < steps; ++i) {
        for (std::size_t k = 0; k < n; ++k) yk[i][k] = a[i][k] + (t - 1.0) / t_next * (a[i][k] - a_prev[i][k]);
      }
      t = t_next;
    }
    value = new_value;
    a_prev = a;
    if (it % 10 == 0 || it == max_iter) {
      const double r = residual(a);
      if (r <= tol) {
        sol.power = a;
        sol.value = value;
        sol.residual = r;
        sol.iterations = it;
        return sol;
      }
      if (it == max_iter) throw ConvergenceError("solve_deterministic_mac: no convergence within iteration cap", r);
    }
  }
  throw ConvergenceError("solve_deterministic_mac: no convergence within iteration cap", residual(a));
}

struct MacBaseline {
  double averaged_sequence = 0.0;  // optimum on the element-wise mean sequence
  double sequence_average = 0.0;   // mean of per-sequence optima
  double sequence_stderr = 0.0;
  std::size_t num_sequences = 0;
  std::size_t horizon = 0;
};

/// Draws `num_sequences` fading/discharge sequences of length `horizon`.
inline MacBaseline deterministic_baseline_mac(const MacParams& p, std::size_t num_sequences = 100,
                                              std::size_t horizon = 100, std::uint64_t seed = 0) {
  p.validate();
  if (num_sequences < 1 || horizon < 1) throw ConfigError("deterministic_baseline_mac: counts must be >= 1");
  const std::size_t n = p.num_agents;
  std::vector<std::vector<Vec>> vs(num_sequences), ds(num_sequences);
  for (std::size_t s = 0; s < num_sequences; ++s) {
    Rng rng(derive_seed(seed, 0x5e9, s));
    for (std::size_t i = 0; i < horizon; ++i) {
      Vec v(n), d(n);
      for (std::size_t k = 0; k < n; ++k) v[k] = uniform(rng, p.fading_lo, p.fading_hi);
      for (std::size_t k = 0; k < n; ++k) d[k] = uniform(rng, p.discharge_lo, p.discharge_hi);
      vs[s].push_back(std::move(v));
      ds[s].push_back(std::move(d));
    }
  }
  std::vector<Vec> v_bar(horizon, Vec(n)), d_bar(horizon, Vec(n));
  for (std::size_t i = 0; i < horizon; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      Vec cv(num_sequences), cd(num_sequences);
      for (std::size_t s = 0; s < num_sequences; ++s) {
        cv[s] = vs[s][i][k];
        cd[s] = ds[s][i][k];
      }
      v_bar[i][k] = mean(cv);
      d_bar[i][k] = mean(cd);
    }
  }
  MacBaseline out;
  out.num_sequences = num_sequences;
  out.horizon = horizon;
  out.averaged_sequence = solve_deterministic_mac(p, v_bar, d_bar).value;
  Vec per(num_sequences);
  parallel_for(num_sequences, [&](std::size_t s) { per[s] = solve_deterministic_mac(p, vs[s], ds[s]).value; });
  out.sequence_average = mean(per);
  out.sequence_stderr = standard_error(per);
  return out;
}

}  // namespace mpg
